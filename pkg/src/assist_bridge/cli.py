"""Command line entry point: serve, replay, eval.

serve runs the daemon on stdio, TCP, or WebSocket.  replay feeds a
transcript of wire directives through an in-process daemon and compares
every emitted frame byte-for-byte against a golden file.  eval runs the
named case-study scenarios against the mock provider.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

from .config import load_config
from .errors import (
    BindFailed,
    BridgeError,
    ConfigInvalid,
    GoldenMismatch,
    ScenarioUnknown,
)
from .scenarios import run_scenario, scenario_names
from .wire import Daemon, InProcessClient, encode_frame, serve_stdio, serve_tcp, serve_websocket


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assist-bridge",
        description="Editor-agnostic AI code-assist broker daemon",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the daemon")
    serve.add_argument(
        "--transport",
        default="stdio",
        help="stdio, tcp:PORT, or ws:PORT (default stdio)",
    )
    serve.add_argument("--config", type=Path, default=None, help="TOML config file")
    serve.add_argument("--host", default="127.0.0.1", help="bind host for tcp/ws")

    replay = sub.add_parser("replay", help="replay a transcript against goldens")
    replay.add_argument("--transcript", type=Path, required=True)
    replay.add_argument("--golden", type=Path, required=True)
    replay.add_argument("--config", type=Path, default=None)
    replay.add_argument(
        "--record",
        action="store_true",
        help="write the golden file instead of comparing against it",
    )

    evaluate = sub.add_parser("eval", help="run case-study scenarios")
    evaluate.add_argument("--scenario", default=None, help="scenario name")
    evaluate.add_argument("--all", action="store_true", help="run every scenario")
    return parser


async def run_transcript(daemon: Daemon, directives: List[dict]) -> List[str]:
    """Execute transcript directives; returns every received frame in order."""
    client = InProcessClient(daemon)
    try:
        for directive in directives:
            if "send" in directive:
                await client.send_envelope(directive["send"])
            elif "sendRaw" in directive:
                await client.send_raw(directive["sendRaw"])
            elif "awaitNotification" in directive:
                await client.await_notification(directive["awaitNotification"])
            elif "sleepMs" in directive:
                await asyncio.sleep(directive["sleepMs"] / 1000)
            else:
                raise ConfigInvalid(f"unknown transcript directive: {directive}")
        return client.received
    finally:
        client.close()


def _load_directives(path: Path) -> List[dict]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read transcript {path}: {exc}")
    directives = []
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            directives.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}:{number}: not valid JSON: {exc}")
    return directives


def _cmd_serve(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    daemon = Daemon(config=config)
    transport = args.transport
    if transport == "stdio":
        runner = serve_stdio(daemon)
    elif transport.startswith("tcp:"):
        runner = serve_tcp(daemon, args.host, int(transport.split(":", 1)[1]))
    elif transport.startswith("ws:"):
        runner = serve_websocket(daemon, args.host, int(transport.split(":", 1)[1]))
    else:
        raise ConfigInvalid(
            f"unknown transport {transport!r}; use stdio, tcp:PORT, or ws:PORT"
        )
    try:
        asyncio.run(runner)
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    directives = _load_directives(args.transcript)

    async def _run() -> List[str]:
        return await run_transcript(Daemon(config=config), directives)

    frames = asyncio.run(_run())
    output = "".join(frame + "\n" for frame in frames)
    if args.record:
        args.golden.write_text(output, encoding="utf-8")
        print(f"recorded {len(frames)} frames to {args.golden}")
        return 0
    try:
        golden = args.golden.read_text(encoding="utf-8")
    except OSError as exc:
        raise GoldenMismatch(f"cannot read golden {args.golden}: {exc}")
    if output != golden:
        golden_lines = golden.splitlines()
        output_lines = output.splitlines()
        for i, (got, want) in enumerate(zip(output_lines, golden_lines), start=1):
            if got != want:
                print(f"first mismatch at frame {i}:", file=sys.stderr)
                print(f"  golden: {want}", file=sys.stderr)
                print(f"  got:    {got}", file=sys.stderr)
                break
        else:
            print(
                f"frame count differs: golden {len(golden_lines)}, "
                f"got {len(output_lines)}",
                file=sys.stderr,
            )
        raise GoldenMismatch(f"replay of {args.transcript} diverged from {args.golden}")
    print(f"replayed {len(frames)} frames, all matching {args.golden}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    if args.all:
        names = scenario_names()
    elif args.scenario:
        names = [args.scenario]
    else:
        raise ScenarioUnknown("pass --scenario NAME or --all")

    started = time.monotonic()
    failed = False
    for name in names:
        result = asyncio.run(run_scenario(name))
        for line in result.transcript:
            print(line)
        if result.passed:
            print(f"PASS {name}")
        else:
            failed = True
            print(f"FAIL {name}")
            for failure in result.failures:
                print(f"  {failure}")
    print(f"ran {len(names)} scenario(s) in {time.monotonic() - started:.2f}s", file=sys.stderr)
    return 1 if failed else 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "eval":
            return _cmd_eval(args)
        parser.error(f"unknown command {args.command!r}")
        return 2
    except (ConfigInvalid, BindFailed, ScenarioUnknown) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GoldenMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
