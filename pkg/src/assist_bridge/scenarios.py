"""Case-study scenarios driven through the wire path, with numeric oracles.

Each scenario spins up a fresh daemon on the mock provider, scripts a
session over the real protocol, and asserts on the resulting documents.
The numeric scenarios additionally re-state the canned algorithms in
Python and cross-check them against two oracles that are deliberately
implemented by different methods: gcd by brute-force divisor scan (so it
can validate a Euclid implementation independently) and lcm by
incremental multiple search (gcd-free).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Awaitable, Callable, Dict, List, Optional, Tuple

from .errors import ScenarioUnknown
from .providers import MockProvider
from .wire import Daemon, InProcessClient
from .workspace import end_position


# ----- oracles --------------------------------------------------------------


def gcd_oracle(a: int, b: int) -> int:
    """Greatest common divisor by scanning divisors downward from min(a, b).

    Deliberately not Euclid's algorithm, so Euclid implementations can be
    validated against it.
    """
    if a < 1 or b < 1:
        raise ValueError("gcd_oracle needs positive integers")
    for d in range(min(a, b), 0, -1):
        if a % d == 0 and b % d == 0:
            return d
    return 1  # unreachable for positive inputs; d = 1 always divides


def lcm_oracle(a: int, b: int) -> int:
    """Least common multiple by stepping through multiples of max(a, b).

    Gcd-free on purpose, mirroring the assignment constraint.
    """
    if a < 1 or b < 1:
        raise ValueError("lcm_oracle needs positive integers")
    step = max(a, b)
    candidate = step
    while candidate % a != 0 or candidate % b != 0:
        candidate += step
    return candidate


# ----- Python mirrors of the canned algorithms ------------------------------
# These re-state, line for line, what the mock provider's code does, so the
# scenario can execute the algorithm under test rather than eyeball it.


def hcf_bruteforce(a: int, b: int) -> int:
    result = min(a, b)
    while result > 1:
        if a % result == 0 and b % result == 0:
            return result
        result -= 1
    return 1


def hcf_euclid(a: int, b: int) -> int:
    while b != 0:
        a, b = b, a % b
    return a


def lcm_with_hcf(a: int, b: int) -> int:
    return (a // hcf_euclid(a, b)) * b


def lcm_without_hcf(a: int, b: int) -> int:
    step = max(a, b)
    candidate = step
    while candidate % a != 0 or candidate % b != 0:
        candidate += step
    return candidate


# ----- harness --------------------------------------------------------------


class ScenarioFailed(Exception):
    pass


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ScenarioFailed(message)


class Harness:
    """A fresh daemon plus a transcript of every frame both ways."""

    def __init__(self):
        self.daemon = Daemon(providers=[MockProvider()])
        self.client = InProcessClient(self.daemon)
        self.transcript: List[str] = []
        self._seen_sent = 0
        self._seen_received = 0

    def _sync_transcript(self) -> None:
        for line in self.client.sent[self._seen_sent :]:
            self.transcript.append("> " + line)
        self._seen_sent = len(self.client.sent)
        for line in self.client.received[self._seen_received :]:
            self.transcript.append("< " + line)
        self._seen_received = len(self.client.received)

    async def request(self, method: str, params: Optional[dict] = None) -> dict:
        result = await self.client.request(method, params)
        self._sync_transcript()
        return result

    async def open(self, uri: str, language_id: str, content: str) -> dict:
        result = await self.request(
            "workspace/open",
            {"uri": uri, "languageId": language_id, "content": content},
        )
        return result["document"]

    async def prompt_and_apply(
        self, uri: str, rng: dict, instruction: str
    ) -> Tuple[dict, dict]:
        """promptToCode then applyPatch; returns (patch, patched document)."""
        prompted = await self.request(
            "chat/promptToCode", {"uri": uri, "range": rng, "instruction": instruction}
        )
        applied = await self.request(
            "chat/applyPatch", {"uri": uri, "patch": prompted["patch"]}
        )
        return prompted["patch"], applied["document"]


def _empty_range_at(line: int, column: int) -> dict:
    pos = {"line": line, "column": column}
    return {"start": pos, "end": pos}


def _end_range(content: str) -> dict:
    pos = end_position(content).to_wire()
    return {"start": pos, "end": pos}


def _sweep(
    implementation: Callable[[int, int], int],
    oracle: Callable[[int, int], int],
    label: str,
    bound: int = 50,
) -> None:
    for a in range(1, bound + 1):
        for b in range(1, bound + 1):
            got = implementation(a, b)
            want = oracle(a, b)
            _check(
                got == want,
                f"{label}({a}, {b}) = {got}, oracle says {want}",
            )


# ----- scenario bodies ------------------------------------------------------

SCRATCH = "Playground.swift"
SCRATCH_SEED = "// Assignment\n\n"


async def _scenario_hcf_bruteforce(h: Harness) -> None:
    await h.open(SCRATCH, "swift", SCRATCH_SEED)
    _, doc = await h.prompt_and_apply(
        SCRATCH, _empty_range_at(1, 0), "HCF of Two Numbers"
    )
    _check("func hcf" in doc["content"], "applied code must define func hcf")
    _sweep(hcf_bruteforce, gcd_oracle, "hcf_bruteforce")


async def _scenario_hcf_euclid(h: Harness) -> None:
    await h.open(SCRATCH, "swift", SCRATCH_SEED)
    _, doc = await h.prompt_and_apply(
        SCRATCH, _empty_range_at(1, 0), "HCF of Two Numbers by Euclidean Algorithm"
    )
    content = doc["content"]
    _check("while b != 0" in content, "expected a remainder loop")
    _check("a % b" in content, "expected a remainder computation")
    _sweep(hcf_euclid, gcd_oracle, "hcf_euclid")

    # Completion path: the canned table completes a gcd signature.
    appended = await h.request(
        "workspace/edit",
        {
            "uri": SCRATCH,
            "expectedVersion": doc["version"],
            "range": _end_range(content),
            "newText": "\nfunc gcd(",
        },
    )
    new_content = appended["document"]["content"]
    session = await h.request(
        "suggest/get",
        {"uri": SCRATCH, "cursor": end_position(new_content).to_wire()},
    )
    suggestions = session["session"]["suggestions"]
    _check(len(suggestions) == 1, "expected one completion for the gcd signature")
    _check("remainder" in suggestions[0]["text"], "completion should be the Euclid body")
    await h.request("suggest/reject", {"sessionId": session["session"]["sessionId"]})


async def _scenario_lcm_with_hcf(h: Harness) -> None:
    await h.open(SCRATCH, "swift", SCRATCH_SEED)
    _, doc = await h.prompt_and_apply(SCRATCH, _empty_range_at(1, 0), "LCM of Two Numbers")
    _check("hcf(" in doc["content"], "expected the LCM to call the HCF helper")
    _sweep(lcm_with_hcf, lcm_oracle, "lcm_with_hcf")


async def _scenario_lcm_no_hcf(h: Harness) -> None:
    await h.open(SCRATCH, "swift", SCRATCH_SEED)
    patch, doc = await h.prompt_and_apply(
        SCRATCH, _empty_range_at(1, 0), "LCM of Two Numbers without Using the HCF"
    )
    code = patch["edits"][0]["newText"]
    lowered = code.lower()
    _check("hcf" not in lowered, "the gcd-free LCM must not mention hcf")
    _check("gcd" not in lowered, "the gcd-free LCM must not mention gcd")
    _check("func lcm" in doc["content"], "applied code must define func lcm")
    _sweep(lcm_without_hcf, lcm_oracle, "lcm_without_hcf")


async def _scenario_swiftui_nav(h: Harness) -> None:
    uri = "App.swift"
    await h.open(uri, "swift", "")
    _, doc = await h.prompt_and_apply(
        uri, _empty_range_at(0, 0), "Create a navigating views app with SwiftUI"
    )
    _check("ContentView" in doc["content"], "first prompt should create ContentView")
    spacer = await h.request(
        "workspace/edit",
        {
            "uri": uri,
            "expectedVersion": doc["version"],
            "range": _end_range(doc["content"]),
            "newText": "\n\n",
        },
    )
    content = spacer["document"]["content"]
    _, doc = await h.prompt_and_apply(
        uri, _end_range(content), "Create the HomeView and DetailsView with SwiftUI"
    )
    _check("HomeView" in doc["content"], "HomeView must be present")
    _check("DetailsView" in doc["content"], "DetailsView must be present")
    _check("NavigationLink" in doc["content"], "navigation wiring must be present")


async def _scenario_oracle_duality(h: Harness) -> None:
    # gcd(a, b) * lcm(a, b) == a * b, exhaustively; the two oracles are
    # independent implementations, so this also cross-validates them.
    for a in range(1, 201):
        for b in range(1, 201):
            product = gcd_oracle(a, b) * lcm_oracle(a, b)
            _check(
                product == a * b,
                f"duality broken at ({a}, {b}): {product} != {a * b}",
            )


SCENARIOS: Dict[str, Callable[[Harness], Awaitable[None]]] = {
    "hcf-bruteforce": _scenario_hcf_bruteforce,
    "hcf-euclid": _scenario_hcf_euclid,
    "lcm-with-hcf": _scenario_lcm_with_hcf,
    "lcm-no-hcf": _scenario_lcm_no_hcf,
    "swiftui-nav": _scenario_swiftui_nav,
    "oracle-duality": _scenario_oracle_duality,
}


def scenario_names() -> List[str]:
    return list(SCENARIOS)


@dataclass
class ScenarioResult:
    name: str
    transcript: List[str] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


async def run_scenario(name: str) -> ScenarioResult:
    body = SCENARIOS.get(name)
    if body is None:
        raise ScenarioUnknown(
            f"unknown scenario {name!r}; known: {', '.join(scenario_names())}"
        )
    harness = Harness()
    result = ScenarioResult(name=name)
    try:
        await body(harness)
    except ScenarioFailed as exc:
        result.failures.append(str(exc))
    finally:
        harness._sync_transcript()
        result.transcript = list(harness.transcript)
        harness.client.close()
    return result
