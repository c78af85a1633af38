/**
 * WebSocket client for the assist-bridge daemon.
 *
 * One frame per message, canonical JSON. Requests carry strictly
 * increasing integer ids and are matched to responses through a pending
 * map; frames without an id are server notifications. The client
 * reconnects with backoff when the socket drops and reports status
 * changes so a UI can show a banner instead of crashing.
 */

export interface Position {
  line: number;
  column: number; // byte offset within the line, not characters
}

export interface DocRange {
  start: Position;
  end: Position;
}

export interface DocumentState {
  uri: string;
  languageId: string;
  version: number;
  content: string;
  diagnostics: unknown[];
}

export interface Suggestion {
  id: string;
  text: string;
  providerId: string;
  ordinal: number;
  replaceRange: DocRange;
}

export interface CommentBlock {
  insertedRange: DocRange;
}

export type SessionState = "Presenting" | "Accepted" | "Rejected" | "Invalidated";

export interface SessionView {
  sessionId: string;
  documentId: string;
  boundVersion: number;
  cursor: Position;
  suggestions: Suggestion[];
  activeIndex: number;
  state: SessionState;
  mode: string;
  commentBlock: CommentBlock | null;
}

export interface ChatMessageView {
  role: "system" | "user" | "assistant";
  content: string;
}

export interface WireErrorShape {
  code: number;
  message: string;
  data?: Record<string, unknown>;
}

export class WireFailure extends Error {
  readonly code: number;
  readonly data: Record<string, unknown>;

  constructor(err: WireErrorShape) {
    super(err.message);
    this.name = "WireFailure";
    this.code = err.code;
    this.data = err.data ?? {};
  }

  /** Domain error name carried in data.error, e.g. "StaleSession". */
  get errorName(): string {
    return typeof this.data.error === "string" ? this.data.error : "";
  }
}

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "reconnecting"
  | "closed";

/** The slice of the WebSocket surface we use; the browser's WebSocket
 * and the `ws` package both provide it. */
export interface SocketLike {
  onopen: ((event?: unknown) => void) | null;
  onclose: ((event?: unknown) => void) | null;
  onerror: ((event?: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface ProtocolClientOptions {
  /** Override socket construction; defaults to the global WebSocket. */
  socketFactory?: (url: string) => SocketLike;
  /** Reconnect delays; the last entry repeats. */
  backoffMs?: number[];
}

interface Pending {
  resolve: (value: unknown) => void;
  reject: (err: Error) => void;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000];

export class ProtocolClient {
  readonly url: string;
  status: ConnectionStatus = "connecting";

  private readonly factory: (url: string) => SocketLike;
  private readonly backoff: number[];
  private readonly statusListeners: Array<(status: ConnectionStatus) => void> = [];
  private readonly pending = new Map<number, Pending>();
  private readonly handlers = new Map<string, Array<(params: any) => void>>();
  private socket: SocketLike | null = null;
  private nextId = 1;
  private attempts = 0;
  private closedOnPurpose = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private firstOpen: (() => void) | null = null;

  constructor(url: string, options: ProtocolClientOptions = {}) {
    this.url = url;
    this.factory =
      options.socketFactory ??
      ((target: string) => new WebSocket(target) as unknown as SocketLike);
    this.backoff = options.backoffMs ?? DEFAULT_BACKOFF;
  }

  onStatus(listener: (status: ConnectionStatus) => void): void {
    this.statusListeners.push(listener);
  }

  /** Resolves on the first successful open; retries keep running in the
   * background, so against a dead daemon this stays pending while the
   * status reports "reconnecting". */
  connect(): Promise<void> {
    return new Promise((resolve) => {
      this.firstOpen = resolve;
      this.openSocket();
    });
  }

  close(): void {
    this.closedOnPurpose = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.socket?.close();
    this.socket = null;
    this.setStatus("closed");
    this.failPending(new Error("client closed"));
  }

  onNotification(method: string, handler: (params: any) => void): void {
    const list = this.handlers.get(method) ?? [];
    list.push(handler);
    this.handlers.set(method, list);
  }

  request<T = any>(method: string, params?: Record<string, unknown>): Promise<T> {
    const socket = this.socket;
    if (socket === null || this.status !== "connected") {
      return Promise.reject(new Error(`not connected (status: ${this.status})`));
    }
    const id = this.nextId++;
    return new Promise<T>((resolve, reject) => {
      this.pending.set(id, { resolve: resolve as (v: unknown) => void, reject });
      socket.send(JSON.stringify({ id, method, params: params ?? {} }));
    });
  }

  private setStatus(status: ConnectionStatus): void {
    if (this.status === status) return;
    this.status = status;
    for (const listener of this.statusListeners) {
      listener(status);
    }
  }

  private openSocket(): void {
    this.retryTimer = null;
    let socket: SocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.setStatus("connected");
      this.firstOpen?.();
      this.firstOpen = null;
    };
    socket.onmessage = (event) => this.receive(String(event.data));
    socket.onerror = () => {
      // The close handler owns recovery; nothing to do here.
    };
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded by a newer socket
      this.socket = null;
      this.failPending(new Error("connection lost"));
      if (this.closedOnPurpose) {
        this.setStatus("closed");
        return;
      }
      this.scheduleRetry();
    };
  }

  private scheduleRetry(): void {
    if (this.closedOnPurpose) return;
    this.setStatus("reconnecting");
    const index = Math.min(this.attempts, this.backoff.length - 1);
    this.attempts += 1;
    this.retryTimer = setTimeout(() => this.openSocket(), this.backoff[index]);
  }

  private failPending(err: Error): void {
    for (const entry of this.pending.values()) {
      entry.reject(err);
    }
    this.pending.clear();
  }

  private receive(raw: string): void {
    let frame: any;
    try {
      frame = JSON.parse(raw);
    } catch {
      return; // a broken frame from the server is not the UI's problem
    }
    if (frame === null || typeof frame !== "object") return;
    if (typeof frame.id === "number" && this.pending.has(frame.id)) {
      const entry = this.pending.get(frame.id)!;
      this.pending.delete(frame.id);
      if (frame.error) {
        entry.reject(new WireFailure(frame.error as WireErrorShape));
      } else {
        entry.resolve(frame.result);
      }
      return;
    }
    if (typeof frame.method === "string") {
      for (const handler of this.handlers.get(frame.method) ?? []) {
        handler(frame.params ?? {});
      }
    }
  }
}

const encoder = new TextEncoder();

/** Byte length of a string in UTF-8, the daemon's column unit. */
export function byteLength(text: string): number {
  return encoder.encode(text).length;
}

/** Convert a character index (textarea selectionStart) to a daemon
 * position: line plus byte column. */
export function positionAtChar(content: string, charIndex: number): Position {
  const before = content.slice(0, charIndex);
  const lines = before.split("\n");
  const line = lines.length - 1;
  return { line, column: byteLength(lines[line] ?? "") };
}

/** The range covering the whole document, for full-replace edits. */
export function fullRange(content: string): DocRange {
  return {
    start: { line: 0, column: 0 },
    end: positionAtChar(content, content.length),
  };
}
