/**
 * Editor panel backed by the assist-bridge daemon.
 *
 * The panel never edits text on its own. Every keystroke in the pane is
 * sent to the daemon as a versioned edit and the pane re-renders from
 * the daemon's response, so what the user sees is always a document the
 * daemon acknowledged. Suggestions arrive as notifications, are cycled
 * and accepted through requests, and the widget label always restates
 * the daemon's own index and count.
 */

import {
  byteLength,
  ChatMessageView,
  ConnectionStatus,
  DocRange,
  DocumentState,
  fullRange,
  positionAtChar,
  ProtocolClient,
  SessionView,
  WireFailure,
} from "./protocol";

export interface PanelOptions {
  uri: string;
  languageId: string;
  /** Pixel height of one rendered line, used to place the widget. */
  lineHeightPx?: number;
  /** Pixel width of one character column for widget placement. */
  charWidthPx?: number;
}

const STATUS_TEXT: Record<ConnectionStatus, string> = {
  connecting: "connecting...",
  connected: "connected",
  reconnecting: "connection lost, retrying...",
  closed: "disconnected",
};

export class PanelController {
  readonly root: HTMLElement;
  readonly client: ProtocolClient;
  readonly uri: string;
  readonly languageId: string;

  version = -1;
  session: SessionView | null = null;
  conversationId: string | null = null;

  private readonly lineHeight: number;
  private readonly charWidth: number;
  /** Last content the daemon acknowledged; edits replace this range. */
  private knownContent = "";
  /** Serializes edits and other document work so versions line up. */
  private queue: Promise<void> = Promise.resolve();
  private streamBuffer = "";
  private everConnected = false;

  private banner!: HTMLElement;
  private noticeArea!: HTMLElement;
  private pane!: HTMLTextAreaElement;
  private widget!: HTMLElement;
  private widgetLabel!: HTMLElement;
  private widgetText!: HTMLElement;
  private prevButton!: HTMLButtonElement;
  private nextButton!: HTMLButtonElement;
  private acceptButton!: HTMLButtonElement;
  private rejectButton!: HTMLButtonElement;
  private chatMessages!: HTMLElement;
  private chatStreaming!: HTMLElement;
  private chatAttachment!: HTMLElement;
  private chatInput!: HTMLInputElement;
  private chatSend!: HTMLButtonElement;

  constructor(root: HTMLElement, client: ProtocolClient, options: PanelOptions) {
    this.root = root;
    this.client = client;
    this.uri = options.uri;
    this.languageId = options.languageId;
    this.lineHeight = options.lineHeightPx ?? 16;
    this.charWidth = options.charWidthPx ?? 8;

    this.buildDom();
    this.everConnected = client.status === "connected";

    client.onStatus((status) => this.handleStatus(status));
    client.onNotification("suggest/realtimeReady", (params) => {
      this.handleRealtimeReady(params?.session as SessionView | undefined);
    });
    client.onNotification("chat/streamChunk", (params) => {
      this.handleStreamChunk(params?.conversationId, params?.chunk);
    });
  }

  /** Open the document on the daemon with whatever the pane holds.
   * If the daemon already has it (socket reconnect, same process) the
   * daemon's copy wins and the pane re-renders from it. */
  async open(): Promise<void> {
    try {
      const result = await this.client.request<{ document: DocumentState }>(
        "workspace/open",
        { uri: this.uri, languageId: this.languageId, content: this.pane.value },
      );
      this.adoptDocument(result.document);
    } catch (err) {
      if (err instanceof WireFailure && err.errorName === "AlreadyOpen") {
        const result = await this.client.request<{ document: DocumentState }>(
          "workspace/diagnostics",
          { uri: this.uri, diagnostics: [] },
        );
        this.adoptDocument(result.document);
        return;
      }
      throw err;
    }
  }

  /** Wait for queued document work (edits, realtime scheduling). */
  flush(): Promise<void> {
    return this.queue;
  }

  close(): void {
    this.client.close();
  }

  // ----- document sync ------------------------------------------------------

  private adoptDocument(doc: DocumentState): void {
    this.version = doc.version;
    this.knownContent = doc.content;
    if (this.pane.value !== doc.content) {
      this.pane.value = doc.content;
    }
  }

  /** Called on every keystroke: ship the new pane content as one
   * full-document edit, then ask for a realtime suggestion at the caret. */
  private onPaneInput(): void {
    const newText = this.pane.value;
    const caret = this.pane.selectionStart ?? newText.length;
    this.enqueue(async () => {
      if (newText === this.knownContent) return;
      const result = await this.client.request<{ document: DocumentState }>(
        "workspace/edit",
        {
          uri: this.uri,
          expectedVersion: this.version,
          range: fullRange(this.knownContent),
          newText,
        },
      );
      // The pane may have moved on while the request was in flight; only
      // record what the daemon now holds, never overwrite the pane.
      this.version = result.document.version;
      this.knownContent = result.document.content;
      this.clearSession();
      await this.client.request("suggest/realtime", {
        uri: this.uri,
        version: this.version,
        cursor: positionAtChar(newText, caret),
      });
    });
  }

  private enqueue(task: () => Promise<void>): void {
    this.queue = this.queue.then(task).catch((err) => this.reportFailure(err));
  }

  // ----- suggestions --------------------------------------------------------

  private handleRealtimeReady(session: SessionView | undefined): void {
    if (!session || session.documentId !== this.uri) return;
    if (session.state !== "Presenting") return;
    this.renderSession(session);
    this.enqueue(async () => {
      const result = await this.client.request<{ anchor: { line: number; column: number } }>(
        "suggest/anchor",
        { uri: this.uri, cursor: session.cursor, mode: "FloatingWidget" },
      );
      this.widget.style.top = `${result.anchor.line * this.lineHeight}px`;
      this.widget.style.left = `${result.anchor.column * this.charWidth}px`;
    });
  }

  private renderSession(session: SessionView): void {
    this.session = session;
    const count = session.suggestions.length;
    this.widget.hidden = false;
    this.widgetLabel.textContent = `suggestion ${session.activeIndex + 1} of ${count}`;
    this.widgetText.textContent =
      count > 0 ? session.suggestions[session.activeIndex]?.text ?? "" : "(no suggestions)";
    this.acceptButton.disabled = count === 0;
    this.prevButton.disabled = count < 2;
    this.nextButton.disabled = count < 2;
  }

  private clearSession(): void {
    this.session = null;
    this.widget.hidden = true;
    this.widgetLabel.textContent = "";
    this.widgetText.textContent = "";
  }

  private cycle(method: "suggest/next" | "suggest/previous"): void {
    const session = this.session;
    if (session === null) return;
    this.enqueue(async () => {
      const result = await this.client.request<{ session: SessionView }>(method, {
        sessionId: session.sessionId,
      });
      this.renderSession(result.session);
    });
  }

  private acceptActive(): void {
    const session = this.session;
    if (session === null) return;
    this.enqueue(async () => {
      const result = await this.client.request<{
        document: DocumentState;
        appliedRange: DocRange;
      }>("suggest/accept", { sessionId: session.sessionId });
      this.adoptDocument(result.document);
      this.clearSession();
    });
  }

  private rejectActive(): void {
    const session = this.session;
    if (session === null) return;
    this.enqueue(async () => {
      const result = await this.client.request<{ document: DocumentState }>(
        "suggest/reject",
        { sessionId: session.sessionId },
      );
      this.version = result.document.version;
      this.knownContent = result.document.content;
      this.clearSession();
    });
  }

  // ----- chat ---------------------------------------------------------------

  sendChat(text: string): void {
    if (text === "") return;
    this.appendChatMessage({ role: "user", content: text });
    const attach = this.currentAttachment();
    this.enqueue(async () => {
      if (this.conversationId === null) {
        const created = await this.client.request<{ conversationId: string }>("chat/new");
        this.conversationId = created.conversationId;
      }
      this.streamBuffer = "";
      this.chatStreaming.hidden = false;
      this.chatStreaming.textContent = "";
      const params: Record<string, unknown> = {
        conversationId: this.conversationId,
        text,
      };
      if (attach !== null) params.attach = attach;
      const result = await this.client.request<{ message: ChatMessageView }>(
        "chat/send",
        params,
      );
      this.chatStreaming.hidden = true;
      this.appendChatMessage(result.message);
    });
  }

  /** Attach the pane selection, if any, and describe it next to the input. */
  private currentAttachment(): Record<string, unknown> | null {
    const start = this.pane.selectionStart ?? 0;
    const end = this.pane.selectionEnd ?? 0;
    if (start === end) {
      this.chatAttachment.textContent = "";
      return null;
    }
    const content = this.pane.value;
    const selected = content.slice(Math.min(start, end), Math.max(start, end));
    this.chatAttachment.textContent = `${this.uri} (${byteLength(selected)} bytes selected)`;
    return {
      uri: this.uri,
      selection: {
        start: positionAtChar(content, Math.min(start, end)),
        end: positionAtChar(content, Math.max(start, end)),
      },
    };
  }

  private handleStreamChunk(conversationId: unknown, chunk: unknown): void {
    if (conversationId !== this.conversationId || typeof chunk !== "string") return;
    this.streamBuffer += chunk;
    this.chatStreaming.textContent = this.streamBuffer;
  }

  private appendChatMessage(message: ChatMessageView): void {
    const el = document.createElement("div");
    el.className = "chat-message";
    el.dataset.role = message.role;
    el.textContent = message.content;
    this.chatMessages.appendChild(el);
  }

  // ----- connection status and failures -------------------------------------

  private handleStatus(status: ConnectionStatus): void {
    this.banner.textContent = STATUS_TEXT[status];
    this.banner.dataset.status = status;
    if (status === "reconnecting" || status === "closed") {
      // A session we cannot cycle or accept is worse than none.
      this.clearSession();
    }
    if (status === "connected") {
      if (this.everConnected) {
        // Fresh socket, possibly a fresh daemon: re-open and re-render.
        this.enqueue(() => this.open());
        this.notice("reconnected to the assist daemon");
      }
      this.everConnected = true;
    }
  }

  private reportFailure(err: unknown): void {
    if (err instanceof WireFailure) {
      if (err.errorName === "StaleSession") {
        this.clearSession();
        this.notice("that suggestion went stale; keep typing for a fresh one");
        return;
      }
      this.notice(`daemon refused the request: ${err.message}`);
      return;
    }
    this.notice(err instanceof Error ? err.message : String(err));
  }

  /** Show a dismissible notice above the pane. */
  notice(text: string): void {
    const note = document.createElement("div");
    note.className = "notice";
    const label = document.createElement("span");
    label.textContent = text;
    const dismiss = document.createElement("button");
    dismiss.className = "notice-dismiss";
    dismiss.textContent = "dismiss";
    dismiss.addEventListener("click", () => note.remove());
    note.append(label, dismiss);
    this.noticeArea.appendChild(note);
  }

  // ----- dom ----------------------------------------------------------------

  private buildDom(): void {
    this.banner = document.createElement("div");
    this.banner.className = "status-banner";
    this.banner.textContent = STATUS_TEXT[this.client.status];
    this.banner.dataset.status = this.client.status;

    this.noticeArea = document.createElement("div");
    this.noticeArea.className = "notice-area";

    this.pane = document.createElement("textarea");
    this.pane.className = "editor-pane";
    this.pane.addEventListener("input", () => this.onPaneInput());

    this.widget = document.createElement("div");
    this.widget.className = "suggestion-widget";
    this.widget.hidden = true;
    this.widget.style.position = "absolute";

    this.widgetLabel = document.createElement("div");
    this.widgetLabel.className = "widget-label";
    this.widgetText = document.createElement("pre");
    this.widgetText.className = "widget-text";

    this.prevButton = this.makeButton("prev", "previous", () => this.cycle("suggest/previous"));
    this.nextButton = this.makeButton("next", "next", () => this.cycle("suggest/next"));
    this.acceptButton = this.makeButton("accept", "accept", () => this.acceptActive());
    this.rejectButton = this.makeButton("reject", "reject", () => this.rejectActive());

    const controls = document.createElement("div");
    controls.className = "widget-controls";
    controls.append(this.prevButton, this.nextButton, this.acceptButton, this.rejectButton);
    this.widget.append(this.widgetLabel, this.widgetText, controls);

    const editorWrap = document.createElement("div");
    editorWrap.className = "editor-wrap";
    editorWrap.style.position = "relative";
    editorWrap.append(this.pane, this.widget);

    this.chatMessages = document.createElement("div");
    this.chatMessages.className = "chat-messages";
    this.chatStreaming = document.createElement("div");
    this.chatStreaming.className = "chat-streaming";
    this.chatStreaming.hidden = true;
    this.chatAttachment = document.createElement("div");
    this.chatAttachment.className = "chat-attachment";

    this.chatInput = document.createElement("input");
    this.chatInput.className = "chat-input";
    this.chatSend = document.createElement("button");
    this.chatSend.className = "chat-send";
    this.chatSend.textContent = "send";
    this.chatSend.addEventListener("click", () => {
      const text = this.chatInput.value;
      this.chatInput.value = "";
      this.sendChat(text);
    });

    const chatRow = document.createElement("div");
    chatRow.className = "chat-row";
    chatRow.append(this.chatInput, this.chatSend);

    const chat = document.createElement("div");
    chat.className = "chat";
    chat.append(this.chatMessages, this.chatStreaming, this.chatAttachment, chatRow);

    this.root.append(this.banner, this.noticeArea, editorWrap, chat);
  }

  private makeButton(
    cls: string,
    label: string,
    onClick: () => void,
  ): HTMLButtonElement {
    const button = document.createElement("button");
    button.className = cls;
    button.textContent = label;
    button.addEventListener("click", onClick);
    return button;
  }
}
