// Conversation state: message list, persisted session id, client-side upload
// checks, and a single-in-flight queue so rapid submits cannot interleave
// turns within the session.

import { ApiClient, ApiError, blobToBase64 } from "./api.js";
import { bannerForStatus } from "./render.js";
import { ALLOWED_IMAGE_TYPES, type UiMessage } from "./types.js";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export class MemoryStorage implements StorageLike {
  private items = new Map<string, string>();

  getItem(key: string): string | null {
    return this.items.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.items.set(key, value);
  }

  removeItem(key: string): void {
    this.items.delete(key);
  }
}

export interface UploadCandidate {
  name: string;
  type: string;
  size: number;
  blob: Blob;
}

const SESSION_KEY = "caloraify.session_id";

export const NO_SESSION_MESSAGE = "Upload a food photo first, then ask follow-up questions.";

export class ChatController {
  readonly messages: UiMessage[] = [];

  private sessionId: string | null;
  private maxImageBytes: number | null = null;
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly api: ApiClient,
    private readonly storage: StorageLike = new MemoryStorage(),
    private readonly onChange: () => void = () => {},
  ) {
    this.sessionId = this.storage.getItem(SESSION_KEY);
  }

  get activeSessionId(): string | null {
    return this.sessionId;
  }

  /** Mirror the server-side upload limit from /healthz; safe to skip on failure. */
  async init(): Promise<void> {
    try {
      const health = await this.api.health();
      this.maxImageBytes = health.max_image_bytes;
    } catch {
      this.maxImageBytes = null;
    }
  }

  /** Serialize sends: a second submit waits for the one in flight. */
  private enqueue<T>(work: () => Promise<T>): Promise<T> {
    const next = this.queue.then(work, work);
    this.queue = next.catch(() => undefined);
    return next;
  }

  private push(message: UiMessage): void {
    this.messages.push(message);
    this.onChange();
  }

  private setSession(sessionId: string): void {
    this.sessionId = sessionId;
    this.storage.setItem(SESSION_KEY, sessionId);
  }

  private clearSession(): void {
    this.sessionId = null;
    this.storage.removeItem(SESSION_KEY);
  }

  sendImage(file: UploadCandidate): Promise<void> {
    return this.enqueue(() => this.doSendImage(file));
  }

  sendFollowup(text: string): Promise<void> {
    return this.enqueue(() => this.doSendFollowup(text));
  }

  private async doSendImage(file: UploadCandidate): Promise<void> {
    if (!(ALLOWED_IMAGE_TYPES as readonly string[]).includes(file.type)) {
      this.push({ role: "assistant", text: "", banner: bannerForStatus(415) });
      return;
    }
    if (this.maxImageBytes !== null && file.size > this.maxImageBytes) {
      this.push({ role: "assistant", text: "", banner: bannerForStatus(413) });
      return;
    }
    this.push({ role: "user", text: "", imageName: file.name });
    try {
      const result = await this.api.analyze(file.blob, file.name, file.type);
      // establish/extend the session so follow-ups can reference this analysis
      const imageB64 = await blobToBase64(file.blob);
      const chat = await this.api.chat("analyze this dish", this.sessionId ?? undefined, imageB64);
      this.setSession(chat.session_id);
      if (result.status === 422) {
        this.push({ role: "assistant", text: result.analysis.final_answer });
        return;
      }
      this.push({
        role: "assistant",
        text: "",
        report: result.analysis.report,
        evidence: result.analysis.evidence,
      });
    } catch (error) {
      this.pushErrorBanner(error);
    }
  }

  private async doSendFollowup(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed) return;
    if (!this.sessionId) {
      this.push({ role: "user", text: trimmed });
      this.push({ role: "assistant", text: NO_SESSION_MESSAGE });
      return;
    }
    this.push({ role: "user", text: trimmed });
    try {
      const response = await this.api.chat(trimmed, this.sessionId);
      this.push({ role: "assistant", text: response.assistant_text });
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        // evicted on the server: drop the stale id and offer a fresh start
        this.clearSession();
      }
      this.pushErrorBanner(error);
    }
  }

  private pushErrorBanner(error: unknown): void {
    const status = error instanceof ApiError ? error.status : 0;
    const banner = status > 0 ? bannerForStatus(status) : "Network error. Please retry.";
    this.push({ role: "assistant", text: "", banner });
  }
}
