// HTTP client for the calorie service. Only the endpoints the UI consumes;
// no other network calls.

import type { AnalysisJson, ChatResponseJson, EvidenceJson, HealthJson } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface AnalyzeResult {
  status: number; // 200, or 422 when no ingredients were parsed
  analysis: AnalysisJson;
}

async function errorMessage(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string };
    if (body && typeof body.error === "string") return body.error;
  } catch {
    // fall through to the generic message
  }
  return `request failed with status ${response.status}`;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<HealthJson> {
    const response = await this.fetchFn(this.url("/healthz"));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as HealthJson;
  }

  async analyze(image: Blob, filename: string, mediaType: string): Promise<AnalyzeResult> {
    const form = new FormData();
    form.append("image", new Blob([await image.arrayBuffer()], { type: mediaType }), filename);
    const response = await this.fetchFn(this.url("/v1/analyze"), {
      method: "POST",
      body: form,
    });
    if (response.status === 200 || response.status === 422) {
      return { status: response.status, analysis: (await response.json()) as AnalysisJson };
    }
    throw new ApiError(response.status, await errorMessage(response));
  }

  async chat(text: string, sessionId?: string, imageB64?: string): Promise<ChatResponseJson> {
    const payload: Record<string, string> = { text };
    if (sessionId) payload.session_id = sessionId;
    if (imageB64) payload.image_b64 = imageB64;
    const response = await this.fetchFn(this.url("/v1/chat"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as ChatResponseJson;
  }

  async searchKb(query: string, k: number): Promise<EvidenceJson> {
    const params = new URLSearchParams({ q: query, k: String(k) });
    const response = await this.fetchFn(this.url(`/v1/kb/search?${params.toString()}`));
    if (!response.ok) throw new ApiError(response.status, await errorMessage(response));
    return (await response.json()) as EvidenceJson;
  }
}

const BASE64_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

/** Portable base64 for browser and node test environments. */
export function bytesToBase64(bytes: Uint8Array): string {
  let out = "";
  for (let i = 0; i < bytes.length; i += 3) {
    const b0 = bytes[i] ?? 0;
    const b1 = bytes[i + 1];
    const b2 = bytes[i + 2];
    out += BASE64_ALPHABET[b0 >> 2];
    out += BASE64_ALPHABET[((b0 & 0x03) << 4) | ((b1 ?? 0) >> 4)];
    out += b1 === undefined ? "=" : BASE64_ALPHABET[((b1 & 0x0f) << 2) | ((b2 ?? 0) >> 6)];
    out += b2 === undefined ? "=" : BASE64_ALPHABET[b2 & 0x3f];
  }
  return out;
}

export async function blobToBase64(blob: Blob): Promise<string> {
  return bytesToBase64(new Uint8Array(await blob.arrayBuffer()));
}
