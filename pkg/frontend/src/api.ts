/** Thin typed client over the service's JSON API.
 *
 * The UI never computes distances or votes; everything rendered comes
 * verbatim from these responses.
 */

import type {
  AnnotateRequest,
  AnnotationRecord,
  QueryRequest,
  QueryResponse,
  SpecialtyNode,
  UploadResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx response; `code` is the service's stable error code. */
export class ApiRequestError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => globalThis.fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const text = await response.text();
    if (!response.ok) {
      let code = "INTERNAL";
      let message = text || response.statusText;
      try {
        const body = JSON.parse(text) as { code?: string; message?: string };
        if (body.code) code = body.code;
        if (body.message) message = body.message;
      } catch {
        // non-JSON error body; keep the raw text
      }
      throw new ApiRequestError(code, message, response.status);
    }
    return JSON.parse(text) as T;
  }

  async uploadImage(data: Blob | Uint8Array, filename: string): Promise<UploadResponse> {
    // copy via the constructor so the payload is backed by a plain ArrayBuffer
    const blob = data instanceof Blob ? data : new Blob([new Uint8Array(data)]);
    const form = new FormData();
    form.append("image", blob, filename);
    return this.request<UploadResponse>("/api/images", { method: "POST", body: form });
  }

  async query(body: QueryRequest): Promise<QueryResponse> {
    return this.request<QueryResponse>("/api/query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async annotate(body: AnnotateRequest): Promise<AnnotationRecord> {
    return this.request<AnnotationRecord>("/api/annotations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async specialties(): Promise<SpecialtyNode[]> {
    const body = await this.request<{ specialties: SpecialtyNode[] }>("/api/specialties");
    return body.specialties;
  }

  async annotationsFor(imageId: string): Promise<AnnotationRecord[]> {
    return this.request<AnnotationRecord[]>(
      `/api/images/${encodeURIComponent(imageId)}/annotations`,
    );
  }

  /** URL for an <img> tag; the browser fetches it directly. */
  rawUrl(imageId: string): string {
    return `${this.baseUrl}/api/images/${encodeURIComponent(imageId)}/raw`;
  }
}
