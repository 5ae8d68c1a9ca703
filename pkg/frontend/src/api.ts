// HTTP client for the triage service. Pure translation: every method
// is one endpoint, errors carry the server's status and detail so the
// UI can distinguish conflicts from outages.

import type {
  Explanation,
  FrameImage,
  InspectionRecord,
  ModelEntry,
  QueuePage,
  RawLabel,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

// Network-level failure (server unreachable), as opposed to an HTTP
// error response. The queue view shows a retry banner on these.
export class UnreachableError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = "UnreachableError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ConsoleApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    const fallback = globalThis.fetch?.bind(globalThis);
    if (!fetchFn && !fallback) {
      throw new Error("no fetch implementation available");
    }
    this.fetchFn = fetchFn ?? (fallback as FetchLike);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (cause) {
      throw new UnreachableError(cause);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const detail =
        typeof body === "object" && body !== null && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return body as T;
  }

  getQueue(page = 0, pageSize = 20, status?: string): Promise<QueuePage> {
    const query = new URLSearchParams({
      page: String(page),
      page_size: String(pageSize),
    });
    if (status) query.set("status", status);
    return this.request<QueuePage>(`/queue?${query}`);
  }

  getInspection(id: string): Promise<InspectionRecord> {
    return this.request<InspectionRecord>(`/inspections/${id}`);
  }

  submitLabel(
    id: string,
    rawLabel: RawLabel,
    operator: string,
  ): Promise<InspectionRecord> {
    return this.request<InspectionRecord>(`/inspections/${id}/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ raw_label: rawLabel, operator }),
    });
  }

  getExplanation(id: string, targetClass?: number): Promise<Explanation> {
    const query =
      targetClass === undefined ? "" : `?class=${targetClass}`;
    return this.request<Explanation>(`/inspections/${id}/explanation${query}`);
  }

  getFrame(id: string, index: number): Promise<FrameImage> {
    return this.request<FrameImage>(`/inspections/${id}/frames/${index}`);
  }

  getModels(): Promise<ModelEntry[]> {
    return this.request<ModelEntry[]>("/models");
  }

  getProductionModel(): Promise<ModelEntry> {
    return this.request<ModelEntry>("/models/production");
  }
}
