import type {
  ApiErrorBody,
  Attrs,
  CounterfactualReport,
  HealthResponse,
  PredictResponse,
  RenderResponse,
  SweepResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface CounterfactualParams {
  seed: number;
  attrs: Attrs;
  target_stress: number;
  lambda?: number;
  norm_order?: number;
  step_size?: number;
  max_iters?: number;
}

/** Thin typed client over the JSON endpoints; all calls are cancellable. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init: RequestInit, signal?: AbortSignal): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, { ...init, signal });
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError(0, "network", `cannot reach ${this.baseUrl}: ${String(err)}`);
    }
    if (!response.ok) {
      let body: Partial<ApiErrorBody> = {};
      try {
        body = (await response.json()) as Partial<ApiErrorBody>;
      } catch {
        /* non-JSON error body; fall through to defaults */
      }
      throw new ApiError(
        response.status,
        body.code ?? "error",
        body.message ?? response.statusText,
      );
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(
      path,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      },
      signal,
    );
  }

  health(signal?: AbortSignal): Promise<HealthResponse> {
    return this.request<HealthResponse>("/health", { method: "GET" }, signal);
  }

  render(seed: number, attrs: Attrs, resolution: number, signal?: AbortSignal): Promise<RenderResponse> {
    return this.post<RenderResponse>("/render", { seed, attrs, resolution }, signal);
  }

  predict(seed: number, attrs: Attrs, signal?: AbortSignal): Promise<PredictResponse> {
    return this.post<PredictResponse>("/predict", { seed, attrs }, signal);
  }

  sweep(seed: number, attrs: Attrs, attrIndex: number, grid: number[], signal?: AbortSignal): Promise<SweepResponse> {
    return this.post<SweepResponse>("/sweep", { seed, attrs, attr_index: attrIndex, grid }, signal);
  }

  counterfactual(params: CounterfactualParams, signal?: AbortSignal): Promise<CounterfactualReport> {
    return this.post<CounterfactualReport>("/counterfactual", params, signal);
  }
}
