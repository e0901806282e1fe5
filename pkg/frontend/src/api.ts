/** Typed client for the reshapekit HTTP service.
 *
 * Every byte of state the UI shows comes through this client; there is no
 * direct file or model access on the browser side.
 */

export interface AttributeMapInfo {
  names: string[];
  beta0: number[];
  matrix: number[][];
  attr_mean: number[];
  attr_scale: number[];
  attr_min: number[];
  attr_max: number[];
}

export interface HistoryEntry {
  index: number;
  timestamp: number;
  kind: string;
  edits: Record<string, number>;
  beta: number[];
  slider_state: Record<string, number>;
  conditioning_blob: string;
}

export interface GenerationRecord {
  index: number;
  timestamp: number;
  history_index: number;
  prompt: string;
  params: Record<string, unknown>;
  request_digest: string;
  output_blob: string;
  backend_meta: Record<string, unknown>;
  attempts: unknown[];
}

export interface ProjectHistory {
  project_id: string;
  fit: Record<string, unknown> | null;
  entries: HistoryEntry[];
  generations: GenerationRecord[];
}

export interface SliderResponse {
  history_index: number;
  beta: number[];
  slider_state: Record<string, number>;
}

export interface FitResponse {
  project_id: string;
  history_index: number;
  slider_state: Record<string, number>;
}

export interface GenerateRequest {
  prompt: string;
  params?: Record<string, unknown>;
  history_index?: number;
}

/** The generation prompts the service accepts, plus the neutral baseline. */
export const CANONICAL_PROMPTS = [
  "Make the person fatter",
  "Make the person thinner",
  "Make the person muscular",
] as const;
export const NEUTRAL_PROMPT = "A photo of a person";
export const ALL_PROMPTS = [...CANONICAL_PROMPTS, NEUTRAL_PROMPT];

/** Server rejected the request; `message` is the service's verbatim error. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    public readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const payload = await response.json();
        if (payload && typeof payload.error === "string") message = payload.error;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, message);
    }
    return response;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<{ status: string; version: string }> {
    return this.json("/healthz");
  }

  getMap(): Promise<AttributeMapInfo> {
    return this.json("/map");
  }

  async createProject(referencePng: Uint8Array): Promise<string> {
    const form = new FormData();
    form.append(
      "reference",
      new Blob([referencePng as BlobPart], { type: "image/png" }),
      "reference.png",
    );
    const payload = await this.json<{ project_id: string }>("/projects", {
      method: "POST",
      body: form,
    });
    return payload.project_id;
  }

  importFit(projectId: string, fitDoc: Record<string, unknown>): Promise<FitResponse> {
    return this.post(`/projects/${projectId}/fit`, fitDoc);
  }

  applySliders(projectId: string, edits: Record<string, number>): Promise<SliderResponse> {
    return this.post(`/projects/${projectId}/sliders`, { edits });
  }

  getHistory(projectId: string): Promise<ProjectHistory> {
    return this.json(`/projects/${projectId}/history`);
  }

  getMesh(projectId: string): Promise<{ vertices: number[][]; faces: number[][] }> {
    return this.json(`/projects/${projectId}/mesh.json`);
  }

  generate(projectId: string, request: GenerateRequest): Promise<GenerationRecord> {
    return this.post(`/projects/${projectId}/generate`, request);
  }

  private async png(path: string): Promise<Uint8Array> {
    const response = await this.request(path);
    return new Uint8Array(await response.arrayBuffer());
  }

  getConditioningPng(projectId: string): Promise<Uint8Array> {
    return this.png(`/projects/${projectId}/conditioning.png`);
  }

  getReferencePng(projectId: string): Promise<Uint8Array> {
    return this.png(`/projects/${projectId}/reference.png`);
  }

  getGenerationPng(projectId: string, index: number): Promise<Uint8Array> {
    return this.png(`/projects/${projectId}/generations/${index}/output.png`);
  }

  /** URL for citing a PNG directly in an <img> tag. */
  imageUrl(path: string): string {
    return this.baseUrl + path;
  }
}
