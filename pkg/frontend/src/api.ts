/**
 * Typed client for the inference service. The UI talks to the server only
 * through these three endpoints.
 */

import type { RleMask } from "./rle.js";

export interface CaseSummary {
  id: string;
  split: string;
  resolution: [number, number];
}

export interface WindowedPng {
  png_base64: string;
  window: { lo: number; hi: number };
}

export interface CaseImages {
  id: string;
  x1: WindowedPng;
  x2: WindowedPng;
  y: WindowedPng;
  lesion: WindowedPng;
}

export interface SynthesisMetrics {
  psnr_db: number;
  ssim: number;
  nmse: number;
}

export interface SynthesisResponse {
  case_id: string;
  y_hat: WindowedPng;
  stats: { min: number; max: number; mean: number };
  metrics?: SynthesisMetrics;
  checkpoint_hash: string;
  model_seed: number;
}

export type PromptSpec = RleMask | "lesion" | null;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({ error: response.statusText }));
  if (!response.ok) {
    throw new ApiError(response.status, (body as { error?: string }).error ?? "request failed");
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  listCases(): Promise<CaseSummary[]> {
    return fetch(`${this.baseUrl}/api/cases`).then((r) => asJson<CaseSummary[]>(r));
  }

  caseImages(id: string): Promise<CaseImages> {
    return fetch(`${this.baseUrl}/api/cases/${encodeURIComponent(id)}/images`).then((r) =>
      asJson<CaseImages>(r),
    );
  }

  synthesize(caseId: string, prompt: PromptSpec, returnMetrics = true): Promise<SynthesisResponse> {
    return fetch(`${this.baseUrl}/api/synthesize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ case_id: caseId, prompt, return_metrics: returnMetrics }),
    }).then((r) => asJson<SynthesisResponse>(r));
  }
}
