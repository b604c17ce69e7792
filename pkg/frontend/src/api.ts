/**
 * Typed client for the acquisition service JSON API.
 *
 * Field names mirror the service exactly; the console renders these payloads
 * as-is and performs no model math of its own.
 */

export interface FeatureInfo {
  name: string;
  kind: "numeric" | "categorical";
  cardinality: number;
  categories: string[];
  is_target: boolean;
  observed: boolean;
}

export interface Suggestion {
  feature: string;
  mi: number;
}

export interface NumericPrediction {
  kind: "numeric";
  mean: number;
  std: number;
  raw_mean: number;
  raw_std: number;
}

export interface CategoricalPrediction {
  kind: "categorical";
  category: string;
  frequencies: Record<string, number>;
}

export type Prediction = NumericPrediction | CategoricalPrediction;

export interface HistoryEntry {
  step: number;
  feature: string;
  mi: number | null;
  value: unknown;
  prediction: Prediction;
}

export interface SessionCreated {
  session_id: string;
  model_id: string;
  prediction: Prediction;
  features: FeatureInfo[];
}

export interface SuggestionsPayload {
  session_id: string;
  suggestions: Suggestion[];
}

export interface ObservationResult {
  session_id: string;
  prediction: Prediction;
}

export interface PredictionPayload {
  session_id: string;
  prediction: Prediction;
  history: HistoryEntry[];
  features: FeatureInfo[];
}

export interface ApiFailure {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

async function request<T>(input: string, init?: RequestInit): Promise<T> {
  const response = await fetch(input, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await response.json();
  if (!response.ok) {
    const failure = body as ApiFailure;
    throw new ApiError(response.status, failure.code ?? "error", failure.message ?? "request failed");
  }
  return body as T;
}

export class ServiceClient {
  constructor(private base: string = "") {}

  loadModel(checkpoint: string): Promise<{ model_id: string }> {
    return request(`${this.base}/models`, {
      method: "POST",
      body: JSON.stringify({ checkpoint }),
    });
  }

  createSession(modelId: string, seed?: number): Promise<SessionCreated> {
    return request(`${this.base}/sessions`, {
      method: "POST",
      body: JSON.stringify(seed === undefined ? { model_id: modelId } : { model_id: modelId, seed }),
    });
  }

  suggestions(sessionId: string, topN?: number): Promise<SuggestionsPayload> {
    const query = topN === undefined ? "" : `?top_n=${topN}`;
    return request(`${this.base}/sessions/${sessionId}/suggestions${query}`);
  }

  observe(sessionId: string, feature: string, value: unknown): Promise<ObservationResult> {
    return request(`${this.base}/sessions/${sessionId}/observations`, {
      method: "POST",
      body: JSON.stringify({ feature, value }),
    });
  }

  prediction(sessionId: string): Promise<PredictionPayload> {
    return request(`${this.base}/sessions/${sessionId}/prediction`);
  }

  deleteSession(sessionId: string): Promise<{ deleted: boolean }> {
    return request(`${this.base}/sessions/${sessionId}`, { method: "DELETE" });
  }
}
