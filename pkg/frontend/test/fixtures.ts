/** Recorded service payloads from a live session against a 4-feature model. */

import type {
  ObservationResult,
  PredictionPayload,
  SessionCreated,
  SuggestionsPayload,
} from "../src/api.js";

export const FEATURES = [
  { name: "x0", kind: "numeric", cardinality: 0, categories: [], is_target: false, observed: false },
  { name: "x1", kind: "numeric", cardinality: 0, categories: [], is_target: false, observed: false },
  { name: "color", kind: "categorical", cardinality: 3, categories: ["blue", "green", "red"], is_target: false, observed: false },
  { name: "target", kind: "numeric", cardinality: 0, categories: [], is_target: true, observed: false },
] as const;

export const CREATED: SessionCreated = {
  session_id: "abc123",
  model_id: "m-deadbeef0000",
  prediction: { kind: "numeric", mean: 0.012, std: 1.004, raw_mean: 5.12, raw_std: 2.31 },
  features: FEATURES.map((f) => ({ ...f, categories: [...f.categories] })),
};

export const SUGGESTIONS_1: SuggestionsPayload = {
  session_id: "abc123",
  suggestions: [
    { feature: "x1", mi: 0.8321 },
    { feature: "color", mi: 0.41299 },
    { feature: "x0", mi: 0.4129 },
  ],
};

export const OBSERVED_X1: ObservationResult = {
  session_id: "abc123",
  prediction: { kind: "numeric", mean: -0.31, std: 0.42, raw_mean: 4.4, raw_std: 0.97 },
};

export const SUGGESTIONS_2: SuggestionsPayload = {
  session_id: "abc123",
  suggestions: [
    { feature: "x0", mi: 0.2205 },
    { feature: "color", mi: 0.1101 },
  ],
};

export const PREDICTION_AFTER_X1: PredictionPayload = {
  session_id: "abc123",
  prediction: OBSERVED_X1.prediction,
  history: [
    { step: 1, feature: "x1", mi: 0.8321, value: 1.75, prediction: OBSERVED_X1.prediction },
  ],
  features: CREATED.features.map((f) => ({ ...f, observed: f.name === "x1" })),
};
