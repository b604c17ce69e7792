/**
 * Session-view reducer: folds service payloads into the view model.
 *
 * The console is stateless beyond the session id; a reload that refetches
 * (or a replayed transcript of payloads) rebuilds the identical view.
 */

import type {
  ObservationResult,
  PredictionPayload,
  SessionCreated,
  SuggestionsPayload,
} from "./api.js";
import { emptyView, type SessionView } from "./view.js";

export type ServiceEvent =
  | { type: "created"; payload: SessionCreated }
  | { type: "suggestions"; payload: SuggestionsPayload }
  | { type: "observed"; payload: ObservationResult; feature: string; value: unknown }
  | { type: "prediction"; payload: PredictionPayload };

export function applyEvent(view: SessionView, event: ServiceEvent): SessionView {
  switch (event.type) {
    case "created":
      return emptyView(event.payload.features, event.payload.prediction);
    case "suggestions":
      // exactly the server order, never re-sorted client-side
      return { ...view, suggestions: event.payload.suggestions };
    case "observed":
      return {
        ...view,
        observed: { ...view.observed, [event.feature]: event.value },
        prediction: event.payload.prediction,
        suggestions: [],
      };
    case "prediction": {
      // the payload is self-contained: feature table plus the history of
      // observations, so the observed map is rebuilt rather than merged
      const observed: Record<string, unknown> = {};
      for (const h of event.payload.history) {
        observed[h.feature] = h.value;
      }
      return {
        features: event.payload.features,
        observed,
        suggestions: view.suggestions,
        prediction: event.payload.prediction,
        history: event.payload.history,
      };
    }
  }
}

export function replay(events: ServiceEvent[]): SessionView {
  let view: SessionView = { features: [], observed: {}, suggestions: [], prediction: null, history: [] };
  for (const event of events) {
    view = applyEvent(view, event);
  }
  return view;
}
