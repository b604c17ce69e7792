/**
 * DOM wiring for the acquisition console.
 *
 * One operator, one session: every action disables the controls until the
 * service answers, then re-renders from the fresh payloads.  All state lives
 * in the service; this file only shuttles payloads into the render functions.
 */

import { ApiError, ServiceClient, type FeatureInfo } from "./api.js";
import { applyEvent, type ServiceEvent } from "./state.js";
import { parseValue, renderView, validateValue, type SessionView } from "./view.js";

const client = new ServiceClient("");
let view: SessionView = { features: [], observed: {}, suggestions: [], prediction: null, history: [] };
let sessionId = "";
let busy = false;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setBanner(kind: "error" | "info" | "none", text = ""): void {
  const banner = el<HTMLDivElement>("banner");
  banner.className = kind === "none" ? "hidden" : `banner ${kind}`;
  banner.textContent = text;
}

function apply(event: ServiceEvent): void {
  view = applyEvent(view, event);
  el<HTMLDivElement>("root").innerHTML = renderView(view);
  wireAcquireButtons();
}

async function guarded(action: () => Promise<void>): Promise<void> {
  if (busy) return;
  busy = true;
  document.body.classList.add("busy");
  try {
    await action();
    setBanner("none");
  } catch (err) {
    if (err instanceof ApiError) {
      setBanner("error", `${err.code}: ${err.message}`);
    } else {
      setBanner("error", `network failure: ${String(err)} — retry the last action`);
    }
  } finally {
    busy = false;
    document.body.classList.remove("busy");
  }
}

async function refreshAll(): Promise<void> {
  const suggestions = await client.suggestions(sessionId).catch((err) => {
    if (err instanceof ApiError && err.code === "no_candidates") {
      return { session_id: sessionId, suggestions: [] };
    }
    throw err;
  });
  apply({ type: "suggestions", payload: suggestions });
  apply({ type: "prediction", payload: await client.prediction(sessionId) });
}

function wireAcquireButtons(): void {
  for (const button of Array.from(document.querySelectorAll<HTMLButtonElement>("button.acquire"))) {
    button.onclick = () => openEntry(button.dataset.feature ?? "");
  }
}

function openEntry(featureName: string): void {
  const feature = view.features.find((f) => f.name === featureName);
  if (!feature) return;
  el<HTMLDivElement>("entry").classList.remove("hidden");
  el<HTMLSpanElement>("entry-feature").textContent = feature.name;
  const input = el<HTMLInputElement>("entry-value");
  const select = el<HTMLSelectElement>("entry-select");
  if (feature.kind === "categorical") {
    select.innerHTML = feature.categories
      .map((c) => `<option value="${c}">${c}</option>`)
      .join("");
    select.classList.remove("hidden");
    input.classList.add("hidden");
  } else {
    input.value = "";
    input.classList.remove("hidden");
    select.classList.add("hidden");
  }
  el<HTMLButtonElement>("entry-submit").onclick = () => submit(feature);
}

function submit(feature: FeatureInfo): void {
  const raw =
    feature.kind === "categorical"
      ? el<HTMLSelectElement>("entry-select").value
      : el<HTMLInputElement>("entry-value").value;
  const problem = validateValue(feature, raw);
  if (problem) {
    setBanner("error", problem);  // invalid input: no request leaves the page
    return;
  }
  void guarded(async () => {
    const value = parseValue(feature, raw);
    const result = await client.observe(sessionId, feature.name, value);
    apply({ type: "observed", payload: result, feature: feature.name, value });
    el<HTMLDivElement>("entry").classList.add("hidden");
    await refreshAll();
  });
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const existing = params.get("session");
  await guarded(async () => {
    if (existing) {
      sessionId = existing;
      apply({ type: "prediction", payload: await client.prediction(sessionId) });
    } else {
      const modelId = params.get("model") ?? "";
      const created = await client.createSession(modelId);
      sessionId = created.session_id;
      params.set("session", sessionId);
      window.history.replaceState(null, "", `?${params.toString()}`);
      apply({ type: "created", payload: created });
    }
    await refreshAll();
  });
}

el<HTMLButtonElement>("refresh").onclick = () => void guarded(refreshAll);
void boot();
