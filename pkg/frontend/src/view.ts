/**
 * Pure view construction: service payloads in, HTML strings out.
 *
 * Nothing here reorders, filters, or recomputes what the service sent; the
 * suggestion list renders in exactly the order received, so replaying the
 * same payload sequence always reproduces the same markup.
 */

import type { FeatureInfo, HistoryEntry, Prediction, Suggestion } from "./api.js";

export interface SessionView {
  features: FeatureInfo[];
  observed: Record<string, unknown>;
  suggestions: Suggestion[];
  prediction: Prediction | null;
  history: HistoryEntry[];
}

export function emptyView(features: FeatureInfo[], prediction: Prediction): SessionView {
  return { features, observed: {}, suggestions: [], prediction, history: [] };
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmt = (v: number, digits: number) => (Number.isFinite(v) ? v.toFixed(digits) : String(v));

export function renderSuggestions(suggestions: Suggestion[]): string {
  if (suggestions.length === 0) {
    return `<p class="complete">All features observed &mdash; acquisition complete.</p>`;
  }
  const rows = suggestions
    .map(
      (s, rank) =>
        `<tr data-feature="${escapeHtml(s.feature)}">` +
        `<td>${rank + 1}</td>` +
        `<td class="feat">${escapeHtml(s.feature)}</td>` +
        `<td class="mi">${fmt(s.mi, 3)}</td>` +
        `<td><button class="acquire" data-feature="${escapeHtml(s.feature)}">enter value</button></td>` +
        `</tr>`,
    )
    .join("");
  return (
    `<table class="suggestions"><thead><tr><th>#</th><th>feature</th>` +
    `<th>MI (nats)</th><th></th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderPrediction(prediction: Prediction | null): string {
  if (prediction === null) {
    return `<p class="pending">No prediction yet.</p>`;
  }
  if (prediction.kind === "numeric") {
    const sketch = densitySketch(prediction.raw_mean, prediction.raw_std);
    return (
      `<div class="prediction numeric">` +
      `<div class="readout">${fmt(prediction.raw_mean, 4)} &plusmn; ${fmt(prediction.raw_std, 4)}</div>` +
      `<div class="standardized">standardized: ${fmt(prediction.mean, 4)} &plusmn; ${fmt(prediction.std, 4)}</div>` +
      sketch +
      `</div>`
    );
  }
  const bars = Object.entries(prediction.frequencies)
    .map(([label, freq]) => {
      const pct = Math.round(freq * 1000) / 10;
      return (
        `<div class="bar-row"><span class="bar-label">${escapeHtml(label)}</span>` +
        `<span class="bar" style="width:${pct}%"></span>` +
        `<span class="bar-value">${fmt(freq, 3)}</span></div>`
      );
    })
    .join("");
  return (
    `<div class="prediction categorical">` +
    `<div class="readout">${escapeHtml(String(prediction.category))}</div>` +
    `<div class="bars">${bars}</div>` +
    `</div>`
  );
}

function densitySketch(mean: number, std: number): string {
  // a fixed-width unicode bell sketch; purely decorative
  const cells = 21;
  const marks = [];
  for (let i = 0; i < cells; i++) {
    const z = (i - (cells - 1) / 2) / 4;
    const h = Math.exp(-0.5 * z * z);
    const glyphs = [" ", "▁", "▂", "▃", "▅", "▇"];
    marks.push(glyphs[Math.min(5, Math.floor(h * 6))]);
  }
  return `<div class="sketch" title="mean ${fmt(mean, 3)}, std ${fmt(std, 3)}">${marks.join("")}</div>`;
}

export function renderFeatureTable(view: SessionView): string {
  const rows = view.features
    .map((f) => {
      const status = f.is_target
        ? `<span class="target">target</span>`
        : f.name in view.observed
          ? `<span class="observed">${escapeHtml(String(view.observed[f.name]))}</span>`
          : `<span class="hidden-value">&mdash;</span>`;
      const locked = f.is_target || f.name in view.observed;
      return (
        `<tr class="${locked ? "locked" : "open"}" data-feature="${escapeHtml(f.name)}">` +
        `<td>${escapeHtml(f.name)}</td><td>${f.kind}</td><td>${status}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="features"><thead><tr><th>feature</th><th>kind</th>` +
    `<th>value</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderHistory(history: HistoryEntry[]): string {
  if (history.length === 0) {
    return `<p class="pending">No observations yet.</p>`;
  }
  const items = history
    .map((h) => {
      const mi = h.mi === null ? "&mdash;" : fmt(h.mi, 3);
      const pred =
        h.prediction.kind === "numeric"
          ? `${fmt(h.prediction.raw_mean, 3)} &plusmn; ${fmt(h.prediction.raw_std, 3)}`
          : escapeHtml(String(h.prediction.category));
      return (
        `<li><span class="step">${h.step}</span> observed ` +
        `<strong>${escapeHtml(h.feature)}</strong> = ${escapeHtml(String(h.value))} ` +
        `<span class="mi">(MI ${mi})</span> &rarr; ${pred}</li>`
      );
    })
    .join("");
  return `<ol class="history">${items}</ol>`;
}

export function renderView(view: SessionView): string {
  return (
    `<section id="features">${renderFeatureTable(view)}</section>` +
    `<section id="suggestions">${renderSuggestions(view.suggestions)}</section>` +
    `<section id="prediction">${renderPrediction(view.prediction)}</section>` +
    `<section id="history">${renderHistory(view.history)}</section>`
  );
}

/** Client-side type check before anything is sent; returns an error string or null. */
export function validateValue(feature: FeatureInfo, raw: string): string | null {
  if (feature.kind === "numeric") {
    const v = Number(raw);
    if (raw.trim() === "" || !Number.isFinite(v)) {
      return `"${raw}" is not a finite number`;
    }
    return null;
  }
  if (!feature.categories.includes(raw)) {
    return `"${raw}" is not one of ${feature.categories.join(", ")}`;
  }
  return null;
}

export function parseValue(feature: FeatureInfo, raw: string): unknown {
  return feature.kind === "numeric" ? Number(raw) : raw;
}
