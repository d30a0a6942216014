/** HTML-string renderers. Every value coming from the service is escaped;
 * the UI never re-interprets entity content as markup.
 */

import type { Explanation, PairView, Stats } from "./api.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const SECTION_HUES = [205, 30, 120, 265, 340, 70, 170, 15];

/** Stable per-name section color so the same topic looks identical on both sides. */
export function sectionColor(name: string): string {
  let hash = 0;
  for (const ch of name) hash = (hash * 31 + ch.charCodeAt(0)) >>> 0;
  const hue = SECTION_HUES[hash % SECTION_HUES.length];
  return `hsl(${hue}, 70%, 90%)`;
}

function renderEntity(entity: PairView["left"], side: string): string {
  const sections = entity.sections
    .map(
      (section) =>
        `<div class="section" style="background:${sectionColor(section.name)}">` +
        `<span class="section-name">${escapeHtml(section.name)}</span>` +
        `<span class="section-text">${escapeHtml(section.text)}</span></div>`,
    )
    .join("");
  return (
    `<div class="entity ${side}"><h3>${escapeHtml(entity.id)}</h3>${sections}</div>`
  );
}

export function renderPairCard(pair: PairView, queuePosition: number): string {
  const label = pair.label
    ? `<span class="label">${escapeHtml(pair.label)}</span>`
    : `<span class="label unlabeled">unlabeled</span>`;
  return (
    `<div class="pair-card" data-pair-id="${escapeHtml(pair.pair_id)}">` +
    `<header><code>${escapeHtml(pair.pair_id)}</code> ${label}` +
    `<span class="provenance">${pair.provenance.map(escapeHtml).join(", ")}</span>` +
    `<span class="queue-position">${queuePosition} left</span></header>` +
    `<div class="pair-body">${renderEntity(pair.left, "left")}${renderEntity(pair.right, "right")}</div>` +
    `</div>`
  );
}

export interface ProvenanceBar {
  rule: string;
  count: number;
  fraction: number;
}

/** Bars sorted by descending count (ties alphabetical for stability). */
export function provenanceBars(stats: Stats): ProvenanceBar[] {
  const total = Math.max(1, stats.total_pairs);
  return Object.entries(stats.provenance)
    .sort(([ruleA, countA], [ruleB, countB]) => countB - countA || ruleA.localeCompare(ruleB))
    .map(([rule, count]) => ({ rule, count, fraction: count / total }));
}

export function renderStats(stats: Stats): string {
  const balance =
    stats.positive_fraction === null ? "n/a" : `${(stats.positive_fraction * 100).toFixed(1)}%`;
  const recall = stats.recall === null ? "n/a" : stats.recall.toFixed(3);
  const bars = provenanceBars(stats)
    .map(
      (bar) =>
        `<div class="bar-row"><span class="bar-rule">${escapeHtml(bar.rule)}</span>` +
        `<div class="bar" style="width:${(bar.fraction * 100).toFixed(1)}%"></div>` +
        `<span class="bar-count">${bar.count}</span></div>`,
    )
    .join("");
  return (
    `<div class="stats">` +
    `<dl><dt>pairs</dt><dd>${stats.total_pairs}</dd>` +
    `<dt>labeled</dt><dd>${stats.labeled}</dd>` +
    `<dt>unlabeled</dt><dd>${stats.unlabeled}</dd>` +
    `<dt>match</dt><dd>${stats.counts.match}</dd>` +
    `<dt>nomatch</dt><dd>${stats.counts.nomatch}</dd>` +
    `<dt>positive</dt><dd>${balance}</dd>` +
    `<dt>blocking recall</dt><dd>${recall}</dd></dl>` +
    `<div class="bars">${bars}</div></div>`
  );
}

/** White-to-red cell background, monotone in distance: darker = larger. */
export function heatColor(value: number, maxValue: number): string {
  const intensity = maxValue > 0 ? Math.min(1, value / maxValue) : 0;
  const other = Math.round(255 * (1 - intensity));
  return `rgb(255,${other},${other})`;
}

export function renderExplanation(explanation: Explanation): string {
  const { heatmap } = explanation;
  const maxValue = Math.max(0, ...heatmap.values.flat());
  const header = heatmap.cols.map((c) => `<th>${escapeHtml(c)}</th>`).join("");
  const rows = heatmap.rows
    .map((row, i) => {
      const cells = heatmap.cols
        .map((_, j) => {
          const value = heatmap.values[i][j];
          return `<td style="background:${heatColor(value, maxValue)}">${value.toFixed(2)}</td>`;
        })
        .join("");
      return `<tr><th>${escapeHtml(row)}</th>${cells}</tr>`;
    })
    .join("");
  const tokenSpans = (side: "left" | "right") =>
    explanation.highlights
      .filter((h) => h.side === side)
      .map((h) =>
        h.highlighted
          ? `<mark class="tok">${escapeHtml(h.token)}</mark>`
          : `<span class="tok">${escapeHtml(h.token)}</span>`,
      )
      .join(" ");
  const probs = explanation.probabilities.map((p) => p.toFixed(3)).join(" / ");
  return (
    `<div class="explanation">` +
    `<p>prediction: <b>${escapeHtml(explanation.prediction)}</b> (nomatch/match: ${probs})</p>` +
    `<table class="heatmap"><tr><th></th>${header}</tr>${rows}</table>` +
    `<div class="tokens"><h4>left</h4><p>${tokenSpans("left")}</p>` +
    `<h4>right</h4><p>${tokenSpans("right")}</p></div></div>`
  );
}
