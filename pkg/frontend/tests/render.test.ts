import { describe, expect, it } from "vitest";
import type { Explanation, PairView, Stats } from "../src/api.js";
import {
  escapeHtml,
  heatColor,
  provenanceBars,
  renderExplanation,
  renderPairCard,
  renderStats,
  sectionColor,
} from "../src/render.js";

const PAIR: PairView = {
  pair_id: "a::b",
  left: {
    id: "a",
    sections: [
      { name: "qualification", text: "Needs a <b>bachelor</b> degree." },
      { name: "benefit", text: "Insurance & salary." },
    ],
  },
  right: { id: "b", sections: [{ name: "education", text: "bachelor" }] },
  provenance: ["title_exact"],
  label: null,
};

describe("renderPairCard", () => {
  it("escapes entity content so markup never executes", () => {
    const html = renderPairCard(PAIR, 3);
    expect(html).not.toContain("<b>bachelor</b>");
    expect(html).toContain("&lt;b&gt;bachelor&lt;/b&gt;");
    expect(html).toContain("Insurance &amp; salary.");
  });

  it("renders sections verbatim (after escaping) with stable colors", () => {
    const html = renderPairCard(PAIR, 1);
    expect(html).toContain("qualification");
    expect(html).toContain(sectionColor("qualification"));
    expect(sectionColor("qualification")).toBe(sectionColor("qualification"));
  });

  it("shows the queue position and unlabeled state", () => {
    const html = renderPairCard(PAIR, 7);
    expect(html).toContain("7 left");
    expect(html).toContain("unlabeled");
  });
});

const STATS: Stats = {
  total_pairs: 10,
  labeled: 4,
  unlabeled: 6,
  counts: { match: 3, nomatch: 1 },
  positive_fraction: 0.75,
  provenance: { alpha: 2, beta: 9, gamma: 9 },
  recall: 0.9,
};

describe("stats view", () => {
  it("orders provenance bars by descending count, ties alphabetical", () => {
    const bars = provenanceBars(STATS);
    expect(bars.map((b) => b.rule)).toEqual(["beta", "gamma", "alpha"]);
    expect(bars[0].count).toBe(9);
  });

  it("renders the numbers from the payload", () => {
    const html = renderStats(STATS);
    expect(html).toContain("75.0%");
    expect(html).toContain("0.900");
    expect(html).toContain("<dd>10</dd>");
  });

  it("handles empty stores", () => {
    const html = renderStats({
      ...STATS,
      labeled: 0,
      counts: { match: 0, nomatch: 0 },
      positive_fraction: null,
      recall: null,
    });
    expect(html).toContain("n/a");
  });
});

describe("explanation view", () => {
  const explanation: Explanation = {
    pair_id: "a::b",
    prediction: "nomatch",
    probabilities: [0.8, 0.2],
    heatmap: {
      rows: ["qualification", "duty"],
      cols: ["education", "experience"],
      values: [
        [2.0, 0.5],
        [1.0, 4.0],
      ],
    },
    highlights: [
      { token: "bachelor", pos: 3, side: "left", highlighted: true, scores: [1.5] },
      { token: "degree", pos: 4, side: "left", highlighted: false, scores: [0.2] },
      { token: "<img>", pos: 1, side: "right", highlighted: true, scores: [2.0] },
    ],
  };

  it("marks exactly the highlighted tokens", () => {
    const html = renderExplanation(explanation);
    expect(html).toContain("<mark class=\"tok\">bachelor</mark>");
    expect(html).toContain("<span class=\"tok\">degree</span>");
    expect(html).not.toContain("<img>");
  });

  it("colors cells monotonically: darker means larger distance", () => {
    const greens = [2.0, 0.5, 1.0, 4.0].map((v) => {
      const match = heatColor(v, 4.0).match(/rgb\(255,(\d+),\d+\)/)!;
      return Number(match[1]);
    });
    // sort by the distances and require non-increasing green components
    const byValue = [1, 2, 0, 3]; // indexes of values 0.5, 1.0, 2.0, 4.0
    const ordered = byValue.map((i) => greens[i]);
    for (let i = 0; i + 1 < ordered.length; i += 1) {
      expect(ordered[i]).toBeGreaterThanOrEqual(ordered[i + 1]);
    }
    const html = renderExplanation(explanation);
    expect(html).toContain(heatColor(4.0, 4.0));
  });

  it("renders a cell for every row-column combination", () => {
    const html = renderExplanation(explanation);
    const cells = html.match(/<td /g) ?? [];
    expect(cells).toHaveLength(4);
  });
});

describe("escapeHtml", () => {
  it("escapes the five significant characters", () => {
    expect(escapeHtml(`<a href="x" onclick='y'>&</a>`)).toBe(
      "&lt;a href=&quot;x&quot; onclick=&#39;y&#39;&gt;&amp;&lt;/a&gt;",
    );
  });
});
