/** Typed client for the labeling service API. */

export interface Section {
  name: string;
  text: string;
}

export interface EntityView {
  id: string;
  sections: Section[];
}

export interface PairView {
  pair_id: string;
  left: EntityView;
  right: EntityView;
  provenance: string[];
  label: string | null;
}

export interface PairsPage {
  pairs: PairView[];
  next_cursor: string | null;
}

export interface Stats {
  total_pairs: number;
  labeled: number;
  unlabeled: number;
  counts: { match: number; nomatch: number };
  positive_fraction: number | null;
  provenance: Record<string, number>;
  recall: number | null;
}

export interface LabelRecord {
  pair_id: string;
  label: string;
  annotator: string;
  timestamp: number;
  source: string;
}

export interface Highlight {
  token: string;
  pos: number;
  side: "left" | "right";
  highlighted: boolean;
  scores: number[];
}

export interface Explanation {
  pair_id: string;
  prediction: string;
  probabilities: number[];
  heatmap: { rows: string[]; cols: string[]; values: number[][] };
  highlights: Highlight[];
}

export type Label = "match" | "nomatch" | "skip";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiError(response.status, `${init?.method ?? "GET"} ${path}: ${response.status}`);
    }
    return (await response.json()) as T;
  }

  listPairs(status: "all" | "labeled" | "unlabeled", limit = 50, cursor?: string): Promise<PairsPage> {
    const params = new URLSearchParams({ status, limit: String(limit) });
    if (cursor !== undefined) params.set("cursor", cursor);
    return this.request<PairsPage>(`/pairs?${params}`);
  }

  postLabel(pairId: string, label: Label, annotator: string): Promise<LabelRecord> {
    return this.request<LabelRecord>(`/pairs/${encodeURIComponent(pairId)}/label`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label, annotator }),
    });
  }

  stats(): Promise<Stats> {
    return this.request<Stats>("/stats");
  }

  explain(pairId: string): Promise<Explanation> {
    return this.request<Explanation>(`/pairs/${encodeURIComponent(pairId)}/explain`);
  }
}
