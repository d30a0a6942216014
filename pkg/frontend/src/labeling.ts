/** Labeling session state machine: page fetching, keyboard handling,
 * optimistic advance, duplicate-keypress debounce, offline fallback.
 */

import { ApiClient, ApiError, type Label, type PairView } from "./api.js";
import { OfflineQueue } from "./queue.js";

export interface UiPairCard {
  pair: PairView;
  queuePosition: number;
}

export const KEY_BINDINGS: Record<string, Label> = {
  m: "match",
  n: "nomatch",
  s: "skip",
};

export type SessionEvent =
  | { kind: "advanced" }
  | { kind: "submitted"; pairId: string; label: Label }
  | { kind: "queued-offline"; pairId: string; label: Label }
  | { kind: "rejected"; pairId: string; status: number }
  | { kind: "drained"; delivered: number }
  | { kind: "exhausted" };

export class LabelingController {
  private pending: PairView[] = [];
  private cursor: string | null = null;
  private exhausted = false;
  private inFlight = false;
  private listeners: Array<(event: SessionEvent) => void> = [];

  constructor(
    private api: ApiClient,
    public annotator: string,
    public offline: OfflineQueue = new OfflineQueue(),
    private pageSize = 25,
  ) {}

  onEvent(listener: (event: SessionEvent) => void): void {
    this.listeners.push(listener);
  }

  private emit(event: SessionEvent): void {
    for (const listener of this.listeners) listener(event);
  }

  current(): UiPairCard | null {
    const pair = this.pending[0];
    return pair ? { pair, queuePosition: this.pending.length } : null;
  }

  get isExhausted(): boolean {
    return this.exhausted && this.pending.length === 0;
  }

  /** Fetch the next page of unlabeled pairs when the local buffer runs low. */
  async loadMore(): Promise<void> {
    if (this.exhausted) return;
    const page = await this.api.listPairs("unlabeled", this.pageSize, this.cursor ?? undefined);
    this.pending.push(...page.pairs);
    this.cursor = page.next_cursor;
    if (page.next_cursor === null) this.exhausted = true;
    if (this.isExhausted) this.emit({ kind: "exhausted" });
  }

  /** Keyboard entry point; unknown keys are ignored. */
  async handleKey(key: string): Promise<void> {
    const label = KEY_BINDINGS[key.toLowerCase()];
    if (!label) return;
    await this.submit(label);
  }

  /** Label the current pair and advance. A second keypress while a submit is
   * in flight is dropped, so one decision yields exactly one record. */
  async submit(label: Label): Promise<void> {
    const card = this.current();
    if (!card || this.inFlight) return;
    this.inFlight = true;
    const pairId = card.pair.pair_id;
    try {
      try {
        await this.api.postLabel(pairId, label, this.annotator);
        this.emit({ kind: "submitted", pairId, label });
      } catch (error) {
        if (error instanceof ApiError) {
          // The service refused the label (bad pair, bad label): surface it,
          // do not queue, do not lose the card position.
          this.emit({ kind: "rejected", pairId, status: error.status });
          return;
        }
        // Network failure: hold the label locally and keep going.
        this.offline.enqueue({
          pair_id: pairId,
          label,
          annotator: this.annotator,
          queued_at: Date.now(),
        });
        this.emit({ kind: "queued-offline", pairId, label });
      }
      this.pending.shift();
      this.emit({ kind: "advanced" });
      if (this.pending.length === 0 && !this.exhausted) {
        await this.loadMore();
      } else if (this.isExhausted) {
        this.emit({ kind: "exhausted" });
      }
    } finally {
      this.inFlight = false;
    }
  }

  /** Deliver offline labels once the service is reachable again. */
  async flushOffline(): Promise<number> {
    const delivered = await this.offline.drain((item) =>
      this.api.postLabel(item.pair_id, item.label, item.annotator).then(() => undefined),
    );
    if (delivered > 0) this.emit({ kind: "drained", delivered });
    return delivered;
  }
}
