/** Offline label queue: holds submissions while the service is unreachable.
 *
 * Entries persist through a localStorage-compatible store so a page reload
 * (or a service restart) never drops a label.
 */

import type { Label } from "./api.js";

export interface QueuedLabel {
  pair_id: string;
  label: Label;
  annotator: string;
  queued_at: number;
}

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class MemoryStore implements KeyValueStore {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

const STORAGE_KEY = "gempipe.offline-labels";

export class OfflineQueue {
  private items: QueuedLabel[] = [];

  constructor(private store: KeyValueStore = new MemoryStore()) {
    const raw = this.store.getItem(STORAGE_KEY);
    if (raw) {
      try {
        this.items = JSON.parse(raw) as QueuedLabel[];
      } catch {
        this.items = [];
      }
    }
  }

  get length(): number {
    return this.items.length;
  }

  peekAll(): readonly QueuedLabel[] {
    return this.items;
  }

  enqueue(item: QueuedLabel): void {
    this.items.push(item);
    this.persist();
  }

  /** Re-send queued labels in order; stops at the first network failure so
   * nothing is lost. Returns how many were delivered. */
  async drain(send: (item: QueuedLabel) => Promise<void>): Promise<number> {
    let delivered = 0;
    while (this.items.length > 0) {
      const head = this.items[0];
      try {
        await send(head);
      } catch {
        break;
      }
      this.items.shift();
      delivered += 1;
      this.persist();
    }
    return delivered;
  }

  private persist(): void {
    this.store.setItem(STORAGE_KEY, JSON.stringify(this.items));
  }
}
