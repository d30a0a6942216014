/** Browser bootstrap: wires the controller to the DOM, keyboard, and the
 * offline flush timer. All state lives in the service; this file only renders.
 */

import { ApiClient } from "./api.js";
import { LabelingController } from "./labeling.js";
import { OfflineQueue } from "./queue.js";
import { renderExplanation, renderPairCard, renderStats } from "./render.js";

const FLUSH_INTERVAL_MS = 5000;

function apiBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("api") ?? "http://127.0.0.1:8700";
}

async function refreshStats(api: ApiClient, element: HTMLElement): Promise<void> {
  try {
    element.innerHTML = renderStats(await api.stats());
  } catch {
    element.innerHTML = `<p class="banner error">stats unavailable</p>`;
  }
}

function renderCurrent(controller: LabelingController, element: HTMLElement): void {
  const card = controller.current();
  if (card) {
    element.innerHTML = renderPairCard(card.pair, card.queuePosition);
  } else if (controller.isExhausted) {
    element.innerHTML = `<p class="banner done">All pairs labeled.</p>`;
  } else {
    element.innerHTML = `<p class="banner">Loading…</p>`;
  }
}

async function showExplanation(api: ApiClient, pairId: string, element: HTMLElement): Promise<void> {
  try {
    element.innerHTML = renderExplanation(await api.explain(pairId));
  } catch (error) {
    const status = (error as { status?: number }).status;
    element.innerHTML =
      status === 409
        ? `<p class="banner">No model loaded on the service.</p>`
        : `<p class="banner error">Explanation unavailable.</p>`;
  }
}

export async function boot(): Promise<void> {
  const api = new ApiClient(apiBase());
  const offline = new OfflineQueue(window.localStorage);
  const controller = new LabelingController(api, "ui", offline);

  const cardEl = document.getElementById("card")!;
  const statsEl = document.getElementById("stats")!;
  const explainEl = document.getElementById("explain")!;
  const bannerEl = document.getElementById("banner")!;

  controller.onEvent((event) => {
    renderCurrent(controller, cardEl);
    if (event.kind === "queued-offline") {
      bannerEl.innerHTML = `<p class="banner error">Service unreachable — ${controller.offline.length} label(s) held locally, retrying…</p>`;
    } else if (event.kind === "drained") {
      bannerEl.innerHTML = `<p class="banner done">Reconnected — ${event.delivered} held label(s) delivered.</p>`;
      void refreshStats(api, statsEl);
    } else if (event.kind === "submitted") {
      bannerEl.innerHTML = "";
      void refreshStats(api, statsEl);
    }
  });

  document.addEventListener("keydown", (event) => {
    if (event.key === "e") {
      const card = controller.current();
      if (card) void showExplanation(api, card.pair.pair_id, explainEl);
      return;
    }
    void controller.handleKey(event.key);
  });

  window.setInterval(() => {
    if (controller.offline.length > 0) void controller.flushOffline();
  }, FLUSH_INTERVAL_MS);

  await controller.loadMore();
  renderCurrent(controller, cardEl);
  await refreshStats(api, statsEl);
}

if (typeof document !== "undefined") {
  void boot();
}
