/** End-to-end test against the real labeling service.
 *
 * Spawns `python3 -m gempipe.cli` to synthesize a corpus and serve it, then
 * drives the UI controller through keyboard events exactly as a browser
 * session would: 20 labels, a stats cross-check, and an offline queue that
 * survives a service restart.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { LabelingController } from "../src/labeling.js";
import { MemoryStore, OfflineQueue } from "../src/queue.js";
import { provenanceBars } from "../src/render.js";

const PYTHON = process.env.GEMPIPE_PYTHON ?? "python3";
const PORT = 8741 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

const pythonAvailable = spawnSync(PYTHON, ["-c", "import gempipe"], { timeout: 30_000 }).status === 0;

let workdir: string;
let service: ChildProcess | null = null;

function startService(configPath: string): ChildProcess {
  const child = spawn(PYTHON, ["-m", "gempipe.cli", "serve", "--config", configPath], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  child.stderr?.on("data", () => {});
  return child;
}

async function waitForService(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/stats`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  throw new Error("labeling service did not come up");
}

async function stopService(): Promise<void> {
  if (!service) return;
  const child = service;
  service = null;
  await new Promise<void>((resolve) => {
    child.once("exit", () => resolve());
    child.kill("SIGTERM");
    setTimeout(() => {
      child.kill("SIGKILL");
      resolve();
    }, 5_000).unref();
  });
  // wait until the port actually stops answering
  for (let i = 0; i < 20; i += 1) {
    try {
      await fetch(`${BASE}/stats`);
      await new Promise((resolve) => setTimeout(resolve, 100));
    } catch {
      return;
    }
  }
}

function readLabelFile(): Array<{ pair_id: string; label: string }> {
  const raw = readFileSync(join(workdir, "labels.jsonl"), "utf-8");
  return raw
    .split("\n")
    .filter((line) => line.trim())
    .map((line) => JSON.parse(line));
}

describe.runIf(pythonAvailable)("labeling loop against the real service", () => {
  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "gempipe-ui-"));
    const synth = spawnSync(
      PYTHON,
      ["-m", "gempipe.cli", "synth", workdir, "--task", "jobresume", "-n", "30", "--seed", "21"],
      { timeout: 60_000 },
    );
    expect(synth.status).toBe(0);
    const configPath = join(workdir, "service.json");
    writeFileSync(
      configPath,
      JSON.stringify({
        collection_a: "a.jsonl",
        collection_b: "b.jsonl",
        pairs: "pairs.jsonl",
        labels: "labels.jsonl",
        gold: "gold.jsonl",
        listen: `127.0.0.1:${PORT}`,
        cors_origin: "*",
        knowledge: { text_field: "content" },
      }),
    );
    service = startService(configPath);
    await waitForService();
  }, 90_000);

  afterAll(async () => {
    await stopService();
  });

  it("labels 20 pairs through keyboard shortcuts", async () => {
    const api = new ApiClient(BASE);
    const controller = new LabelingController(api, "scripted-session", new OfflineQueue(), 10);
    await controller.loadMore();

    const labeled: Array<{ pairId: string; key: string }> = [];
    for (let i = 0; i < 20; i += 1) {
      const card = controller.current();
      expect(card).not.toBeNull();
      const key = i % 2 === 0 ? "m" : "n";
      labeled.push({ pairId: card!.pair.pair_id, key });
      await controller.handleKey(key);
    }

    const records = readLabelFile();
    expect(records).toHaveLength(20);
    expect(records.map((r) => r.pair_id)).toEqual(labeled.map((l) => l.pairId));
    expect(new Set(records.map((r) => r.pair_id)).size).toBe(20);

    const stats = await api.stats();
    expect(stats.labeled).toBe(20);
    expect(stats.counts).toEqual({ match: 10, nomatch: 10 });
    expect(stats.total_pairs).toBe(30);
    // the dashboard renders exactly the service payload
    const bars = provenanceBars(stats);
    expect(bars).toEqual([{ rule: "synthetic", count: 30, fraction: 1.0 }]);
  }, 60_000);

  it("keeps labels queued through a service restart with zero loss", async () => {
    const api = new ApiClient(BASE);
    const store = new MemoryStore();
    const controller = new LabelingController(api, "scripted-session", new OfflineQueue(store), 10);
    await controller.loadMore();
    const targets: string[] = [];
    for (let i = 0; i < 3 && controller.current(); i += 1) {
      targets.push(controller.current()!.pair.pair_id);
    }

    await stopService();
    const offlineTargets: string[] = [];
    for (let i = 0; i < 3; i += 1) {
      const card = controller.current();
      if (!card) break;
      offlineTargets.push(card.pair.pair_id);
      await controller.handleKey("m");
    }
    expect(controller.offline.length).toBe(3);
    expect(readLabelFile()).toHaveLength(20); // nothing hit the file while down

    service = startService(join(workdir, "service.json"));
    await waitForService();
    const delivered = await controller.flushOffline();
    expect(delivered).toBe(3);
    expect(controller.offline.length).toBe(0);

    const records = readLabelFile();
    expect(records).toHaveLength(23);
    expect(records.slice(20).map((r) => r.pair_id)).toEqual(offlineTargets);
    const stats = await api.stats();
    expect(stats.labeled).toBe(23);
  }, 90_000);
});
