// S1/S2 acceptance: the console modules against a live wildloop service on
// a synthetic project. Spawns the real CLI + server; skipped (with a
// warning) when the `wildloop` executable is not on PATH.

import { spawn, spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { LabelBuffer } from '../src/labelbuffer.js';
import { ConsoleStore } from '../src/store.js';

const PORT = 8799;
const BASE = `http://127.0.0.1:${PORT}`;

const hasCli = spawnSync('wildloop', ['--help'], { encoding: 'utf-8' }).status === 0;
const describeLive = hasCli ? describe : describe.skip;

let projectDir: string;
let server: ReturnType<typeof spawn> | null = null;
let oracle: Map<string, string>;

function loadOracle(dir: string): Map<string, string> {
  const map = new Map<string, string>();
  const lines = readFileSync(join(dir, 'oracle_labels.csv'), 'utf-8').trim().split(/\r?\n/);
  for (const line of lines.slice(1)) {
    const [id, label] = line.split(',');
    map.set(id.trim(), label.trim());
  }
  return map;
}

async function waitForServer(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/api/status`);
      if (response.ok) return;
    } catch {
      // still starting
    }
    if (Date.now() > deadline) throw new Error('service did not come up');
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
}

describeLive('console against a live service', () => {
  beforeAll(async () => {
    projectDir = mkdtempSync(join(tmpdir(), 'wildloop-live-'));
    const synth = spawnSync(
      'wildloop',
      ['--seed', '5', 'synth', projectDir, '--images', '250', '--batch-size', '20'],
      { encoding: 'utf-8' },
    );
    expect(synth.status).toBe(0);
    oracle = loadOracle(projectDir);
    server = spawn('wildloop', ['serve', projectDir, '--port', String(PORT)], {
      stdio: 'ignore',
    });
    await waitForServer();
  }, 60_000);

  afterAll(() => {
    server?.kill();
  });

  it('S1: labels a queued batch of 20; duplicate submission does not double-count', async () => {
    const api = new ApiClient(BASE);
    const { queued } = await api.select(20);
    expect(queued).toHaveLength(20);

    const buffer = new LabelBuffer();
    for (const id of queued) buffer.assign(id, oracle.get(id)!);
    const key = buffer.currentKey;
    const entries = buffer.entries();

    const before = (await api.status()).labeled;
    const response = await buffer.submit(api);
    expect(response.accepted).toBe(20);
    expect((await api.status()).labeled).toBe(before + 20);

    // replay the identical request with the same idempotency key
    const replay = await api.submitLabels(entries, key);
    expect(replay).toEqual(response);
    expect((await api.status()).labeled).toBe(before + 20);
  }, 60_000);

  it('S2: iterate via polled job adds one matching history row; finalize exports one CSV row per unlabeled image', async () => {
    const store = new ConsoleStore(BASE);
    await store.refresh();
    const rowsBefore = store.state.history.length;

    const result = await store.runIterate(true, 'cold');
    expect(result.state).toBe('done');
    expect(store.state.history).toHaveLength(rowsBefore + 1);
    const serverRows = (await store.api.history()).rows;
    expect(store.state.history).toEqual(serverRows);
    expect(store.state.history.at(-1)!.accuracy).toBe(result.record!.accuracy);

    const unlabeled = (await store.api.status()).unlabeled;
    const finalized = await store.runFinalize();
    expect(finalized.state).toBe('done');
    expect(finalized.predictions).toBe(unlabeled);

    const csv = await fetch(store.api.exportPredictionsUrl());
    expect(csv.ok).toBe(true);
    const lines = (await csv.text()).trim().split('\n');
    expect(lines[0].startsWith('image_id,label,confidence,abstained')).toBe(true);
    expect(lines.length - 1).toBe(unlabeled);
  }, 120_000);
});
