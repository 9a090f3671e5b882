// S2-shaped flows: iterate as a polled background job, history growth,
// finalize with a prediction count matching the remaining pool.

import { beforeEach, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { pollJob } from '../src/jobs.js';
import { ConsoleStore } from '../src/store.js';
import { installMockFetch, MockService } from './mockserver.js';

let service: MockService;

beforeEach(() => {
  service = installMockFetch(new MockService(80));
});

describe('iterate job', () => {
  it('polls to completion and history gains a matching row', async () => {
    const store = new ConsoleStore('');
    await store.selectBatch(10);
    for (const item of store.state.queue) store.buffer.assign(item.image_id, 'red_fox');
    await store.submitLabels();

    expect(store.state.history).toHaveLength(0);
    const result = await store.runIterate(true, 'cold');
    expect(result.state).toBe('done');
    expect(store.state.jobRunning).toBe(false);
    expect(store.state.history).toHaveLength(1);
    const row = store.state.history[0];
    expect(row.accuracy).toBe(result.record?.accuracy);
    expect(row.labeled_count).toBe(10);
    const viaApi = await new ApiClient('').history();
    expect(store.state.history).toEqual(viaApi.rows);
  });

  it('marks the job running while it is in flight', async () => {
    const store = new ConsoleStore('');
    service.jobTicks = 3;
    const seen: boolean[] = [];
    store.subscribe((state) => seen.push(state.jobRunning));
    await store.runIterate(true, 'warm');
    expect(seen).toContain(true);
    expect(seen[seen.length - 1]).toBe(false);
  });

  it('starting a second job while one runs surfaces the 409', async () => {
    const api = new ApiClient('');
    service.jobTicks = 50; // keep the first job busy
    await api.iterate(true, 'cold');
    await expect(api.iterate(true, 'cold')).rejects.toMatchObject({ status: 409 });
  });

  it('pollJob reports every observed state', async () => {
    const api = new ApiClient('');
    const { job_id } = await api.iterate(true, 'cold');
    const states: string[] = [];
    const final = await pollJob(api, job_id, (p) => states.push(p.state), 1);
    expect(final.state).toBe('done');
    expect(states[states.length - 1]).toBe('done');
    expect(states.length).toBeGreaterThan(1);
  });
});

describe('finalize', () => {
  it('yields one prediction per remaining unlabeled image', async () => {
    const store = new ConsoleStore('');
    await store.selectBatch(10);
    for (const item of store.state.queue) store.buffer.assign(item.image_id, 'empty');
    await store.submitLabels();
    await store.runIterate(true, 'cold');

    const unlabeled = (await new ApiClient('').status()).unlabeled;
    const result = await store.runFinalize();
    expect(result.state).toBe('done');
    expect(result.predictions).toBe(unlabeled);
    expect(store.api.exportPredictionsUrl()).toBe('/api/export/predictions');
  });
});
