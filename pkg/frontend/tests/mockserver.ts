// In-memory stand-in for the labeling service, mirroring the /api contract:
// pools, idempotent label submission, background-job lifecycle, history.

import type { HistoryRow, QueueItem } from '../src/types.js';

interface MockJob {
  id: string;
  kind: 'iterate' | 'finalize';
  state: 'pending' | 'running' | 'done' | 'failed';
  ticksLeft: number;
  record?: Record<string, unknown>;
  predictions?: number;
}

export class MockService {
  classes = ['empty', 'red_fox', 'roe_deer', 'others'];
  labeled = new Set<string>();
  unlabeled = new Set<string>();
  testSize = 30;
  iteration = 0;
  queued: string[] = [];
  history: HistoryRow[] = [];
  idempotency = new Map<string, unknown>();
  jobs = new Map<string, MockJob>();
  jobTicks = 2; // polls needed before a job completes
  private nextJob = 1;

  constructor(poolSize = 100) {
    for (let i = 0; i < poolSize; i++) {
      this.unlabeled.add(`img${String(i).padStart(3, '0')}`);
    }
  }

  hasActiveJob(): boolean {
    for (const job of this.jobs.values()) {
      if (job.state === 'pending' || job.state === 'running') return true;
    }
    return false;
  }

  handle(path: string, body?: any): { status: number; payload: unknown } {
    if (path === '/status') {
      const last = this.history[this.history.length - 1];
      return {
        status: 200,
        payload: {
          iteration: this.iteration,
          labeled: this.labeled.size,
          unlabeled: this.unlabeled.size,
          test_size: this.testSize,
          last_metrics: last
            ? { accuracy: last.accuracy, weighted_f1: last.weighted_f1 }
            : null,
        },
      };
    }
    if (path === '/select') {
      const size = Math.min(body?.batch_size ?? 10, this.unlabeled.size);
      this.queued = Array.from(this.unlabeled).sort().slice(0, size);
      return { status: 200, payload: { queued: [...this.queued] } };
    }
    if (path === '/queue') {
      const queue: QueueItem[] = this.queued.map((id) => ({
        image_id: id,
        url: `/api/images/${id}`,
        boxes: [{ bbox: [0.1, 0.1, 0.4, 0.5], confidence: 0.9, category: 'animal' }],
        current_scores: this.iteration > 0 ? { empty: 0.2, red_fox: 0.5, roe_deer: 0.2, others: 0.1 } : null,
      }));
      return { status: 200, payload: { queue, classes: [...this.classes] } };
    }
    if (path === '/labels') {
      const key = body?.idempotency_key ?? '';
      if (key && this.idempotency.has(key)) {
        return { status: 200, payload: this.idempotency.get(key) };
      }
      let accepted = 0;
      const rejected: { image_id: string; reason: string }[] = [];
      for (const item of body?.labels ?? []) {
        if (!this.classes.includes(item.label)) {
          rejected.push({ image_id: item.image_id, reason: `unknown label '${item.label}'` });
        } else if (this.unlabeled.has(item.image_id)) {
          this.unlabeled.delete(item.image_id);
          this.labeled.add(item.image_id);
          this.queued = this.queued.filter((q) => q !== item.image_id);
          accepted += 1;
        } else if (this.labeled.has(item.image_id)) {
          accepted += 1; // idempotent same-label resubmission
        } else {
          rejected.push({ image_id: item.image_id, reason: 'not in the unlabeled pool' });
        }
      }
      const payload = { accepted, rejected };
      if (key) this.idempotency.set(key, payload);
      return { status: 200, payload };
    }
    if (path === '/iterate' || path === '/finalize') {
      if (this.hasActiveJob()) {
        return { status: 409, payload: { detail: 'another job is running' } };
      }
      const job: MockJob = {
        id: `job${this.nextJob++}`,
        kind: path === '/iterate' ? 'iterate' : 'finalize',
        state: 'pending',
        ticksLeft: this.jobTicks,
      };
      this.jobs.set(job.id, job);
      return { status: 200, payload: { job_id: job.id } };
    }
    if (path.startsWith('/jobs/')) {
      const job = this.jobs.get(path.slice('/jobs/'.length));
      if (!job) return { status: 404, payload: { detail: 'unknown job' } };
      if (job.state !== 'done' && job.state !== 'failed') {
        job.state = 'running';
        job.ticksLeft -= 1;
        if (job.ticksLeft <= 0) this.completeJob(job);
      }
      const payload: Record<string, unknown> = { state: job.state, kind: job.kind };
      if (job.state === 'done' && job.kind === 'iterate') payload.record = job.record;
      if (job.state === 'done' && job.kind === 'finalize') payload.predictions = job.predictions;
      return { status: 200, payload };
    }
    if (path === '/history') {
      return { status: 200, payload: { rows: [...this.history] } };
    }
    if (path === '/review') {
      return { status: 200, payload: { lowest_confidence: [], disagreements: [] } };
    }
    return { status: 404, payload: { detail: `no route ${path}` } };
  }

  private completeJob(job: MockJob): void {
    job.state = 'done';
    if (job.kind === 'iterate') {
      const accuracy = Math.min(0.5 + 0.05 * this.history.length, 0.95);
      const row: HistoryRow = {
        iteration: this.iteration,
        labeled_count: this.labeled.size,
        accuracy,
        weighted_f1: accuracy - 0.01,
      };
      this.history.push(row);
      this.iteration += 1;
      job.record = {
        iteration: row.iteration,
        queried: [],
        lambda: { embedder: 'synth', alpha: 0.5 },
        labeled_count: row.labeled_count,
        accuracy: row.accuracy,
        weighted_f1: row.weighted_f1,
      };
    } else {
      job.predictions = this.unlabeled.size;
    }
  }
}

/** Install the mock behind globalThis.fetch; returns the service handle. */
export function installMockFetch(service = new MockService()): MockService {
  globalThis.fetch = (async (input: any, init?: RequestInit) => {
    const url = typeof input === 'string' ? input : input.url;
    const match = url.match(/\/api(\/.*)$/);
    if (!match) {
      return new Response('not found', { status: 404 });
    }
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    const { status, payload } = service.handle(match[1], body);
    return new Response(JSON.stringify(payload), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }) as typeof fetch;
  return service;
}
