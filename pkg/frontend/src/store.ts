import { ApiClient } from './api.js';
import { LabelBuffer } from './labelbuffer.js';
import { pollJob } from './jobs.js';
import type { HistoryRow, JobPayload, QueueItem, StatusPayload } from './types.js';

export type View = 'queue' | 'dashboard' | 'review';

export interface ConsoleState {
  view: View;
  status: StatusPayload | null;
  queue: QueueItem[];
  classes: string[];
  history: HistoryRow[];
  cursor: number; // index into queue
  jobRunning: boolean;
  lastJob: JobPayload | null;
  stale: boolean; // true when the last refresh failed; display is a snapshot
  message: string;
}

type Listener = (state: ConsoleState) => void;

/**
 * The console's single source of truth. Every displayed number originates
 * from a service response stored here; a failed refresh flips `stale`
 * instead of inventing values.
 */
export class ConsoleStore {
  readonly api: ApiClient;
  readonly buffer = new LabelBuffer();
  state: ConsoleState = {
    view: 'queue',
    status: null,
    queue: [],
    classes: [],
    history: [],
    cursor: 0,
    jobRunning: false,
    lastJob: null,
    stale: false,
    message: '',
  };
  private listeners: Listener[] = [];

  constructor(base = '') {
    this.api = new ApiClient(base);
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private patch(partial: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...partial };
    this.notify();
  }

  setView(view: View): void {
    this.patch({ view });
  }

  async refresh(): Promise<void> {
    try {
      const [status, queue, history] = await Promise.all([
        this.api.status(),
        this.api.queue(),
        this.api.history(),
      ]);
      this.patch({
        status,
        queue: queue.queue,
        classes: queue.classes,
        history: history.rows,
        stale: false,
        cursor: Math.min(this.state.cursor, Math.max(queue.queue.length - 1, 0)),
      });
    } catch (error) {
      this.patch({ stale: true, message: `offline: ${String(error)}` });
    }
  }

  async selectBatch(batchSize: number, stratified = false): Promise<void> {
    await this.api.select(batchSize, stratified);
    this.patch({ cursor: 0 });
    await this.refresh();
  }

  assignCurrent(className: string): void {
    const item = this.state.queue[this.state.cursor];
    if (!item) return;
    this.buffer.assign(item.image_id, className);
    this.advance(1);
  }

  advance(step: number): void {
    const next = this.state.cursor + step;
    if (next >= 0 && next < this.state.queue.length) {
      this.patch({ cursor: next });
    } else {
      this.notify(); // cursor pinned at the edge; repaint for the buffer badge
    }
  }

  async submitLabels(): Promise<number> {
    const response = await this.buffer.submit(this.api);
    if (response.rejected.length > 0) {
      this.patch({
        message: `${response.rejected.length} label(s) rejected: ${response.rejected[0].reason}`,
      });
    } else {
      this.patch({ message: `saved ${response.accepted} label(s)` });
    }
    await this.refresh();
    return response.accepted;
  }

  async runIterate(skipTuning: boolean, startMode: 'cold' | 'warm'): Promise<JobPayload> {
    const { job_id } = await this.api.iterate(skipTuning, startMode);
    this.patch({ jobRunning: true, message: 'iterating…' });
    try {
      const final = await pollJob(this.api, job_id, (payload) => this.patch({ lastJob: payload }));
      this.patch({
        jobRunning: false,
        message: final.state === 'done' ? 'iteration complete' : `iteration ${final.state}: ${final.error ?? ''}`,
      });
      await this.refresh();
      return final;
    } catch (error) {
      this.patch({ jobRunning: false, stale: true, message: String(error) });
      throw error;
    }
  }

  async runFinalize(): Promise<JobPayload> {
    const { job_id } = await this.api.finalize();
    this.patch({ jobRunning: true, message: 'predicting remaining images…' });
    const final = await pollJob(this.api, job_id, (payload) => this.patch({ lastJob: payload }));
    this.patch({
      jobRunning: false,
      message:
        final.state === 'done'
          ? `finalized ${final.predictions ?? 0} predictions`
          : `finalize ${final.state}: ${final.error ?? ''}`,
    });
    return final;
  }
}
