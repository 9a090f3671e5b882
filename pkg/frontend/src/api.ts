import type {
  HistoryRow,
  JobPayload,
  LabelsResponse,
  QueuePayload,
  StatusPayload,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Thin typed wrapper over the service endpoints. */
export class ApiClient {
  constructor(private base: string = '') {}

  private async request<T>(path: string, body?: unknown): Promise<T> {
    const init: RequestInit =
      body === undefined
        ? { method: 'GET' }
        : {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: JSON.stringify(body),
          };
    const response = await fetch(`${this.base}/api${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = await response.json();
        if (payload && typeof payload.detail === 'string') detail = payload.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  status(): Promise<StatusPayload> {
    return this.request('/status');
  }

  select(batchSize: number, stratified = false): Promise<{ queued: string[] }> {
    return this.request('/select', { batch_size: batchSize, stratified });
  }

  queue(): Promise<QueuePayload> {
    return this.request('/queue');
  }

  submitLabels(
    labels: { image_id: string; label: string }[],
    idempotencyKey: string,
  ): Promise<LabelsResponse> {
    return this.request('/labels', { labels, idempotency_key: idempotencyKey });
  }

  iterate(skipTuning: boolean, startMode: 'cold' | 'warm'): Promise<{ job_id: string }> {
    return this.request('/iterate', { skip_tuning: skipTuning, start_mode: startMode });
  }

  job(jobId: string): Promise<JobPayload> {
    return this.request(`/jobs/${jobId}`);
  }

  history(): Promise<{ rows: HistoryRow[] }> {
    return this.request('/history');
  }

  finalize(): Promise<{ job_id: string }> {
    return this.request('/finalize', {});
  }

  imageUrl(imageId: string): string {
    return `${this.base}/api/images/${imageId}`;
  }

  exportPredictionsUrl(): string {
    return `${this.base}/api/export/predictions`;
  }
}
