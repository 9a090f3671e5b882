import type { ApiClient } from './api.js';
import type { JobPayload } from './types.js';

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Poll a background job until it settles ('done' or 'failed').
 *
 * onUpdate fires for every observed state so the dashboard can disable the
 * Iterate button while something runs.
 */
export async function pollJob(
  api: ApiClient,
  jobId: string,
  onUpdate?: (payload: JobPayload) => void,
  intervalMs = 500,
  timeoutMs = 30 * 60 * 1000,
): Promise<JobPayload> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const payload = await api.job(jobId);
    onUpdate?.(payload);
    if (payload.state === 'done' || payload.state === 'failed') {
      return payload;
    }
    if (Date.now() > deadline) {
      throw new Error(`job ${jobId} still ${payload.state} after ${timeoutMs} ms`);
    }
    await sleep(intervalMs);
  }
}
