import type { ApiClient } from './api.js';
import type { LabelsResponse } from './types.js';

function randomKey(): string {
  const bytes = new Uint8Array(16);
  (globalThis.crypto ?? { getRandomValues: fallbackRandom }).getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, '0')).join('');
}

function fallbackRandom(bytes: Uint8Array): Uint8Array {
  for (let i = 0; i < bytes.length; i++) bytes[i] = Math.floor(Math.random() * 256);
  return bytes;
}

/**
 * Buffers unsaved label assignments and submits them as one batch.
 *
 * One idempotency key is minted per batch and reused across retries and
 * accidental double-submits, so the server counts the batch exactly once;
 * the key rotates only after a confirmed successful submission.
 */
export class LabelBuffer {
  private assignments = new Map<string, string>();
  private batchKey: string = randomKey();

  assign(imageId: string, className: string): void {
    this.assignments.set(imageId, className);
  }

  unassign(imageId: string): void {
    this.assignments.delete(imageId);
  }

  get(imageId: string): string | undefined {
    return this.assignments.get(imageId);
  }

  get size(): number {
    return this.assignments.size;
  }

  get currentKey(): string {
    return this.batchKey;
  }

  entries(): { image_id: string; label: string }[] {
    return Array.from(this.assignments, ([image_id, label]) => ({ image_id, label }));
  }

  async submit(api: ApiClient): Promise<LabelsResponse> {
    if (this.assignments.size === 0) {
      return { accepted: 0, rejected: [] };
    }
    const response = await api.submitLabels(this.entries(), this.batchKey);
    // Success: this batch is recorded server-side; a fresh key marks the
    // next batch as a new submission.
    this.assignments.clear();
    this.batchKey = randomKey();
    return response;
  }
}
