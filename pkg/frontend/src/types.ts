// Payload shapes of the wildloop labeling service (/api endpoints).

export interface StatusPayload {
  iteration: number;
  labeled: number;
  unlabeled: number;
  test_size: number;
  last_metrics: { accuracy: number; weighted_f1: number } | null;
}

export interface DetectorBox {
  bbox: [number, number, number, number]; // normalized x, y, w, h
  confidence: number;
  category: string;
}

export interface QueueItem {
  image_id: string;
  url: string;
  boxes: DetectorBox[];
  current_scores: Record<string, number> | null;
}

export interface QueuePayload {
  queue: QueueItem[];
  classes: string[];
}

export interface LabelsResponse {
  accepted: number;
  rejected: { image_id: string; reason: string }[];
}

export type JobState = 'pending' | 'running' | 'done' | 'failed';

export interface JobPayload {
  state: JobState;
  kind: string;
  record?: IterationRecordPayload;
  predictions?: number;
  error?: string;
}

export interface IterationRecordPayload {
  iteration: number;
  queried: string[];
  lambda: { embedder: string; alpha: number };
  labeled_count: number;
  accuracy: number;
  weighted_f1: number;
}

export interface HistoryRow {
  iteration: number;
  labeled_count: number;
  accuracy: number;
  weighted_f1: number;
}
