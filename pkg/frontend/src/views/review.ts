import type { ConsoleStore } from '../store.js';
import type { DetectorBox } from '../types.js';

interface ReviewItem {
  image_id: string;
  url: string;
  label: string | null;
  predicted: string;
  confidence: number;
  boxes: DetectorBox[];
}

interface ReviewPayload {
  lowest_confidence: ReviewItem[];
  disagreements: ReviewItem[];
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function section(title: string, items: ReviewItem[]): HTMLElement {
  const wrap = el('div', 'review-section');
  wrap.append(el('h3', '', title));
  if (items.length === 0) {
    wrap.append(el('p', 'hint', 'nothing to show yet'));
    return wrap;
  }
  const grid = el('div', 'review-grid');
  for (const item of items) {
    const card = el('div', 'review-card');
    const img = el('img') as HTMLImageElement;
    img.src = item.url;
    img.alt = item.image_id;
    img.onerror = () => {
      img.replaceWith(el('div', 'no-image', item.image_id));
    };
    card.append(img);
    card.append(
      el(
        'div',
        'review-caption',
        `label: ${item.label ?? '—'} · predicted: ${item.predicted} · ${(item.confidence * 100).toFixed(0)}%`,
      ),
    );
    grid.append(card);
  }
  wrap.append(grid);
  return wrap;
}

export async function renderReview(store: ConsoleStore, root: HTMLElement): Promise<void> {
  root.replaceChildren(el('p', 'hint', 'loading review samples…'));
  let payload: ReviewPayload;
  try {
    const response = await fetch('/api/review');
    if (!response.ok) throw new Error(response.statusText);
    payload = (await response.json()) as ReviewPayload;
  } catch (error) {
    root.replaceChildren(el('p', 'hint', `review unavailable: ${String(error)}`));
    return;
  }
  root.replaceChildren(
    section('Disagreements (prediction ≠ label, most confident first)', payload.disagreements),
    section('Lowest-confidence predictions', payload.lowest_confidence),
  );
}
