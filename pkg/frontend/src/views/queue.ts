import { keyBindings } from '../keyboard.js';
import { drawBoxes } from '../overlay.js';
import type { ConsoleStore } from '../store.js';
import type { QueueItem } from '../types.js';

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

function scoreline(item: QueueItem): string {
  if (!item.current_scores) return 'no model yet';
  const top = Object.entries(item.current_scores)
    .sort((a, b) => b[1] - a[1])
    .slice(0, 3)
    .map(([name, v]) => `${name} ${(v * 100).toFixed(0)}%`);
  return `model: ${top.join(' · ')}`;
}

export function renderQueue(store: ConsoleStore, root: HTMLElement): void {
  const { queue, cursor, classes } = store.state;
  root.replaceChildren();

  const bar = el('div', 'queue-bar');
  const sizeInput = el('input') as HTMLInputElement;
  sizeInput.type = 'number';
  sizeInput.value = '20';
  sizeInput.min = '1';
  sizeInput.id = 'batch-size';
  const selectBtn = el('button', 'primary', 'Request batch');
  selectBtn.onclick = () => void store.selectBatch(Number(sizeInput.value) || 20);
  const saveBtn = el('button', 'primary', `Save labels (${store.buffer.size})`);
  saveBtn.id = 'save-labels';
  saveBtn.onclick = () => void store.submitLabels();
  bar.append('batch size ', sizeInput, selectBtn, saveBtn);
  root.append(bar);

  if (queue.length === 0) {
    root.append(el('p', 'hint', 'Queue is empty — request a batch to start labeling.'));
    return;
  }

  const item = queue[cursor];
  const stage = el('div', 'stage');
  const counter = el('div', 'counter', `${cursor + 1} / ${queue.length}  —  ${item.image_id}`);
  stage.append(counter);

  const frame = el('div', 'frame');
  const img = el('img') as HTMLImageElement;
  img.src = item.url;
  img.alt = item.image_id;
  const canvas = el('canvas') as HTMLCanvasElement;
  img.onload = () => {
    canvas.width = img.clientWidth;
    canvas.height = img.clientHeight;
    const ctx = canvas.getContext('2d');
    if (ctx) drawBoxes(ctx, item.boxes, canvas.width, canvas.height);
  };
  img.onerror = () => {
    img.style.display = 'none';
    frame.append(el('div', 'no-image', `no image bytes for ${item.image_id} (${item.boxes.length} boxes)`));
  };
  frame.append(img, canvas);
  stage.append(frame, el('div', 'scores', scoreline(item)));

  const assigned = store.buffer.get(item.image_id);
  const keysRow = el('div', 'keys');
  for (const binding of keyBindings(classes)) {
    const btn = el(
      'button',
      binding.className === assigned ? 'key assigned' : 'key',
      `${binding.key} ${binding.className}`,
    );
    btn.onclick = () => store.assignCurrent(binding.className);
    keysRow.append(btn);
  }
  stage.append(keysRow);

  const nav = el('div', 'nav');
  const prev = el('button', '', '← prev');
  prev.onclick = () => store.advance(-1);
  const next = el('button', '', 'next →');
  next.onclick = () => store.advance(1);
  nav.append(prev, next);
  stage.append(nav);

  root.append(stage);
}
