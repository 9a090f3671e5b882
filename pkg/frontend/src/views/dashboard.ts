import { historyChartSvg } from '../charts.js';
import type { ConsoleStore } from '../store.js';

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

export function renderDashboard(store: ConsoleStore, root: HTMLElement): void {
  const { status, history, jobRunning } = store.state;
  root.replaceChildren();

  const cards = el('div', 'cards');
  const facts: [string, string][] = status
    ? [
        ['iteration', String(status.iteration)],
        ['labeled', String(status.labeled)],
        ['unlabeled', String(status.unlabeled)],
        ['test set', String(status.test_size)],
        ['accuracy', status.last_metrics ? status.last_metrics.accuracy.toFixed(3) : '—'],
        ['weighted F1', status.last_metrics ? status.last_metrics.weighted_f1.toFixed(3) : '—'],
      ]
    : [['status', 'unavailable']];
  for (const [name, value] of facts) {
    const card = el('div', 'card');
    card.append(el('div', 'card-value', value), el('div', 'card-name', name));
    cards.append(card);
  }
  root.append(cards);

  const chart = el('div', 'chart');
  chart.innerHTML = historyChartSvg(history);
  root.append(chart);

  const controls = el('div', 'controls');
  const skipTuning = el('input') as HTMLInputElement;
  skipTuning.type = 'checkbox';
  skipTuning.checked = true;
  skipTuning.id = 'skip-tuning';
  const skipLabel = el('label', '', ' skip tuning ');
  skipLabel.prepend(skipTuning);

  const warm = el('input') as HTMLInputElement;
  warm.type = 'checkbox';
  warm.id = 'warm-start';
  const warmLabel = el('label', '', ' warm start ');
  warmLabel.prepend(warm);

  const iterateBtn = el('button', 'primary', jobRunning ? 'Iterating…' : 'Iterate');
  iterateBtn.id = 'iterate';
  iterateBtn.disabled = jobRunning;
  iterateBtn.onclick = () =>
    void store.runIterate(skipTuning.checked, warm.checked ? 'warm' : 'cold');

  const finalizeBtn = el('button', '', 'Finalize');
  finalizeBtn.id = 'finalize';
  finalizeBtn.disabled = jobRunning;
  finalizeBtn.onclick = async () => {
    const result = await store.runFinalize();
    if (result.state === 'done') {
      window.open(store.api.exportPredictionsUrl(), '_blank');
    }
  };

  controls.append(skipLabel, warmLabel, iterateBtn, finalizeBtn);
  root.append(controls);

  const table = el('table', 'history');
  table.innerHTML =
    '<thead><tr><th>iter</th><th>labeled</th><th>accuracy</th><th>weighted F1</th></tr></thead>';
  const body = el('tbody');
  for (const row of history) {
    const tr = el('tr');
    tr.innerHTML = `<td>${row.iteration}</td><td>${row.labeled_count}</td><td>${row.accuracy.toFixed(
      4,
    )}</td><td>${row.weighted_f1.toFixed(4)}</td>`;
    body.append(tr);
  }
  table.append(body);
  root.append(table);
}
