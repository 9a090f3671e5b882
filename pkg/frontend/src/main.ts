import { classForKey } from './keyboard.js';
import { ConsoleStore, type View } from './store.js';
import { renderDashboard } from './views/dashboard.js';
import { renderQueue } from './views/queue.js';
import { renderReview } from './views/review.js';

const store = new ConsoleStore('');

function renderHeader(root: HTMLElement): void {
  const { view, status, stale, message } = store.state;
  root.replaceChildren();
  const title = document.createElement('span');
  title.className = 'brand';
  title.textContent = 'wildloop console';
  root.append(title);

  for (const target of ['queue', 'dashboard', 'review'] as View[]) {
    const btn = document.createElement('button');
    btn.className = view === target ? 'tab active' : 'tab';
    btn.textContent = target;
    btn.onclick = () => store.setView(target);
    root.append(btn);
  }

  const info = document.createElement('span');
  info.className = 'header-info';
  if (status) {
    info.textContent = `labeled ${status.labeled} · unlabeled ${status.unlabeled} · iteration ${status.iteration}`;
  }
  root.append(info);

  if (stale) {
    const badge = document.createElement('span');
    badge.className = 'stale-badge';
    badge.textContent = 'OFFLINE — showing last snapshot';
    root.append(badge);
  }
  if (message) {
    const note = document.createElement('span');
    note.className = 'message';
    note.textContent = message;
    root.append(note);
  }
}

function render(): void {
  const header = document.getElementById('header');
  const main = document.getElementById('main');
  if (!header || !main) return;
  renderHeader(header);
  switch (store.state.view) {
    case 'queue':
      renderQueue(store, main);
      break;
    case 'dashboard':
      renderDashboard(store, main);
      break;
    case 'review':
      void renderReview(store, main);
      break;
  }
}

function onKey(event: KeyboardEvent): void {
  if (store.state.view !== 'queue') return;
  const target = event.target as HTMLElement | null;
  if (target && (target.tagName === 'INPUT' || target.tagName === 'TEXTAREA')) return;
  if (event.key === 'ArrowLeft') {
    store.advance(-1);
    return;
  }
  if (event.key === 'ArrowRight') {
    store.advance(1);
    return;
  }
  if (event.key === 'Enter' && (event.ctrlKey || event.metaKey)) {
    void store.submitLabels();
    return;
  }
  const className = classForKey(store.state.classes, event.key);
  if (className) store.assignCurrent(className);
}

store.subscribe(render);
document.addEventListener('keydown', onKey);
void store.refresh().then(render);
setInterval(() => {
  if (!store.state.jobRunning) void store.refresh();
}, 15_000);
