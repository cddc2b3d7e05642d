/**
 * DOM wiring for the judgment screen.
 *
 * One tuple at a time: every text row carries a best and a worst button,
 * submit stays locked until both roles sit on different rows (see
 * state.ts for the no-tie rule). Judgments that cannot reach the server
 * go to the offline queue and the screen parks until the browser comes
 * back online, at which point the queue is flushed and the campaign
 * continues where it stopped.
 */

import { Assignment, JudgmentPayload, fetchNext, postJudgment, exportUrl, ApiError } from './api.js';
import { Picks, emptyPicks, pickBest, pickWorst, canSubmit } from './state.js';
import { enqueue, flushQueue, queueLength } from './queue.js';
import { Lang, Strings, stringsFor, otherLang } from './i18n.js';

export interface AppConfig {
  baseUrl: string;
  annotator: string;
  lang: Lang;
  storage: Pick<Storage, 'getItem' | 'setItem' | 'removeItem'>;
  /** Event target for keyboard and online events; window in the browser. */
  events: EventTarget;
  retryDelayMs?: number;
}

interface AppState {
  assignment: Assignment | null;
  picks: Picks;
  lang: Lang;
  done: boolean;
  busy: boolean;       // a submit or load is in flight
  offline: boolean;
}

let root: HTMLElement;
let config: AppConfig;
let state: AppState;
let retryTimer: ReturnType<typeof setTimeout> | null = null;

function t(): Strings {
  return stringsFor(state.lang);
}

// ------------------------------------------------------------ rendering

function render(): void {
  const s = t();
  const queued = queueLength(config.storage);
  root.innerHTML = `
    <header class="bar">
      <h1>${s.title}</h1>
      <div class="bar-right">
        <span data-testid="progress" class="progress"></span>
        <button data-testid="lang-toggle" class="ghost" type="button">${otherLang(state.lang).toUpperCase()}</button>
      </div>
    </header>
    <div data-testid="banner" class="banner hidden"></div>
    <main data-testid="card" class="card"></main>
    <footer class="hint">${s.keyboardHint}</footer>
  `;
  bannerFromState(queued);
  if (state.done) {
    renderDone();
  } else if (state.assignment) {
    renderTuple(state.assignment);
  } else {
    card().innerHTML = `<p class="muted">...</p>`;
  }
  const toggle = root.querySelector('[data-testid="lang-toggle"]') as HTMLButtonElement;
  toggle.addEventListener('click', () => {
    state.lang = otherLang(state.lang);
    config.storage.setItem('bwsq-lang', state.lang);
    render();
  });
}

function card(): HTMLElement {
  return root.querySelector('[data-testid="card"]') as HTMLElement;
}

function banner(): HTMLElement {
  return root.querySelector('[data-testid="banner"]') as HTMLElement;
}

function showBanner(text: string, kind: 'info' | 'warn'): void {
  const el = banner();
  el.textContent = text;
  el.className = `banner ${kind}`;
}

function hideBanner(): void {
  banner().className = 'banner hidden';
}

function bannerFromState(queued: number): void {
  if (state.offline || queued > 0) {
    showBanner(t().offlineQueued(queued), 'warn');
  } else {
    hideBanner();
  }
}

function renderDone(): void {
  const s = t();
  card().innerHTML = `
    <p data-testid="done" class="done">${s.done}</p>
    <a data-testid="export-link" href="${exportUrl(config.baseUrl)}" download="judgments.ndjson">${s.export}</a>
  `;
  setProgressText('');
}

function setProgressText(text: string): void {
  (root.querySelector('[data-testid="progress"]') as HTMLElement).textContent = text;
}

function renderTuple(a: Assignment): void {
  const s = t();
  const rows = a.texts.map((text, i) => {
    const index = i + 1;   // service and scoring count items from 1
    return `
      <div class="row" data-row="${index}">
        <button type="button" class="pick best" data-best="${index}" aria-label="${s.best} ${index}">${s.best}</button>
        <span class="text">${escapeHtml(text)}</span>
        <button type="button" class="pick worst" data-worst="${index}" aria-label="${s.worst} ${index}">${s.worst}</button>
      </div>`;
  });
  card().innerHTML = `
    <p class="instruction">${s.instruction}</p>
    <div class="rows">${rows.join('')}</div>
    <button type="button" class="submit" data-testid="submit" disabled>${s.submit}</button>
  `;
  setProgressText(s.progress(a.position, a.total));

  card().querySelectorAll<HTMLButtonElement>('[data-best]').forEach((btn) => {
    btn.addEventListener('click', () => {
      state.picks = pickBest(state.picks, Number(btn.dataset.best), a.k);
      paintPicks();
    });
  });
  card().querySelectorAll<HTMLButtonElement>('[data-worst]').forEach((btn) => {
    btn.addEventListener('click', () => {
      state.picks = pickWorst(state.picks, Number(btn.dataset.worst), a.k);
      paintPicks();
    });
  });
  (card().querySelector('[data-testid="submit"]') as HTMLButtonElement)
    .addEventListener('click', () => void submit());
  paintPicks();
}

function paintPicks(): void {
  const { best, worst } = state.picks;
  card().querySelectorAll<HTMLElement>('.row').forEach((row) => {
    const index = Number(row.dataset.row);
    row.classList.toggle('is-best', index === best);
    row.classList.toggle('is-worst', index === worst);
  });
  const submitBtn = card().querySelector('[data-testid="submit"]') as HTMLButtonElement | null;
  if (submitBtn) submitBtn.disabled = !canSubmit(state.picks) || state.busy;
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) => (
    { '&': '&amp;', '<': '&lt;', '>': '&gt;', '"': '&quot;', "'": '&#39;' }[c] as string
  ));
}

// ------------------------------------------------------------ data flow

async function loadNext(): Promise<void> {
  state.busy = true;
  try {
    const next = await fetchNext(config.baseUrl, config.annotator);
    state.offline = false;
    if (next === 'done') {
      state.done = true;
      state.assignment = null;
    } else {
      state.assignment = next;
      state.picks = emptyPicks();
    }
    state.busy = false;
    render();
  } catch (error) {
    state.busy = false;
    if (error instanceof ApiError && error.status === 404) {
      card().innerHTML = `<p data-testid="error" class="error">${t().unknownAnnotator}</p>`;
      return;
    }
    // network trouble: tell the user and retry on a timer or on 'online'
    state.offline = true;
    showBanner(t().loadError, 'warn');
    scheduleRetry();
  }
}

async function submit(): Promise<void> {
  const a = state.assignment;
  if (!a || !canSubmit(state.picks) || state.busy) return;
  const payload: JudgmentPayload = {
    annotator_id: config.annotator,
    tuple_id: a.tuple_id,
    best_index: state.picks.best as number,
    worst_index: state.picks.worst as number,
  };
  state.busy = true;
  paintPicks();
  try {
    await postJudgment(config.baseUrl, payload);
    state.busy = false;
    await loadNext();
  } catch (error) {
    state.busy = false;
    if (error instanceof ApiError) {
      // 422 here means a stale screen (tuple judged in another tab); move on
      console.warn(`judgment rejected: ${error.reason}`);
      await loadNext();
      return;
    }
    // network down: park the judgment and wait for 'online'
    const queued = enqueue(config.storage, payload);
    state.offline = true;
    state.assignment = null;
    render();
    showBanner(t().offlineQueued(queued), 'warn');
  }
}

async function onOnline(): Promise<void> {
  const result = await flushQueue(config.baseUrl, config.storage);
  state.offline = false;
  if (result.remaining === 0 && result.sent + result.dropped > 0) {
    showBanner(t().flushed(result.sent), 'info');
  }
  if (result.remaining === 0) {
    await loadNext();
  }
}

function scheduleRetry(): void {
  if (retryTimer !== null) return;
  retryTimer = setTimeout(() => {
    retryTimer = null;
    void onOnline();
  }, config.retryDelayMs ?? 3000);
}

function onKey(event: KeyboardEvent): void {
  if (!state.assignment || state.done) return;
  const a = state.assignment;
  const digit = event.code.startsWith('Digit') ? Number(event.code.slice(5)) : NaN;
  if (digit >= 1 && digit <= a.k) {
    state.picks = event.shiftKey
      ? pickWorst(state.picks, digit, a.k)
      : pickBest(state.picks, digit, a.k);
    paintPicks();
    event.preventDefault();
  } else if (event.code === 'Enter') {
    void submit();
  }
}

// ------------------------------------------------------------ entry

export async function initApp(rootEl: HTMLElement, cfg: AppConfig): Promise<void> {
  root = rootEl;
  config = cfg;
  state = {
    assignment: null,
    picks: emptyPicks(),
    lang: cfg.lang,
    done: false,
    busy: false,
    offline: false,
  };
  render();
  cfg.events.addEventListener('online', () => void onOnline());
  cfg.events.addEventListener('keydown', ((e: Event) => onKey(e as KeyboardEvent)) as EventListener);
  if (queueLength(cfg.storage) > 0) {
    // reloaded while judgments were still parked: deliver them first
    await onOnline();
  } else {
    await loadNext();
  }
}
