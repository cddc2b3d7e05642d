import { initApp } from './ui.js';
import { detectLang, Lang } from './i18n.js';

// Entry point when served by the annotation service (same origin, so the
// API base is empty). The annotator opens a personal link like
// /?annotator=alice and optionally forces a language with &lang=en.

function boot(): void {
  const rootEl = document.getElementById('app');
  if (!rootEl) {
    console.error('missing #app container');
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const annotator = params.get('annotator') ?? '';
  if (!annotator) {
    rootEl.innerHTML = '<p class="error">Missing ?annotator=... in the URL.</p>';
    return;
  }
  const forced = params.get('lang');
  const lang: Lang = forced === 'de' || forced === 'en'
    ? forced
    : detectLang(localStorage.getItem('bwsq-lang'), navigator.language || 'de');
  void initApp(rootEl, {
    baseUrl: '',
    annotator,
    lang,
    storage: localStorage,
    events: window,
  });
}

if (document.readyState === 'loading') {
  document.addEventListener('DOMContentLoaded', boot);
} else {
  boot();
}
