// UI strings. The survey texts themselves are historical German; the
// chrome around them can be either language.

export type Lang = 'de' | 'en';

const STRINGS = {
  de: {
    title: 'Mengenangaben vergleichen',
    instruction: 'Welche Beschreibung meint die GRÖSSTE Menge (beste), welche die KLEINSTE (schlechteste)?',
    best: 'größte',
    worst: 'kleinste',
    submit: 'Absenden',
    progress: (p: number, t: number) => `Tupel ${p} von ${t}`,
    done: 'Fertig! Alle zugewiesenen Tupel sind beurteilt.',
    export: 'Urteile herunterladen',
    offlineQueued: (n: number) => `Offline: ${n} Urteil(e) zwischengespeichert`,
    flushed: (n: number) => `${n} zwischengespeicherte(s) Urteil(e) übertragen`,
    unknownAnnotator: 'Unbekannte Kennung. Bitte Link prüfen.',
    loadError: 'Verbindung fehlgeschlagen, neuer Versuch gleich...',
    keyboardHint: 'Tasten 1-4: größte, Umschalt+1-4: kleinste, Eingabe: absenden',
  },
  en: {
    title: 'Compare quantity descriptions',
    instruction: 'Which description refers to the LARGEST quantity (best), which to the SMALLEST (worst)?',
    best: 'largest',
    worst: 'smallest',
    submit: 'Submit',
    progress: (p: number, t: number) => `Tuple ${p} of ${t}`,
    done: 'Done! Every assigned tuple is judged.',
    export: 'Download judgments',
    offlineQueued: (n: number) => `Offline: ${n} judgment(s) queued`,
    flushed: (n: number) => `${n} queued judgment(s) delivered`,
    unknownAnnotator: 'Unknown annotator id. Check your link.',
    loadError: 'Connection failed, retrying shortly...',
    keyboardHint: 'Keys 1-4: largest, Shift+1-4: smallest, Enter: submit',
  },
} as const;

export type Strings = (typeof STRINGS)[Lang];

export function stringsFor(lang: Lang): Strings {
  return STRINGS[lang];
}

export function otherLang(lang: Lang): Lang {
  return lang === 'de' ? 'en' : 'de';
}

export function detectLang(stored: string | null, navigatorLang: string): Lang {
  if (stored === 'de' || stored === 'en') return stored;
  return navigatorLang.toLowerCase().startsWith('de') ? 'de' : 'en';
}
