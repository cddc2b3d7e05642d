/**
 * Pick state for the tuple on screen.
 *
 * The one rule that matters: best and worst can never point at the same
 * item. Picking a role on the item that currently holds the other role
 * clears the other role, so a tie is unrepresentable and submit only
 * unlocks once both roles are placed on different items.
 */

export interface Picks {
  best: number | null;   // 1-based
  worst: number | null;
}

export function emptyPicks(): Picks {
  return { best: null, worst: null };
}

export function pickBest(picks: Picks, index: number, k: number): Picks {
  if (index < 1 || index > k) return picks;
  return { best: index, worst: picks.worst === index ? null : picks.worst };
}

export function pickWorst(picks: Picks, index: number, k: number): Picks {
  if (index < 1 || index > k) return picks;
  return { best: picks.best === index ? null : picks.best, worst: index };
}

export function canSubmit(picks: Picks): boolean {
  return picks.best !== null && picks.worst !== null && picks.best !== picks.worst;
}
