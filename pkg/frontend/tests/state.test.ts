import { describe, expect, it } from 'vitest';
import { canSubmit, emptyPicks, pickBest, pickWorst, Picks } from '../src/state.js';

const K = 4;

describe('pick state', () => {
  it('starts empty and locked', () => {
    const picks = emptyPicks();
    expect(picks).toEqual({ best: null, worst: null });
    expect(canSubmit(picks)).toBe(false);
  });

  it('unlocks once best and worst sit on different items', () => {
    let picks = pickBest(emptyPicks(), 2, K);
    expect(canSubmit(picks)).toBe(false);
    picks = pickWorst(picks, 4, K);
    expect(picks).toEqual({ best: 2, worst: 4 });
    expect(canSubmit(picks)).toBe(true);
  });

  it('stealing the other role clears it, so a tie cannot exist', () => {
    let picks: Picks = { best: 2, worst: 4 };
    picks = pickWorst(picks, 2, K);          // worst onto the best item
    expect(picks).toEqual({ best: null, worst: 2 });
    expect(canSubmit(picks)).toBe(false);

    picks = pickBest(picks, 2, K);           // and back again
    expect(picks).toEqual({ best: 2, worst: null });
    expect(canSubmit(picks)).toBe(false);
  });

  it('never represents best === worst under any click sequence', () => {
    // exhaustive-ish: every pair of click sequences of length 4
    const moves = [
      (p: Picks, i: number) => pickBest(p, i, K),
      (p: Picks, i: number) => pickWorst(p, i, K),
    ];
    let checked = 0;
    for (let a = 0; a < 2 * K; a++) {
      for (let b = 0; b < 2 * K; b++) {
        for (let c = 0; c < 2 * K; c++) {
          let picks = emptyPicks();
          for (const step of [a, b, c]) {
            picks = moves[step % 2](picks, 1 + Math.floor(step / 2));
            if (picks.best !== null) expect(picks.best).not.toBe(picks.worst);
            checked++;
          }
        }
      }
    }
    expect(checked).toBeGreaterThan(1000);
  });

  it('ignores out-of-range indices', () => {
    const picks = pickBest(pickWorst(emptyPicks(), 0, K), K + 1, K);
    expect(picks).toEqual({ best: null, worst: null });
  });
});
