"""Counting-based scores from best/worst judgments.

Each text i gets s(i) = (#best(i) - #worst(i)) / #overall(i), an interval
scale on [-1, 1], normalized to [0, 1] via (s + 1) / 2. With every text
judged in J tuples the raw score lives on the grid {-J..J}/J (17 distinct
values for J = 8).
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .design import Design


class ScoringError(Exception):
    pass


@dataclass(frozen=True)
class ScoreRecord:
    record_id: str
    n_best: int
    n_worst: int
    n_overall: int
    raw_score: float
    norm_score: float
    imputed: bool = False  # set only for out-of-sample records given a conventional score


@dataclass
class ScoreResult:
    scores: list[ScoreRecord]
    unscored: list[str] = field(default_factory=list)

    def by_id(self) -> dict[str, ScoreRecord]:
        return {s.record_id: s for s in self.scores}


def _annotator_key(annotator) -> str:
    return f"{annotator.kind}:{annotator.name}"


def score(judgments, design: Design, pooled: bool = False) -> ScoreResult:
    """Fold valid judgments into per-record count scores.

    Only valid judgments contribute; n_overall counts a record's appearances
    in valid judgments. Judgments from more than one annotator are rejected
    unless pooled=True (pooling sums counts across annotators and is always
    an explicit choice). Records of the design never seen in a valid
    judgment are returned in `unscored`.
    """
    tuples = design.by_id()
    annotators = {_annotator_key(j.annotator) for j in judgments}
    if len(annotators) > 1 and not pooled:
        raise ScoringError(
            f"judgments from {len(annotators)} annotators ({sorted(annotators)}); "
            "pass pooled=True to sum counts across annotators")

    n_best: dict[str, int] = {}
    n_worst: dict[str, int] = {}
    n_overall: dict[str, int] = {}
    for j in judgments:
        if j.tuple_id not in tuples:
            raise ScoringError(f"judgment references unknown tuple {j.tuple_id!r}")
        if not j.valid:
            continue
        members = tuples[j.tuple_id].member_ids
        for rid in members:
            n_overall[rid] = n_overall.get(rid, 0) + 1
        best_id = members[j.best_index - 1]
        worst_id = members[j.worst_index - 1]
        n_best[best_id] = n_best.get(best_id, 0) + 1
        n_worst[worst_id] = n_worst.get(worst_id, 0) + 1

    scores = []
    for rid, overall in n_overall.items():
        b = n_best.get(rid, 0)
        w = n_worst.get(rid, 0)
        raw = (b - w) / overall
        scores.append(ScoreRecord(record_id=rid, n_best=b, n_worst=w,
                                  n_overall=overall, raw_score=raw,
                                  norm_score=(raw + 1) / 2))
    scores.sort(key=lambda s: s.record_id)

    design_ids = {rid for t in design.tuples for rid in t.member_ids}
    unscored = sorted(design_ids - n_overall.keys())
    return ScoreResult(scores=scores, unscored=unscored)


def score_per_annotator(judgments, design: Design) -> dict[str, ScoreResult]:
    """Group judgments by annotator and score each group separately."""
    groups: dict[str, list] = {}
    for j in judgments:
        groups.setdefault(_annotator_key(j.annotator), []).append(j)
    return {key: score(js, design) for key, js in sorted(groups.items())}


def rank(scores: list[ScoreRecord]) -> list[str]:
    """Record ids in descending norm_score order; ties broken lexicographically."""
    return [s.record_id for s in sorted(scores, key=lambda s: (-s.norm_score, s.record_id))]


def impute_absent(result: ScoreResult, corpus: Corpus) -> ScoreResult:
    """Give out-of-sample Absent/Extinct records the conventional score 0.

    Texts labelled absent are excluded from the comparison sample, so they
    carry no counts; downstream tables still want a value for them. The
    imputed records are flagged and carry zero counts, which deliberately
    sidesteps the count invariants of measured records.
    """
    scored_ids = {s.record_id for s in result.scores}
    extra = []
    for rec in corpus.records:
        if rec.record_id in scored_ids:
            continue
        absent = (rec.binary_label == 0
                  or (rec.multi_label is not None and rec.multi_label <= 0))
        if absent:
            extra.append(ScoreRecord(record_id=rec.record_id, n_best=0, n_worst=0,
                                     n_overall=0, raw_score=-1.0, norm_score=0.0,
                                     imputed=True))
    unscored = [rid for rid in result.unscored
                if rid not in {s.record_id for s in extra}]
    return ScoreResult(scores=result.scores + extra, unscored=unscored)


def save_scores(result: ScoreResult, path: str | Path) -> None:
    """CSV export with full-precision floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "n_best", "n_worst", "n_overall",
                         "raw_score", "norm_score", "imputed"])
        for s in result.scores:
            writer.writerow([s.record_id, s.n_best, s.n_worst, s.n_overall,
                             repr(s.raw_score), repr(s.norm_score),
                             int(s.imputed)])


def load_scores(path: str | Path) -> ScoreResult:
    scores = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.append(ScoreRecord(
                record_id=row["record_id"],
                n_best=int(row["n_best"]),
                n_worst=int(row["n_worst"]),
                n_overall=int(row["n_overall"]),
                raw_score=float(row["raw_score"]),
                norm_score=float(row["norm_score"]),
                imputed=bool(int(row.get("imputed", "0") or 0)),
            ))
    return ScoreResult(scores=scores)
