"""Case-study reporting: map continuous scores back onto the 7-class
scheme, summarize per-species score distributions, and emit plot-ready
CSVs. Rendering is left to external tools; everything here is data."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CLASS_NAMES
from .scoring import ScoreRecord

log = logging.getLogger(__name__)


class ReportError(Exception):
    pass


@dataclass(frozen=True)
class ClassBinning:
    """Edges over [0,1] mapping scores to the positive classes 1..5.

    Absent (0) and Extinct (-1) are never assigned from a score; a
    regression score cannot express extinction, so those two classes enter
    only through explicit flags on bin_scores.
    """
    edges: tuple = (0.2, 0.4, 0.6, 0.8)
    classes: tuple = (1, 2, 3, 4, 5)
    policy: str = "equal-width"

    def __post_init__(self):
        if len(self.classes) != len(self.edges) + 1:
            raise ReportError(f"{len(self.edges)} edges need "
                              f"{len(self.edges) + 1} classes")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ReportError(f"edges not strictly increasing: {self.edges}")
        if self.edges and not (0.0 < self.edges[0] and self.edges[-1] < 1.0):
            raise ReportError(f"edges must lie inside (0, 1): {self.edges}")

    def assign(self, score: float) -> int:
        if not 0.0 <= score <= 1.0:
            raise ReportError(f"score {score} outside [0, 1]")
        # a score on an edge goes to the upper bin
        for i, edge in enumerate(self.edges):
            if score < edge:
                return self.classes[i]
        return self.classes[-1]

    @classmethod
    def from_quantiles(cls, scores, classes: tuple = (1, 2, 3, 4, 5)) -> "ClassBinning":
        values = np.asarray(list(scores), dtype=float)
        if values.size < len(classes):
            raise ReportError(f"need at least {len(classes)} scores for "
                              f"quantile edges, got {values.size}")
        qs = np.linspace(0, 1, len(classes) + 1)[1:-1]
        edges = tuple(float(e) for e in np.quantile(values, qs))
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ReportError(f"quantile edges collapse on this data: {edges}")
        return cls(edges, classes, policy="quantile")


def bin_scores(scores: list[ScoreRecord], binning: ClassBinning,
               absent=(), extinct=()) -> list[tuple[str, int]]:
    """(record_id, class) per score; Absent/Extinct flags win over bins."""
    absent, extinct = set(absent), set(extinct)
    both = absent & extinct
    if both:
        raise ReportError(f"record(s) flagged both absent and extinct: "
                          f"{sorted(both)[:3]}")
    out = []
    for s in scores:
        if s.record_id in extinct:
            out.append((s.record_id, -1))
        elif s.record_id in absent:
            out.append((s.record_id, 0))
        else:
            out.append((s.record_id, binning.assign(s.norm_score)))
    return out


@dataclass
class SpeciesDistribution:
    species_id: str
    office_scores: list[tuple[str, float]]       # (office_id, norm_score)
    histogram: list[tuple[float, float, int]]    # (bin_left, bin_right, count)

    @property
    def total(self) -> int:
        return sum(c for _, _, c in self.histogram)


def species_distribution(records, scores: list[ScoreRecord], species_id: str,
                         bins: int = 10) -> SpeciesDistribution:
    """Per-office scores and a fixed-width histogram over [0,1] for one
    species; histogram counts sum to the number of scored records."""
    by_score = {s.record_id: s.norm_score for s in scores}
    pairs = [(r.office_id, by_score[r.record_id])
             for r in records
             if r.species_id == species_id and r.record_id in by_score]
    known = any(r.species_id == species_id for r in records)
    if not known:
        raise ReportError(f"unknown species {species_id!r}")
    values = [v for _, v in pairs]
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    hist = [(float(edges[i]), float(edges[i + 1]), int(counts[i]))
            for i in range(bins)]
    return SpeciesDistribution(species_id, pairs, hist)


@dataclass
class ClassSummary:
    label: int
    count: int
    mean: float
    min: float
    max: float


@dataclass
class ClassScoreTable:
    rows: list[ClassSummary]
    violations: list[tuple[int, int]] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return not self.violations


def class_vs_score_table(records, scores: list[ScoreRecord]) -> ClassScoreTable:
    """Per-class score summaries joined on record_id, plus a diagnostic of
    adjacent class pairs whose mean scores are not increasing."""
    by_score = {s.record_id: s.norm_score for s in scores}
    grouped: dict[int, list[float]] = {}
    for r in records:
        if r.multi_label is None or r.record_id not in by_score:
            continue
        grouped.setdefault(r.multi_label, []).append(by_score[r.record_id])
    if not grouped:
        raise ReportError("no records share a record_id with the scores "
                          "and carry a multi_label")
    rows = []
    for label in sorted(grouped):
        vals = grouped[label]
        rows.append(ClassSummary(label, len(vals), sum(vals) / len(vals),
                                 min(vals), max(vals)))
    violations = [(a.label, b.label)
                  for a, b in zip(rows, rows[1:]) if b.mean < a.mean]
    return ClassScoreTable(rows, violations)


# ----------------------------------------------------------------- CSV out

def save_binned(assignments: list[tuple[str, int]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "class", "class_name"])
        for rid, cls in assignments:
            writer.writerow([rid, cls, CLASS_NAMES[cls]])


def save_distribution(dist: SpeciesDistribution, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["species_id", "bin_left", "bin_right", "count"])
        for left, right, count in dist.histogram:
            writer.writerow([dist.species_id, repr(left), repr(right), count])


def save_class_table(table: ClassScoreTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "class_name", "count", "mean", "min", "max"])
        for row in table.rows:
            writer.writerow([row.label, CLASS_NAMES[row.label], row.count,
                             repr(row.mean), repr(row.min), repr(row.max)])
