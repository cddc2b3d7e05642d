"""Agreement and model metrics: Cohen's kappa (best / worst / joint), F1
micro/macro, MAE, R^2, Spearman, and a paired sign-flip permutation test."""

import csv
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


class StatsError(Exception):
    pass


@dataclass
class AgreementReport:
    annotator_a: str
    annotator_b: str
    n_items: int
    kappa_best: float
    kappa_worst: float
    kappa_both: float


@dataclass
class MetricsBundle:
    f1_micro: float | None = None
    f1_macro: float | None = None
    mae: float | None = None
    r2: float | None = None
    spearman: float | None = None
    per_class_f1: dict | None = None

    def as_dict(self) -> dict:
        out = {}
        for name in ("f1_micro", "f1_macro", "mae", "r2", "spearman"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.per_class_f1 is not None:
            out["per_class_f1"] = dict(self.per_class_f1)
        return out


def cohen_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    p_e comes from the product of each annotator's marginal label
    distribution. Degenerate p_e = 1 (both annotators constant on the same
    label) returns 1 when observed agreement is perfect and errors
    otherwise, so no silent NaN escapes.
    """
    labels_a, labels_b = list(labels_a), list(labels_b)
    if len(labels_a) != len(labels_b):
        raise StatsError(f"length mismatch: {len(labels_a)} vs {len(labels_b)}")
    n = len(labels_a)
    if n == 0:
        raise StatsError("empty label sequences")
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    marg_a = Counter(labels_a)
    marg_b = Counter(labels_b)
    p_e = sum(marg_a[c] * marg_b.get(c, 0) for c in marg_a) / (n * n)
    if p_e >= 1.0:
        if p_o == 1.0:
            return 1.0
        raise StatsError("degenerate marginals (p_e = 1) with imperfect agreement")
    return (p_o - p_e) / (1 - p_e)


def _annotator_key(annotator) -> str:
    return f"{annotator.kind}:{annotator.name}"


def bws_agreement(judgments_a, judgments_b) -> AgreementReport:
    """Kappa over best picks, worst picks, and joint (best, worst) pairs.

    Only tuples judged valid by both annotators enter; picks are categorical
    (position indices 1..k), and the joint reading treats each (best, worst)
    pair as one composite category.
    """
    valid_a = {j.tuple_id: j for j in judgments_a if j.valid}
    valid_b = {j.tuple_id: j for j in judgments_b if j.valid}
    shared = sorted(valid_a.keys() & valid_b.keys())
    if not shared:
        raise StatsError("no tuples judged valid by both annotators")
    best_a = [valid_a[t].best_index for t in shared]
    best_b = [valid_b[t].best_index for t in shared]
    worst_a = [valid_a[t].worst_index for t in shared]
    worst_b = [valid_b[t].worst_index for t in shared]
    both_a = list(zip(best_a, worst_a))
    both_b = list(zip(best_b, worst_b))
    name_a = _annotator_key(judgments_a[0].annotator) if judgments_a else "?"
    name_b = _annotator_key(judgments_b[0].annotator) if judgments_b else "?"
    return AgreementReport(
        annotator_a=name_a,
        annotator_b=name_b,
        n_items=len(shared),
        kappa_best=cohen_kappa(best_a, best_b),
        kappa_worst=cohen_kappa(worst_a, worst_b),
        kappa_both=cohen_kappa(both_a, both_b),
    )


def f1_scores(y_true, y_pred, classes) -> MetricsBundle:
    """Per-class, macro (unweighted mean over `classes`), and micro F1.

    A class with no true and no predicted instances gets F1 = 0 by
    convention. Micro F1 pools counts, which for single-label multi-class
    over the full class set equals accuracy.
    """
    y_true, y_pred = list(y_true), list(y_pred)
    if len(y_true) != len(y_pred):
        raise StatsError(f"length mismatch: {len(y_true)} vs {len(y_pred)}")
    if not y_true:
        raise StatsError("empty inputs")
    per_class = {}
    tp_total = fp_total = fn_total = 0
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        denom = 2 * tp + fp + fn
        per_class[c] = 2 * tp / denom if denom > 0 else 0.0
        tp_total += tp
        fp_total += fp
        fn_total += fn
    macro = sum(per_class.values()) / len(per_class) if per_class else 0.0
    micro_denom = 2 * tp_total + fp_total + fn_total
    micro = 2 * tp_total / micro_denom if micro_denom > 0 else 0.0
    return MetricsBundle(f1_micro=micro, f1_macro=macro, per_class_f1=per_class)


def regression_metrics(y_true, y_pred) -> MetricsBundle:
    """MAE, R^2 = 1 - SS_res/SS_tot, and Spearman over average-ranked ties.

    y_true must not be constant (R^2 and Spearman are undefined there); a
    constant y_pred yields Spearman 0 by convention.
    """
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise StatsError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size < 2:
        raise StatsError("need at least 2 points")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise StatsError("constant y_true: R^2 undefined")
    mae = float(np.mean(np.abs(y_true - y_pred)))
    r2 = 1.0 - float(np.sum((y_true - y_pred) ** 2)) / ss_tot
    return MetricsBundle(mae=mae, r2=r2, spearman=spearman(y_true, y_pred))


def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties; 0 if either side is constant."""
    rx = rankdata(np.asarray(x, dtype=float))
    ry = rankdata(np.asarray(y, dtype=float))
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def paired_permutation_test(values_a, values_b, n_resamples: int = 10000,
                            seed: int = 0) -> float:
    """Two-sided sign-flip permutation test on paired differences.

    The statistic is the mean difference; p is the fraction of sign-flip
    assignments whose |statistic| reaches the observed one. All 2^n flips
    are enumerated when feasible, otherwise n_resamples seeded draws are
    used (with the identity flip included).
    """
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if a.shape != b.shape:
        raise StatsError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise StatsError("empty inputs")
    diffs = a - b
    observed = abs(diffs.mean())
    n = diffs.size
    eps = 1e-12
    if 2 ** n <= n_resamples:
        hits = total = 0
        for signs in itertools.product((1.0, -1.0), repeat=n):
            total += 1
            if abs((diffs * signs).mean()) >= observed - eps:
                hits += 1
        return hits / total
    rng = random.Random(f"perm/{seed}")
    hits = 1  # identity assignment always reaches the observed statistic
    for _ in range(n_resamples):
        signs = np.array([1.0 if rng.random() < 0.5 else -1.0 for _ in range(n)])
        if abs((diffs * signs).mean()) >= observed - eps:
            hits += 1
    return hits / (n_resamples + 1)


def save_agreement_csv(reports: list[AgreementReport], path: str | Path) -> None:
    """Agreement matrix: one row per annotator pair with B, W, B+W columns."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["annotator_a", "annotator_b", "n_items", "B", "W", "B+W"])
        for r in reports:
            writer.writerow([r.annotator_a, r.annotator_b, r.n_items,
                             f"{r.kappa_best:.4f}", f"{r.kappa_worst:.4f}",
                             f"{r.kappa_both:.4f}"])
