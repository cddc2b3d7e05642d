"""Balanced comparison-tuple designs for Best-Worst Scaling.

Tuples are built in N*k shuffle-and-chunk rounds: each round permutes the
whole corpus with a seeded RNG and cuts it into consecutive blocks of k, so
every record appears exactly once per round and therefore in exactly N*k
tuples overall. For k=4 and N=2 over 1000 records that gives 2000 tuples
with every record in exactly 8 of them.
"""

import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus

logger = logging.getLogger(__name__)

MAX_ROUND_RETRIES = 100


class DesignError(Exception):
    """Design construction failed."""


class CorpusTooSmallError(DesignError):
    pass


class DivisibilityError(DesignError):
    pass


@dataclass(frozen=True)
class DesignParams:
    k: int = 4
    n_rounds_per_record: int = 2  # N: how many k-tuple "coverage units" per record
    seed: int = 0

    def __post_init__(self):
        if self.k < 3:
            raise ValueError(f"set size k must be >= 3, got {self.k}")
        if self.n_rounds_per_record < 1:
            raise ValueError(f"N must be >= 1, got {self.n_rounds_per_record}")


@dataclass(frozen=True)
class ComparisonTuple:
    tuple_id: str
    member_ids: tuple[str, ...]  # presentation order
    round: int


@dataclass
class Design:
    params: DesignParams
    tuples: list[ComparisonTuple]

    def __len__(self) -> int:
        return len(self.tuples)

    def by_id(self) -> dict[str, ComparisonTuple]:
        return {t.tuple_id: t for t in self.tuples}


@dataclass
class DesignReport:
    expected_appearances: int
    appearance_counts: dict[str, int]
    duplicate_tuples: list[tuple[str, str]] = field(default_factory=list)
    within_tuple_duplicates: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        counts = set(self.appearance_counts.values())
        return (counts == {self.expected_appearances}
                and not self.duplicate_tuples
                and not self.within_tuple_duplicates)


def _round_permutation(ids: list[str], seed: int, round_index: int, attempt: int) -> list[str]:
    rng = random.Random(f"design/{seed}/{round_index}/{attempt}")
    order = list(ids)
    rng.shuffle(order)
    return order


def generate_design(corpus: Corpus, params: DesignParams, truncate: bool = False) -> Design:
    """Build a design in which every record appears in exactly N*k tuples.

    Requires n >= 2k and k | n; with truncate=True, n mod k randomly chosen
    records are dropped (with a warning) instead of failing. Rounds whose
    chunking reproduces an earlier tuple's member set are reshuffled up to
    MAX_ROUND_RETRIES times.
    """
    ids = [r.record_id for r in corpus.records]
    k, n_rep, seed = params.k, params.n_rounds_per_record, params.seed
    n = len(ids)
    if n < 2 * k:
        raise CorpusTooSmallError(f"corpus size {n} < 2k = {2 * k}")
    if n % k != 0:
        if not truncate:
            raise DivisibilityError(
                f"corpus size {n} not divisible by k={k}; pass truncate to drop {n % k}")
        rng = random.Random(f"design/{seed}/truncate")
        drop = set(rng.sample(ids, n % k))
        logger.warning("truncating corpus: dropping %d record(s): %s",
                       len(drop), sorted(drop))
        ids = [i for i in ids if i not in drop]
        n = len(ids)

    n_rounds = n_rep * k
    tuples: list[ComparisonTuple] = []
    seen_sets: set[frozenset] = set()
    counter = 0
    for round_index in range(n_rounds):
        for attempt in range(MAX_ROUND_RETRIES + 1):
            order = _round_permutation(ids, seed, round_index, attempt)
            chunks = [tuple(order[i:i + k]) for i in range(0, n, k)]
            if all(frozenset(c) not in seen_sets for c in chunks):
                break
        else:
            raise DesignError(
                f"round {round_index} kept colliding with earlier tuples after "
                f"{MAX_ROUND_RETRIES} reshuffles (seed={seed})")
        for chunk in chunks:
            tuples.append(ComparisonTuple(
                tuple_id=f"t{counter:06d}", member_ids=chunk, round=round_index))
            seen_sets.add(frozenset(chunk))
            counter += 1

    return Design(params=params, tuples=tuples)


def verify_design(design: Design) -> DesignReport:
    """Diagnostic pass: appearance histogram, duplicate member sets, repeats within a tuple."""
    params = design.params
    counts: Counter = Counter()
    seen: dict[frozenset, str] = {}
    duplicates: list[tuple[str, str]] = []
    within: list[str] = []
    for t in design.tuples:
        counts.update(t.member_ids)
        if len(set(t.member_ids)) != len(t.member_ids):
            within.append(t.tuple_id)
            continue
        key = frozenset(t.member_ids)
        if key in seen:
            duplicates.append((seen[key], t.tuple_id))
        else:
            seen[key] = t.tuple_id
    return DesignReport(
        expected_appearances=params.n_rounds_per_record * params.k,
        appearance_counts=dict(counts),
        duplicate_tuples=duplicates,
        within_tuple_duplicates=within,
    )


def save_design(design: Design, path: str | Path) -> None:
    """One tuple per line: {tuple_id, round, member_ids}. Params go in a header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({
            "design_params": {"k": design.params.k,
                              "N": design.params.n_rounds_per_record,
                              "seed": design.params.seed}}) + "\n")
        for t in design.tuples:
            fh.write(json.dumps({"tuple_id": t.tuple_id, "round": t.round,
                                 "member_ids": list(t.member_ids)}) + "\n")


def load_design(path: str | Path) -> Design:
    params = None
    tuples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "design_params" in obj:
                p = obj["design_params"]
                params = DesignParams(k=p["k"], n_rounds_per_record=p["N"], seed=p["seed"])
            else:
                tuples.append(ComparisonTuple(
                    tuple_id=obj["tuple_id"],
                    member_ids=tuple(obj["member_ids"]),
                    round=obj.get("round", 0)))
    if params is None:
        # header missing: infer k from the first tuple, N from the counts
        if not tuples:
            raise DesignError(f"empty design file: {path}")
        k = len(tuples[0].member_ids)
        appearances = Counter()
        for t in tuples:
            appearances.update(t.member_ids)
        n_rep = max(1, round(max(appearances.values()) / k))
        params = DesignParams(k=k, n_rounds_per_record=n_rep, seed=0)
    return Design(params=params, tuples=tuples)
