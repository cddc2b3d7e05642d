"""Survey-record corpus: ingestion, validation, deduplication, and splitting.

A corpus is an ordered collection of free-text survey responses, one per
species x locality, optionally carrying gold labels for the binary
(present/absent) and the 7-class frequency scheme.
"""

import csv
import datetime
import json
import logging
import random
import unicodedata
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

logger = logging.getLogger(__name__)

# Ordered frequency classes: Extinct(-1), Absent(0), Very Rare(1), Rare(2),
# Common to Rare(3), Common(4), Abundant(5).
MULTI_CLASSES = (-1, 0, 1, 2, 3, 4, 5)
CLASS_NAMES = {
    -1: "Extinct",
    0: "Absent",
    1: "Very Rare",
    2: "Rare",
    3: "Common to Rare",
    4: "Common",
    5: "Abundant",
}

CSV_FIELDS = ("record_id", "species_id", "office_id", "text",
              "binary_label", "multi_label", "split")


class CorpusError(Exception):
    """Base class for corpus failures."""


class SchemaError(CorpusError):
    """File-level schema problem (missing column/key)."""


class IntegrityError(CorpusError):
    """Cross-row violation such as a duplicate record_id."""


class RowError(CorpusError):
    """One or more rows failed validation; carries (row, message) pairs."""

    def __init__(self, failures: list[tuple[int, str]]):
        self.failures = failures
        lines = "; ".join(f"row {i}: {msg}" for i, msg in failures)
        super().__init__(f"{len(failures)} invalid row(s): {lines}")


@dataclass(frozen=True)
class SurveyRecord:
    record_id: str
    species_id: str
    office_id: str
    text: str
    binary_label: int | None = None   # Present=1, Absent=0
    multi_label: int | None = None    # one of MULTI_CLASSES
    split: str | None = None          # "train" | "test"

    def validate(self) -> list[str]:
        """Return a list of invariant violations (empty when valid)."""
        problems = []
        if not self.record_id:
            problems.append("record_id is empty")
        if not self.text.strip():
            problems.append("text is empty after trimming")
        if self.binary_label is not None and self.binary_label not in (0, 1):
            problems.append(f"binary_label={self.binary_label} not in {{0, 1}}")
        if self.multi_label is not None and self.multi_label not in MULTI_CLASSES:
            problems.append(f"multi_label={self.multi_label} outside [-1, 5]")
        if (self.binary_label is not None and self.multi_label is not None
                and self.multi_label in MULTI_CLASSES):
            # multi_label in {-1, 0} <=> binary_label == 0
            if (self.multi_label <= 0) != (self.binary_label == 0):
                problems.append(
                    f"multi_label={self.multi_label} inconsistent with "
                    f"binary_label={self.binary_label}")
        if self.split is not None and self.split not in ("train", "test"):
            problems.append(f"split={self.split!r} not in {{train, test}}")
        return problems


@dataclass
class Corpus:
    records: list[SurveyRecord]
    source: str = ""
    ingested_at: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, SurveyRecord]:
        return {r.record_id: r for r in self.records}

    def subset(self, split: str) -> "Corpus":
        return Corpus([r for r in self.records if r.split == split],
                      source=self.source, ingested_at=self.ingested_at)


def normalize_text(text: str) -> str:
    """Deduplication key: NFC-normalized, outer whitespace trimmed."""
    return unicodedata.normalize("NFC", text).strip()


def _parse_optional_int(value, row: int, name: str, problems: list) -> int | None:
    if value is None or value == "":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        problems.append((row, f"{name}={value!r} is not an integer"))
        return None


def _record_from_mapping(obj: dict, row: int, problems: list) -> SurveyRecord:
    rec = SurveyRecord(
        record_id=str(obj.get("record_id") or ""),
        species_id=str(obj.get("species_id") or ""),
        office_id=str(obj.get("office_id") or ""),
        text=str(obj.get("text") or ""),
        binary_label=_parse_optional_int(obj.get("binary_label"), row, "binary_label", problems),
        multi_label=_parse_optional_int(obj.get("multi_label"), row, "multi_label", problems),
        split=(obj.get("split") or None),
    )
    for msg in rec.validate():
        problems.append((row, msg))
    return rec


def ingest(path: str | Path, format: str | None = None) -> Corpus:
    """Read a corpus from CSV or JSONL, validating every row.

    Required columns/keys: record_id, species_id, office_id, text.
    Raises SchemaError on missing columns, RowError listing every invalid
    row (empty text, out-of-range labels, inconsistent labels), and
    IntegrityError on duplicate record_ids.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("csv", "jsonl"):
        raise SchemaError(f"unknown format {format!r}, expected csv or jsonl")

    required = {"record_id", "species_id", "office_id", "text"}
    problems: list[tuple[int, str]] = []
    records: list[SurveyRecord] = []

    if format == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = set(reader.fieldnames or [])
            missing = required - header
            if missing:
                raise SchemaError(f"missing column(s): {sorted(missing)}")
            for row, obj in enumerate(reader, start=2):  # row 1 is the header
                records.append(_record_from_mapping(obj, row, problems))
    else:
        with open(path, encoding="utf-8") as fh:
            for row, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    problems.append((row, f"invalid JSON: {exc}"))
                    continue
                missing = required - obj.keys()
                if missing:
                    raise SchemaError(f"row {row}: missing key(s): {sorted(missing)}")
                records.append(_record_from_mapping(obj, row, problems))

    if problems:
        raise RowError(problems)

    seen: dict[str, int] = {}
    for i, rec in enumerate(records):
        if rec.record_id in seen:
            raise IntegrityError(
                f"duplicate record_id {rec.record_id!r} "
                f"(records {seen[rec.record_id]} and {i})")
        seen[rec.record_id] = i

    return Corpus(records, source=str(path),
                  ingested_at=datetime.datetime.now(datetime.timezone.utc).isoformat())


def export(corpus: Corpus, path: str | Path, format: str | None = None) -> None:
    """Write a corpus back out; mirrors ingest, texts round-trip byte-identical."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            for r in corpus.records:
                writer.writerow({
                    "record_id": r.record_id,
                    "species_id": r.species_id,
                    "office_id": r.office_id,
                    "text": r.text,
                    "binary_label": "" if r.binary_label is None else r.binary_label,
                    "multi_label": "" if r.multi_label is None else r.multi_label,
                    "split": r.split or "",
                })
    elif format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for r in corpus.records:
                obj = {"record_id": r.record_id, "species_id": r.species_id,
                       "office_id": r.office_id, "text": r.text}
                if r.binary_label is not None:
                    obj["binary_label"] = r.binary_label
                if r.multi_label is not None:
                    obj["multi_label"] = r.multi_label
                if r.split is not None:
                    obj["split"] = r.split
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        raise SchemaError(f"unknown format {format!r}, expected csv or jsonl")


def deduplicate(corpus: Corpus) -> tuple[Corpus, dict[str, str]]:
    """Drop records whose normalized text was seen before; first occurrence wins.

    Returns the deduplicated corpus and a mapping old record_id -> kept
    record_id (identity for survivors). Duplicates carrying gold labels that
    disagree with the kept record are logged, not resolved.
    """
    kept: list[SurveyRecord] = []
    by_text: dict[str, SurveyRecord] = {}
    mapping: dict[str, str] = {}
    for rec in corpus.records:
        key = normalize_text(rec.text)
        winner = by_text.get(key)
        if winner is None:
            by_text[key] = rec
            kept.append(rec)
            mapping[rec.record_id] = rec.record_id
        else:
            mapping[rec.record_id] = winner.record_id
            if (rec.binary_label, rec.multi_label) != (winner.binary_label, winner.multi_label) \
                    and (rec.binary_label is not None or rec.multi_label is not None):
                logger.warning(
                    "duplicate text with conflicting labels: kept %s (%s, %s), "
                    "dropped %s (%s, %s)", winner.record_id, winner.binary_label,
                    winner.multi_label, rec.record_id, rec.binary_label, rec.multi_label)
    return Corpus(kept, source=corpus.source, ingested_at=corpus.ingested_at), mapping


def split(corpus: Corpus, test_fraction: float, seed: int) -> Corpus:
    """Assign train/test split labels, deterministic under the seed.

    The test-set size is round-half-to-even of n * test_fraction, so the
    realized share is within one record of the request.
    """
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(corpus.records)
    n_test = int(round(Fraction(test_fraction) * n))
    rng = random.Random(f"split/{seed}")
    order = list(range(n))
    rng.shuffle(order)
    test_idx = set(order[:n_test])
    records = [replace(rec, split="test" if i in test_idx else "train")
               for i, rec in enumerate(corpus.records)]
    return Corpus(records, source=corpus.source, ingested_at=corpus.ingested_at)
