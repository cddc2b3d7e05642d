import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwsq.corpus import (Corpus, IntegrityError, RowError, SchemaError,
                         SurveyRecord, deduplicate, export, ingest,
                         normalize_text, split)

from helpers import corpus, record


def test_csv_round_trip(tmp_path, eight_records):
    path = tmp_path / "c.csv"
    export(eight_records, path)
    back = ingest(path)
    assert back.records == eight_records.records


def test_jsonl_round_trip_with_labels(tmp_path):
    c = Corpus([record(0, binary=1, multi=3, split="train"),
                record(1, binary=0, multi=0),
                record(2)])
    path = tmp_path / "c.jsonl"
    export(c, path)
    assert ingest(path).records == c.records


def test_format_inferred_from_suffix(tmp_path, eight_records):
    path = tmp_path / "c.csv"
    export(eight_records, path)
    # explicit override must win over the suffix
    with pytest.raises(RowError):
        ingest(path, format="jsonl")


def test_missing_csv_column_is_schema_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("record_id,text\nr1,hello\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="office_id"):
        ingest(path)


def test_missing_jsonl_key_is_schema_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"record_id": "r1", "text": "hi", "species_id": "s"}\n',
                    encoding="utf-8")
    with pytest.raises(SchemaError, match="office_id"):
        ingest(path)


def test_extra_jsonl_keys_are_ignored(tmp_path):
    path = tmp_path / "extra.jsonl"
    path.write_text('{"record_id": "r1", "species_id": "s", "office_id": "o", '
                    '"text": "hi", "intensity": 0.5, "note": "x"}\n',
                    encoding="utf-8")
    c = ingest(path)
    assert len(c) == 1 and c.records[0].record_id == "r1"


def test_row_errors_are_aggregated_with_row_numbers(tmp_path):
    path = tmp_path / "rows.csv"
    path.write_text(
        "record_id,species_id,office_id,text,binary_label,multi_label,split\n"
        "r1,s,o,ok,1,3,\n"
        "r2,s,o,,1,,\n"          # empty text       -> row 3
        "r3,s,o,ok,7,,\n"        # bad binary label -> row 4
        "r4,s,o,ok,,9,\n",       # bad multi label  -> row 5
        encoding="utf-8")
    with pytest.raises(RowError) as exc:
        ingest(path)
    rows = sorted(r for r, _ in exc.value.failures)
    assert rows == [3, 4, 5]


def test_inconsistent_labels_rejected():
    bad = record(0, binary=1, multi=0)
    assert any("inconsistent" in p for p in bad.validate())
    ok = record(1, binary=0, multi=-1)
    assert ok.validate() == []


def test_duplicate_record_id_is_integrity_error(tmp_path):
    c = Corpus([record(0), record(0)])
    path = tmp_path / "dup.jsonl"
    export(c, path)
    with pytest.raises(IntegrityError, match="r000"):
        ingest(path)


def test_normalize_text_nfc_and_trim():
    composed = "Flügel"  # u + combining diaeresis
    assert normalize_text(f"  {composed} \n") == "Flügel"


def test_deduplicate_first_wins_and_maps(caplog):
    c = Corpus([record(0, text="gleicher Text", binary=1),
                record(1, text="anderer Text"),
                record(2, text="  gleicher Text ", binary=0)])
    with caplog.at_level(logging.WARNING):
        deduped, mapping = deduplicate(c)
    assert [r.record_id for r in deduped] == ["r000", "r001"]
    assert mapping == {"r000": "r000", "r001": "r001", "r002": "r000"}
    assert any("conflicting labels" in m for m in caplog.messages)


def test_split_is_exact_and_deterministic():
    c = corpus(10)
    a = split(c, 0.2, seed=3)
    b = split(c, 0.2, seed=3)
    assert [r.split for r in a] == [r.split for r in b]
    assert sum(1 for r in a if r.split == "test") == 2
    assert all(r.split in ("train", "test") for r in a)


def test_split_rounds_half_to_even():
    assert sum(1 for r in split(corpus(10), 0.25, 0) if r.split == "test") == 2
    assert sum(1 for r in split(corpus(6), 0.25, 0) if r.split == "test") == 2


def test_split_rejects_degenerate_fractions():
    with pytest.raises(ValueError):
        split(corpus(4), 0.0, 0)
    with pytest.raises(ValueError):
        split(corpus(4), 1.0, 0)


def test_subset_filters_by_split():
    c = split(corpus(10), 0.3, seed=1)
    test = c.subset("test")
    assert len(test) == 3
    assert all(r.split == "test" for r in test)


@settings(max_examples=30)
@given(n=st.integers(2, 40), frac=st.floats(0.05, 0.95), seed=st.integers(0, 99))
def test_split_partitions_every_record(n, frac, seed):
    c = split(corpus(n), frac, seed)
    n_test = sum(1 for r in c if r.split == "test")
    assert 0 <= n_test <= n
    assert abs(n_test - frac * n) <= 0.5 + 1e-9
