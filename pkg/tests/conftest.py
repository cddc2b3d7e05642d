import pytest

from bwsq.corpus import Corpus
from bwsq.design import DesignParams, generate_design

from helpers import corpus, record


@pytest.fixture
def eight_records() -> Corpus:
    return corpus(8)


@pytest.fixture
def small_design(eight_records):
    # 8 records, k=4, one round each: 8 tuples, every record in 4
    return generate_design(eight_records, DesignParams(k=4, n_rounds_per_record=1, seed=0))


@pytest.fixture
def labelled_corpus() -> Corpus:
    recs = []
    for i in range(12):
        multi = (i % 5) + 1           # classes 1..5, all present
        recs.append(record(i, multi=multi, binary=1))
    return Corpus(recs, source="test")
