"""Synthetic corpora with planted structure.

Two families: intensity corpora, where every text carries a distinct
number that the offline oracle annotator reads back out (so the whole
BWS pipeline runs without a model), and quantifier corpora, where class
membership is decided by separable German cue words (so classifiers have
a clean signal to find).
"""

import json
import random
from pathlib import Path

from .annotate import planted_intensity
from .corpus import Corpus, SurveyRecord

N_OFFICES = 119  # office ids cycle through this many distinct values

_INTENSITY_TEMPLATES = (
    "Bestand dahier auf {x} geschätzt.",
    "Kommt vor, Dichte etwa {x} im Revier.",
    "Im ganzen Gebiet mit {x} verzeichnet.",
    "Häufigkeit laut Förster bei {x}.",
    "Nach den Berichten ungefähr {x} vorhanden.",
)

# disjoint cue vocabularies keep the classes linearly separable
PRESENCE_CUES = ("viel", "häufig", "zahlreich", "gemein", "überall", "stark")
ABSENCE_CUES = ("kein", "nicht", "fehlt", "nie", "verschwunden", "ausgerottet")

_FILLER = ("wald", "revier", "gegend", "ufer", "gebirge", "thal",
           "dickicht", "feld", "au", "forst")

# hand-set [0,1] scores for the cue words, shaped like a scaled
# quantifier list: presence cues high, absence cues low
QUANTIFIER_SCORES = {
    "überall": 1.0, "viel": 0.9, "zahlreich": 0.85, "häufig": 0.8,
    "gemein": 0.75, "stark": 0.7,
    "kein": 0.05, "nie": 0.02, "fehlt": 0.05, "nicht": 0.1,
    "verschwunden": 0.0, "ausgerottet": 0.0,
}


def _ids(i: int) -> tuple[str, str, str]:
    return f"r{i:05d}", f"SP_{i % 7:04d}", f"FO_{i % N_OFFICES:03d}"


def make_intensity_corpus(n: int, seed: int = 0) -> Corpus:
    """n records, each text carrying one distinct planted number in [0,1).

    The number doubles as ground-truth quantity: multi_label is its
    quintile (1..5) and binary_label is 1 throughout, so scores, bins, and
    class tables all have a known right answer.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = random.Random(f"synthetic-intensity/{seed}")
    levels = rng.sample(range(10 ** 6), n)  # distinct by construction
    records = []
    for i, level in enumerate(levels):
        intensity = level / 10 ** 6
        rid, species, office = _ids(i)
        text = _INTENSITY_TEMPLATES[i % len(_INTENSITY_TEMPLATES)].format(
            x=f"{intensity:.6f}")
        assert planted_intensity(text) == intensity
        records.append(SurveyRecord(
            record_id=rid, species_id=species, office_id=office, text=text,
            binary_label=1, multi_label=min(5, 1 + int(intensity * 5))))
    return Corpus(records, source=f"synthetic-intensity/{seed}")


def make_quantifier_corpus(n: int, seed: int = 0,
                           presence_share: float = 0.7) -> Corpus:
    """n binary-labeled records whose class is carried by disjoint cue
    words (PRESENCE_CUES vs ABSENCE_CUES) over shared neutral filler."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    rng = random.Random(f"synthetic-quantifier/{seed}")
    n_present = round(presence_share * n)
    labels = [1] * n_present + [0] * (n - n_present)
    rng.shuffle(labels)
    records = []
    for i, label in enumerate(labels):
        cues = PRESENCE_CUES if label == 1 else ABSENCE_CUES
        cue = rng.choice(cues)
        filler = rng.sample(_FILLER, 3)
        text = (f"Im {filler[0]} bei {filler[1]} {cue} gesehen, "
                f"{filler[2]} Nr {i}.")
        rid, species, office = _ids(i)
        records.append(SurveyRecord(
            record_id=rid, species_id=species, office_id=office, text=text,
            binary_label=label, multi_label=None))
    return Corpus(records, source=f"synthetic-quantifier/{seed}")


def make_multiclass_corpus(n: int, seed: int = 0) -> Corpus:
    """n records over classes 1..5, one disjoint cue word per class."""
    cue_sets = {
        1: ("einzeln", "ausnahmsweise"),
        2: ("selten", "spärlich"),
        3: ("zuweilen", "mitunter"),
        4: ("häufig", "gemein"),
        5: ("überall", "massenhaft"),
    }
    rng = random.Random(f"synthetic-multiclass/{seed}")
    records = []
    for i in range(n):
        label = 1 + i % 5
        cue = rng.choice(cue_sets[label])
        filler = rng.sample(_FILLER, 2)
        text = f"{cue.capitalize()} im {filler[0]} wie am {filler[1]}, Nr {i}."
        rid, species, office = _ids(i)
        records.append(SurveyRecord(
            record_id=rid, species_id=species, office_id=office, text=text,
            binary_label=1, multi_label=label))
    return Corpus(records, source=f"synthetic-multiclass/{seed}")


def write_embeddings(corpus: Corpus, path: str | Path, dim: int = 8,
                     seed: int = 0) -> None:
    """Embedding file for an intensity corpus: coordinate 0 is the planted
    intensity, the rest is seeded noise. Gives kernel models a real signal."""
    rng = random.Random(f"synthetic-embeddings/{seed}")
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus:
            value = planted_intensity(r.text)
            if value is None:
                raise ValueError(f"record {r.record_id} has no planted intensity")
            vec = [value] + [rng.gauss(0.0, 0.1) for _ in range(dim - 1)]
            fh.write(json.dumps({"record_id": r.record_id, "vector": vec}) + "\n")
