#!/usr/bin/env python3
"""Offline end-to-end run of the whole pipeline on synthetic corpora.

Everything lands under --out-dir: corpus files, the comparison design, two
judgment campaigns (a clean oracle and a deliberately noisy twin), scores,
the agreement table, report CSVs, trained classifiers and the kernel
regressor, a training curve, and zero-shot labels. No network access is
needed; the oracle annotators read the planted intensity out of each text.

Usage: python3 scripts/run_pipeline_demo.py [--out-dir demo_run] [--n 120]
"""

import argparse
import json
import random
import sys
from pathlib import Path

from bwsq.annotate import (AnnotatorId, JudgmentStore, LlmEndpointConfig,
                           annotate_design, intensity_oracle)
from bwsq.cli import main as cli
from bwsq.corpus import export, ingest
from bwsq.design import load_design
from bwsq.synthetic import (make_intensity_corpus, make_quantifier_corpus,
                            write_embeddings)

OFFLINE = "http://offline.invalid"   # mock annotators never open a connection


def run(*argv) -> None:
    argv = [str(a) for a in argv]
    print(f"\n$ bwsq {' '.join(argv)}")
    if cli(argv) != 0:
        sys.exit("demo step failed, see error above")


def noisy_oracle(seed: int, flip_rate: float = 0.15):
    """Intensity oracle with seeded best/worst swaps: a second, imperfect
    judge so the agreement stats have something to disagree about."""
    rng = random.Random(f"demo-noise/{seed}")

    def complete(system: str, user: str) -> str:
        answer = intensity_oracle(system, user)
        if rng.random() < flip_rate:
            parsed = json.loads(answer)
            parsed["Best"], parsed["Worst"] = parsed["Worst"], parsed["Best"]
            return json.dumps(parsed)
        return answer

    return complete


def main() -> None:
    ap = argparse.ArgumentParser(
        description="offline demo of the scoring and modelling pipeline")
    ap.add_argument("--out-dir", type=Path, default=Path("demo_run"))
    ap.add_argument("--n", type=int, default=120,
                    help="records in the scored corpus (multiple of 4)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)

    # --- corpus -> design -> two annotation campaigns -------------------
    raw = out / "raw.jsonl"
    export(make_intensity_corpus(args.n, seed=args.seed), raw)
    print(f"wrote {args.n} synthetic records to {raw}")

    run("ingest", "--input", raw, "--format", "jsonl",
        "--out", out / "corpus.jsonl", "--dedup")
    run("design", "--corpus", out / "corpus.jsonl", "--k", 4, "--N", 2,
        "--seed", args.seed, "--out", out / "design.jsonl")
    run("annotate-llm", "--design", out / "design.jsonl",
        "--corpus", out / "corpus.jsonl", "--store", out / "judgments.jsonl",
        "--annotator", "mock:intensity", "--base-url", OFFLINE)

    # second judge goes through the library so we can inject the noise
    design = load_design(out / "design.jsonl")
    corpus = ingest(out / "corpus.jsonl")
    cfg = LlmEndpointConfig(base_url=OFFLINE, model_name="noisy-twin")
    annotate_design(design, corpus, cfg, JudgmentStore(out / "judgments.jsonl"),
                    AnnotatorId("human", "noisy-twin"),
                    complete=noisy_oracle(args.seed))
    print(f"\nnoisy twin judged {len(design)} tuples -> {out / 'judgments.jsonl'}")

    # --- agreement, scores, report --------------------------------------
    run("agreement", "--judgments", out / "judgments.jsonl",
        "--out", out / "agreement.csv")
    run("score", "--design", out / "design.jsonl",
        "--judgments", out / "judgments.jsonl", "--annotator", "mock:intensity",
        "--out", out / "scores.csv")
    run("report", "--corpus", out / "corpus.jsonl", "--scores", out / "scores.csv",
        "--out-dir", out / "report")

    # --- classifiers on a separable cue corpus ---------------------------
    quant_raw = out / "quantifier.jsonl"
    export(make_quantifier_corpus(400, seed=args.seed), quant_raw)
    run("ingest", "--input", quant_raw, "--format", "jsonl",
        "--out", out / "quantifier_split.jsonl", "--split", "0.25",
        "--seed", args.seed)
    run("train-binary", "--corpus", out / "quantifier_split.jsonl",
        "--out", out / "binary.model.json", "--audit", "8", "--seed", args.seed)
    run("evaluate", "--model", out / "binary.model.json",
        "--corpus", out / "quantifier_split.jsonl",
        "--out", out / "binary_metrics.json")
    run("curve", "--corpus", out / "quantifier_split.jsonl", "--step", "60",
        "--out", out / "curve.csv", "--seed", args.seed)

    # --- kernel regression from scores + embeddings ----------------------
    write_embeddings(corpus, out / "embeddings.jsonl", seed=args.seed)
    run("train-regress", "--corpus", out / "corpus.jsonl",
        "--scores", out / "scores.csv", "--embeddings", out / "embeddings.jsonl",
        "--kernel", "rbf", "--tune", "--folds", "3",
        "--out", out / "krr.model.json", "--seed", args.seed)
    run("evaluate", "--model", out / "krr.model.json",
        "--corpus", out / "corpus.jsonl", "--scores", out / "scores.csv",
        "--embeddings", out / "embeddings.jsonl",
        "--out", out / "krr_metrics.json")

    # --- zero-shot classes against the gold labels -----------------------
    run("zero-shot", "--corpus", out / "corpus.jsonl",
        "--out", out / "zero_shot.csv", "--annotator", "mock:intensity",
        "--base-url", OFFLINE)

    print(f"\nall artifacts under {out}/")


if __name__ == "__main__":
    main()
