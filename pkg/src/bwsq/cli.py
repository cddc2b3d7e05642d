"""Command-line pipeline driver.

One subcommand per pipeline stage; every run drops a manifest JSON next
to its primary output recording the arguments, seeds, and library
versions that produced it. Exit codes: 0 ok, 1 runtime failure, 2 usage.
"""

import argparse
import datetime
import itertools
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

from .annotate import (AnnotateError, JudgmentStore, LlmEndpointConfig,
                       annotate_design, annotate_zero_shot, resolve_annotator,
                       save_labels)
from .corpus import (Corpus, CorpusError, MULTI_CLASSES, deduplicate, export,
                     ingest, split)
from .design import (DesignError, DesignParams, generate_design, load_design,
                     save_design, verify_design)
from .models import (KrrConfig, ModelError, TrainConfig, build_vocabulary,
                     crossval, embedding_matrix, feature_matrix,
                     ingest_embeddings, krr_features, krr_predict, load_model,
                     save_model, train_binary, train_krr, train_multiclass,
                     training_curve, audit_features, KrrModel, LinearModel)
from .report import (ClassBinning, ReportError, bin_scores, class_vs_score_table,
                     save_binned, save_class_table, save_distribution,
                     species_distribution)
from .scoring import ScoringError, impute_absent, load_scores, save_scores, score
from .stats import (StatsError, bws_agreement, f1_scores,
                    paired_permutation_test, regression_metrics,
                    save_agreement_csv)

log = logging.getLogger(__name__)

PIPELINE_ERRORS = (CorpusError, DesignError, ScoringError, StatsError,
                   AnnotateError, ModelError, ReportError, OSError, ValueError)


def _versions() -> dict:
    import numpy
    import scipy
    try:
        own = metadata.version("bwsq")
    except metadata.PackageNotFoundError:
        own = "unpackaged"
    return {"bwsq": own, "python": platform.python_version(),
            "numpy": numpy.__version__, "scipy": scipy.__version__}


def write_manifest(output: str | Path, command: str, args: argparse.Namespace) -> Path:
    """Reproducibility record beside the output file (or inside an output dir)."""
    output = Path(output)
    params = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": command,
        "params": params,
        "versions": _versions(),
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    target = output / "manifest.json" if output.is_dir() \
        else output.parent / (output.name + ".manifest.json")
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2)
    return target


def _endpoint_config(args, default_model: str = "") -> LlmEndpointConfig:
    return LlmEndpointConfig.from_env(
        **{k: v for k, v in {
            "base_url": args.base_url,
            "model_name": args.model or default_model or None,
            "api_key": None,  # env only, never a flag
        }.items() if v is not None},
        temperature=args.temperature,
        max_retries=args.max_retries,
        parallelism=args.parallelism,
        requests_per_minute=args.rpm,
    )


def _load_judgments(path: str | Path) -> list:
    # the store may hold superseded rows (retries); score on the latest view
    view = JudgmentStore(path).latest()
    return [view[k] for k in sorted(view)]


# ------------------------------------------------------------- subcommands

def cmd_ingest(args) -> int:
    corpus = ingest(args.input, args.format)
    print(f"ingested {len(corpus)} records from {args.input}")
    if args.dedup:
        corpus, mapping = deduplicate(corpus)
        print(f"deduplicated to {len(corpus)} records "
              f"({len(mapping) - len(corpus)} merged)")
    if args.split is not None:
        corpus = split(corpus, args.split, args.seed)
        n_test = sum(1 for r in corpus if r.split == "test")
        print(f"split: {len(corpus) - n_test} train / {n_test} test")
    export(corpus, args.out)
    write_manifest(args.out, "ingest", args)
    print(f"wrote {args.out}")
    return 0


def cmd_design(args) -> int:
    corpus = ingest(args.corpus)
    params = DesignParams(k=args.k, n_rounds_per_record=args.N, seed=args.seed)
    design = generate_design(corpus, params, truncate=args.truncate)
    report = verify_design(design)
    if not report.ok:
        raise DesignError("generated design failed verification")
    save_design(design, args.out)
    write_manifest(args.out, "design", args)
    print(f"{len(design.tuples)} tuples, every record in exactly "
          f"{report.expected_appearances} -> {args.out}")
    return 0


def cmd_annotate_llm(args) -> int:
    corpus = ingest(args.corpus)
    design = load_design(args.design)
    annotator, offline = resolve_annotator(args.annotator, task="bws")
    cfg = _endpoint_config(args, default_model=annotator.name)
    store = JudgmentStore(args.store)
    judgments = annotate_design(design, corpus, cfg, store, annotator,
                                complete=offline)
    valid = sum(1 for j in judgments if j.valid)
    write_manifest(args.store, "annotate-llm", args)
    print(f"{len(judgments)} judgments ({valid} valid, "
          f"{len(judgments) - valid} invalid) -> {args.store}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    write_manifest(args.journal, "serve", args)
    serve(args.campaign, args.journal, args.port, args.static)
    return 0


def cmd_score(args) -> int:
    design = load_design(args.design)
    judgments = _load_judgments(args.judgments)
    if args.annotator:
        judgments = [j for j in judgments
                     if args.annotator in (j.annotator.key, j.annotator.name)]
        if not judgments:
            raise ScoringError(f"no judgments by annotator {args.annotator!r}")
    result = score(judgments, design, pooled=args.pooled)
    if args.impute_absent_from:
        result = impute_absent(result, ingest(args.impute_absent_from))
    save_scores(result, args.out)
    write_manifest(args.out, "score", args)
    print(f"scored {len(result.scores)} records "
          f"({len(result.unscored)} unscored) -> {args.out}")
    return 0


def cmd_agreement(args) -> int:
    judgments = _load_judgments(args.judgments)
    groups: dict[str, list] = {}
    for j in judgments:
        groups.setdefault(j.annotator.key, []).append(j)
    if len(groups) < 2:
        raise StatsError(f"need at least two annotators, found {len(groups)}")
    reports = []
    for a, b in itertools.combinations(sorted(groups), 2):
        try:
            rep = bws_agreement(groups[a], groups[b])
        except StatsError as exc:
            log.warning("skipping %s vs %s: %s", a, b, exc)
            continue
        reports.append(rep)
        print(f"{a} vs {b}: B={rep.kappa_best:.3f} W={rep.kappa_worst:.3f} "
              f"B+W={rep.kappa_both:.3f} (n={rep.n_items})")
    save_agreement_csv(reports, args.out)
    if args.test_pair:
        name_a, name_b = args.test_pair.split(",", 1)
        p = _paired_kappa_test(reports, name_a, name_b)
        print(f"paired sign-flip test {name_a} vs {name_b} on B+W kappa: "
              f"p={p:.3f}")
    write_manifest(args.out, "agreement", args)
    return 0


def _paired_kappa_test(reports, name_a: str, name_b: str) -> float:
    """Paired permutation test on B+W kappas of two annotators against the
    partners both share (e.g. two LLMs, paired over human annotators)."""
    def partner_map(name):
        out = {}
        for r in reports:
            pair = {r.annotator_a, r.annotator_b}
            matches = [p for p in pair if p.split(":", 1)[-1] == name or p == name]
            if matches:
                other = (pair - {matches[0]}).pop()
                out[other] = r.kappa_both
        return out
    of_a, of_b = partner_map(name_a), partner_map(name_b)
    shared = sorted(set(of_a) & set(of_b))
    if not shared:
        raise StatsError(f"no shared partners between {name_a!r} and {name_b!r}")
    return paired_permutation_test([of_a[s] for s in shared],
                                   [of_b[s] for s in shared])


def _train_config(args) -> TrainConfig:
    lexicon = None
    if getattr(args, "lexicon", None):
        with open(args.lexicon, encoding="utf-8") as fh:
            lexicon = {str(k): float(v) for k, v in json.load(fh).items()}
    exclude = tuple(t for t in (args.exclude or "").split(",") if t)
    return TrainConfig(reg_strength=args.reg, seed=args.seed,
                       min_doc_freq=args.mdf, balance_classes=args.balance,
                       exclude_tokens=exclude, lexicon=lexicon)


def _train_eval_split(corpus: Corpus) -> tuple[Corpus, Corpus]:
    train = corpus.subset("train")
    test = corpus.subset("test")
    if len(train) == 0:  # unsplit corpus: train on everything
        return corpus, test
    return train, test


def cmd_train_binary(args) -> int:
    corpus = ingest(args.corpus)
    train, test = _train_eval_split(corpus)
    model = train_binary(train, _train_config(args))
    save_model(model, args.out)
    write_manifest(args.out, "train-binary", args)
    print(f"trained on {len(train)} records (grad norm {model.grad_norm:.2e}) "
          f"-> {args.out}")
    if len(test):
        bundle = f1_scores([r.binary_label for r in test],
                           model.predict(test.records), (0, 1))
        print(f"test: F1 micro={bundle.f1_micro:.4f} macro={bundle.f1_macro:.4f}")
    if args.audit:
        for cls, entries in audit_features(model, args.audit).items():
            listing = ", ".join(f"{t}={w:+.3f}" for t, w in entries)
            print(f"top features for class {cls}: {listing}")
    return 0


def cmd_train_multi(args) -> int:
    corpus = ingest(args.corpus)
    train, test = _train_eval_split(corpus)
    model = train_multiclass(train, _train_config(args))
    save_model(model, args.out)
    write_manifest(args.out, "train-multi", args)
    print(f"trained on {len(train)} records over classes {model.classes} "
          f"-> {args.out}")
    if len(test):
        bundle = f1_scores([r.multi_label for r in test],
                           model.predict(test.records), MULTI_CLASSES)
        print(f"test: F1 micro={bundle.f1_micro:.4f} macro={bundle.f1_macro:.4f}")
    return 0


def cmd_train_regress(args) -> int:
    corpus = ingest(args.corpus)
    scored = load_scores(args.scores)
    by_id = corpus.by_id()
    joined = [(by_id[s.record_id], s.norm_score)
              for s in scored.scores if s.record_id in by_id]
    if not joined:
        raise ModelError("no scored record appears in the corpus")
    records = [r for r, _ in joined]
    y = [v for _, v in joined]
    vocab = None
    if args.embeddings:
        table = ingest_embeddings(args.embeddings, known_ids=by_id.keys())
        X = embedding_matrix(table, [r.record_id for r in records])
    else:
        vocab = build_vocabulary(Corpus(records), args.mdf)
        X = feature_matrix(records, vocab)
    cfg = KrrConfig(kernel=args.kernel, alpha=args.alpha, gamma=args.gamma,
                    tune=args.tune, seed=args.seed)
    if args.folds:
        def trainer(X_tr, y_tr):
            m = train_krr(X_tr, y_tr, cfg)
            return lambda X_te: krr_predict(m, X_te)
        report = crossval(X, y, args.folds, trainer, seed=args.seed)
        print(f"{args.folds}-fold CV: MAE={report.mean.mae:.4f} "
              f"R2={report.mean.r2:.4f} Spearman={report.mean.spearman:.4f}")
    model = train_krr(X, y, cfg)
    model.vocab = vocab
    save_model(model, args.out)
    write_manifest(args.out, "train-regress", args)
    print(f"KRR ({model.kernel}, alpha={model.alpha:g}) on {len(y)} points "
          f"-> {args.out}")
    return 0


def cmd_zero_shot(args) -> int:
    corpus = ingest(args.corpus)
    annotator, offline = resolve_annotator(args.annotator, task="class")
    cfg = _endpoint_config(args, default_model=annotator.name)
    labels = annotate_zero_shot(corpus, cfg, annotator, complete=offline)
    save_labels(labels, args.out)
    write_manifest(args.out, "zero-shot", args)
    valid = [lab for lab in labels if lab.valid]
    print(f"{len(labels)} labels ({len(labels) - len(valid)} unparseable) "
          f"-> {args.out}")
    gold = corpus.by_id()
    pairs = [(gold[lab.record_id].multi_label, lab.predicted_class)
             for lab in valid
             if lab.record_id in gold
             and gold[lab.record_id].multi_label is not None]
    if pairs:
        bundle = f1_scores([t for t, _ in pairs], [p for _, p in pairs],
                           MULTI_CLASSES)
        print(f"vs gold ({len(pairs)} records): "
              f"F1 micro={bundle.f1_micro:.4f} macro={bundle.f1_macro:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    corpus = ingest(args.corpus)
    _, test = _train_eval_split(corpus)
    target = test if len(test) else corpus
    metrics: dict = {}
    if isinstance(model, LinearModel):
        if model.kind == "binary":
            y_true = [r.binary_label for r in target]
            bundle = f1_scores(y_true, model.predict(target.records), (0, 1))
        else:
            y_true = [r.multi_label for r in target]
            bundle = f1_scores(y_true, model.predict(target.records),
                               MULTI_CLASSES)
        metrics = bundle.as_dict()
    elif isinstance(model, KrrModel):
        if not args.scores:
            raise ModelError("regression evaluation needs --scores")
        scored = load_scores(args.scores).by_id()
        rows = [r for r in target if r.record_id in scored]
        if not rows:
            raise ModelError("no overlap between corpus records and scores")
        table = ingest_embeddings(args.embeddings) if args.embeddings else None
        X = krr_features(model, rows, table)
        y_true = [scored[r.record_id].norm_score for r in rows]
        metrics = regression_metrics(y_true, krr_predict(model, X)).as_dict()
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2)
    write_manifest(args.out, "evaluate", args)
    printable = {k: v for k, v in metrics.items() if not isinstance(v, dict)}
    print("evaluation on "
          f"{len(target)} records: "
          + " ".join(f"{k}={v:.4f}" for k, v in printable.items()))
    return 0


def cmd_report(args) -> int:
    corpus = ingest(args.corpus)
    result = load_scores(args.scores)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.binning == "quantile":
        binning = ClassBinning.from_quantiles([s.norm_score for s in result.scores])
    else:
        binning = ClassBinning()
    absent = {r.record_id for r in corpus if r.multi_label == 0
              or (r.multi_label is None and r.binary_label == 0)}
    extinct = {r.record_id for r in corpus if r.multi_label == -1}
    assignments = bin_scores(result.scores, binning, absent, extinct)
    save_binned(assignments, out_dir / "binned_classes.csv")
    emitted = ["binned_classes.csv"]
    if any(r.multi_label is not None for r in corpus):
        table = class_vs_score_table(corpus.records, result.scores)
        save_class_table(table, out_dir / "class_vs_score.csv")
        emitted.append("class_vs_score.csv")
        if table.monotone:
            print("class means are monotone in class order")
        else:
            print(f"monotonicity violations between classes: {table.violations}")
    species = ([s for s in args.species.split(",") if s] if args.species
               else sorted({r.species_id for r in corpus}))
    scored_ids = {s.record_id for s in result.scores}
    for sp in species:
        if not any(r.species_id == sp and r.record_id in scored_ids
                   for r in corpus):
            continue
        dist = species_distribution(corpus.records, result.scores, sp)
        save_distribution(dist, out_dir / f"species_{sp}.csv")
        emitted.append(f"species_{sp}.csv")
    write_manifest(out_dir, "report", args)
    print(f"wrote {', '.join(emitted)} to {out_dir}")
    return 0


def cmd_curve(args) -> int:
    corpus = ingest(args.corpus)
    cfg = TrainConfig(seed=args.seed, min_doc_freq=args.mdf)
    points = training_curve(corpus, args.step, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("n_train,f1_macro,best_reg\n")
        for p in points:
            fh.write(f"{p.n_train},{p.f1_macro!r},{p.best_reg!r}\n")
    write_manifest(args.out, "curve", args)
    for p in points:
        print(f"n_train={p.n_train:5d} f1_macro={p.f1_macro:.4f} "
              f"(reg {p.best_reg:g})")
    return 0


# ------------------------------------------------------------------ parser

def _add_endpoint_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--base-url", default=None,
                   help="chat-completions endpoint (default: $BWSQ_BASE_URL)")
    p.add_argument("--model", default=None,
                   help="model name (default: $BWSQ_MODEL or the annotator name)")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--max-retries", type=int, default=2)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--rpm", type=float, default=None,
                   help="client-side requests-per-minute cap")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reg", type=float, default=1e-3, help="L2 strength")
    p.add_argument("--mdf", type=int, default=1, help="min document frequency")
    p.add_argument("--balance", action="store_true",
                   help="inverse-frequency class weights")
    p.add_argument("--exclude", default="",
                   help="comma-separated tokens to drop from the vocabulary")
    p.add_argument("--lexicon", default=None,
                   help="JSON file of ngram->score auxiliary features")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bwsq",
        description="Best-worst scaling pipeline for quantity estimation "
                    "from survey texts.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ingest", help="read, validate, dedup, split a corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--split", type=float, default=None,
                   help="test fraction, e.g. 0.2")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("design", help="generate balanced comparison tuples")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--truncate", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("annotate-llm", help="collect best/worst judgments")
    p.add_argument("--design", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--store", required=True, help="judgment JSONL (appended)")
    p.add_argument("--annotator", required=True,
                   help="model name, or mock:intensity for the offline oracle")
    _add_endpoint_flags(p)
    p.set_defaults(func=cmd_annotate_llm)

    p = sub.add_parser("serve", help="run the human-annotation service")
    p.add_argument("--campaign", required=True, help="campaign JSON")
    p.add_argument("--journal", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", default=None, help="built UI directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("score", help="aggregate judgments into scores")
    p.add_argument("--design", required=True)
    p.add_argument("--judgments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--annotator", default=None,
                   help="restrict to one annotator (name or kind:name)")
    p.add_argument("--pooled", action="store_true",
                   help="pool counts across annotators")
    p.add_argument("--impute-absent-from", default=None,
                   help="corpus whose absent/extinct records get score 0")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("agreement", help="pairwise annotator agreement")
    p.add_argument("--judgments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-pair", default=None, metavar="A,B",
                   help="paired permutation test between two annotators "
                        "over their shared partners")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("train-binary", help="presence/absence classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audit", type=int, default=0, metavar="N",
                   help="print top-N features per class")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_binary)

    p = sub.add_parser("train-multi", help="7-class classifier")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_multi)

    p = sub.add_parser("train-regress", help="kernel ridge on scores")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", default=None,
                   help="JSONL embedding table (default: unigram features)")
    p.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--tune", action="store_true",
                   help="grid-search kernel/alpha/gamma on an inner fold")
    p.add_argument("--folds", type=int, default=0,
                   help="also report k-fold cross-validation metrics")
    p.add_argument("--mdf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_regress)

    p = sub.add_parser("zero-shot", help="LLM classification, no training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--annotator", required=True)
    _add_endpoint_flags(p)
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("evaluate", help="metrics for a stored model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", default=None,
                   help="score CSV (regression models)")
    p.add_argument("--embeddings", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="case-study tables and histograms")
    p.add_argument("--corpus", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--binning", choices=("equal", "quantile"), default="equal")
    p.add_argument("--species", default=None,
                   help="comma-separated species ids (default: all)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("curve", help="binary-task training curve")
    p.add_argument("--corpus", required=True)
    p.add_argument("--step", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--mdf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_curve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PIPELINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
