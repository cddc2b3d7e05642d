"""Feature extraction and the model zoo: logistic regression (binary and
one-vs-rest multiclass) on unigram features, kernel ridge regression on
continuous scores, cross-validation, training curves, and the feature
audit used to hunt spurious tokens.

The logistic loss and gradient are written out explicitly (the gradient is
verified against finite differences in the test suite); the optimizer is
scipy's L-BFGS-B. KRR is solved in the dual via a Cholesky solve.
"""

import json
import logging
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.optimize import minimize
from scipy.special import expit

from .corpus import Corpus, SurveyRecord
from .stats import MetricsBundle, f1_scores, regression_metrics

log = logging.getLogger(__name__)

REG_GRID = (1e-4, 1e-3, 1e-2, 1e-1)
KRR_ALPHA_GRID = tuple(10.0 ** e for e in range(-3, 3))
KRR_GAMMA_GRID = tuple(10.0 ** e for e in range(-3, 2))


class ModelError(Exception):
    pass


# ---------------------------------------------------------------- features

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a word character.

    Unicode-aware, so German umlauts survive; punctuation and underscores
    are dropped, morphology is kept as-is (no stemming).
    """
    return _TOKEN.findall(text.lower())


@dataclass
class Vocabulary:
    index: dict[str, int]
    min_doc_freq: int = 1

    @property
    def size(self) -> int:
        return len(self.index)

    def tokens(self) -> list[str]:
        return sorted(self.index, key=self.index.get)


def build_vocabulary(train: Corpus, min_doc_freq: int = 1,
                     exclude: tuple = ()) -> Vocabulary:
    """Tokens with document frequency >= min_doc_freq over the training
    records, indexed in (frequency desc, token asc) order."""
    if len(train) == 0:
        raise ModelError("cannot build a vocabulary from an empty corpus")
    df = Counter()
    for r in train:
        df.update(set(tokenize(r.text)))
    excluded = set(exclude)
    kept = [t for t, n in df.items() if n >= min_doc_freq and t not in excluded]
    kept.sort(key=lambda t: (-df[t], t))
    return Vocabulary({t: i for i, t in enumerate(kept)}, min_doc_freq)


@dataclass
class FeatureVector:
    weights: dict[int, float] = field(default_factory=dict)

    def dense(self, dim: int) -> np.ndarray:
        v = np.zeros(dim)
        for i, w in self.weights.items():
            v[i] = w
        return v


def featurize(r: SurveyRecord, vocab: Vocabulary) -> FeatureVector:
    """L2-normalized term-frequency vector; out-of-vocabulary tokens drop."""
    counts = Counter(t for t in tokenize(r.text) if t in vocab.index)
    if not counts:
        return FeatureVector()
    norm = np.sqrt(sum(c * c for c in counts.values()))
    return FeatureVector({vocab.index[t]: c / norm for t, c in counts.items()})


def _lexicon_feature(tokens: list[str], lexicon: dict[str, float]) -> float:
    # mean score of lexicon n-grams occurring in the token sequence
    total = hits = 0.0
    for ngram, score in lexicon.items():
        parts = ngram.split()
        span = len(parts)
        for i in range(len(tokens) - span + 1):
            if tokens[i:i + span] == parts:
                total += score
                hits += 1
    return total / hits if hits else 0.0


def feature_matrix(records, vocab: Vocabulary,
                   lexicon: dict[str, float] | None = None) -> np.ndarray:
    """Dense feature rows; with a lexicon, one extra trailing column holds
    the mean scaled-quantifier score of each text (0 when none matches)."""
    records = list(records)
    extra = 1 if lexicon else 0
    X = np.zeros((len(records), vocab.size + extra))
    for row, r in enumerate(records):
        for i, w in featurize(r, vocab).weights.items():
            X[row, i] = w
        if lexicon:
            X[row, -1] = _lexicon_feature(tokenize(r.text), lexicon)
    return X


# ---------------------------------------------------------------- logistic

@dataclass
class TrainConfig:
    reg_strength: float = 1e-3   # lambda of the L2 penalty (mean-loss scale)
    max_iter: int = 500
    tol: float = 1e-6            # gradient 2-norm at the solution
    seed: int = 0
    min_doc_freq: int = 1
    balance_classes: bool = False
    exclude_tokens: tuple = ()
    lexicon: dict | None = None


def binary_nll_and_grad(params, X, y, lam, sample_weight=None):
    """Mean logistic NLL plus 0.5*lam*||w||^2 (bias unpenalized) and its
    analytic gradient. params is the stacked vector [w..., b]."""
    w, b = params[:-1], params[-1]
    z = X @ w + b
    ce = np.logaddexp(0.0, z) - y * z
    n = len(y)
    if sample_weight is None:
        loss = ce.mean()
        resid = (expit(z) - y) / n
    else:
        loss = (sample_weight * ce).sum() / n
        resid = sample_weight * (expit(z) - y) / n
    loss += 0.5 * lam * (w @ w)
    grad = np.append(X.T @ resid + lam * w, resid.sum())
    return loss, grad


def _fit_logistic(X, y, cfg: TrainConfig, sample_weight=None):
    x0 = np.zeros(X.shape[1] + 1)
    res = minimize(binary_nll_and_grad, x0, args=(X, y, cfg.reg_strength, sample_weight),
                   method="L-BFGS-B", jac=True,
                   options={"maxiter": cfg.max_iter, "gtol": cfg.tol * 1e-2,
                            "ftol": 1e-15})
    _, grad = binary_nll_and_grad(res.x, X, y, cfg.reg_strength, sample_weight)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm >= cfg.tol:
        log.warning("logistic fit stopped at gradient norm %.3g (tol %.3g)",
                    grad_norm, cfg.tol)
    return res.x[:-1], float(res.x[-1]), grad_norm


def _balanced_weights(y: np.ndarray) -> np.ndarray:
    # inverse-frequency, scaled so the weights sum to n
    n = len(y)
    pos = y.sum()
    if pos == 0 or pos == n:
        return np.ones(n)
    w = np.where(y == 1, n / (2.0 * pos), n / (2.0 * (n - pos)))
    return w


@dataclass
class LinearModel:
    kind: str                 # "binary" | "multiclass"
    classes: tuple            # class labels, aligned with weight rows
    weights: np.ndarray       # (n_classes_or_1, n_features)
    bias: np.ndarray          # (n_classes_or_1,)
    vocab: Vocabulary
    config: TrainConfig
    grad_norm: float = 0.0

    def decision_scores(self, records) -> np.ndarray:
        X = feature_matrix(records, self.vocab, self.config.lexicon)
        return X @ self.weights.T + self.bias

    def predict(self, records) -> list:
        scores = self.decision_scores(records)
        if self.kind == "binary":
            return [self.classes[1] if s >= 0 else self.classes[0]
                    for s in scores[:, 0]]
        return [self.classes[i] for i in scores.argmax(axis=1)]


def _binary_targets(records, label_of, what: str) -> np.ndarray:
    missing = [r.record_id for r in records if label_of(r) is None]
    if missing:
        raise ModelError(f"{len(missing)} record(s) lack a {what} "
                         f"(first: {missing[0]})")
    return np.array([label_of(r) for r in records], dtype=float)


def train_binary(train: Corpus, cfg: TrainConfig) -> LinearModel:
    """L2-regularized logistic regression on presence/absence labels."""
    records = list(train)
    y = _binary_targets(records, lambda r: r.binary_label, "binary_label")
    if len(set(y)) < 2:
        raise ModelError("training set holds a single class")
    vocab = build_vocabulary(train, cfg.min_doc_freq, cfg.exclude_tokens)
    X = feature_matrix(records, vocab, cfg.lexicon)
    sw = _balanced_weights(y) if cfg.balance_classes else None
    w, b, grad_norm = _fit_logistic(X, y, cfg, sw)
    return LinearModel("binary", (0, 1), w[None, :], np.array([b]),
                       vocab, cfg, grad_norm)


def train_multiclass(train: Corpus, cfg: TrainConfig) -> LinearModel:
    """One-vs-rest logistic regression over the classes present in train;
    prediction is the argmax class score."""
    records = list(train)
    y = _binary_targets(records, lambda r: r.multi_label, "multi_label")
    classes = tuple(sorted(set(int(v) for v in y)))
    if len(classes) < 2:
        raise ModelError("training set holds a single class")
    vocab = build_vocabulary(train, cfg.min_doc_freq, cfg.exclude_tokens)
    X = feature_matrix(records, vocab, cfg.lexicon)
    rows, biases, worst_grad = [], [], 0.0
    for c in classes:
        yc = (y == c).astype(float)
        sw = _balanced_weights(yc) if cfg.balance_classes else None
        w, b, grad_norm = _fit_logistic(X, yc, cfg, sw)
        rows.append(w)
        biases.append(b)
        worst_grad = max(worst_grad, grad_norm)
    return LinearModel("multiclass", classes, np.vstack(rows),
                       np.array(biases), vocab, cfg, worst_grad)


def audit_features(m: LinearModel, top_n: int) -> dict:
    """Top-|weight| tokens per class, signed, for spuriousness annotation.

    Returns {class: [(token, weight), ...]} ranked by absolute weight. The
    trailing lexicon column, when present, reports as "<lexicon>".
    """
    names = m.vocab.tokens()
    if m.config.lexicon:
        names = names + ["<lexicon>"]
    if top_n > len(names):
        log.warning("top_n %d exceeds feature count %d, truncating",
                    top_n, len(names))
        top_n = len(names)
    out = {}
    class_rows = [(m.classes[1], 0)] if m.kind == "binary" else \
        [(c, i) for i, c in enumerate(m.classes)]
    for cls, i in class_rows:
        order = np.argsort(-np.abs(m.weights[i]))[:top_n]
        out[cls] = [(names[j], float(m.weights[i][j])) for j in order]
    return out


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class CurvePoint:
    n_train: int
    f1_macro: float
    best_reg: float


def _shuffled(records, tag: str, seed: int) -> list:
    order = list(records)
    random.Random(f"{tag}/{seed}").shuffle(order)
    return order


def fit_binary_with_search(records, cfg: TrainConfig):
    """Fit on `records` with reg strength picked on an inner 80/20 split.

    Mirrors the protocol of the training curve: 20% of the given records
    (seeded shuffle) become the validation fold for the grid search, then
    the winning strength is refit on everything.
    """
    order = _shuffled(records, "curve-inner", cfg.seed)
    n_val = max(1, round(0.2 * len(order)))
    val, inner = order[:n_val], order[n_val:]
    if len(inner) < 2:
        raise ModelError(f"too few records ({len(records)}) for an inner split")
    y_val = [r.binary_label for r in val]
    best_reg, best_f1 = None, -1.0
    for lam in REG_GRID:
        trial_cfg = replace_config(cfg, reg_strength=lam)
        try:
            model = train_binary(Corpus(list(inner)), trial_cfg)
        except ModelError:
            continue  # inner fold may have collapsed to one class
        f1 = f1_scores(y_val, model.predict(val), (0, 1)).f1_macro
        if f1 > best_f1:
            best_reg, best_f1 = lam, f1
    if best_reg is None:
        raise ModelError("no usable inner training fold at any reg strength")
    final = train_binary(Corpus(list(records)),
                         replace_config(cfg, reg_strength=best_reg))
    return final, best_reg


def replace_config(cfg: TrainConfig, **kw) -> TrainConfig:
    merged = {**asdict_shallow(cfg), **kw}
    return TrainConfig(**merged)


def asdict_shallow(cfg) -> dict:
    # dataclasses.asdict deep-copies; the lexicon dict can stay shared
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def training_curve(corpus: Corpus, step: int, cfg: TrainConfig) -> list[CurvePoint]:
    """Binary-task learning curve on cumulative training increments.

    Uses the corpus's stored train/test split (splitting 80/20 under
    cfg.seed when absent); every increment is evaluated on the same test
    records with F1 macro over {0, 1}.
    """
    if step < 1:
        raise ModelError(f"step must be >= 1, got {step}")
    test = corpus.subset("test")
    pool = corpus.subset("train")
    if len(test) == 0 or len(pool) == 0:
        from .corpus import split as corpus_split
        labeled = corpus_split(corpus, 0.2, cfg.seed)
        test, pool = labeled.subset("test"), labeled.subset("train")
        log.info("no stored split, created one: %d train / %d test",
                 len(pool), len(test))
    if step > len(pool):
        raise ModelError(f"step {step} exceeds training pool size {len(pool)}")
    order = _shuffled(pool.records, "curve", cfg.seed)
    y_test = [r.binary_label for r in test]
    sizes = list(range(step, len(order) + 1, step))
    if sizes[-1] != len(order):
        sizes.append(len(order))
    points = []
    for n in sizes:
        model, best_reg = fit_binary_with_search(order[:n], cfg)
        f1 = f1_scores(y_test, model.predict(test.records), (0, 1)).f1_macro
        points.append(CurvePoint(n, f1, best_reg))
        log.info("curve: n_train=%d reg=%g f1_macro=%.4f", n, best_reg, f1)
    return points


# ---------------------------------------------------------------- KRR

@dataclass
class KrrConfig:
    kernel: str = "rbf"          # "linear" | "rbf"
    alpha: float = 1.0
    gamma: float | None = None   # rbf width; None -> 1 / n_features
    tune: bool = False
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class KrrModel:
    kernel: str
    alpha: float
    gamma: float | None
    dual_coef: np.ndarray
    x_train: np.ndarray
    vocab: Vocabulary | None = None  # set when features are unigrams


def kernel_matrix(kind: str, gamma: float | None, A: np.ndarray,
                  B: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    if kind == "rbf":
        g = 1.0 / A.shape[1] if gamma is None else gamma
        sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
              - 2.0 * (A @ B.T))
        return np.exp(-g * np.clip(sq, 0.0, None))
    raise ModelError(f"unknown kernel {kind!r}")


def _solve_krr(X: np.ndarray, y: np.ndarray, kernel: str, alpha: float,
               gamma: float | None) -> KrrModel:
    n = X.shape[0]
    K = kernel_matrix(kernel, gamma, X, X)
    # with alpha > 0 the system is positive definite by construction; at
    # alpha = 0 roundoff can sneak a singular K past the factorization
    if alpha == 0.0 and np.linalg.matrix_rank(K, hermitian=True) < n:
        raise ModelError(
            "singular kernel system at alpha=0 (duplicate or linearly "
            "dependent training points); use alpha > 0")
    try:
        c = scipy.linalg.solve(K + alpha * np.eye(n), y, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise ModelError(
            f"singular kernel system (alpha={alpha}); use alpha > 0") from exc
    return KrrModel(kernel, alpha, gamma, c, X.copy())


def krr_predict(m: KrrModel, X: np.ndarray) -> np.ndarray:
    return kernel_matrix(m.kernel, m.gamma, np.asarray(X, dtype=float),
                         m.x_train) @ m.dual_coef


def krr_features(m: KrrModel, records, embeddings: "EmbeddingTable | None" = None
                 ) -> np.ndarray:
    """Rebuild the feature rows a stored KRR model was trained on."""
    records = list(records)
    if m.vocab is not None:
        return feature_matrix(records, m.vocab)
    if embeddings is None:
        raise ModelError("model was trained on embeddings; pass the table")
    return embedding_matrix(embeddings, [r.record_id for r in records])


def train_krr(X, y, cfg: KrrConfig) -> KrrModel:
    """Kernel ridge in the dual: solve (K + alpha*I)c = y.

    With cfg.tune, kernel, alpha, and gamma are picked by MAE on one inner
    validation fold, then the winner is refit on all points.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ModelError(f"X/y size mismatch: {X.shape[0]} vs {y.shape[0]}")
    if X.shape[0] < 2:
        raise ModelError("need at least 2 training points")
    if cfg.alpha < 0:
        raise ModelError(f"alpha must be >= 0, got {cfg.alpha}")
    if not cfg.tune:
        return _solve_krr(X, y, cfg.kernel, cfg.alpha, cfg.gamma)

    idx = list(range(X.shape[0]))
    random.Random(f"krr-tune/{cfg.seed}").shuffle(idx)
    n_val = max(1, round(cfg.val_fraction * len(idx)))
    val, fit = idx[:n_val], idx[n_val:]
    if len(fit) < 2:
        raise ModelError("too few points to tune on an inner fold")
    candidates = [("linear", a, None) for a in KRR_ALPHA_GRID]
    candidates += [("rbf", a, g) for a in KRR_ALPHA_GRID for g in KRR_GAMMA_GRID]
    best, best_mae = None, np.inf
    for kernel, alpha, gamma in candidates:
        try:
            m = _solve_krr(X[fit], y[fit], kernel, alpha, gamma)
        except ModelError:
            continue
        mae = float(np.mean(np.abs(krr_predict(m, X[val]) - y[val])))
        if mae < best_mae:
            best, best_mae = (kernel, alpha, gamma), mae
    if best is None:
        raise ModelError("no tunable KRR candidate solved")
    log.info("krr tune: kernel=%s alpha=%g gamma=%s (val MAE %.4f)",
             best[0], best[1], best[2], best_mae)
    return _solve_krr(X, y, *best)


# ---------------------------------------------------------------- crossval

@dataclass
class CrossvalReport:
    per_fold: list[MetricsBundle]
    mean: MetricsBundle


def _mean_bundle(bundles: list[MetricsBundle]) -> MetricsBundle:
    out = MetricsBundle()
    for name in ("f1_micro", "f1_macro", "mae", "r2", "spearman"):
        vals = [getattr(b, name) for b in bundles if getattr(b, name) is not None]
        if vals:
            setattr(out, name, sum(vals) / len(vals))
    per_class = [b.per_class_f1 for b in bundles if b.per_class_f1 is not None]
    if per_class:
        keys = sorted({c for d in per_class for c in d})
        out.per_class_f1 = {c: sum(d.get(c, 0.0) for d in per_class) / len(per_class)
                            for c in keys}
    return out


def crossval(X, y, folds: int, trainer, seed: int = 0,
             task: str = "regression", classes=None) -> CrossvalReport:
    """Deterministic k-fold CV. `trainer(X_train, y_train)` returns a
    predict callable; metrics are regression or F1 depending on task."""
    X = np.asarray(X)
    y = np.asarray(y)
    n = X.shape[0]
    if folds < 2:
        raise ModelError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise ModelError(f"folds {folds} exceeds data size {n}")
    idx = list(range(n))
    random.Random(f"cv/{seed}").shuffle(idx)
    parts = np.array_split(np.array(idx), folds)
    per_fold = []
    for test_idx in parts:
        held_out = set(test_idx.tolist())
        train_idx = np.array([j for j in idx if j not in held_out])
        predict = trainer(X[train_idx], y[train_idx])
        y_hat = predict(X[test_idx])
        if task == "regression":
            per_fold.append(regression_metrics(y[test_idx], y_hat))
        else:
            cs = classes if classes is not None else sorted(set(y.tolist()))
            per_fold.append(f1_scores(list(y[test_idx]), list(y_hat), cs))
    return CrossvalReport(per_fold, _mean_bundle(per_fold))


# ---------------------------------------------------------------- embeddings

@dataclass
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int
    source: str = ""


def ingest_embeddings(path: str | Path, known_ids=None) -> EmbeddingTable:
    """JSONL rows {record_id, vector: [...]}; all vectors one dimension."""
    path = Path(path)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for row, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            rid = obj["record_id"]
            vec = np.asarray(obj["vector"], dtype=float)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ModelError(f"row {row} ({rid}): dimension {vec.shape[0]} "
                                 f"!= {dim}")
            if rid in vectors:
                raise ModelError(f"row {row}: duplicate record_id {rid!r}")
            vectors[rid] = vec
    if not vectors:
        raise ModelError(f"no embeddings in {path}")
    if known_ids is not None:
        unknown = sorted(set(vectors) - set(known_ids))
        if unknown:
            log.warning("%d embedding row(s) reference unknown records "
                        "(first: %s)", len(unknown), unknown[0])
    return EmbeddingTable(vectors, dim, source=str(path))


def embedding_matrix(table: EmbeddingTable, record_ids) -> np.ndarray:
    missing = [rid for rid in record_ids if rid not in table.vectors]
    if missing:
        raise ModelError(f"{len(missing)} record(s) lack embeddings "
                         f"(first: {missing[0]})")
    return np.vstack([table.vectors[rid] for rid in record_ids])


# ---------------------------------------------------------------- persistence

def save_model(model, path: str | Path) -> None:
    """JSON container with config embedded; covers both model families."""
    if isinstance(model, LinearModel):
        payload = {
            "format": "bwsq-model", "version": 1, "family": "linear",
            "kind": model.kind, "classes": list(model.classes),
            "weights": model.weights.tolist(), "bias": model.bias.tolist(),
            "vocab": {"tokens": model.vocab.tokens(),
                      "min_doc_freq": model.vocab.min_doc_freq},
            "config": asdict_shallow(model.config),
            "grad_norm": model.grad_norm,
        }
        payload["config"]["exclude_tokens"] = list(payload["config"]["exclude_tokens"])
    elif isinstance(model, KrrModel):
        payload = {
            "format": "bwsq-model", "version": 1, "family": "krr",
            "kernel": model.kernel, "alpha": model.alpha, "gamma": model.gamma,
            "dual_coef": model.dual_coef.tolist(),
            "x_train": model.x_train.tolist(),
            "vocab": (None if model.vocab is None else
                      {"tokens": model.vocab.tokens(),
                       "min_doc_freq": model.vocab.min_doc_freq}),
        }
    else:
        raise ModelError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False)


def load_model(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "bwsq-model":
        raise ModelError(f"{path} is not a model file")
    if payload["family"] == "linear":
        cfg_kw = dict(payload["config"])
        cfg_kw["exclude_tokens"] = tuple(cfg_kw.get("exclude_tokens", ()))
        vocab = Vocabulary({t: i for i, t in enumerate(payload["vocab"]["tokens"])},
                           payload["vocab"]["min_doc_freq"])
        return LinearModel(payload["kind"], tuple(payload["classes"]),
                           np.asarray(payload["weights"], dtype=float),
                           np.asarray(payload["bias"], dtype=float),
                           vocab, TrainConfig(**cfg_kw), payload.get("grad_norm", 0.0))
    if payload["family"] == "krr":
        vocab = None
        if payload.get("vocab"):
            vocab = Vocabulary({t: i for i, t in enumerate(payload["vocab"]["tokens"])},
                               payload["vocab"]["min_doc_freq"])
        return KrrModel(payload["kernel"], payload["alpha"], payload["gamma"],
                        np.asarray(payload["dual_coef"], dtype=float),
                        np.asarray(payload["x_train"], dtype=float), vocab)
    raise ModelError(f"unknown model family {payload['family']!r}")
