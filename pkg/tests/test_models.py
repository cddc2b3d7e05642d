import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bwsq.corpus import Corpus
from bwsq.models import (KRR_ALPHA_GRID, KRR_GAMMA_GRID, REG_GRID,
                         EmbeddingTable, KrrConfig, ModelError, TrainConfig,
                         audit_features, binary_nll_and_grad, build_vocabulary,
                         crossval, embedding_matrix, feature_matrix,
                         featurize, fit_binary_with_search, ingest_embeddings,
                         kernel_matrix, krr_predict, load_model, save_model,
                         tokenize, train_binary, train_krr, train_multiclass,
                         training_curve)
from bwsq.synthetic import make_multiclass_corpus, make_quantifier_corpus

from helpers import corpus, record


# ------------------------------------------------------------- features

def test_tokenize_lowercases_and_splits():
    assert tokenize("Über-Fluss_teich, 42 Gänse!") == \
        ["über", "fluss", "teich", "42", "gänse"]


def test_vocabulary_ordered_by_df_then_token():
    c = Corpus([record(0, text="adler adler biber"),
                record(1, text="biber adler"),
                record(2, text="citrone biber")])
    vocab = build_vocabulary(c)
    # df: adler 2, biber 3, citrone 1 -> biber, adler, citrone
    assert vocab.tokens() == ["biber", "adler", "citrone"]
    assert build_vocabulary(c, min_doc_freq=2).tokens() == ["biber", "adler"]
    assert build_vocabulary(c, exclude=("biber",)).tokens() == ["adler", "citrone"]


def test_vocabulary_empty_corpus_rejected():
    with pytest.raises(ModelError):
        build_vocabulary(Corpus([]))


def test_featurize_is_l2_normalized():
    c = Corpus([record(0, text="a b b c")])
    vocab = build_vocabulary(c)
    vec = featurize(c.records[0], vocab).dense(vocab.size)
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-12
    unseen = record(9, text="zzz qqq")
    assert featurize(unseen, vocab).weights == {}


def test_feature_matrix_lexicon_column():
    c = Corpus([record(0, text="sehr viele tiere"), record(1, text="keine tiere")])
    vocab = build_vocabulary(c)
    lexicon = {"sehr viele": 0.9, "keine": 0.1}
    X = feature_matrix(c.records, vocab, lexicon)
    assert X.shape == (2, vocab.size + 1)
    assert X[0, -1] == 0.9 and X[1, -1] == 0.1
    none_match = feature_matrix([record(2, text="tiere hier")], vocab, lexicon)
    assert none_match[0, -1] == 0.0


# ------------------------------------------------------------- logistic

def numeric_grad(params, X, y, lam, sw=None, eps=1e-6):
    g = np.zeros_like(params)
    for i in range(len(params)):
        up, down = params.copy(), params.copy()
        up[i] += eps
        down[i] -= eps
        g[i] = (binary_nll_and_grad(up, X, y, lam, sw)[0]
                - binary_nll_and_grad(down, X, y, lam, sw)[0]) / (2 * eps)
    return g


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 500))
def test_logistic_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, d = 13, 4
    X = rng.normal(size=(n, d))
    y = (rng.random(n) < 0.5).astype(float)
    params = rng.normal(size=d + 1)
    sw = rng.uniform(0.5, 2.0, size=n) if seed % 2 else None
    _, analytic = binary_nll_and_grad(params, X, y, 0.3, sw)
    numeric = numeric_grad(params, X, y, 0.3, sw)
    assert np.allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


def test_loss_at_zero_is_log_two():
    X = np.array([[1.0], [2.0]])
    y = np.array([0.0, 1.0])
    loss, _ = binary_nll_and_grad(np.zeros(2), X, y, 0.0)
    assert abs(loss - np.log(2)) < 1e-12


def test_train_binary_learns_separable_corpus():
    c = make_quantifier_corpus(200, seed=4)
    model = train_binary(c, TrainConfig())
    preds = model.predict(c.records)
    truth = [r.binary_label for r in c]
    assert np.mean([p == t for p, t in zip(preds, truth)]) >= 0.99
    assert model.grad_norm < 1e-6


def test_train_binary_guards():
    with pytest.raises(ModelError, match="single class"):
        train_binary(corpus(6, binary=1), TrainConfig())
    with pytest.raises(ModelError, match="binary_label"):
        train_binary(corpus(6), TrainConfig())


def test_balanced_weights_lift_minority_class():
    recs = [record(i, text=f"tier {'gut' if i % 10 == 0 else 'egal'} nr{i}",
                   binary=1 if i % 10 == 0 else 0) for i in range(100)]
    c = Corpus(recs)
    plain = train_binary(c, TrainConfig(reg_strength=0.05))
    balanced = train_binary(c, TrainConfig(reg_strength=0.05, balance_classes=True))
    y = [r.binary_label for r in recs]
    recall = lambda m: sum(p == t == 1 for p, t in zip(m.predict(recs), y)) / 10
    assert recall(balanced) >= recall(plain)
    assert recall(balanced) == 1.0


def test_train_multiclass_recovers_cue_classes():
    c = make_multiclass_corpus(250, seed=6)
    model = train_multiclass(c, TrainConfig())
    assert model.classes == (1, 2, 3, 4, 5)
    preds = model.predict(c.records)
    truth = [r.multi_label for r in c]
    assert np.mean([p == t for p, t in zip(preds, truth)]) >= 0.95


def test_audit_features_ranks_by_magnitude(caplog):
    c = make_quantifier_corpus(120, seed=1)
    model = train_binary(c, TrainConfig())
    audit = audit_features(model, 5)
    assert set(audit) == {1}
    weights = [abs(w) for _, w in audit[1]]
    assert weights == sorted(weights, reverse=True)
    with caplog.at_level(logging.WARNING):
        full = audit_features(model, 10 ** 6)
    assert len(full[1]) == model.vocab.size
    assert any("truncating" in m for m in caplog.messages)


def test_audit_features_reports_lexicon_column():
    c = Corpus([record(0, text="viel hier", binary=1),
                record(1, text="kein tier", binary=0),
                record(2, text="viel los", binary=1),
                record(3, text="kein glück", binary=0)])
    cfg = TrainConfig(lexicon={"viel": 1.0, "kein": 0.0})
    model = train_binary(c, cfg)
    names = [t for t, _ in audit_features(model, 100)[1]]
    assert "<lexicon>" in names


def test_linear_model_round_trip(tmp_path):
    c = make_quantifier_corpus(80, seed=2)
    model = train_binary(c, TrainConfig(exclude_tokens=("im",)))
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert back.kind == "binary" and back.classes == (0, 1)
    assert back.config.exclude_tokens == ("im",)
    assert back.predict(c.records) == model.predict(c.records)


# ---------------------------------------------------------------- curve

def test_fit_binary_with_search_picks_from_grid():
    c = make_quantifier_corpus(100, seed=3)
    model, best = fit_binary_with_search(c.records, TrainConfig())
    assert best in REG_GRID
    assert model.config.reg_strength == best


def test_training_curve_shape_and_final_point():
    c = make_quantifier_corpus(50, seed=7)
    points = training_curve(c, 10, TrainConfig())
    # auto-split leaves 40 in the pool
    assert [p.n_train for p in points] == [10, 20, 30, 40]
    assert all(0.0 <= p.f1_macro <= 1.0 for p in points)
    assert all(p.best_reg in REG_GRID for p in points)


def test_training_curve_appends_remainder():
    c = make_quantifier_corpus(45, seed=7)  # pool 36: 15, 30, then 36
    points = training_curve(c, 15, TrainConfig())
    assert [p.n_train for p in points] == [15, 30, 36]


def test_training_curve_guards():
    c = make_quantifier_corpus(20, seed=0)
    with pytest.raises(ModelError, match="step"):
        training_curve(c, 0, TrainConfig())
    with pytest.raises(ModelError, match="exceeds"):
        training_curve(c, 500, TrainConfig())


# ------------------------------------------------------------------ KRR

def primal_ridge_predict(X_train, y_train, X_test, alpha):
    # reference route: regularized normal equations in the primal
    d = X_train.shape[1]
    w = np.linalg.solve(X_train.T @ X_train + alpha * np.eye(d),
                        X_train.T @ y_train)
    return X_test @ w


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 300))
def test_linear_krr_matches_primal_solution(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 5))
    y = rng.normal(size=20)
    alpha = float(rng.choice([0.01, 0.1, 1.0]))
    model = train_krr(X, y, KrrConfig(kernel="linear", alpha=alpha))
    X_test = rng.normal(size=(7, 5))
    dual = krr_predict(model, X_test)
    primal = primal_ridge_predict(X, y, X_test, alpha)
    assert np.allclose(dual, primal, atol=1e-8)


def test_rbf_krr_near_interpolates_at_tiny_alpha():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    model = train_krr(X, y, KrrConfig(kernel="rbf", alpha=1e-8, gamma=0.5))
    assert np.max(np.abs(krr_predict(model, X) - y)) < 1e-4


def test_rbf_gamma_defaults_to_inverse_dim():
    A = np.array([[0.0, 0.0, 0.0, 0.0]])
    B = np.array([[1.0, 1.0, 1.0, 1.0]])
    K = kernel_matrix("rbf", None, A, B)
    assert abs(K[0, 0] - np.exp(-1.0)) < 1e-12  # g = 1/4, dist^2 = 4


def test_krr_guards():
    X = np.ones((4, 2))
    y = np.ones(4)
    with pytest.raises(ModelError, match="alpha"):
        train_krr(X, y, KrrConfig(kernel="linear", alpha=0.0))  # duplicate rows
    with pytest.raises(ModelError, match=">= 0"):
        train_krr(X, y, KrrConfig(alpha=-1.0))
    with pytest.raises(ModelError, match="mismatch"):
        train_krr(X, np.ones(3), KrrConfig())
    with pytest.raises(ModelError, match="kernel"):
        kernel_matrix("poly", None, X, X)


def test_krr_tune_selects_from_grids():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 4))
    y = X[:, 0] * 2.0 + 0.01 * rng.normal(size=60)
    model = train_krr(X, y, KrrConfig(tune=True, seed=2))
    assert model.alpha in KRR_ALPHA_GRID
    assert model.kernel in ("linear", "rbf")
    if model.kernel == "rbf":
        assert model.gamma in KRR_GAMMA_GRID
    mae = float(np.mean(np.abs(krr_predict(model, X) - y)))
    assert mae < 0.1


def test_krr_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    X = rng.normal(size=(15, 3))
    y = rng.normal(size=15)
    model = train_krr(X, y, KrrConfig(kernel="rbf", alpha=0.1, gamma=1.0))
    save_model(model, tmp_path / "krr.json")
    back = load_model(tmp_path / "krr.json")
    assert back.vocab is None
    assert np.allclose(krr_predict(back, X), krr_predict(model, X), atol=1e-12)


def test_load_model_rejects_foreign_json(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"hello": 1}', encoding="utf-8")
    with pytest.raises(ModelError, match="not a model file"):
        load_model(path)


# ------------------------------------------------------------- crossval

def test_crossval_regression_folds_and_mean():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 3))
    y = X @ np.array([1.0, -2.0, 0.5])

    def trainer(X_tr, y_tr):
        m = train_krr(X_tr, y_tr, KrrConfig(kernel="linear", alpha=1e-6))
        return lambda X_te: krr_predict(m, X_te)

    report = crossval(X, y, 4, trainer, seed=1)
    assert len(report.per_fold) == 4
    maes = [b.mae for b in report.per_fold]
    assert abs(report.mean.mae - sum(maes) / 4) < 1e-12
    assert report.mean.mae < 1e-6


def test_crossval_classification_task():
    X = np.vstack([np.zeros((10, 2)), np.ones((10, 2))])
    y = np.array([0] * 10 + [1] * 10)

    def trainer(X_tr, y_tr):
        return lambda X_te: (X_te[:, 0] > 0.5).astype(int)

    report = crossval(X, y, 5, trainer, task="classification", classes=(0, 1))
    # predictions are perfect; folds missing one class still score macro 0.5
    assert report.mean.f1_micro == 1.0
    assert all(b.f1_micro == 1.0 for b in report.per_fold)


def test_crossval_guards():
    X = np.ones((4, 1))
    y = np.ones(4)
    trainer = lambda a, b: (lambda t: np.zeros(len(t)))
    with pytest.raises(ModelError):
        crossval(X, y, 1, trainer)
    with pytest.raises(ModelError):
        crossval(X, y, 9, trainer)


# ----------------------------------------------------------- embeddings

def test_ingest_embeddings_happy_path(tmp_path, caplog):
    path = tmp_path / "e.jsonl"
    path.write_text('{"record_id": "a", "vector": [1.0, 2.0]}\n'
                    '{"record_id": "b", "vector": [3.0, 4.0]}\n',
                    encoding="utf-8")
    with caplog.at_level(logging.WARNING):
        table = ingest_embeddings(path, known_ids={"a"})
    assert table.dim == 2
    assert any("unknown records" in m for m in caplog.messages)
    X = embedding_matrix(table, ["b", "a"])
    assert X.tolist() == [[3.0, 4.0], [1.0, 2.0]]


def test_ingest_embeddings_rejects_ragged_and_duplicate(tmp_path):
    ragged = tmp_path / "ragged.jsonl"
    ragged.write_text('{"record_id": "a", "vector": [1.0]}\n'
                      '{"record_id": "b", "vector": [1.0, 2.0]}\n',
                      encoding="utf-8")
    with pytest.raises(ModelError, match="dimension"):
        ingest_embeddings(ragged)
    dup = tmp_path / "dup.jsonl"
    dup.write_text('{"record_id": "a", "vector": [1.0]}\n'
                   '{"record_id": "a", "vector": [2.0]}\n', encoding="utf-8")
    with pytest.raises(ModelError, match="duplicate"):
        ingest_embeddings(dup)


def test_embedding_matrix_missing_id():
    table = EmbeddingTable({"a": np.array([1.0])}, 1)
    with pytest.raises(ModelError, match="lack embeddings"):
        embedding_matrix(table, ["a", "zz"])
