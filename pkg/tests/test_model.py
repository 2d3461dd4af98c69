import json

import numpy as np
import pytest

import cssnmf.model
from cssnmf.linalg import ConvergenceError
from cssnmf.model import (
    EPS_H,
    Factorization,
    FitConfig,
    NumericFailure,
    fit,
    load_model,
    normalize,
    objective,
    predict,
    save_model,
    update_h,
    update_theta,
    update_w,
)
from cssnmf.synthetic import SyntheticConfig, generate
from conftest import brute_force_nnls


def random_factorization(rng, n, m, r):
    W = rng.uniform(0.0, 2.0, size=(n, r))
    H = np.maximum(rng.uniform(0.0, 2.0, size=(r, m)), EPS_H)
    theta = rng.uniform(-1.0, 1.0, size=r + 1)
    return Factorization(W=W, H=H, theta=theta)


# ---------------------------------------------------------------- objective

def test_objective_zero_at_exact_fit():
    rng = np.random.default_rng(0)
    fac = random_factorization(rng, 5, 4, 2)
    X = fac.W @ fac.H
    Y = fac.theta[0] + fac.W @ fac.theta[1:]
    F, N, R = objective(fac, X, Y, 3.0)
    assert F <= 1e-20 and N <= 1e-20 and R <= 1e-20


def test_objective_lambda_zero_ignores_regression():
    rng = np.random.default_rng(1)
    fac = random_factorization(rng, 5, 4, 2)
    X = rng.uniform(size=(5, 4))
    Y = rng.normal(size=5)
    F, N, R = objective(fac, X, Y, 0.0)
    assert F == N
    assert R > 0


def test_objective_matches_naive_summation():
    # Recompute both error terms with explicit double loops.
    rng = np.random.default_rng(2)
    n, m, r = 6, 5, 2
    fac = random_factorization(rng, n, m, r)
    X = rng.uniform(size=(n, m))
    Y = rng.normal(size=n)
    lam = 0.7
    N_ref = 0.0
    for i in range(n):
        for j in range(m):
            diff = X[i, j] - sum(fac.W[i, k] * fac.H[k, j] for k in range(r))
            N_ref += diff * diff
    R_ref = 0.0
    for i in range(n):
        pred = fac.theta[0] + sum(fac.W[i, k] * fac.theta[k + 1] for k in range(r))
        R_ref += (pred - Y[i]) ** 2
    F, N, R = objective(fac, X, Y, lam)
    assert abs(N - N_ref) <= 1e-9 * (1 + N_ref)
    assert abs(R - R_ref) <= 1e-9 * (1 + R_ref)
    assert abs(F - (N_ref + lam * R_ref)) <= 1e-9 * (1 + F)


def test_objective_shape_mismatch():
    fac = Factorization(W=np.ones((3, 2)), H=np.ones((2, 4)), theta=np.zeros(3))
    with pytest.raises(ValueError):
        objective(fac, np.ones((3, 5)), np.ones(3), 1.0)


# ------------------------------------------------------------- update_theta

def test_update_theta_exact_interpolation():
    theta = update_theta(np.array([[1.0], [2.0]]), np.array([3.0, 5.0]))
    assert np.allclose(theta, [1.0, 2.0], atol=1e-10)


def test_update_theta_zero_matrix_gives_intercept_only():
    Y = np.array([1.0, 2.0, 6.0])
    theta = update_theta(np.zeros((3, 2)), Y)
    assert abs(theta[0] - Y.mean()) <= 1e-12
    assert np.allclose(theta[1:], 0.0, atol=1e-12)


def test_update_theta_local_optimality():
    # No unit-scaled perturbation of the minimizer may do better.
    rng = np.random.default_rng(3)
    W = rng.uniform(size=(8, 3))
    Y = rng.normal(size=8)
    Wbar = np.hstack([np.ones((8, 1)), W])
    theta = update_theta(W, Y)
    base = np.sum((Wbar @ theta - Y) ** 2)
    for _ in range(100):
        delta = rng.normal(size=4)
        delta *= 1e-3 / np.linalg.norm(delta)
        perturbed = np.sum((Wbar @ (theta + delta) - Y) ** 2)
        assert base <= perturbed + 1e-15


def test_update_theta_normal_equation_residual():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n = int(rng.integers(2, 12))
        r = int(rng.integers(1, 5))
        W = rng.uniform(size=(n, r))
        Y = rng.normal(size=n)
        theta = update_theta(W, Y)
        Wbar = np.hstack([np.ones((n, 1)), W])
        residual = np.max(np.abs(Wbar.T @ (Wbar @ theta - Y)))
        assert residual <= 1e-8 * (1 + np.max(np.abs(Wbar.T @ Y)))


# ----------------------------------------------------------------- update_h

def test_update_h_identity_dictionary():
    rng = np.random.default_rng(5)
    H_true = rng.uniform(size=(3, 6))
    H_true[0, 0] = 0.0
    H = update_h(H_true.copy(), np.eye(3), np.ones((3, 6)))
    assert np.allclose(H, np.maximum(H_true, EPS_H), atol=1e-10)


def test_update_h_zero_target_clamps_everything():
    rng = np.random.default_rng(6)
    W = rng.uniform(0.1, 1.0, size=(4, 2))
    H = update_h(np.zeros((4, 5)), W, np.ones((2, 5)))
    assert np.array_equal(H, np.full((2, 5), EPS_H))


def test_update_h_does_not_increase_reconstruction_error():
    for seed in range(10):
        r2 = np.random.default_rng(seed)
        X = r2.uniform(size=(6, 4))
        W = r2.uniform(size=(6, 3))
        H_old = np.maximum(r2.uniform(size=(3, 4)), EPS_H)
        H_new = update_h(X, W, H_old)
        before = np.sum((X - W @ H_old) ** 2)
        after = np.sum((X - W @ H_new) ** 2)
        assert after <= before + 1e-12 * (1 + before)
        assert np.all(H_new >= EPS_H)


# ----------------------------------------------------------------- update_w

def test_update_w_identity_topics_lambda_zero():
    X = np.array([[1.0, 0.0, 2.0]])
    W = update_w(X, np.zeros(1), np.eye(3), np.zeros(4), 0.0, np.zeros((1, 3)))
    assert np.allclose(W, X, atol=1e-10)


def test_update_w_large_lambda_tracks_response():
    # With a vanishing dictionary the regression term dominates and each
    # weight approaches its response value.
    n = 4
    Y = np.array([2.0, 0.5, 3.0, 1.0])
    H = np.full((1, 3), EPS_H)
    theta = np.array([0.0, 1.0])
    W = update_w(np.zeros((n, 3)), Y, H, theta, 1e10, np.zeros((n, 1)))
    assert np.allclose(W[:, 0], Y, atol=1e-4)


def test_update_w_does_not_increase_objective():
    for seed in range(10):
        r2 = np.random.default_rng(100 + seed)
        X = r2.uniform(size=(5, 4))
        Y = r2.normal(size=5)
        H = np.maximum(r2.uniform(size=(2, 4)), EPS_H)
        theta = r2.normal(size=3)
        W_old = r2.uniform(size=(5, 2))
        W_new = update_w(X, Y, H, theta, 1.0, W_old)
        before, _, _ = objective(Factorization(W_old, H, theta), X, Y, 1.0)
        after, _, _ = objective(Factorization(W_new, H, theta), X, Y, 1.0)
        assert after <= before + 1e-12 * (1 + before)
        assert np.all(W_new >= 0)


def test_update_w_propagates_row_index_on_failure(monkeypatch):
    def explode(AtA, Atb, max_iter, warm_passive=None):
        raise ConvergenceError("stuck", best=np.zeros(2))

    monkeypatch.setattr(cssnmf.model, "_nnls_normal", explode)
    with pytest.raises(ConvergenceError) as exc:
        update_w(np.ones((3, 4)), np.ones(3), np.ones((2, 4)), np.zeros(3), 0.0, np.ones((3, 2)))
    assert exc.value.row == 0


# ---------------------------------------------------------------- normalize

def test_normalize_rescales_and_preserves_product():
    fac = Factorization(
        W=np.array([[1.0], [3.0]]),
        H=np.array([[2.0, 2.0]]),
        theta=np.array([0.5, 4.0]),
    )
    out = normalize(fac)
    assert np.allclose(out.H, [[0.5, 0.5]])
    assert np.allclose(out.W, [[4.0], [12.0]])
    assert np.allclose(out.theta, [0.5, 1.0])
    assert np.allclose(out.W @ out.H, fac.W @ fac.H)


def test_normalize_fixed_point():
    fac = Factorization(
        W=np.array([[1.0, 2.0]]),
        H=np.array([[0.25, 0.75], [0.5, 0.5]]),
        theta=np.array([0.0, 1.0, 2.0]),
    )
    out = normalize(fac)
    assert np.allclose(out.W, fac.W) and np.allclose(out.H, fac.H)
    assert np.allclose(out.theta, fac.theta)


def test_normalize_preserves_objective():
    for seed in range(20):
        r2 = np.random.default_rng(200 + seed)
        fac = random_factorization(r2, 6, 5, 3)
        X = r2.uniform(size=(6, 5))
        Y = r2.normal(size=6)
        before = objective(fac, X, Y, 0.3)
        out = normalize(fac)
        after = objective(out, X, Y, 0.3)
        for a, b in zip(before, after):
            assert abs(a - b) <= 1e-9 * (1 + abs(a))
        assert np.allclose(out.H.sum(axis=1), 1.0, atol=1e-9)


def test_normalize_rejects_nonpositive_row_sum():
    fac = Factorization(W=np.ones((2, 1)), H=np.zeros((1, 3)), theta=np.zeros(2))
    with pytest.raises(RuntimeError):
        normalize(fac)


# ---------------------------------------------------------------------- fit

def test_fit_recovers_exact_low_rank_matrix():
    ds = generate(SyntheticConfig(n=20, m=10, r_true=2, M=5.0, eta_x=0.0, eta_y=0.0, seed=12))
    fac, report = fit(ds.X, ds.Y, FitConfig(r=2, lam=0.0, tau=1e-9, max_iter=200, seed=0, restarts=5))
    N = objective(fac, ds.X, ds.Y, 0.0)[1]
    assert N / np.sum(ds.X ** 2) <= 1e-6
    assert report.converged


def test_fit_single_document():
    X = np.array([[0.3, 0.1, 0.6]])
    Y = np.array([4.0])
    fac, _ = fit(X, Y, FitConfig(r=1, lam=0.0, tau=1e-10, max_iter=100, seed=1, restarts=3))
    assert np.allclose(fac.W @ fac.H, X, atol=1e-10)
    pred = fac.theta[0] + fac.W @ fac.theta[1:]
    assert np.allclose(pred, Y, atol=1e-8)


def test_fit_trace_is_monotone_and_consistent():
    ds = generate(SyntheticConfig(n=25, m=12, r_true=3, M=10.0, eta_x=2.0, eta_y=2.0, seed=13))
    lam = 0.5
    fac, report = fit(ds.X, ds.Y, FitConfig(r=3, lam=lam, tau=1e-6, max_iter=60, seed=2, restarts=2))
    trace = report.objective_trace
    assert trace[0][0] == 0 and trace[-1][0] == report.iterations_run
    for (_, F0, _, _), (_, F1, _, _) in zip(trace, trace[1:]):
        assert F1 <= F0 * (1 + 1e-12) + 1e-12
    for _, F, N, R in trace:
        assert abs(F - (N + lam * R)) <= 1e-9 * (1 + abs(F))
    assert np.all(fac.W >= 0) and np.all(fac.H > 0)
    assert np.allclose(fac.H.sum(axis=1), 1.0, atol=1e-9)


def test_fit_lambda_zero_fits_theta_once_at_the_end():
    ds = generate(SyntheticConfig(n=15, m=8, r_true=2, M=5.0, eta_x=1.0, eta_y=1.0, seed=14))
    fac, report = fit(ds.X, ds.Y, FitConfig(r=2, lam=0.0, tau=1e-6, max_iter=50, seed=3, restarts=2))
    # With lambda = 0 the trace objective is pure reconstruction error.
    for _, F, N, _ in report.objective_trace:
        assert F == N
    assert np.array_equal(fac.theta, update_theta(fac.W, ds.Y))


def test_fit_restart_selection_prefers_lowest_objective():
    ds = generate(SyntheticConfig(n=20, m=10, r_true=3, M=8.0, eta_x=2.0, eta_y=2.0, seed=15))
    cfg = FitConfig(r=3, lam=0.2, tau=1e-6, max_iter=40, seed=7, restarts=4)
    fac, report = fit(ds.X, ds.Y, cfg)
    # Re-run each restart in isolation; the winner must match the best.
    finals = []
    for k in range(cfg.restarts):
        single = FitConfig(r=3, lam=0.2, tau=1e-6, max_iter=40, seed=7 + k, restarts=1)
        _, rep_k = fit(ds.X, ds.Y, single)
        finals.append(rep_k.final_objective)
    assert report.final_objective == min(finals)
    assert finals[report.restart_index] == min(finals)


def test_fit_flags_overcomplete_rank():
    X = np.abs(np.random.default_rng(16).uniform(size=(4, 3)))
    Y = np.zeros(4)
    _, report = fit(X, Y, FitConfig(r=5, lam=0.0, tau=1e-4, max_iter=5, seed=0, restarts=1))
    assert any("exceeds" in w for w in report.warnings)


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit(np.array([[1.0, -0.1]]), np.array([1.0]), FitConfig(r=1))
    with pytest.raises(ValueError):
        fit(np.ones((3, 2)), np.ones(4), FitConfig(r=1))
    with pytest.raises(ValueError):
        fit(np.array([[np.nan, 1.0]]), np.array([1.0]), FitConfig(r=1))


@pytest.mark.parametrize("kwargs", [
    {"r": 0},
    {"r": 1, "lam": -1.0},
    {"r": 1, "tau": 0.0},
    {"r": 1, "max_iter": 0},
    {"r": 1, "restarts": 0},
])
def test_fit_config_validation(kwargs):
    with pytest.raises(ValueError):
        FitConfig(**kwargs)


def test_fit_raises_numeric_failure_when_all_restarts_fail(monkeypatch):
    def explode(X, Y, H, theta, lam, W_old):
        raise ConvergenceError("no progress", best=None)

    monkeypatch.setattr(cssnmf.model, "update_w", explode)
    X = np.abs(np.random.default_rng(17).uniform(size=(5, 4)))
    with pytest.raises(NumericFailure):
        fit(X, np.zeros(5), FitConfig(r=2, lam=0.0, restarts=3))


# ------------------------------------------------------------------ predict

def test_predict_empty_document_returns_intercept():
    H = np.array([[0.5, 0.5], [0.9, 0.1]])
    theta = np.array([2.5, 1.0, -1.0])
    y_hat, w = predict(H, theta, np.zeros(2))
    assert y_hat == theta[0]
    assert np.array_equal(w, np.zeros(2))


def test_predict_pure_topic_document():
    H = np.array([[0.7, 0.3, 0.0, 0.0], [0.0, 0.0, 0.4, 0.6]])
    theta = np.array([1.0, 2.0, -3.0])
    for k in range(2):
        y_hat, w = predict(H, theta, H[k])
        e_k = np.zeros(2)
        e_k[k] = 1.0
        assert np.allclose(w, e_k, atol=1e-10)
        assert abs(y_hat - (theta[0] + theta[k + 1])) <= 1e-10


def test_predict_matches_brute_force_encoding():
    rng = np.random.default_rng(18)
    for _ in range(15):
        H = rng.uniform(size=(3, 6))
        theta = rng.normal(size=4)
        x = rng.uniform(size=6)
        y_hat, w = predict(H, theta, x)
        ref = brute_force_nnls(H.T, x)
        assert np.linalg.norm(w - ref) <= 1e-6
        assert abs(y_hat - (theta[0] + w @ theta[1:])) <= 1e-12


def test_predict_validates_input():
    H = np.ones((2, 3))
    theta = np.zeros(3)
    with pytest.raises(ValueError):
        predict(H, theta, np.ones(4))
    with pytest.raises(ValueError):
        predict(H, theta, np.array([1.0, -1.0, 0.0]))


# -------------------------------------------------------------- persistence

def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(19)
    fac = random_factorization(rng, 6, 4, 2)
    cfg = FitConfig(r=2, lam=0.5, tau=1e-5, max_iter=30, seed=9, restarts=2)
    X = rng.uniform(size=(6, 4))
    Y = rng.normal(size=6)
    _, report = fit(X, Y, cfg)
    path = tmp_path / "model.json"
    vocab = ["alpha", "beta", "gamma", "delta"]
    idf = [1.0, 1.2, 1.5, 2.0]
    save_model(path, fac, cfg, report, vocabulary=vocab, idf=idf,
               tfidf={"min_df": 0.01, "max_df": 0.15, "stopwords": "english",
                      "lowercase": True, "norm": "l1"})
    model = load_model(path)
    assert np.array_equal(model.H, fac.H)
    assert np.array_equal(model.theta, fac.theta)
    assert model.r == 2 and model.lam == 0.5
    assert model.vocabulary == vocab
    assert np.array_equal(model.idf, np.asarray(idf))
    assert model.config["tfidf"]["min_df"] == 0.01
    assert model.objective_trace[0][0] == 0
    doc = json.loads(path.read_text())
    assert "W" not in doc
    assert set(doc) == {"version", "r", "lambda", "theta", "H",
                        "vocabulary", "idf", "config", "objective_trace"}


def test_model_round_trip_without_vocabulary(tmp_path):
    rng = np.random.default_rng(20)
    fac = random_factorization(rng, 4, 3, 2)
    cfg = FitConfig(r=2, lam=0.0)
    X = np.abs(rng.uniform(size=(4, 3)))
    _, report = fit(X, np.zeros(4), FitConfig(r=2, lam=0.0, max_iter=3, restarts=1))
    path = tmp_path / "model.json"
    save_model(path, fac, cfg, report)
    model = load_model(path)
    assert model.vocabulary is None and model.idf is None


def test_load_model_rejects_unknown_version(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"version": 99, "r": 1, "lambda": 0.0,
                                "theta": [0.0, 1.0], "H": [[1.0]]}))
    with pytest.raises(ValueError):
        load_model(path)
