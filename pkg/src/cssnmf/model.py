"""Coupled topic factorization with a linear response model.

Data matrix ``X`` (documents x terms, nonnegative) is factored as
``X ~ W @ H`` with ``W, H >= 0`` while the topic weights simultaneously
drive a linear regression on a response vector ``Y``::

    F = ||X - W H||_F^2  +  lam * ||[1 | W] @ theta - Y||^2

``theta[0]`` is the intercept; ``theta[1:]`` weighs the topic encodings.
Minimization alternates exact nonnegative least-squares updates of the rows
of ``W``, the columns of ``H``, and the regression coefficients, with rows
of ``H`` rescaled to unit l1 norm after every iteration.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import ConvergenceError, _nnls_normal, frob_sq, lstsq

__all__ = [
    "EPS_H",
    "Factorization",
    "FitConfig",
    "FitReport",
    "NumericFailure",
    "objective",
    "update_theta",
    "update_h",
    "update_w",
    "normalize",
    "fit",
    "predict",
    "save_model",
    "load_model",
    "Model",
]

# Floor applied to H entries after each update; keeps later row solves well posed.
EPS_H = 1e-10


class NumericFailure(RuntimeError):
    """Every restart failed to produce a finite objective."""


@dataclass
class Factorization:
    """Factor triple: ``W`` (n x r), ``H`` (r x m), ``theta`` (r + 1,)."""

    W: np.ndarray
    H: np.ndarray
    theta: np.ndarray


@dataclass(frozen=True)
class FitConfig:
    r: int
    lam: float = 0.0
    tau: float = 1e-4
    max_iter: int = 100
    seed: int = 0
    restarts: int = 10

    def __post_init__(self):
        if int(self.r) < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if int(self.restarts) < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")


@dataclass
class FitReport:
    """Per-run record: trace rows are ``(iteration, F, N, R)``."""

    objective_trace: list
    final_objective: float
    iterations_run: int
    converged: bool
    restart_index: int
    warnings: list = field(default_factory=list)


def _check_shapes(X, Y, W, H, theta):
    n, m = X.shape
    r = W.shape[1]
    if W.shape[0] != n:
        raise ValueError(f"W has {W.shape[0]} rows, X has {n}")
    if H.shape != (r, m):
        raise ValueError(f"H is {H.shape[0]}x{H.shape[1]}, expected {r}x{m}")
    if theta.shape[0] != r + 1:
        raise ValueError(f"theta has length {theta.shape[0]}, expected {r + 1}")
    if Y.shape[0] != n:
        raise ValueError(f"Y has length {Y.shape[0]}, X has {n} rows")


def objective(fac, X, Y, lam):
    """Evaluate ``(F, N, R)`` for a factorization.

    ``N`` is the reconstruction error ``||X - W H||_F^2``, ``R`` the
    regression error ``||[1|W] theta - Y||^2``, and ``F = N + lam * R``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    _check_shapes(X, Y, fac.W, fac.H, fac.theta)
    N = frob_sq(X - fac.W @ fac.H)
    resid = fac.theta[0] + fac.W @ fac.theta[1:] - Y
    R = float(resid @ resid)
    return N + lam * R, N, R


def update_theta(W, Y):
    """Exact regression solve: minimizes ``||[1|W] theta - Y||^2`` over theta.

    Rank-deficient systems resolve via the pseudo-inverse, so the result is
    the minimum-norm minimizer.
    """
    W = np.asarray(W, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Wbar = np.hstack([np.ones((W.shape[0], 1)), W])
    return lstsq(Wbar, Y)


def update_h(X, W, H):
    """Columnwise nonnegative solve of ``min ||X_:,j - W h||^2``.

    Entries of the result below ``EPS_H`` are raised to ``EPS_H``.
    """
    X = np.asarray(X, dtype=float)
    W = np.asarray(W, dtype=float)
    H = np.asarray(H, dtype=float)
    r, m = H.shape
    if X.shape != (W.shape[0], m) or W.shape[1] != r:
        raise ValueError(
            f"shape mismatch: X {X.shape}, W {W.shape}, H {H.shape}"
        )
    AtA = W.T @ W
    AtB = W.T @ X
    cap = 3 * r
    H_new = np.empty_like(H)
    for j in range(m):
        try:
            H_new[:, j] = _nnls_normal(AtA, AtB[:, j], cap, warm_passive=H[:, j] > EPS_H)
        except ConvergenceError as err:
            raise ConvergenceError(
                f"H update did not converge in column {j}", best=err.best, column=j
            ) from err
    np.maximum(H_new, EPS_H, out=H_new)
    return H_new


def update_w(X, Y, H, theta, lam, W_old):
    """Rowwise nonnegative solve of the reconstruction + regression blend.

    Each row minimizes ``||X_i,: - w H||^2 + lam * (theta[0] + w.theta[1:] - Y_i)^2``
    over ``w >= 0``, via the augmented system ``[X | s(Y - theta[0])]`` against
    ``[H | s theta[1:]]`` with ``s = sqrt(lam)``.  With ``lam = 0`` this is the
    plain factorization row update.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    H = np.asarray(H, dtype=float)
    theta = np.asarray(theta, dtype=float)
    W_old = np.asarray(W_old, dtype=float)
    n, m = X.shape
    r = H.shape[0]
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if H.shape[1] != m or W_old.shape != (n, r) or theta.shape[0] != r + 1 or Y.shape[0] != n:
        raise ValueError(
            f"shape mismatch: X {X.shape}, Y ({Y.shape[0]},), H {H.shape}, "
            f"theta ({theta.shape[0]},), W_old {W_old.shape}"
        )
    if lam > 0:
        s = np.sqrt(lam)
        X_aug = np.hstack([X, (s * (Y - theta[0]))[:, None]])
        H_aug = np.hstack([H, (s * theta[1:])[:, None]])
    else:
        X_aug, H_aug = X, H
    AtA = H_aug @ H_aug.T
    AtB = H_aug @ X_aug.T
    cap = 3 * r
    W_new = np.empty_like(W_old)
    for i in range(n):
        try:
            W_new[i, :] = _nnls_normal(AtA, AtB[:, i], cap, warm_passive=W_old[i, :] > 0)
        except ConvergenceError as err:
            raise ConvergenceError(
                f"W update did not converge in row {i}", best=err.best, row=i
            ) from err
    return W_new


def normalize(fac):
    """Rescale so every row of ``H`` sums to 1, leaving ``W H`` and the
    regression predictions (hence the objective) unchanged.

    ``W`` columns absorb the row sums; ``theta[1:]`` is divided by them.
    """
    s = fac.H.sum(axis=1)
    if np.any(s <= 0):
        raise RuntimeError(
            "internal invariant violation: H has a nonpositive row sum "
            f"(min {s.min()!r}); the entry floor should prevent this"
        )
    theta = fac.theta.copy()
    theta[1:] = theta[1:] / s
    return Factorization(W=fac.W * s[None, :], H=fac.H / s[:, None], theta=theta)


def _fit_once(X, Y, cfg, seed, restart_index):
    """One run of the alternating loop from a fresh random initialization."""
    n, m = X.shape
    r = cfg.r
    lam = cfg.lam
    rng = np.random.default_rng(seed)
    bound = float(X.max()) if X.size else 1.0
    W = rng.uniform(0.0, bound, size=(n, r))
    H = rng.uniform(0.0, bound, size=(r, m))
    theta = rng.uniform(0.0, bound, size=r + 1)

    F, N, R = objective(Factorization(W, H, theta), X, Y, lam)
    trace = [(0, F, N, R)]
    err = np.inf
    rel_err = np.inf
    it = 0
    while rel_err > cfg.tau and it < cfg.max_iter:
        # At extreme lam the regression-augmented solve can overflow to
        # inf/nan; such a trial objective compares False below and the step
        # is rejected, so the IEEE warnings carry no information here.
        with np.errstate(over="ignore", invalid="ignore"):
            W_new = update_w(X, Y, H, theta, lam, W)
            F_new, N_new, R_new = objective(Factorization(W_new, H, theta), X, Y, lam)
        if F_new <= F:
            W, F, N, R = W_new, F_new, N_new, R_new

        H_new = update_h(X, W, H)
        F_new, N_new, R_new = objective(Factorization(W, H_new, theta), X, Y, lam)
        if F_new <= F:
            H, F, N, R = H_new, F_new, N_new, R_new

        if lam > 0:
            theta_new = update_theta(W, Y)
            F_new, N_new, R_new = objective(Factorization(W, H, theta_new), X, Y, lam)
            if F_new <= F:
                theta, F, N, R = theta_new, F_new, N_new, R_new

        fac = normalize(Factorization(W, H, theta))
        W, H, theta = fac.W, fac.H, fac.theta
        F_norm, N, R = objective(fac, X, Y, lam)
        if abs(F_norm - F) > 1e-9 * (1.0 + abs(F)):
            raise NumericFailure(
                f"normalization changed the objective: {F!r} -> {F_norm!r}"
            )
        F = F_norm

        err_temp = F
        if err < np.inf:
            rel_err = 0.0 if err == 0.0 else abs(err - err_temp) / err
        err = err_temp
        it += 1
        trace.append((it, F, N, R))

    if lam == 0:
        # Regression is decoupled: fit theta once against the settled weights.
        theta = update_theta(W, Y)
        F, N, R = objective(Factorization(W, H, theta), X, Y, lam)

    report = FitReport(
        objective_trace=trace,
        final_objective=trace[-1][1],
        iterations_run=it,
        converged=bool(rel_err <= cfg.tau),
        restart_index=restart_index,
    )
    return Factorization(W, H, theta), report


def fit(X, Y, cfg):
    """Run ``cfg.restarts`` independent minimizations and keep the best.

    Restart ``k`` draws its initialization from seed ``cfg.seed + k``; the
    run with the lowest final objective wins (ties to the lowest index).

    Returns
    -------
    (Factorization, FitReport)

    Raises
    ------
    ValueError
        On negative/non-finite data or shape disagreement.
    NumericFailure
        If every restart fails or ends with a non-finite objective.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be a matrix, got shape {X.shape}")
    if Y.ndim != 1 or Y.shape[0] != X.shape[0]:
        raise ValueError(
            f"Y must be a vector of length {X.shape[0]}, got shape {Y.shape}"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
        raise ValueError("X and Y must be finite")
    if np.any(X < 0):
        raise ValueError("X must be elementwise nonnegative")

    best = None
    failures = []
    for k in range(cfg.restarts):
        try:
            fac, report = _fit_once(X, Y, cfg, seed=cfg.seed + k, restart_index=k)
        except (ConvergenceError, NumericFailure, np.linalg.LinAlgError) as err:
            failures.append((k, err))
            continue
        if not np.isfinite(report.final_objective):
            failures.append((k, NumericFailure("non-finite objective")))
            continue
        if best is None or report.final_objective < best[1].final_objective:
            best = (fac, report)
    if best is None:
        detail = "; ".join(f"restart {k}: {e}" for k, e in failures[-3:])
        raise NumericFailure(f"all {cfg.restarts} restarts failed ({detail})")

    fac, report = best
    if cfg.r > min(X.shape):
        report.warnings.append(
            f"r={cfg.r} exceeds min(n, m)={min(X.shape)}; the factorization is overcomplete"
        )
    return fac, report


def predict(H, theta, x):
    """Predict the response for one document row.

    The document is first encoded as the best nonnegative combination of
    topic rows, then passed through the linear model.

    Returns
    -------
    (y_hat, w) : predicted response and the (r,) topic encoding.
    """
    H = np.asarray(H, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != H.shape[1]:
        raise ValueError(
            f"document vector has length {x.shape[0] if x.ndim == 1 else x.shape}, "
            f"expected {H.shape[1]}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("document vector contains non-finite entries")
    if np.any(x < 0):
        raise ValueError("document vector must be nonnegative")
    r = H.shape[0]
    w = _nnls_normal(H @ H.T, H @ x, 3 * r)
    y_hat = float(theta[0] + w @ theta[1:])
    return y_hat, w


MODEL_VERSION = 1


@dataclass
class Model:
    """Deserialized model document; ``W`` is never persisted (recomputable
    per document via :func:`predict`)."""

    r: int
    lam: float
    theta: np.ndarray
    H: np.ndarray
    config: dict
    objective_trace: list
    vocabulary: list = None
    idf: np.ndarray = None


def save_model(path, fac, cfg, report, vocabulary=None, idf=None, tfidf=None):
    """Write the model as a single JSON document.

    Persists ``H``, ``theta``, hyperparameters, and the objective trace;
    vocabulary, idf, and the vectorizer settings travel along when fitted
    on a text corpus so new documents can be vectorized for prediction.
    """
    doc = {
        "version": MODEL_VERSION,
        "r": cfg.r,
        "lambda": cfg.lam,
        "theta": [float(v) for v in fac.theta],
        "H": [[float(v) for v in row] for row in fac.H],
    }
    if vocabulary is not None:
        doc["vocabulary"] = list(vocabulary)
    if idf is not None:
        doc["idf"] = [float(v) for v in idf]
    doc["config"] = {
        "r": cfg.r,
        "lambda": cfg.lam,
        "tau": cfg.tau,
        "max_iter": cfg.max_iter,
        "seed": cfg.seed,
        "restarts": cfg.restarts,
    }
    if tfidf is not None:
        doc["config"]["tfidf"] = dict(tfidf)
    doc["objective_trace"] = [
        [int(i), float(f), float(nn), float(rr)] for i, f, nn, rr in report.objective_trace
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model JSON document back into a :class:`Model`."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ValueError(f"unsupported model version {version!r}")
    H = np.asarray(doc["H"], dtype=float)
    theta = np.asarray(doc["theta"], dtype=float)
    if H.ndim != 2 or theta.shape[0] != H.shape[0] + 1:
        raise ValueError("model document is inconsistent: H/theta shapes disagree")
    idf = doc.get("idf")
    return Model(
        r=int(doc["r"]),
        lam=float(doc["lambda"]),
        theta=theta,
        H=H,
        config=doc.get("config", {}),
        objective_trace=doc.get("objective_trace", []),
        vocabulary=doc.get("vocabulary"),
        idf=None if idf is None else np.asarray(idf, dtype=float),
    )
