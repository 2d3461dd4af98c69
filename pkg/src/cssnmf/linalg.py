"""Dense linear algebra kernels shared by every update step.

All matrices are row-major ``float64`` numpy arrays.  The two solvers here
are deliberately small and deterministic:

* :func:`nnls` -- Lawson--Hanson active-set nonnegative least squares.
* :func:`lstsq` -- SVD-backed least squares that degrades to the
  pseudo-inverse (minimum-norm solution) on rank-deficient systems.
"""

import numpy as np

__all__ = ["ConvergenceError", "nnls", "lstsq", "frob_sq"]

# Singular values below SVD_CUTOFF * s_max are treated as zero.
SVD_CUTOFF = 1e-12
# Relative tolerance of the dual feasibility test in the active-set loop.
DUAL_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Active-set iteration cap exceeded.

    Carries the best iterate reached so far in ``best``; when raised from a
    matrix update, ``row`` or ``column`` identifies the failing subproblem.
    """

    def __init__(self, message, best=None, row=None, column=None):
        super().__init__(message)
        self.best = best
        self.row = row
        self.column = column


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(a)


def _as_vector(b, name):
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] < 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(b)


def frob_sq(a):
    """Sum of squared entries (squared Frobenius norm for matrices)."""
    a = np.asarray(a, dtype=float)
    return float(np.sum(a * a))


def lstsq(A, b):
    """Minimum-norm least-squares solution of ``A x = b``.

    Singular values below ``SVD_CUTOFF`` times the largest are treated as
    zero, so rank-deficient systems resolve to the pseudo-inverse solution.

    Parameters
    ----------
    A : (p, q) array_like
    b : (p,) array_like

    Returns
    -------
    x : (q,) ndarray
    """
    A = _as_matrix(A, "A")
    b = _as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise ValueError(
            f"incompatible shapes: A is {A.shape[0]}x{A.shape[1]}, b has length {b.shape[0]}"
        )
    x, _, _, _ = np.linalg.lstsq(A, b, rcond=SVD_CUTOFF)
    return x


def _solve_passive(AtA, Atb, passive):
    """Unconstrained minimizer restricted to the passive index set."""
    idx = np.flatnonzero(passive)
    M = AtA[np.ix_(idx, idx)]
    v = Atb[idx]
    try:
        z = np.linalg.solve(M, v)
    except np.linalg.LinAlgError:
        z, _, _, _ = np.linalg.lstsq(M, v, rcond=None)
    return idx, z


def _nnls_normal(AtA, Atb, max_iter, warm_passive=None):
    """Lawson--Hanson on precomputed cross products ``AtA = A'A``, ``Atb = A'b``.

    ``warm_passive`` optionally seeds the passive set from a previous solve;
    it is discarded if its restricted solution is not strictly feasible.
    """
    q = Atb.shape[0]
    x = np.zeros(q)
    passive = np.zeros(q, dtype=bool)
    tol = DUAL_TOL * (1.0 + float(np.max(np.abs(Atb), initial=0.0)))

    if warm_passive is not None and warm_passive.any():
        idx, z = _solve_passive(AtA, Atb, warm_passive)
        if np.all(np.isfinite(z)) and np.all(z > 0.0):
            x[idx] = z
            passive = warm_passive.copy()

    outer = 0
    while True:
        w = Atb - AtA @ x
        active = ~passive
        if not active.any() or np.max(w[active]) <= tol:
            return x
        outer += 1
        if outer > max_iter:
            raise ConvergenceError(
                f"active-set iteration cap {max_iter} exceeded", best=x
            )
        # Most violated dual coordinate enters the passive set.
        cand = np.where(active, w, -np.inf)
        passive[int(np.argmax(cand))] = True

        while True:
            idx, z = _solve_passive(AtA, Atb, passive)
            if np.all(z > 0.0):
                x.fill(0.0)
                x[idx] = z
                break
            # Step toward z until the first passive coordinate hits zero.
            xp = x[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(z <= 0.0, xp / (xp - z), np.inf)
            ratio = np.where(np.isnan(ratio), 0.0, ratio)
            alpha = float(np.min(ratio))
            x[idx] = xp + alpha * (z - xp)
            drop = (ratio <= alpha) & (z <= 0.0)
            x[idx[drop]] = 0.0
            passive[idx[drop]] = False
            x[~passive] = 0.0
            if not passive.any():
                break


def nnls(A, b, max_iter=None):
    """Solve ``min_x ||A x - b||**2`` subject to ``x >= 0``.

    Lawson--Hanson active-set iteration on the normal equations.  The
    returned solution satisfies the KKT conditions to within ``DUAL_TOL``
    relative to the scale of ``A'b``.

    Parameters
    ----------
    A : (p, q) array_like
    b : (p,) array_like
    max_iter : int, optional
        Cap on active-set changes.  Default ``3 * q``.

    Returns
    -------
    x : (q,) ndarray, elementwise nonnegative

    Raises
    ------
    ValueError
        On non-finite input or incompatible shapes.
    ConvergenceError
        If the iteration cap is exceeded; the best iterate is attached.
    """
    A = _as_matrix(A, "A")
    b = _as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise ValueError(
            f"incompatible shapes: A is {A.shape[0]}x{A.shape[1]}, b has length {b.shape[0]}"
        )
    if max_iter is None:
        max_iter = 3 * A.shape[1]
    return _nnls_normal(A.T @ A, A.T @ b, max_iter)
