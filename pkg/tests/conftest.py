import numpy as np


def brute_force_nnls(A, b):
    """Exhaustive reference NNLS: try every support set, solve the
    restricted least-squares problem, keep the feasible minimizer.

    Exponential in the column count; only for tiny oracle problems.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    q = A.shape[1]
    best_x = np.zeros(q)
    best_val = float(b @ b)
    for mask in range(1, 2 ** q):
        idx = [j for j in range(q) if (mask >> j) & 1]
        sol, *_ = np.linalg.lstsq(A[:, idx], b, rcond=None)
        if np.any(sol < -1e-9):
            continue
        x = np.zeros(q)
        x[idx] = np.maximum(sol, 0.0)
        r = b - A @ x
        val = float(r @ r)
        if val < best_val - 1e-12:
            best_val = val
            best_x = x
    return best_x
