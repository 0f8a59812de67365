"""A small dense two-phase simplex solver.

Minimizes ``c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub`` and
``x >= 0``. Bland's rule everywhere, so it cannot cycle; sizes here are tiny
(a few dozen variables) and determinism matters more than speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class LPInfeasibleError(RuntimeError):
    pass


class LPUnboundedError(RuntimeError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: list[int], ncols: int, tol: float,
                 maxiter: int) -> None:
    """Drive the objective row (last row of T) to optimality in place."""
    for _ in range(maxiter):
        col = -1
        for j in range(ncols):
            if T[-1, j] < -tol:  # Bland: first improving column
                col = j
                break
        if col < 0:
            return
        row, best = -1, np.inf
        for r in range(T.shape[0] - 1):
            a = T[r, col]
            if a > tol:
                ratio = T[r, -1] / a
                if ratio < best - tol or (abs(ratio - best) <= tol and
                                          (row < 0 or basis[r] < basis[row])):
                    row, best = r, ratio
        if row < 0:
            raise LPUnboundedError("objective unbounded below")
        _pivot(T, basis, row, col)
    raise RuntimeError("simplex iteration limit reached")


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, *,
             tol: float = 1e-9, maxiter: int = 20000) -> LPResult:
    c = np.asarray(c, dtype=float)
    nvar = c.size
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    n_slack = 0 if A_ub is None else len(A_ub)

    if A_eq is not None:
        A_eq = np.asarray(A_eq, dtype=float)
        for i, row in enumerate(A_eq):
            full = np.concatenate([row, np.zeros(n_slack)])
            rows.append(full)
            rhs.append(float(b_eq[i]))
    if A_ub is not None:
        A_ub = np.asarray(A_ub, dtype=float)
        for i, row in enumerate(A_ub):
            slack = np.zeros(n_slack)
            slack[i] = 1.0
            rows.append(np.concatenate([row, slack]))
            rhs.append(float(b_ub[i]))

    m = len(rows)
    width = nvar + n_slack
    if m == 0:
        if np.any(c < -tol):
            raise LPUnboundedError("objective unbounded below")
        return LPResult(x=np.zeros(nvar), objective=0.0)

    A = np.vstack(rows)
    b = np.asarray(rhs)
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # phase 1: artificial variable per row
    T = np.zeros((m + 1, width + m + 1))
    T[:m, :width] = A
    T[:m, width:width + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, width:width + m] = 1.0
    basis = [width + i for i in range(m)]
    for r in range(m):
        T[-1] -= T[r]
    _run_simplex(T, basis, width + m, tol, maxiter)
    if T[-1, -1] < -tol * max(1.0, float(np.max(np.abs(b)))):
        raise LPInfeasibleError(f"phase-1 residual {-T[-1, -1]:.3g}")

    # drive leftover artificials out of the basis (or drop redundant rows)
    keep = list(range(m))
    for r in range(m):
        if basis[r] >= width:
            col = next((j for j in range(width) if abs(T[r, j]) > tol), None)
            if col is None:
                keep.remove(r)
            else:
                _pivot(T, basis, r, col)
    if len(keep) < m:
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        m = len(keep)

    # phase 2 on the original objective
    T2 = np.zeros((m + 1, width + 1))
    T2[:m, :width] = T[:m, :width]
    T2[:m, -1] = T[:m, -1]
    T2[-1, :nvar] = c
    for r in range(m):
        j = basis[r]
        if T2[-1, j] != 0.0:
            T2[-1] -= T2[-1, j] * T2[r]
    _run_simplex(T2, basis, width, tol, maxiter)

    x = np.zeros(width)
    for r in range(m):
        x[basis[r]] = T2[r, -1]
    return LPResult(x=x[:nvar], objective=float(c @ x[:nvar]))
