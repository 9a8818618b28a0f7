"""Dense two-phase primal simplex with Bland's rule.

Solves ``max c.x  s.t.  A x = b, x >= 0``. Bland's rule (lowest-index entering
column, lowest-index leaving basic variable among ratio ties) rules out cycling
on the heavily degenerate programs built in :mod:`rangewalk.pricing`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measure import RangewalkError


class Infeasible(RangewalkError):
    pass


class Unbounded(RangewalkError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    y: np.ndarray
    value: float
    basis: list[int]
    kept_rows: list[int]
    iterations: int
    history: list[float] = field(default_factory=list)


def _pivot(T: np.ndarray, obj: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, T[row])
    obj -= obj[col] * T[row]


def _run(T, obj, basis, eligible, tol, max_iter, history, counter):
    """Iterate until no eligible column has positive reduced cost."""
    while True:
        cand = np.nonzero((obj[:-1] > tol) & eligible)[0]
        if cand.size == 0:
            return
        if counter[0] >= max_iter:
            raise RangewalkError(f"simplex did not finish in {max_iter} pivots")
        col = int(cand[0])
        colv = T[:, col]
        rows = np.nonzero(colv > tol)[0]
        if rows.size == 0:
            raise Unbounded(f"column {col} is an unbounded ray")
        ratios = T[rows, -1] / colv[rows]
        best = ratios.min()
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, obj, row, col)
        basis[row] = col
        counter[0] += 1
        if history is not None:
            history.append(-obj[-1])


def simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = 1e-9,
            max_iter: int = 100_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A1 = A * sign[:, None]
    b1 = b * sign
    T = np.hstack([A1, np.eye(m), b1[:, None]])
    basis = list(range(n, n + m))
    counter = [0]

    # phase 1: maximise -sum(artificials)
    obj = np.zeros(n + m + 1)
    obj[n:n + m] = -1.0
    for r in range(m):
        obj -= obj[basis[r]] * T[r]
    eligible = np.zeros(n + m, dtype=bool)
    eligible[:n] = True
    _run(T, obj, basis, eligible, tol, max_iter, None, counter)
    infeas = T[[r for r in range(m) if basis[r] >= n], -1].sum() if m else 0.0
    if infeas > 1e-7 * max(1.0, np.abs(b1).max(initial=0.0)):
        raise Infeasible(f"phase one ended with artificial mass {infeas:.3e}")

    # drive zero-level artificials out; rows where that is impossible are redundant
    kept = list(range(m))
    for r in range(m):
        if basis[r] < n:
            continue
        cols = np.nonzero(np.abs(T[r, :n]) > 1e-7)[0]
        if cols.size:
            _pivot(T, obj, r, int(cols[0]))
            basis[r] = int(cols[0])
        else:
            kept.remove(r)
    T = T[kept]
    basis = [basis[r] for r in kept]

    # phase 2
    obj = np.zeros(n + m + 1)
    obj[:n] = c
    for r in range(len(kept)):
        obj -= obj[basis[r]] * T[r]
    eligible = np.zeros(n + m, dtype=bool)
    eligible[:n] = True
    history: list[float] = []
    _run(T, obj, basis, eligible, tol, max_iter, history, counter)

    x = np.zeros(n)
    for r, j in enumerate(basis):
        x[j] = T[r, -1]
    x[np.abs(x) < 1e-13] = 0.0
    B = A1[np.ix_(kept, basis)]
    yk = np.linalg.solve(B.T, c[basis])
    y = np.zeros(m)
    y[kept] = yk * sign[kept]
    return SimplexResult(x, y, float(c @ x), basis, kept, counter[0], history)
