"""Dense two-phase primal simplex for ``min c^T x  s.t.  A x = b, x >= 0``.

Pricing is Dantzig's rule for the first ``2 (m + n)`` pivots of each phase,
then Bland's rule, which rules out cycling.  Redundant equality rows are
removed up front by Gaussian elimination with complete pivoting.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-10


@dataclass(frozen=True)
class LPResult:
    """Optimal basic solution of an equality-form LP.

    ``duals`` are indexed like the rows of the original ``A`` (rows dropped
    as redundant get multiplier 0), so ``A^T duals <= c`` at optimality.
    """

    x: np.ndarray
    objective: float
    duals: np.ndarray
    basis: np.ndarray
    iterations: int
    status: str = "optimal"


def independent_rows(a: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Indices of a maximal set of linearly independent rows of ``a``.

    Gaussian elimination with complete pivoting; a pivot below
    ``tol * max|a|`` ends the elimination.
    """
    m = np.array(a, dtype=float)
    scale = max(np.abs(m).max(initial=0.0), 1.0)
    rows = np.arange(m.shape[0])
    active_r = np.ones(m.shape[0], dtype=bool)
    active_c = np.ones(m.shape[1], dtype=bool)
    chosen = []
    for _ in range(min(m.shape)):
        sub = np.abs(m[np.ix_(active_r, active_c)])
        if sub.size == 0:
            break
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= tol * scale:
            break
        r = rows[active_r][i]
        c = np.arange(m.shape[1])[active_c][j]
        chosen.append(r)
        active_r[r] = False
        active_c[c] = False
        f = m[active_r, c] / m[r, c]
        m[active_r] -= np.outer(f, m[r])
    return np.sort(np.asarray(chosen, dtype=int))


def _pivot(t: np.ndarray, r: int, s: int) -> None:
    t[r] /= t[r, s]
    col = t[:, s].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])


def _run(t: np.ndarray, basis: np.ndarray, cost: np.ndarray, ncols: int,
         tol: float) -> int:
    """Pivot tableau ``t = [B^-1 A | B^-1 b]`` to optimality for ``cost``.

    Only the first ``ncols`` columns may enter.  Returns the pivot count.
    """
    m = t.shape[0]
    switch = 2 * (m + ncols)
    it = 0
    cscale = max(np.abs(cost).max(initial=0.0), 1.0)
    while True:
        y = cost[basis] @ t[:, :ncols]
        red = cost[:ncols] - y
        neg = np.flatnonzero(red < -tol * cscale)
        if neg.size == 0:
            return it
        s = int(neg[np.argmin(red[neg])]) if it < switch else int(neg[0])
        col = t[:, s]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            raise RuntimeError("LP is unbounded")
        ratios = t[pos, -1] / col[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + 1e-12 * max(1.0, abs(rmin))]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(t, r, s)
        basis[r] = s
        it += 1


def solve_lp(c, a_eq, b_eq, *, tol: float = 1e-11) -> LPResult:
    """Solve ``min c^T x`` subject to ``a_eq x = b_eq`` and ``x >= 0``.

    Raises
    ------
    InfeasibleError
        With a Farkas certificate ``y`` (``a_eq^T y <= 0``, ``b_eq^T y > 0``).
    """
    c = np.asarray(c, dtype=float)
    a0 = np.asarray(a_eq, dtype=float)
    b0 = np.asarray(b_eq, dtype=float)
    m0, n = a0.shape
    bscale = max(np.abs(b0).max(initial=0.0), 1.0)

    keep = independent_rows(a0)
    dropped = np.setdiff1d(np.arange(m0), keep)
    if dropped.size:
        # every dropped row is a combination of kept rows; check its rhs
        coef, *_ = np.linalg.lstsq(a0[keep].T, a0[dropped].T, rcond=None)
        gap = b0[dropped] - coef.T @ b0[keep]
        bad = np.flatnonzero(np.abs(gap) > 1e-9 * bscale)
        if bad.size:
            k = bad[0]
            y = np.zeros(m0)
            y[dropped[k]] = 1.0
            y[keep] = -coef[:, k]
            y *= np.sign(gap[k])
            raise InfeasibleError("inconsistent equality constraints", y)
    a, b = a0[keep], b0[keep]
    m = a.shape[0]
    sgn = np.where(b < 0, -1.0, 1.0)
    a = a * sgn[:, None]
    b = b * sgn

    # phase 1 on [A | I | b]
    t = np.hstack([a, np.eye(m), b[:, None]])
    basis = n + np.arange(m)
    cost1 = np.concatenate([np.zeros(n), np.ones(m)])
    it = _run(t, basis, cost1, n + m, tol)
    infeas = float(t[:, -1] @ cost1[basis])
    if infeas > 1e-9 * bscale:
        bmat = np.hstack([a, np.eye(m)])[:, basis]
        y1 = np.linalg.solve(bmat.T, cost1[basis])
        y = np.zeros(m0)
        y[keep] = y1 * sgn
        raise InfeasibleError(f"no feasible point (phase-1 residual {infeas:.3e})", y)

    # push artificials out of the basis where possible
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(t[r, :n]) > PIVOT_TOL)
            if cand.size:
                s = int(cand[np.argmax(np.abs(t[r, cand]))])
                _pivot(t, r, s)
                basis[r] = s
    if np.any(basis >= n):
        raise RuntimeError("artificial variable left in basis after row reduction")

    # phase 2
    t = np.hstack([t[:, :n], t[:, -1:]])
    it += _run(t, basis, c, n, tol)

    # recompute the vertex and multipliers from the final basis
    bmat = a[:, basis]
    xb = np.linalg.solve(bmat, b)
    x = np.zeros(n)
    x[basis] = np.maximum(xb, 0.0)
    y1 = np.linalg.solve(bmat.T, c[basis])
    y = np.zeros(m0)
    y[keep] = y1 * sgn
    log.debug("simplex finished: %d pivots, %d rows, %d columns", it, m, n)
    return LPResult(x=x, objective=float(c @ x), duals=y, basis=basis.copy(),
                    iterations=it)
