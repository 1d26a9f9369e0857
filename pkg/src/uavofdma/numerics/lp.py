"""Dense bounded-variable revised simplex.

Solves::

    max (or min)  c^T x
    s.t.          A_ub x <= b_ub
                  A_eq x  = b_eq
                  lower <= x <= upper

with a two-phase method. The basis inverse is kept explicitly and updated
with product-form rank-one corrections, refactorized periodically. Pricing is
Dantzig's rule; after a run of degenerate pivots it falls back to Bland's rule
until the objective moves again.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    maximize: bool = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(self.lower == np.inf) or np.any(self.upper == -np.inf):
            raise ValueError("bounds are inconsistent")

    @property
    def num_vars(self) -> int:
        return self.c.size


def _rows(A, b, n, tag):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (b.size, n):
        raise ValueError(f"A_{tag} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LpResult:
    status: LpStatus
    x: np.ndarray
    value: float
    duals_ub: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_bound: float = np.nan
    iterations: int = 0
    primal_residual: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


AT_LOWER, AT_UPPER, AT_ZERO, BASIC = 0, 1, 2, 3
DENSE_LIMIT = 2_000_000  # matrix entries kept densely


class _Simplex:
    def __init__(self, M, b, cost, lower, upper, tol=1e-9, max_iter=50000, refactor_every=60):
        self.M = sp.csc_matrix(M)
        self.MT = self.M.T.tocsr()
        # small problems: dense columns are much cheaper to fetch than sparse slices
        self.dense = self.M.toarray() if self.M.shape[0] * self.M.shape[1] <= DENSE_LIMIT else None
        self.b = b
        self.lower = lower
        self.upper = upper
        self.tol = tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.m, self.n = M.shape
        self.cost = cost
        self.iterations = 0

    def setup(self, basis, status, x):
        self.basis = np.array(basis, dtype=int)
        self.status = status
        self.x = x
        self.refactor()

    def refactor(self):
        B = self.dense[:, self.basis] if self.dense is not None else self.M[:, self.basis].toarray()
        self.Binv = np.asfortranarray(np.linalg.inv(B))
        nonbasic = self.status != BASIC
        rhs = self.b - self.M[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def objective(self):
        return float(self.cost @ self.x)

    def run(self):
        """Minimize ``cost`` from the current basis. Returns an LpStatus."""
        tol = self.tol
        degenerate_run = 0
        bland = False
        last_obj = self.objective()
        while True:
            if self.iterations >= self.max_iter:
                return LpStatus.ITERATION_LIMIT
            y = self.cost[self.basis] @ self.Binv
            d = self.cost - self.MT @ y
            st = self.status
            # column-norm scaled reduced costs for Dantzig pricing
            cand = np.zeros(self.n, dtype=bool)
            cand |= (st == AT_LOWER) & (d < -tol)
            cand |= (st == AT_UPPER) & (d > tol)
            cand |= (st == AT_ZERO) & (np.abs(d) > tol)
            if not np.any(cand):
                return LpStatus.OPTIMAL
            idx = np.flatnonzero(cand)
            if bland:
                j = int(idx[0])
            else:
                j = int(idx[np.argmax(np.abs(d[idx]))])
            direction = -1.0 if d[j] > 0 else 1.0

            column = self.dense[:, j] if self.dense is not None else self.M[:, [j]].toarray().ravel()
            col = self.Binv @ column
            step = direction * col  # x_B decreases by t * step
            xb = self.x[self.basis]
            lb = self.lower[self.basis]
            ub = self.upper[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = step > tol
            inc = step < -tol
            ratios[dec] = (xb[dec] - lb[dec]) / step[dec]
            ratios[inc] = (ub[inc] - xb[inc]) / (-step[inc])
            ratios = np.maximum(ratios, 0.0)
            t_flip = self.upper[j] - self.lower[j]
            t_row = ratios.min() if self.m else np.inf
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if t_flip <= t_row:
                # entering variable jumps to its opposite bound
                self.x[j] += direction * t_flip
                self.x[self.basis] = xb - t_flip * step
                self.status[j] = AT_UPPER if direction > 0 else AT_LOWER
            else:
                ties = np.flatnonzero(ratios <= t_row + tol * max(1.0, abs(t_row)))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(step[ties]))])
                t = t_row
                leaving = self.basis[r]
                self.x[self.basis] = xb - t * step
                self.x[j] += direction * t
                if step[r] > 0:
                    self.x[leaving] = self.lower[leaving]
                    self.status[leaving] = AT_LOWER
                else:
                    self.x[leaving] = self.upper[leaving]
                    self.status[leaving] = AT_UPPER
                self.status[j] = BASIC
                self.basis[r] = j
                # product-form update of the basis inverse
                pivot = col[r]
                eta = -col / pivot
                eta[r] = 1.0 / pivot
                row_r = self.Binv[r].copy()
                self.Binv = dger(1.0, eta, row_r, a=self.Binv, overwrite_a=True)
                self.Binv[r] = eta[r] * row_r
                self.since_refactor += 1
                if self.since_refactor >= self.refactor_every:
                    self.refactor()

            obj = self.objective()
            if obj < last_obj - tol * max(1.0, abs(last_obj)):
                degenerate_run = 0
                bland = False
            else:
                degenerate_run += 1
                if degenerate_run > 30:
                    bland = True
            last_obj = obj


def _initial_nonbasic(lower, upper):
    n = lower.size
    x = np.zeros(n)
    status = np.full(n, AT_ZERO)
    has_lo = np.isfinite(lower)
    has_hi = np.isfinite(upper)
    x[has_lo] = lower[has_lo]
    status[has_lo] = AT_LOWER
    only_hi = ~has_lo & has_hi
    x[only_hi] = upper[only_hi]
    status[only_hi] = AT_UPPER
    return x, status


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 50000) -> LpResult:
    """Solve a dense LP with the bounded-variable revised simplex method.

    Returns an :class:`LpResult` with a basic optimal solution, the row
    multipliers and a weak-duality bound built from them.
    """
    n = lp.num_vars
    m_ub = lp.b_ub.size
    m_eq = lp.b_eq.size
    m = m_ub + m_eq
    sign = -1.0 if lp.maximize else 1.0

    # columns: x | slack (ub rows) | artificial (all rows)
    A = np.vstack([lp.A_ub, lp.A_eq]) if m else np.zeros((0, n))
    b = np.concatenate([lp.b_ub, lp.b_eq])
    x0, st0 = _initial_nonbasic(lp.lower, lp.upper)
    resid = b - A @ x0
    art_sign = np.where(resid >= 0, 1.0, -1.0)
    slack_block = np.vstack([np.eye(m_ub), np.zeros((m_eq, m_ub))])
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = resid[:m_ub] < 0
    art_rows = np.flatnonzero(needs_art)
    art_block = np.zeros((m, art_rows.size))
    art_block[art_rows, np.arange(art_rows.size)] = art_sign[art_rows]
    M = np.hstack([A, slack_block, art_block])
    ntot = M.shape[1]
    lower = np.concatenate([lp.lower, np.zeros(m_ub), np.zeros(art_rows.size)])
    upper = np.concatenate([lp.upper, np.full(m_ub, np.inf), np.full(art_rows.size, np.inf)])

    x = np.concatenate([x0, np.zeros(m_ub + art_rows.size)])
    status = np.concatenate([st0, np.full(m_ub + art_rows.size, AT_LOWER)])
    basis = np.empty(m, dtype=int)
    for i in range(m):
        if needs_art[i]:
            basis[i] = n + m_ub + int(np.searchsorted(art_rows, i))
        else:
            basis[i] = n + i
    status[basis] = BASIC

    cost2 = np.concatenate([sign * lp.c, np.zeros(m_ub + art_rows.size)])
    iterations = 0
    if art_rows.size:
        cost1 = np.zeros(ntot)
        cost1[n + m_ub:] = 1.0
        phase1 = _Simplex(M, b, cost1, lower, upper, tol=tol, max_iter=max_iter)
        phase1.setup(basis, status, x)
        st = phase1.run()
        iterations = phase1.iterations
        infeas = phase1.objective()
        scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
        if st is LpStatus.ITERATION_LIMIT:
            return LpResult(st, phase1.x[:n].copy(), np.nan, iterations=iterations)
        if infeas > 1e-7 * scale:
            return LpResult(LpStatus.INFEASIBLE, phase1.x[:n].copy(), np.nan, iterations=iterations)
        # pin artificials at zero so phase 2 never moves them
        basis, status, x = phase1.basis, phase1.status, phase1.x
        art = np.arange(n + m_ub, ntot)
        upper[art] = 0.0
        x[art] = np.where(status[art] == BASIC, x[art], 0.0)
        status[art] = np.where(status[art] == BASIC, BASIC, AT_LOWER)

    phase2 = _Simplex(M, b, cost2, lower, upper, tol=tol, max_iter=max_iter - iterations)
    phase2.setup(basis, status, x)
    st = phase2.run()
    iterations += phase2.iterations
    phase2.refactor()
    xs = phase2.x[:n].copy()
    # snap tiny bound excursions caused by roundoff
    xs = np.clip(xs, lp.lower, lp.upper)
    value = float(lp.c @ xs)
    if st is not LpStatus.OPTIMAL:
        return LpResult(st, xs, value if st is LpStatus.ITERATION_LIMIT else np.nan, iterations=iterations)

    y = phase2.cost[phase2.basis] @ phase2.Binv  # multipliers for the min form
    y = sign * y  # back to the user's sense
    y_ub, y_eq = y[:m_ub], y[m_ub:]
    if lp.maximize:
        y_ub = np.maximum(y_ub, 0.0)
    else:
        y_ub = np.minimum(y_ub, 0.0)
    bound = _dual_bound(lp, y_ub, y_eq)
    residual = 0.0
    if m_ub:
        residual = max(residual, float(np.max(lp.A_ub @ xs - lp.b_ub, initial=0.0)))
    if m_eq:
        residual = max(residual, float(np.max(np.abs(lp.A_eq @ xs - lp.b_eq))))
    return LpResult(LpStatus.OPTIMAL, xs, value, y_ub, y_eq, bound, iterations, residual)


def _dual_bound(lp: LinearProgram, y_ub, y_eq) -> float:
    """Objective bound implied by row multipliers (upper bound when maximizing)."""
    d = lp.c - lp.A_ub.T @ y_ub - lp.A_eq.T @ y_eq
    # roundoff-level reduced costs would multiply infinite bounds
    d[np.abs(d) <= 1e-9 * max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))] = 0.0
    s = 1.0 if lp.maximize else -1.0
    pos = np.maximum(s * d, 0.0)
    neg = np.maximum(-s * d, 0.0)
    with np.errstate(invalid="ignore"):
        up = np.where(pos > 0, pos * lp.upper, 0.0)
        lo = np.where(neg > 0, neg * lp.lower, 0.0)
    total = float(lp.b_ub @ y_ub + lp.b_eq @ y_eq) + s * float(np.sum(up) - np.sum(lo))
    return total
