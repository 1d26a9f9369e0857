"""Log-barrier interior-point solver for convex QCQPs with a linear objective.

Problem form::

    minimize    c^T x
    subject to  x^T P_i x + q_i^T x + r_i <= 0,   i = 1..m   (P_i PSD)
                A x = b

Quadratic terms of all constraints are stored stacked in one COO array so the
barrier Hessian is assembled with a handful of sparse products, whatever the
number of constraints.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

PHASE_ONE_RADIUS = 1e4  # phase-I search ball, relative to the size of the start


class QcqpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERATIONS = "max_iterations"


class NotPositiveSemidefinite(ValueError):
    pass


@dataclass
class ConvexQcqp:
    """Convex QCQP in stacked form.

    Parameters
    ----------
    c : ndarray, shape (n,)
        Linear objective (minimized).
    quad_rows, quad_i, quad_j, quad_vals : ndarray
        COO entries of all quadratic terms: constraint ``quad_rows[e]`` gets
        ``quad_vals[e] * x[quad_i[e]] * x[quad_j[e]]``. Both triangles must be
        present for off-diagonal terms.
    lin : sparse matrix, shape (m, n)
        Linear terms ``q_i``.
    const : ndarray, shape (m,)
        Constants ``r_i``.
    A_eq, b_eq : ndarray, optional
        Linear equality constraints.
    """

    c: np.ndarray
    quad_rows: np.ndarray
    quad_i: np.ndarray
    quad_j: np.ndarray
    quad_vals: np.ndarray
    lin: sp.csr_matrix
    const: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    check_psd: bool = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.const = np.asarray(self.const, dtype=float).ravel()
        m = self.const.size
        self.lin = sp.csr_matrix(self.lin, shape=(m, n))
        self.quad_rows = np.asarray(self.quad_rows, dtype=np.int64).ravel()
        self.quad_i = np.asarray(self.quad_i, dtype=np.int64).ravel()
        self.quad_j = np.asarray(self.quad_j, dtype=np.int64).ravel()
        self.quad_vals = np.asarray(self.quad_vals, dtype=float).ravel()
        sizes = {self.quad_rows.size, self.quad_i.size, self.quad_j.size, self.quad_vals.size}
        if len(sizes) != 1:
            raise ValueError("quadratic COO arrays must have equal length")
        if self.quad_rows.size and (self.quad_rows.max() >= m or self.quad_i.max() >= n or self.quad_j.max() >= n):
            raise ValueError("quadratic term index out of range")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        if self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError(f"A_eq has shape {self.A_eq.shape}, expected ({self.b_eq.size}, {n})")
        if self.check_psd:
            self.verify_psd()

    @classmethod
    def from_constraints(cls, c, constraints: Sequence, A_eq=None, b_eq=None) -> "ConvexQcqp":
        """Build from a list of ``(P, q, r)`` triples with dense (or None) ``P``."""
        c = np.asarray(c, dtype=float).ravel()
        n = c.size
        rows, ii, jj, vals, lin_rows, const = [], [], [], [], [], []
        for idx, (P, q, r) in enumerate(constraints):
            if P is not None:
                P = np.asarray(P, dtype=float)
                if P.shape != (n, n):
                    raise ValueError(f"constraint {idx}: P has shape {P.shape}, expected ({n}, {n})")
                P = 0.5 * (P + P.T)
                i, j = np.nonzero(P)
                rows.append(np.full(i.size, idx))
                ii.append(i)
                jj.append(j)
                vals.append(P[i, j])
            lin_rows.append(np.zeros(n) if q is None else np.asarray(q, dtype=float).ravel())
            const.append(float(r))
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dtype=dt)
        lin = sp.csr_matrix(np.array(lin_rows).reshape(len(constraints), n))
        return cls(c, cat(rows, np.int64), cat(ii, np.int64), cat(jj, np.int64), cat(vals, float),
                   lin, np.array(const), A_eq, b_eq)

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_constraints(self) -> int:
        return self.const.size

    def verify_psd(self, tol: float = 1e-10):
        if not self.quad_rows.size:
            return
        order = np.argsort(self.quad_rows, kind="stable")
        rows = self.quad_rows[order]
        bounds = np.flatnonzero(np.diff(rows)) + 1
        for chunk in np.split(order, bounds):
            idx = np.unique(np.concatenate([self.quad_i[chunk], self.quad_j[chunk]]))
            if idx.size == 1 or np.all(self.quad_i[chunk] == self.quad_j[chunk]):
                diag = np.bincount(np.searchsorted(idx, self.quad_i[chunk]), self.quad_vals[chunk], idx.size)
                low = diag.min()
                scale = max(1.0, np.abs(diag).max())
            else:
                local = np.zeros((idx.size, idx.size))
                np.add.at(local, (np.searchsorted(idx, self.quad_i[chunk]),
                                  np.searchsorted(idx, self.quad_j[chunk])), self.quad_vals[chunk])
                if not np.allclose(local, local.T, atol=1e-12 * max(1.0, np.abs(local).max())):
                    raise NotPositiveSemidefinite(f"constraint {int(self.quad_rows[chunk[0]])} "
                                                  "has an asymmetric quadratic term")
                eig = np.linalg.eigvalsh(local)
                low = eig[0]
                scale = max(1.0, np.abs(eig).max())
            if low < -tol * scale:
                raise NotPositiveSemidefinite(
                    f"constraint {int(self.quad_rows[chunk[0]])} has min eigenvalue {low:.3e}")

    # -- evaluation -----------------------------------------------------
    def values(self, x) -> np.ndarray:
        quad = np.bincount(self.quad_rows, self.quad_vals * x[self.quad_i] * x[self.quad_j],
                           minlength=self.num_constraints)
        return quad + self.lin @ x + self.const

    def jacobian(self, x) -> sp.csr_matrix:
        m, n = self.num_constraints, self.num_vars
        Gq = sp.csr_matrix((2.0 * self.quad_vals * x[self.quad_j], (self.quad_rows, self.quad_i)), shape=(m, n))
        return (Gq + self.lin).tocsr()

    def weighted_quad_hessian(self, weights) -> sp.csr_matrix:
        """``sum_i weights_i * 2 P_i`` as a sparse matrix."""
        n = self.num_vars
        return sp.csr_matrix((2.0 * weights[self.quad_rows] * self.quad_vals, (self.quad_i, self.quad_j)),
                             shape=(n, n))

    def with_slack_variable(self, center=None, radius: float = math.inf) -> "ConvexQcqp":
        """Phase-I problem ``min s  s.t.  f_i(x) <= s,  s >= -1,  Ax = b``.

        A finite ``radius`` adds ``||x - center||^2 <= radius^2``, which keeps the
        barrier bounded below when some variables are free in one direction.
        """
        n, m = self.num_vars, self.num_constraints
        c = np.zeros(n + 1)
        c[-1] = 1.0
        lin = sp.hstack([self.lin, sp.csr_matrix(-np.ones((m, 1)))])
        floor = sp.csr_matrix(([-1.0], ([0], [n])), shape=(1, n + 1))
        blocks = [lin, floor]
        const = [self.const, [-1.0]]
        rows, ii, jj, vals = [self.quad_rows], [self.quad_i], [self.quad_j], [self.quad_vals]
        if math.isfinite(radius):
            center = np.asarray(center, dtype=float)
            idx = np.arange(n)
            rows.append(np.full(n, m + 1))
            ii.append(idx)
            jj.append(idx)
            vals.append(np.ones(n))
            blocks.append(sp.csr_matrix(np.concatenate([-2.0 * center, [0.0]])[None, :]))
            const.append([float(center @ center) - radius ** 2])
        lin = sp.vstack(blocks).tocsr()
        A = np.hstack([self.A_eq, np.zeros((self.A_eq.shape[0], 1))])
        return ConvexQcqp(c, np.concatenate(rows), np.concatenate(ii), np.concatenate(jj), np.concatenate(vals),
                          lin, np.concatenate(const), A, self.b_eq, check_psd=False)


@dataclass
class QcqpResult:
    status: QcqpStatus
    x: np.ndarray
    value: float
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stationarity: float = np.nan
    primal_residual: float = np.nan
    complementarity: float = np.nan
    newton_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status is QcqpStatus.OPTIMAL

    @property
    def kkt(self) -> dict:
        return {"stationarity": self.stationarity, "primal": self.primal_residual,
                "complementarity": self.complementarity}


def _project_equality(A, b, x):
    if A.shape[0] == 0:
        return x
    r = A @ x - b
    if not np.any(r):
        return x
    corr, *_ = np.linalg.lstsq(A @ A.T, r, rcond=None)
    return x - A.T @ corr


def _centering(prob: ConvexQcqp, x, t, newton_tol, max_steps, stop_when=None):
    """Newton minimization of ``t c^T x - sum log(-f_i(x))`` on ``Ax = b``."""
    A = prob.A_eq
    p = A.shape[0]
    n = prob.num_vars
    steps = 0
    w = np.zeros(p)
    dx = np.zeros(n)
    decrement = 0.0
    while steps < max_steps:
        f = prob.values(x)
        s = -f
        G = prob.jacobian(x)
        grad = t * prob.c + G.T @ (1.0 / s)
        H = (G.T @ sp.diags(1.0 / (s * s)) @ G + prob.weighted_quad_hessian(1.0 / s)).toarray()
        if p:
            K = np.zeros((n + p, n + p))
            K[:n, :n] = H
            K[:n, n:] = A.T
            K[n:, :n] = A
            rhs = np.concatenate([-grad, np.zeros(p)])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            dx, w = sol[:n], sol[n:]
        else:
            try:
                dx = np.linalg.solve(H, -grad)
            except np.linalg.LinAlgError:
                dx = np.linalg.lstsq(H, -grad, rcond=None)[0]
        decrement = float(-grad @ dx)
        steps += 1
        # the achievable decrement floor grows with t through roundoff in the gradient
        if decrement / 2.0 <= newton_tol * max(1.0, t * 1e-6):
            break
        # backtracking: stay strictly feasible, then Armijo on the directly computed change
        ct = t * float(prob.c @ dx)
        step = 1.0
        while True:
            xn = x + step * dx
            fn = prob.values(xn)
            if np.all(fn < 0):
                change = step * ct - float(np.sum(np.log1p((-fn - s) / s)))
                if change <= -0.25 * step * decrement:
                    break
            step *= 0.5
            if step < 1e-14:
                break
        if step < 1e-14:
            break
        x = xn
        dx = np.zeros(n)
        if stop_when is not None and stop_when(x):
            break
    return x, w, dx, steps, decrement if steps else 0.0


def solve_qcqp(prob: ConvexQcqp, initial_point, gap_tol: float = 1e-8, t0: float = 1.0,
               factor: float = 10.0, newton_tol: float = 1e-12, max_newton: int = 2000,
               margin: float = 1e-12) -> QcqpResult:
    """Solve a convex QCQP by the barrier method from ``initial_point``.

    If the start is not strictly feasible a phase-I problem is solved first.
    The objective of the returned point is never worse than that of a
    strictly feasible start (up to ``gap_tol``).
    """
    x = _project_equality(prob.A_eq, prob.b_eq, np.asarray(initial_point, dtype=float).copy())
    m = prob.num_constraints
    total_steps = 0
    f0 = prob.values(x)
    if m and np.max(f0) >= -margin:
        # search ball far larger than the start, so only distant feasible sets could be missed
        aux = prob.with_slack_variable(x, PHASE_ONE_RADIUS * max(1.0, float(np.max(np.abs(x)))))
        # slack and barrier weight on the scale of the violation, so Newton is not pinned to the boundary
        scale = max(1.0, float(np.max(f0)))
        xa = np.concatenate([x, [float(np.max(f0)) + scale]])
        res = _barrier(aux, xa, gap_tol=gap_tol, t0=t0 / scale, factor=factor, newton_tol=newton_tol,
                       max_newton=max_newton, stop_when=lambda z: z[-1] < -1e-6 and
                       np.max(prob.values(z[:-1])) < -margin)
        total_steps += res.newton_steps
        if res.x[-1] >= -margin or np.max(prob.values(res.x[:-1])) >= -margin:
            return QcqpResult(QcqpStatus.INFEASIBLE, res.x[:-1], float(prob.c @ res.x[:-1]),
                              newton_steps=total_steps)
        x = res.x[:-1]
    if m == 0:
        raise ValueError("problem has no inequality constraints; the objective is unbounded or trivial")
    res = _barrier(prob, x, gap_tol=gap_tol, t0=t0, factor=factor, newton_tol=newton_tol,
                   max_newton=max_newton - total_steps)
    res.newton_steps += total_steps
    return res


def _barrier(prob: ConvexQcqp, x, gap_tol, t0, factor, newton_tol, max_newton,
             stop_when: Optional[Callable] = None, max_stage: int = 60) -> QcqpResult:
    m = prob.num_constraints
    t = t0
    steps = 0
    status = QcqpStatus.OPTIMAL
    w = np.zeros(prob.A_eq.shape[0])
    while True:
        cap = max(1, min(max_stage, max_newton - steps))
        x, w, dx, used, decrement = _centering(prob, x, t, newton_tol, cap, stop_when)
        steps += used
        if stop_when is not None and stop_when(x):
            break
        if used == cap and decrement > 1e-3 and steps < max_newton:
            # far from the central point (not a roundoff stall): keep centering at this t
            continue
        if m / t <= gap_tol * max(1.0, abs(float(prob.c @ x))):
            break
        if steps >= max_newton:
            status = QcqpStatus.MAX_ITERATIONS
            break
        t *= factor

    f = prob.values(x)
    G = prob.jacobian(x)
    # multipliers 1/(t s) corrected to first order along the last Newton step
    lam = np.maximum(1.0 / (t * -f) * (1.0 + (G @ dx) / -f), 0.0)
    station = prob.c + G.T @ lam
    nu = w / t
    if nu.size:
        station = station + prob.A_eq.T @ nu
    scale = max(1.0, float(np.linalg.norm(prob.c, np.inf)))
    primal = max(float(np.max(f, initial=0.0)), 0.0)
    if prob.A_eq.shape[0]:
        primal = max(primal, float(np.max(np.abs(prob.A_eq @ x - prob.b_eq))))
    return QcqpResult(status, x, float(prob.c @ x), lam, nu,
                      stationarity=float(np.linalg.norm(station, np.inf)) / scale,
                      primal_residual=primal,
                      complementarity=float(np.max(np.abs(lam * f), initial=0.0)) / scale,
                      newton_steps=steps)
