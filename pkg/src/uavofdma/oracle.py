"""Independent reference solvers used to certify the main algorithms.

Nothing here reuses the rate or solver code of the package: channel gains and
rates are recomputed from the scenario parameters, the allocation problem is
handed to a conic solver, LPs to HiGHS and trajectories are brute-forced on a
grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class OracleResult:
    value: float
    argument: np.ndarray
    method: str
    metadata: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return bool(self.metadata.get("converged", True))


def _snr_per_watt(scenario, waypoints) -> np.ndarray:
    """Received SNR per watt of transmit power, recomputed from raw parameters."""
    uav = scenario.uav
    rho0 = 10.0 ** (uav.ref_gain_db / 10.0)
    noise = 10.0 ** ((uav.noise_psd - 30.0) / 10.0) * uav.bandwidth
    pos = np.array([u.position for u in scenario.users], dtype=float)
    wp = np.asarray(waypoints, dtype=float)
    dist2 = ((wp[None, :, 0] - pos[:, 0, None]) ** 2 + (wp[None, :, 1] - pos[:, 1, None]) ** 2)
    return rho0 / (uav.altitude ** 2 + dist2) / noise


def oracle_allocation(scenario, trajectory, theta=None, tol: float = 1e-10) -> OracleResult:
    """Max-min throughput for a fixed trajectory via an exponential-cone model.

    ``argument`` stacks ``(eta, alpha.ravel(), p.ravel())`` with powers in W.
    """
    import cvxpy as cp

    theta = np.array([u.mrr for u in scenario.users]) if theta is None else np.broadcast_to(
        np.asarray(theta, dtype=float), (len(scenario.users),))
    waypoints = trajectory.waypoints if hasattr(trajectory, "waypoints") else trajectory
    g = _snr_per_watt(scenario, waypoints) * scenario.uav.p_max
    K, N = g.shape
    eta = cp.Variable()
    A = cp.Variable((K, N), nonneg=True)
    X = cp.Variable((K, N), nonneg=True)
    rate = -cp.rel_entr(A, A + cp.multiply(g, X)) / math.log(2.0)
    cons = [cp.sum(rate, axis=1) / N >= eta, cp.sum(A, axis=0) <= 1, cp.sum(X, axis=0) <= 1]
    for k in range(K):
        if theta[k] > 0:
            cons.append(rate[k, :] >= theta[k] * eta)
    prob = cp.Problem(cp.Maximize(eta), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    converged = prob.status == cp.OPTIMAL
    alpha = np.clip(A.value, 0.0, 1.0) if A.value is not None else np.zeros((K, N))
    xval = np.clip(X.value, 0.0, None) if X.value is not None else np.zeros((K, N))
    # re-evaluate the hard min on the returned point
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(alpha > 1e-14, alpha * np.log2(1.0 + xval * g / np.where(alpha > 1e-14, alpha, 1.0)), 0.0)
    hard = float(r.mean(axis=1).min())
    if np.any(theta > 0):
        hard = min(hard, float((r[theta > 0] / theta[theta > 0, None]).min()))
    arg = np.concatenate([[hard], alpha.ravel(), xval.ravel() * scenario.uav.p_max])
    return OracleResult(float(prob.value) if converged else math.nan, arg, "conic",
                        {"converged": converged, "status": prob.status, "hard_min": hard, "tolerance": tol})


def oracle_lp(c, A_ub=None, b_ub=None, bounds=None, A_eq=None, b_eq=None, maximize: bool = True) -> OracleResult:
    """Reference LP solve with HiGHS."""
    from scipy.optimize import linprog

    c = np.asarray(c, dtype=float)
    res = linprog(-c if maximize else c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
    value = (-res.fun if maximize else res.fun) if res.status == 0 else math.nan
    x = res.x if res.x is not None else np.zeros(c.size)
    return OracleResult(float(value), np.asarray(x), "lp_reference", {"converged": res.status == 0, "status": status})


def oracle_qcqp(c, constraints, A_eq=None, b_eq=None) -> OracleResult:
    """Reference convex QCQP solve; ``constraints`` are ``(P, q, r)`` triples."""
    import cvxpy as cp

    c = np.asarray(c, dtype=float)
    x = cp.Variable(c.size)
    cons = []
    for P, q, r in constraints:
        expr = float(r)
        if q is not None:
            expr = expr + np.asarray(q, dtype=float) @ x
        if P is not None:
            P = np.asarray(P, dtype=float)
            expr = expr + cp.quad_form(x, cp.psd_wrap(0.5 * (P + P.T)))
        cons.append(expr <= 0)
    if A_eq is not None:
        cons.append(np.asarray(A_eq) @ x == np.asarray(b_eq))
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=cp.CLARABEL)
    ok = prob.status == cp.OPTIMAL
    return OracleResult(float(prob.value) if ok else math.nan,
                        np.asarray(x.value) if x.value is not None else np.zeros(c.size),
                        "conic", {"converged": ok, "status": prob.status})


def oracle_trajectory(scenario, allocation, theta=None, grid_step: float = 50.0, margin: float = 100.0) -> OracleResult:
    """Exhaustive grid search over waypoints with the allocation held fixed.

    The last waypoint repeats the first, so ``N - 1`` points are free; each
    lies on a grid covering the users' bounding box plus ``margin``. Returns
    the best ``eta`` over speed-feasible combinations (first found wins ties).
    """
    alpha = np.asarray(allocation.bandwidth, dtype=float)
    power = np.asarray(allocation.power, dtype=float)
    K, N = alpha.shape
    if N - 1 > 4 or N < 2:
        raise ValueError("grid oracle supports 2 <= N <= 5 (at most four free waypoints)")
    theta = np.array([u.mrr for u in scenario.users]) if theta is None else np.broadcast_to(
        np.asarray(theta, dtype=float), (K,))
    pos = np.array([u.position for u in scenario.users], dtype=float)
    lo = pos.min(axis=0) - margin
    hi = pos.max(axis=0) + margin
    xs = np.arange(lo[0], hi[0] + 0.5 * grid_step, grid_step)
    ys = np.arange(lo[1], hi[1] + 0.5 * grid_step, grid_step)
    pts = np.array([(x, y) for x in xs for y in ys])
    G = len(pts)
    snr = _snr_per_watt(scenario, pts)  # (K, G)
    # rate table r[k, n, cell]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(alpha[:, :, None] > 0, power[:, :, None] * snr[:, None, :] /
                         np.where(alpha > 0, alpha, 1.0)[:, :, None], 0.0)
        table = np.where(alpha[:, :, None] > 0, alpha[:, :, None] * np.log2(1.0 + ratio), 0.0)
    uav = scenario.uav
    s_max = uav.v_max * uav.period / N
    free = N - 1
    slot_of = list(range(free)) + [0]  # slot n -> free point index
    best = -math.inf
    best_idx = None
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    reach = dist <= s_max + 1e-9
    active = theta > 0
    # enumerate all but the last free point explicitly and vectorize the last
    for head in itertools.product(range(G), repeat=free - 1):
        if any(not reach[head[i], head[i + 1]] for i in range(len(head) - 1)):
            continue
        cand = np.arange(G)
        ok = np.ones(G, dtype=bool)
        if free >= 2:
            ok &= reach[head[-1], cand]
            ok &= reach[cand, head[0]]
        else:
            ok &= True
        if not ok.any():
            continue
        rates = np.zeros((K, N, G))
        for n in range(N):
            j = slot_of[n]
            rates[:, n, :] = table[:, n, cand] if j == free - 1 else table[:, n, head[j]][:, None]
        eta = rates.mean(axis=1).min(axis=0)
        if active.any():
            eta = np.minimum(eta, (rates[active] / theta[active, None, None]).min(axis=(0, 1)))
        eta = np.where(ok, eta, -math.inf)
        i = int(np.argmax(eta))
        if eta[i] > best:
            best = float(eta[i])
            best_idx = tuple(head) + (i,)
    if best_idx is None:
        return OracleResult(math.nan, np.zeros(0), "grid", {"converged": False, "grid_step": grid_step})
    waypoints = np.array([pts[best_idx[slot_of[n]]] for n in range(N)])
    return OracleResult(best, waypoints.ravel(), "grid", {"converged": True, "grid_step": grid_step, "cells": G})


def finite_difference_check(function: Callable, point, direction, derivative: float,
                            steps=(1e-4, 1e-5, 1e-6)) -> float:
    """Relative deviation of central differences from an analytic directional derivative.

    Returns the smallest deviation over the step sizes in ``steps``.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    best = math.inf
    for h in steps:
        fd = (function(point + h * direction) - function(point - h * direction)) / (2.0 * h)
        dev = abs(fd - derivative) / max(abs(derivative), 1e-8)
        best = min(best, dev)
    return float(best)
