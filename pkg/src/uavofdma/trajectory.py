"""Trajectory optimization for a fixed allocation by successive convex approximation.

The rate of a served pair, ``alpha log2(1 + gamma / (H^2 + D))`` with
``D = ||q - w||^2``, is convex in ``D``. Its tangent at an anchor ``D_r`` is
therefore a global lower bound, affine in ``D`` and hence concave in ``q``:

    alpha * (B - A (D - D_r))

Maximizing the common throughput under these lower bounds, the speed limits
and periodicity is a convex QCQP solved by :func:`numerics.solve_qcqp`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import ConvexQcqp, QcqpStatus, solve_qcqp
from .scenario import LOG2E, Allocation, Scenario, Trajectory, achievable_eta, rate_matrix, squared_distances

LENGTH_UNIT = 1000.0  # the QCQP works in km about the user centroid


class TrajectoryStepInfeasible(RuntimeError):
    """No strictly feasible point of the surrogate problem was found."""


@dataclass(frozen=True)
class ScaCoefficients:
    """Tangent coefficients at an anchor trajectory.

    ``a`` (1/m^2) and ``b`` (bps/Hz) are ``K x N``; unserved pairs carry zeros.
    """

    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    anchor: Trajectory
    anchor_dist2: np.ndarray
    served: np.ndarray


def sca_coefficients(scenario: Scenario, allocation: Allocation, anchor: Trajectory) -> ScaCoefficients:
    alpha = allocation.bandwidth
    served = alpha > 0
    H2 = scenario.uav.altitude ** 2
    ratio = np.where(served, allocation.power / np.where(served, alpha, 1.0), 0.0)
    gamma = ratio * scenario.uav.ref_gain / scenario.uav.noise_power
    d2 = squared_distances(scenario.positions, anchor.waypoints)
    den = H2 + d2
    a = np.where(served, gamma * LOG2E / (den * (den + gamma)), 0.0)
    b = np.where(served, np.log1p(gamma / den) * LOG2E, 0.0)
    return ScaCoefficients(a, b, gamma, anchor, d2, served)


def surrogate_rates(coeffs: ScaCoefficients, allocation: Allocation, trajectory: Trajectory,
                    scenario: Scenario) -> np.ndarray:
    """Lower bounds on all rates at ``trajectory``, shape ``(K, N)``."""
    d2 = squared_distances(scenario.positions, trajectory.waypoints)
    return np.where(coeffs.served, allocation.bandwidth * (coeffs.b - coeffs.a * (d2 - coeffs.anchor_dist2)), 0.0)


def surrogate_rate(coeffs: ScaCoefficients, allocation: Allocation, trajectory: Trajectory, k: int, n: int,
                   scenario: Scenario) -> float:
    """Lower bound on the rate of user ``k`` in slot ``n`` built at the anchor."""
    if not coeffs.served[k, n]:
        return 0.0
    d2 = float(np.sum((trajectory.waypoints[n] - scenario.positions[k]) ** 2))
    return float(allocation.bandwidth[k, n] * (coeffs.b[k, n] - coeffs.a[k, n] * (d2 - coeffs.anchor_dist2[k, n])))


def surrogate_eta(coeffs, allocation, trajectory, scenario, theta) -> float:
    return achievable_eta(surrogate_rates(coeffs, allocation, trajectory, scenario), theta)


def build_trajectory_qcqp(scenario: Scenario, allocation: Allocation, theta, coeffs: ScaCoefficients):
    """Assemble the surrogate QCQP in ``z = (eta, u_1x, u_1y, ..., u_Nx, u_Ny)``.

    Waypoints are ``q = center + LENGTH_UNIT * u``. Returns the problem and the
    center used.
    """
    theta = np.asarray(theta, dtype=float)
    K, N = allocation.bandwidth.shape
    center = scenario.centroid
    L = LENGTH_UNIT
    w = (scenario.positions - center) / L  # (K, 2)
    alpha = allocation.bandwidth
    # coefficient of ||u_n - w_k||^2 (scaled units) and the constant term of each pair
    quad = alpha * coeffs.a * L * L
    const_pair = alpha * (coeffs.b + coeffs.a * coeffs.anchor_dist2)
    served = coeffs.served
    ux = 1 + 2 * np.arange(N)
    uy = ux + 1

    rows, ii, jj, vals = [], [], [], []
    lin_r, lin_c, lin_v = [], [], []
    const = []

    def add_pairs(row, ks, ns, weight):
        """Adds ``sum weight * ||u_n - w_k||^2`` to constraint ``row``."""
        for idx in (ux, uy):
            rows.append(np.full(ks.size, row))
            ii.append(idx[ns])
            jj.append(idx[ns])
            vals.append(weight)
        lin_r.append(np.full(2 * ks.size, row))
        lin_c.append(np.concatenate([ux[ns], uy[ns]]))
        lin_v.append(np.concatenate([-2.0 * weight * w[ks, 0], -2.0 * weight * w[ks, 1]]))
        return float(np.sum(weight * (w[ks] ** 2).sum(axis=1)))

    row = 0
    # average throughput: eta - mean_n surrogate <= 0
    for k in range(K):
        ns = np.flatnonzero(served[k])
        ks = np.full(ns.size, k)
        c0 = add_pairs(row, ks, ns, quad[k, ns] / N)
        lin_r.append(np.array([row]))
        lin_c.append(np.array([0]))
        lin_v.append(np.array([1.0]))
        const.append(c0 - const_pair[k, ns].sum() / N)
        row += 1
    # per-slot floors on served pairs of users with a positive MRR
    mrr_k, mrr_n = np.nonzero(served & (theta[:, None] > 0))
    for k, n in zip(mrr_k, mrr_n):
        c0 = add_pairs(row, np.array([k]), np.array([n]), np.array([quad[k, n]]))
        lin_r.append(np.array([row]))
        lin_c.append(np.array([0]))
        lin_v.append(np.array([theta[k]]))
        const.append(c0 - const_pair[k, n])
        row += 1
    # speed: ||u_{n+1} - u_n||^2 <= (S_max / L)^2
    smax2 = (scenario.uav.s_max / L) ** 2
    for n in range(N - 1):
        for idx in (ux, uy):
            a_, b_ = idx[n], idx[n + 1]
            rows.append(np.full(4, row))
            ii.append(np.array([a_, b_, a_, b_]))
            jj.append(np.array([a_, b_, b_, a_]))
            vals.append(np.array([1.0, 1.0, -1.0, -1.0]))
        const.append(-smax2)
        row += 1
    nv = 1 + 2 * N
    lin = sp.csr_matrix((np.concatenate(lin_v), (np.concatenate(lin_r), np.concatenate(lin_c))), shape=(row, nv))
    A_eq = np.zeros((2, nv))
    A_eq[0, ux[-1]], A_eq[0, ux[0]] = 1.0, -1.0
    A_eq[1, uy[-1]], A_eq[1, uy[0]] = 1.0, -1.0
    c = np.zeros(nv)
    c[0] = -1.0
    prob = ConvexQcqp(c, np.concatenate(rows), np.concatenate(ii), np.concatenate(jj), np.concatenate(vals),
                      lin, np.array(const), A_eq, np.zeros(2), check_psd=False)
    return prob, center


def solve_trajectory_step(scenario: Scenario, allocation: Allocation, theta, anchor: Trajectory):
    """One SCA step: optimize the waypoints against tangents built at ``anchor``.

    Returns ``(trajectory, eta_lb)``. The result is never worse than the anchor
    in terms of the surrogate objective.
    """
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (scenario.num_users,))
    coeffs = sca_coefficients(scenario, allocation, anchor)
    eta_anchor = surrogate_eta(coeffs, allocation, anchor, scenario, theta)
    prob, center = build_trajectory_qcqp(scenario, allocation, theta, coeffs)
    u0 = ((anchor.waypoints - center) / LENGTH_UNIT).ravel()
    z0 = np.concatenate([[eta_anchor - 1e-3 * abs(eta_anchor) - 1e-9], u0])
    res = solve_qcqp(prob, z0)
    if res.status is QcqpStatus.INFEASIBLE:
        raise TrajectoryStepInfeasible("surrogate trajectory problem has no strictly feasible point")
    way = center + LENGTH_UNIT * res.x[1:].reshape(-1, 2)
    way[-1] = way[0]
    traj = Trajectory(way)
    eta_lb = surrogate_eta(coeffs, allocation, traj, scenario, theta)
    hops_ok = np.all(traj.hop_lengths() <= scenario.uav.s_max * (1 + 1e-9) + 1e-9)
    if not hops_ok or eta_lb < eta_anchor:
        return anchor, eta_anchor
    return traj, eta_lb


def sca_loop(scenario: Scenario, allocation: Allocation, theta, initial: Trajectory,
             rel_tol: float = 1e-4, max_iter: int = 30):
    """Re-anchored SCA steps until the lower bound stalls.

    Returns ``(trajectory, eta, history)`` where ``eta`` is the true common
    throughput at the final trajectory and ``history`` the surrogate values.
    """
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (scenario.num_users,))
    traj = initial
    history = []
    for _ in range(max_iter):
        traj_new, eta_lb = solve_trajectory_step(scenario, allocation, theta, traj)
        history.append(eta_lb)
        traj = traj_new
        if len(history) >= 2 and eta_lb - history[-2] < rel_tol * max(abs(history[-2]), 1e-12):
            break
        if len(history) == 1 and traj_new is initial:
            break
    eta = achievable_eta(rate_matrix(scenario, traj, allocation), theta)
    return traj, eta, history
