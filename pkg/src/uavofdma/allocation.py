"""Bandwidth and power allocation for a fixed trajectory via Lagrange duality.

The allocation problem is concave in (eta, alpha, p). Its partial Lagrangian
(with multipliers ``lambda`` on the average-rate constraints, ``mu`` on the
per-slot rate floors, ``beta`` on the power budgets and ``nu`` on the
bandwidth budgets) separates into one small problem per user and slot. Each
one is solved in closed form: multi-level water-filling for the power density
and a bang-bang rule for the bandwidth. The dual is minimized with the
ellipsoid method and a primal optimum is recovered from a linear program over
the bandwidth fractions with the power densities held fixed.

Internally powers are normalized by ``P_max`` (``x = p / P_max``), so the
power multiplier carried in flat vectors is ``beta' = beta * P_max``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import Ellipsoid, EmptyEllipsoid, LinearProgram, NumericalBreakdown, ellipsoid_step, solve_lp
from .scenario import LOG2E, Allocation, Scenario, Trajectory, achievable_eta, gain_to_noise, instantaneous_rate

LN2 = math.log(2.0)
BETA_FLOOR = 1e-12
POWER_CAP = 1e3  # in units of P_max
LEMMA_TOL = 1e-4
AUTO_ELLIPSOID_DIM = 24


class AllocationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DualState:
    """Lagrange multipliers of the allocation problem (power multiplier in 1/W)."""

    lam: np.ndarray
    mu: np.ndarray
    beta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        for name in ("lam", "mu", "beta", "nu"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        K = self.lam.size
        N = self.beta.size
        if self.mu.shape != (K, N) or self.nu.shape != (N,):
            raise ValueError(f"inconsistent dual shapes: lam {self.lam.shape}, mu {self.mu.shape}, "
                             f"beta {self.beta.shape}, nu {self.nu.shape}")

    @classmethod
    def zeros(cls, K: int, N: int) -> "DualState":
        return cls(np.zeros(K), np.zeros((K, N)), np.zeros(N), np.zeros(N))

    def lemma_residual(self, theta) -> float:
        """``sum(lambda) + sum(mu * theta) - 1``; zero when the dual is bounded."""
        theta = np.asarray(theta, dtype=float)
        return float(self.lam.sum() + (self.mu * theta[:, None]).sum() - 1.0)

    def lemma_residual_minus(self, theta) -> float:
        """Same residual with the MRR term subtracted (informational only)."""
        theta = np.asarray(theta, dtype=float)
        return float(self.lam.sum() - (self.mu * theta[:, None]).sum() - 1.0)

    def is_nonnegative(self, tol: float = 0.0) -> bool:
        return all(np.all(v >= -tol) for v in (self.lam, self.mu, self.beta, self.nu))

    def scaled(self, factor: float) -> "DualState":
        return DualState(self.lam * factor, self.mu * factor, self.beta * factor, self.nu * factor)


@dataclass
class AllocationSolution:
    eta: float
    allocation: Allocation
    dual: DualState
    kkt_report: dict
    dual_bound: float = math.nan
    method: str = ""
    iterations: int = 0
    elapsed: float = 0.0

    @property
    def duality_gap(self) -> float:
        return self.dual_bound - self.eta


# -- closed-form per-slot maximizers -------------------------------------------

def waterfill_power_density(lam, mu, beta, gain, num_slots: int, p_max: Optional[float] = None):
    """Optimal power per unit bandwidth ``[(lam + N mu) / (N beta ln2) - 1/g]^+``.

    Broadcasts over array arguments. ``beta`` is floored at ``1e-12`` and, when
    ``p_max`` is given, the density is capped at ``1e3 * p_max``.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    beta = np.maximum(np.asarray(beta, dtype=float), BETA_FLOOR)
    gain = np.asarray(gain, dtype=float)
    N = float(num_slots)
    level = (lam + N * mu) / (N * beta * LN2)
    density = np.maximum(level - 1.0 / gain, 0.0)
    if p_max is not None:
        density = np.minimum(density, POWER_CAP * p_max)
    return density if density.ndim else float(density)


def bandwidth_utility(lam, mu, beta, nu, gain, density, num_slots: int):
    """Net Lagrangian gain of giving the whole slot to a user at power density ``density``."""
    weight = (np.asarray(lam, dtype=float) + num_slots * np.asarray(mu, dtype=float)) / num_slots
    density = np.asarray(density, dtype=float)
    util = weight * np.log1p(density * np.asarray(gain, dtype=float)) * LOG2E \
        - np.asarray(beta, dtype=float) * density - np.asarray(nu, dtype=float)
    return util if util.ndim else float(util)


def bandwidth_indicator(lam, mu, beta, nu, gain, density, num_slots: int):
    """Bang-bang bandwidth choice: 1 where the net utility is positive, else 0.

    An exact zero utility (a tie, where any fraction is optimal) maps to 0.
    """
    util = np.asarray(bandwidth_utility(lam, mu, beta, nu, gain, density, num_slots))
    out = (util > 0).astype(np.int8)
    return out if out.ndim else int(out)


# -- flat dual problem used by the solvers --------------------------------------

class _DualProblem:
    """Dual function on flat normalized vectors ``y = (lam, mu[active], beta', nu)``."""

    def __init__(self, gain_norm: np.ndarray, theta: np.ndarray):
        self.g = np.asarray(gain_norm, dtype=float)
        self.K, self.N = self.g.shape
        self.theta = np.asarray(theta, dtype=float)
        self.active_users = self.theta > 0
        self.mu_mask = np.repeat(self.active_users[:, None], self.N, axis=1)
        self.n_mu = int(self.mu_mask.sum())
        self.dim = self.K + self.n_mu + 2 * self.N
        self.inv_g = 1.0 / self.g
        # gradient of sum(lam) + sum(mu * theta), the bounded-dual normalization
        self.norm_grad = np.concatenate([np.ones(self.K),
                                         np.broadcast_to(self.theta[:, None], (self.K, self.N))[self.mu_mask],
                                         np.zeros(2 * self.N)])
        s = self.K + self.n_mu
        self.sl_lam = slice(0, self.K)
        self.sl_mu = slice(self.K, s)
        self.sl_beta = slice(s, s + self.N)
        self.sl_nu = slice(s + self.N, s + 2 * self.N)

    def split(self, y):
        mu = np.zeros((self.K, self.N))
        mu[self.mu_mask] = y[self.sl_mu]
        return y[self.sl_lam], mu, y[self.sl_beta], y[self.sl_nu]

    def pack(self, lam, mu, beta_n, nu):
        return np.concatenate([lam, mu[self.mu_mask], beta_n, nu])

    def normalization(self, y) -> float:
        return float(self.norm_grad @ y)

    def maximizers(self, y):
        lam, mu, beta_n, nu = self.split(y)
        weight = lam[:, None] / self.N + mu
        density = np.clip(weight / (np.maximum(beta_n, BETA_FLOOR) * LN2) - self.inv_g, 0.0, POWER_CAP)
        spectral = np.log1p(density * self.g) * LOG2E
        util = weight * spectral - beta_n * density - nu
        alpha = (util > 0).astype(float)
        return alpha, density, spectral, util

    def evaluate(self, y):
        """Dual value (with the ``eta = 0`` convention), a subgradient and the maximizers."""
        alpha, density, spectral, util = self.maximizers(y)
        beta_n = y[self.sl_beta]
        nu = y[self.sl_nu]
        value = float(np.sum(np.maximum(util, 0.0)) + beta_n.sum() + nu.sum())
        rate = alpha * spectral
        grad = np.empty(self.dim)
        grad[self.sl_lam] = rate.mean(axis=1)
        grad[self.sl_mu] = rate[self.mu_mask]
        grad[self.sl_beta] = 1.0 - (alpha * density).sum(axis=0)
        grad[self.sl_nu] = 1.0 - alpha.sum(axis=0)
        return value, grad, alpha, density, spectral

    def eta_upper(self) -> float:
        """Throughput if every user could have the full band and power in every slot."""
        full = np.log1p(self.g) * LOG2E
        return float(full.mean(axis=1).min())

    def search_box(self, eq_tol: float):
        hi_norm = 1.0 + eq_tol
        eta_ub = self.eta_upper() * hi_norm
        theta_mu = np.broadcast_to(self.theta[:, None], (self.K, self.N))[self.mu_mask]
        upper = np.concatenate([np.full(self.K, hi_norm), hi_norm / theta_mu, np.full(2 * self.N, eta_ub)])
        return np.zeros(self.dim), upper


def _theta_vector(scenario: Scenario, theta) -> np.ndarray:
    if theta is None:
        return scenario.mrrs.copy()
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (scenario.num_users,)).copy()
    if np.any(theta < 0) or np.any(theta > 1) or not np.all(np.isfinite(theta)):
        raise ValueError(f"MRR values must lie in [0, 1], got {theta}")
    return theta


def _normalized_gain(scenario: Scenario, trajectory: Trajectory) -> np.ndarray:
    return gain_to_noise(scenario, trajectory) * scenario.uav.p_max


def _to_dual_state(prob: _DualProblem, y, p_max: float) -> DualState:
    lam, mu, beta_n, nu = prob.split(y)
    return DualState(lam, mu, beta_n / p_max, nu)


def _from_dual_state(prob: _DualProblem, dual: DualState, p_max: float):
    if dual.lam.size != prob.K or dual.beta.size != prob.N:
        raise ValueError("dual state does not match the scenario dimensions")
    return prob.pack(dual.lam, dual.mu, dual.beta * p_max, dual.nu)


@dataclass
class DualValue:
    value: float
    alpha: np.ndarray
    power: np.ndarray
    density: np.ndarray
    bounded: bool
    lemma_residual: float


def dual_function(scenario: Scenario, trajectory: Trajectory, dual: DualState, theta=None) -> DualValue:
    """Dual function value and per-slot maximizers, using ``eta = 0``.

    ``bounded`` is False when the normalization ``sum(lam) + sum(mu theta) = 1``
    fails by more than the tolerance; the true dual is then ``+inf``.
    """
    theta = _theta_vector(scenario, theta)
    if not dual.is_nonnegative():
        raise ValueError("dual multipliers must be nonnegative")
    p_max = scenario.uav.p_max
    prob = _DualProblem(_normalized_gain(scenario, trajectory), theta)
    y = _from_dual_state(prob, dual, p_max)
    value, _, alpha, density, _ = prob.evaluate(y)
    resid = dual.lemma_residual(theta)
    return DualValue(value, alpha, alpha * density * p_max, density * p_max, abs(resid) <= LEMMA_TOL, resid)


@dataclass
class Subgradients:
    """Objective subgradient and, when the dual is out of its domain, a feasibility cut."""

    objective: DualState
    cut: Optional[DualState] = None
    violated: Optional[str] = None


def subgradients(scenario: Scenario, trajectory: Trajectory, dual: DualState, alpha, power,
                 theta=None) -> Subgradients:
    """Subgradient of the dual function at ``dual`` from its maximizers ``(alpha, power)``.

    The power-multiplier component is in W (matching ``beta`` in 1/W).
    """
    theta = _theta_vector(scenario, theta)
    alpha = np.asarray(alpha, dtype=float)
    power = np.asarray(power, dtype=float)
    rate = instantaneous_rate(alpha, power, gain_to_noise(scenario, trajectory))
    K, N = rate.shape
    obj = DualState(rate.mean(axis=1), np.where(theta[:, None] > 0, rate, 0.0),
                    scenario.uav.p_max - power.sum(axis=0), 1.0 - alpha.sum(axis=0))
    # nonnegativity first, then the normalization constraint
    for name in ("lam", "mu", "beta", "nu"):
        arr = getattr(dual, name)
        if np.any(arr < 0):
            idx = np.unravel_index(int(np.argmin(arr)), arr.shape)
            parts = {n: np.zeros_like(getattr(dual, n)) for n in ("lam", "mu", "beta", "nu")}
            parts[name][idx] = -1.0
            return Subgradients(obj, DualState(**parts), f"nonnegativity:{name}{list(idx)}")
    resid = dual.lemma_residual(theta)
    if abs(resid) > LEMMA_TOL:
        sign = 1.0 if resid > 0 else -1.0
        mu_dir = np.where(theta[:, None] > 0, np.broadcast_to(theta[:, None], (K, N)), 0.0)
        cut = DualState(sign * np.ones(K), sign * mu_dir, np.zeros(N), np.zeros(N))
        return Subgradients(obj, cut, "normalization_high" if sign > 0 else "normalization_low")
    return Subgradients(obj)


# -- primal recovery --------------------------------------------------------------

def _recovery_lp(spectral, density, theta, active):
    """max eta over alpha with the power densities fixed (normalized power)."""
    K, N = spectral.shape
    useful = (spectral > 0) & (density > 0)
    idx = np.flatnonzero(useful.ravel())
    nv = 1 + idx.size
    ks, ns = np.unravel_index(idx, (K, N))
    rates = spectral.ravel()[idx]
    rows = []
    rhs = []
    # eta - mean_n(L alpha) <= 0
    A_avg = np.zeros((K, nv))
    A_avg[:, 0] = 1.0
    A_avg[ks, 1 + np.arange(idx.size)] = -rates / N
    rows.append(A_avg)
    rhs.append(np.zeros(K))
    # theta eta - L alpha <= 0 for every slot of an MRR user
    act_k, act_n = np.nonzero(np.repeat(active[:, None], N, axis=1))
    if act_k.size:
        A_mrr = np.zeros((act_k.size, nv))
        A_mrr[:, 0] = theta[act_k]
        pos = np.full((K, N), -1)
        pos[ks, ns] = np.arange(idx.size)
        cols = pos[act_k, act_n]
        has = cols >= 0
        A_mrr[np.flatnonzero(has), 1 + cols[has]] = -rates[cols[has]]
        rows.append(A_mrr)
        rhs.append(np.zeros(act_k.size))
    A_pow = np.zeros((N, nv))
    A_pow[ns, 1 + np.arange(idx.size)] = density.ravel()[idx]
    A_bw = np.zeros((N, nv))
    A_bw[ns, 1 + np.arange(idx.size)] = 1.0
    rows += [A_pow, A_bw]
    rhs += [np.ones(N), np.ones(N)]
    c = np.zeros(nv)
    c[0] = 1.0
    upper = np.concatenate([[np.inf], np.ones(idx.size)])
    lp = LinearProgram(c=c, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), upper=upper)
    res = solve_lp(lp)
    if not res.ok:
        raise AllocationError(f"primal recovery LP failed with status {res.status.value}")
    alpha = np.zeros((K, N))
    alpha.ravel()[idx] = np.clip(res.x[1:], 0.0, 1.0)
    return alpha


def _kkt_report(prob: _DualProblem, y, alpha, x, eta, bound) -> dict:
    """Residuals of the optimality conditions for a primal-dual pair (normalized units)."""
    g = prob.g
    rate = instantaneous_rate(alpha, x, g)
    lam, mu, beta_n, nu = prob.split(y)
    scale = max(eta, 1e-12)
    avg_slack = rate.mean(axis=1) - eta
    mrr_slack = np.where(prob.mu_mask, rate - prob.theta[:, None] * eta, 0.0)
    pow_slack = 1.0 - x.sum(axis=0)
    bw_slack = 1.0 - alpha.sum(axis=0)
    primal = max(0.0, -avg_slack.min() / scale, -mrr_slack.min() / scale, -pow_slack.min(), -bw_slack.min(),
                 -alpha.min(), -x.min())
    dual_feas = max(0.0, -float(y.min()), abs(prob.normalization(y) - 1.0))
    # marginal utility of power equals beta' wherever power is used
    weight = lam[:, None] / prob.N + mu
    on = (alpha > 0) & (x > 0)
    if np.any(on):
        dens = x[on] / alpha[on]
        marginal = weight[on] * g[on] / (LN2 * (1.0 + dens * g[on]))
        bb = np.broadcast_to(beta_n, g.shape)[on]
        station = float(np.max(np.abs(marginal - bb) / np.maximum(bb, 1e-12)))
    else:
        station = 0.0
    comp = max(float(np.max(np.abs(lam * avg_slack), initial=0.0)),
               float(np.max(np.abs(mu * mrr_slack), initial=0.0)),
               float(np.max(np.abs(beta_n * pow_slack), initial=0.0)),
               float(np.max(np.abs(nu * bw_slack), initial=0.0))) / scale
    return {"primal": float(primal), "dual": float(dual_feas), "stationarity": station,
            "complementarity": comp, "gap": float((bound - eta) / scale)}


def _assemble(scenario, prob, y, alpha, x, eta, bound, method, iterations, started) -> AllocationSolution:
    p_max = scenario.uav.p_max
    alloc = Allocation(alpha, x * p_max)
    return AllocationSolution(eta=float(eta), allocation=alloc, dual=_to_dual_state(prob, y, p_max),
                              kkt_report=_kkt_report(prob, y, alpha, x, eta, bound), dual_bound=float(bound),
                              method=method, iterations=iterations, elapsed=time.perf_counter() - started)


def _recover(prob: _DualProblem, y):
    """LP recovery at a normalized dual ``y`` (``normalization(y) == 1``)."""
    value, _, _, density, spectral = prob.evaluate(y)
    alpha = _recovery_lp(spectral, density, prob.theta, prob.active_users)
    x = alpha * density
    eta = achievable_eta(alpha * spectral, prob.theta)
    return eta, alpha, x, value


def recover_primal(scenario: Scenario, trajectory: Trajectory, dual: DualState, theta=None) -> AllocationSolution:
    """Primal allocation from a (near-)optimal dual by the fixed-density LP.

    The dual is first rescaled so that ``sum(lam) + sum(mu theta) = 1``; the dual
    function is positively homogeneous, so this leaves the bound unchanged.
    """
    started = time.perf_counter()
    theta = _theta_vector(scenario, theta)
    prob = _DualProblem(_normalized_gain(scenario, trajectory), theta)
    y = _from_dual_state(prob, dual, scenario.uav.p_max)
    a = prob.normalization(y)
    if not a > 0:
        raise AllocationError("dual state has zero normalization; it carries no information")
    y = np.maximum(y, 0.0) / a
    eta, alpha, x, bound = _recover(prob, y)
    return _assemble(scenario, prob, y, alpha, x, eta, bound, "recovery", 0, started)


# -- ellipsoid dual search --------------------------------------------------------

@dataclass
class EllipsoidTrace:
    steps: int = 0
    objective_cuts: int = 0
    feasibility_cuts: int = 0
    best_history: list = field(default_factory=list)
    stop_reason: str = ""


def _ellipsoid_search(prob: _DualProblem, gap_tol: float, max_steps: int, eq_tol: float = LEMMA_TOL,
                      diameter_tol: float = 1e-9, plateau: Optional[int] = None):
    m = prob.dim
    lower, upper = prob.search_box(eq_tol)
    E = Ellipsoid.around_box(lower - 1e-3 * (upper - lower), upper)
    plateau = plateau if plateau is not None else max_steps
    trace = EllipsoidTrace()
    best = math.inf
    best_y = None
    best_eta = -math.inf
    best_primal = None
    primal_y = None
    last_improve = 0
    last_check = -5 * m
    box_scale = float(np.max(upper - lower))
    while trace.steps < max_steps:
        y = E.center
        neg = int(np.argmin(y))
        a = prob.normalization(y)
        if y[neg] < 0:
            cut = np.zeros(m)
            cut[neg] = -1.0
            depth = -y[neg]
            trace.feasibility_cuts += 1
        elif abs(a - 1.0) > eq_tol:
            sign = 1.0 if a > 1.0 else -1.0
            cut = sign * prob.norm_grad
            depth = abs(a - 1.0) - eq_tol
            trace.feasibility_cuts += 1
        else:
            value, grad, *_ = prob.evaluate(y)
            ratio = value / a
            if ratio < best:
                if ratio < best * (1.0 - 1e-12):
                    last_improve = trace.steps
                best = ratio
                best_y = y / a
            # keep only points whose normalized dual value can beat the best one
            cut = grad - best * prob.norm_grad
            depth = value - best * a
            trace.objective_cuts += 1
            if best_y is not None and trace.steps - last_check >= 5 * m and last_improve == trace.steps:
                last_check = trace.steps
                eta, alpha, x, _ = _recover(prob, best_y)
                if eta > best_eta:
                    best_eta, best_primal, primal_y = eta, (alpha, x), best_y
                trace.best_history.append((trace.steps, best, best_eta))
                if best - best_eta <= gap_tol * max(best_eta, 1e-12):
                    trace.stop_reason = "gap"
                    break
        trace.steps += 1
        try:
            E = ellipsoid_step(E, cut, depth)
        except EmptyEllipsoid:
            # no point of the localizer can beat the best normalized value
            trace.stop_reason = "localizer_empty"
            break
        except NumericalBreakdown:
            trace.stop_reason = "breakdown"
            break
        if trace.steps - last_improve > plateau and best_y is not None:
            trace.stop_reason = "plateau"
            break
        if trace.steps % 64 == 0 and float(np.max(E.half_widths())) < diameter_tol * box_scale:
            trace.stop_reason = "diameter"
            break
    else:
        trace.stop_reason = "max_steps"
    if best_y is None:
        raise AllocationError("ellipsoid search never reached the normalized dual domain")
    eta, alpha, x, _ = _recover(prob, best_y)
    # prefer the recovery at the returned dual (exact water-filling) unless an earlier one is clearly better
    if best_primal is None or eta >= best_eta - gap_tol * max(abs(best_eta), 1e-12):
        best_primal, primal_y = (alpha, x), best_y
        best_eta = eta
    # the returned dual is the one the primal's power densities were water-filled at
    return best, primal_y, best_eta, best_primal, trace


def solve_allocation(scenario: Scenario, trajectory: Trajectory, theta=None, method: str = "auto",
                     gap_tol: float = 1e-6, max_steps: Optional[int] = None,
                     fallback: bool = True) -> AllocationSolution:
    """Optimal bandwidth and power allocation for a fixed trajectory.

    Parameters
    ----------
    theta : array_like, optional
        MRR values to enforce; defaults to the scenario's.
    method : {"auto", "ellipsoid", "interior"}
        ``"ellipsoid"`` minimizes the dual with the ellipsoid method.
        ``"interior"`` follows the central path of a primal log-barrier and
        reads the multipliers off it; practical when the dual dimension
        ``K + K_mrr N + 2N`` is large. ``"auto"`` picks the ellipsoid up to
        dimension 24. Both end with the same LP primal recovery.
    gap_tol : float
        Relative duality gap at which the search stops.
    fallback : bool
        If the ellipsoid search stops short of ``gap_tol``, also run the
        central path and keep the better primal and the lower bound
        (reported as method ``"ellipsoid+interior"``).
    """
    started = time.perf_counter()
    theta = _theta_vector(scenario, theta)
    prob = _DualProblem(_normalized_gain(scenario, trajectory), theta)
    if method == "auto":
        method = "ellipsoid" if prob.dim <= AUTO_ELLIPSOID_DIM else "interior"
    if method == "ellipsoid":
        steps = max_steps if max_steps is not None else 4000 * prob.dim
        bound, y, eta, (alpha, x), trace = _ellipsoid_search(prob, gap_tol, steps)
        label = "ellipsoid"
        if trace.stop_reason != "gap" and fallback:
            label = "ellipsoid+interior"
            # the dual stalled short of the gap, typically on a flat (degenerate) optimum where the
            # fixed-density recovery is off; take the central path and keep the better pieces
            alt = solve_allocation(scenario, trajectory, theta, "interior", gap_tol)
            bound = min(bound, alt.dual_bound)
            if alt.eta > eta:
                eta, alpha, x = alt.eta, alt.allocation.bandwidth, alt.allocation.power / scenario.uav.p_max
                y = _from_dual_state(prob, alt.dual, scenario.uav.p_max)
        sol = _assemble(scenario, prob, y, alpha, x, eta, bound, label, trace.steps, started)
        sol.kkt_report["stop_reason"] = trace.stop_reason
        return sol
    if method == "interior":
        from .central_path import central_path_allocation
        y, alpha_b, x_b, newton = central_path_allocation(prob.g, theta, gap_tol=gap_tol)
        y = np.maximum(y, 0.0)
        y = y / prob.normalization(y)
        eta, alpha, x, bound = _recover(prob, y)
        eta_b = achievable_eta(instantaneous_rate(alpha_b, x_b, prob.g), theta)
        # the recovered point satisfies water-filling exactly; the barrier point only wins if clearly better
        if eta_b > eta + gap_tol * max(eta, 1e-12):
            eta, alpha, x = eta_b, alpha_b, x_b
        sol = _assemble(scenario, prob, y, alpha, x, eta, bound, "interior", newton, started)
        sol.kkt_report["stop_reason"] = "gap"
        return sol
    raise ValueError(f"unknown method {method!r}; expected 'auto', 'ellipsoid' or 'interior'")
