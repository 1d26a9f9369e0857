"""Block coordinate descent over allocation and trajectory, plus reference trajectories.

The outer loop alternates an optimal allocation solve for the current
trajectory with one SCA trajectory step for the current allocation. While the
trajectory step runs, the per-slot rate floors use temporary MRR values that
start at 1 for every user with a positive target and are annealed down to the
targets. This keeps early trajectories compact for users that need a
guaranteed rate in every slot.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .allocation import AllocationSolution, solve_allocation
from .scenario import (Allocation, FeasibilityReport, Scenario, Trajectory, achievable_eta, check_feasibility,
                       rate_matrix)
from .trajectory import TrajectoryStepInfeasible, solve_trajectory_step

log = logging.getLogger(__name__)

TRAJECTORY_KINDS = ("proposed", "fly_and_hover", "circular", "static")


@dataclass
class BcdConfig:
    """Outer-loop settings.

    Parameters
    ----------
    l_max : int
        Number of annealing steps used to define the MRR decrement.
    epsilon : float
        Relative improvement below which the loop stops (once annealing is done).
    schedule : {"literal", "constant"}
        ``"literal"`` subtracts ``(r + 1)`` decrements at outer iteration ``r``;
        ``"constant"`` subtracts one decrement per iteration.
    """

    l_max: int = 10
    epsilon: float = 1e-3
    max_outer_iterations: int = 60
    theta_targets: Optional[np.ndarray] = None
    schedule: str = "literal"
    allocation_method: str = "auto"
    gap_tol: float = 1e-6
    max_retries: int = 5

    def __post_init__(self):
        if int(self.l_max) != self.l_max or self.l_max < 1:
            raise ValueError(f"l_max must be a positive integer, got {self.l_max}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if self.schedule not in ("literal", "constant"):
            raise ValueError(f"schedule must be 'literal' or 'constant', got {self.schedule!r}")
        if self.theta_targets is not None:
            self.theta_targets = np.asarray(self.theta_targets, dtype=float)


@dataclass
class SolveReport:
    eta: float
    trajectory: Trajectory
    allocation: Allocation
    eta_history: List[float]
    theta_temp_history: List[np.ndarray]
    termination: str
    elapsed: float
    theta: np.ndarray
    allocation_solution: Optional[AllocationSolution] = None
    feasibility: Optional[FeasibilityReport] = None
    notes: List[str] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.eta_history)


# -- initialization -----------------------------------------------------------

def initial_mrrs(theta_targets) -> np.ndarray:
    """Starting temporary MRRs: 1 for users with a positive target, else 0."""
    theta = np.asarray(theta_targets, dtype=float)
    return np.where(theta > 0, 1.0, 0.0)


def circle_radius(scenario: Scenario, theta=None) -> float:
    """Radius of the initial circle, shrunk if its chords would break the speed limit."""
    theta = scenario.mrrs if theta is None else np.broadcast_to(np.asarray(theta, dtype=float),
                                                                (scenario.num_users,))
    uav = scenario.uav
    c = scenario.centroid
    r_min = float(np.max(np.linalg.norm(scenario.positions - c, axis=1)))
    r0 = min(uav.v_max * uav.period / (2.0 * math.pi), r_min / 2.0)
    r_ini = (1.0 - float(np.mean(theta))) * r0
    N = scenario.num_slots
    if N > 2:
        chord_max = uav.s_max / (2.0 * math.sin(math.pi / (N - 1)))
        r_ini = min(r_ini, chord_max)
    return r_ini


def initial_circular_trajectory(scenario: Scenario, theta=None) -> Trajectory:
    """Circle about the user centroid, traversed once over the period."""
    r = circle_radius(scenario, theta)
    N = scenario.num_slots
    phi = 2.0 * math.pi * np.arange(N) / (N - 1)
    way = scenario.centroid + r * np.column_stack([np.cos(phi), np.sin(phi)])
    way[-1] = way[0]
    return Trajectory(way)


# -- baselines --------------------------------------------------------------------

class InfeasibleTour(ValueError):
    pass


def _tour_order(scenario: Scenario) -> List[int]:
    pos = scenario.positions
    start = int(np.argmin(np.linalg.norm(pos - scenario.centroid, axis=1)))
    order = [start]
    left = set(range(scenario.num_users)) - {start}
    while left:
        here = pos[order[-1]]
        nxt = min(sorted(left), key=lambda j: float(np.linalg.norm(pos[j] - here)))
        order.append(nxt)
        left.remove(nxt)
    return order


def fly_and_hover_trajectory(scenario: Scenario) -> Trajectory:
    """Visit the users at full speed along a closed tour, hovering equally above each."""
    uav = scenario.uav
    N = scenario.num_slots
    dt = uav.slot_duration
    horizon = (N - 1) * dt
    order = _tour_order(scenario)
    stops = scenario.positions[order]
    legs = [(stops[i], stops[(i + 1) % len(stops)]) for i in range(len(stops))]
    travel = sum(float(np.linalg.norm(b - a)) for a, b in legs) / uav.v_max
    K = scenario.num_users
    if travel > horizon * (1 + 1e-12):
        required = travel * N / (N - 1)
        raise InfeasibleTour(f"fly-and-hover needs a period of at least {required:.2f} s "
                             f"(tour takes {travel:.2f} s at full speed), got {uav.period:.2f} s")
    hover = (horizon - travel) / K
    # piecewise timeline: half hover, then (leg, hover) for each stop, last hover halved
    times = [0.0]
    points = [stops[0]]
    t = hover / 2.0
    times.append(t)
    points.append(stops[0])
    for i, (a, b) in enumerate(legs):
        t += float(np.linalg.norm(b - a)) / uav.v_max
        times.append(t)
        points.append(b)
        t += hover / 2.0 if i == len(legs) - 1 else hover
        times.append(t)
        points.append(b)
    times = np.array(times)
    points = np.array(points)
    sample = np.arange(N) * dt
    way = np.column_stack([np.interp(sample, times, points[:, 0]), np.interp(sample, times, points[:, 1])])
    way[-1] = way[0]
    return Trajectory(way)


def baseline_trajectory(scenario: Scenario, kind: str, theta=None) -> Trajectory:
    kind = kind.replace("-", "_")
    if kind == "static":
        return Trajectory.hover(scenario.centroid, scenario.num_slots)
    if kind == "circular":
        return initial_circular_trajectory(scenario, theta)
    if kind == "fly_and_hover":
        return fly_and_hover_trajectory(scenario)
    raise ValueError(f"unknown baseline kind {kind!r}; expected static, circular or fly_and_hover")


# -- outer loop ---------------------------------------------------------------------

def _allocate(scenario, trajectory, theta, config, carried: Optional[Allocation]):
    sol = solve_allocation(scenario, trajectory, theta, method=config.allocation_method, gap_tol=config.gap_tol)
    if carried is not None:
        # the previous allocation is feasible here too; keep it if the solver came out lower
        eta_carried = achievable_eta(rate_matrix(scenario, trajectory, carried), theta)
        if eta_carried > sol.eta:
            sol = AllocationSolution(eta_carried, carried, sol.dual, sol.kkt_report, sol.dual_bound,
                                     sol.method + "+carried", sol.iterations, sol.elapsed)
    return sol


def _snap(theta_temp, theta):
    """Land exactly on the targets once within roundoff of them."""
    return np.where(theta_temp - theta <= 1e-12, theta, theta_temp)


def run_bcd(scenario: Scenario, config: Optional[BcdConfig] = None,
            initial: Optional[Trajectory] = None) -> SolveReport:
    """Alternate allocation and trajectory updates until the throughput settles."""
    config = config or BcdConfig()
    started = time.perf_counter()
    theta = scenario.mrrs if config.theta_targets is None else np.broadcast_to(
        np.asarray(config.theta_targets, dtype=float), (scenario.num_users,)).copy()
    theta_temp = initial_mrrs(theta)
    theta_step = (theta_temp - theta) / config.l_max
    traj = initial if initial is not None else initial_circular_trajectory(scenario, theta)
    from_targets = bool(np.all(theta_temp == theta))
    eta_hist: List[float] = []
    temp_hist: List[np.ndarray] = []
    notes: List[str] = []
    carried = None
    termination = "max_outer_iterations"
    sol = None
    best = None  # every iterate is feasible for the targets; annealing can lose ground
    at_targets_before = False
    for r in range(config.max_outer_iterations):
        sol = _allocate(scenario, traj, theta, config, carried if from_targets else None)
        eta_hist.append(sol.eta)
        temp_hist.append(theta_temp.copy())
        if best is None or sol.eta > best[0]:
            best = (sol.eta, traj, sol)
        log.debug("outer %d: eta=%.9f theta_temp=%s", r, sol.eta, theta_temp)
        # gains are measured only between iterations that both ran at the targets; the step into
        # the targets follows trajectories shaped by larger temporary MRRs
        if from_targets and at_targets_before:
            prev = eta_hist[-2]
            if sol.eta - prev < config.epsilon * max(abs(prev), 1e-12):
                termination = "converged"
                break
        if r == config.max_outer_iterations - 1:
            break
        at_targets_before = from_targets
        decrement = (r + 1) * theta_step if config.schedule == "literal" else theta_step
        previous = theta_temp
        trial = _snap(np.maximum(previous - decrement, theta), theta)
        for attempt in range(config.max_retries + 1):
            try:
                new_traj, _ = solve_trajectory_step(scenario, sol.allocation, trial, traj)
                break
            except TrajectoryStepInfeasible:
                if attempt == config.max_retries:
                    notes.append(f"iteration {r}: trajectory step infeasible, trajectory kept")
                    new_traj = traj
                    trial = previous
                    break
                trial = _snap(np.maximum(previous - 0.5 * (previous - trial), theta), theta)
        theta_temp = trial
        from_targets = bool(np.all(theta_temp == theta))
        traj = new_traj
        carried = sol.allocation
    if best[0] > sol.eta:
        notes.append(f"returned iterate {eta_hist.index(best[0])} (eta {best[0]:.9g}) over the final one")
    _, traj, sol = best
    report = SolveReport(eta=sol.eta, trajectory=traj, allocation=sol.allocation, eta_history=eta_hist,
                         theta_temp_history=temp_hist, termination=termination,
                         elapsed=time.perf_counter() - started, theta=theta, allocation_solution=sol, notes=notes)
    report.feasibility = check_feasibility(scenario, traj, sol.allocation, sol.eta, theta)
    return report


def solve_fixed(scenario: Scenario, trajectory: Trajectory, theta=None, config: Optional[BcdConfig] = None):
    """Allocation-only solve on a given trajectory, reported like :func:`run_bcd`."""
    config = config or BcdConfig()
    started = time.perf_counter()
    theta = scenario.mrrs if theta is None else np.broadcast_to(np.asarray(theta, dtype=float),
                                                                (scenario.num_users,)).copy()
    sol = solve_allocation(scenario, trajectory, theta, method=config.allocation_method, gap_tol=config.gap_tol)
    report = SolveReport(eta=sol.eta, trajectory=trajectory, allocation=sol.allocation, eta_history=[sol.eta],
                         theta_temp_history=[theta.copy()], termination="allocation_only",
                         elapsed=time.perf_counter() - started, theta=theta, allocation_solution=sol)
    report.feasibility = check_feasibility(scenario, trajectory, sol.allocation, sol.eta, theta)
    return report


def solve_kind(scenario: Scenario, kind: str, theta=None, config: Optional[BcdConfig] = None) -> SolveReport:
    """Solve one cell: ``proposed`` runs the full loop, baselines fix the trajectory."""
    kind = kind.replace("-", "_")
    theta = scenario.mrrs if theta is None else np.broadcast_to(np.asarray(theta, dtype=float),
                                                                (scenario.num_users,)).copy()
    if kind == "proposed":
        base = config or BcdConfig()
        cfg = BcdConfig(base.l_max, base.epsilon, base.max_outer_iterations, theta, base.schedule,
                        base.allocation_method, base.gap_tol, base.max_retries)
        return run_bcd(scenario, cfg)
    return solve_fixed(scenario, baseline_trajectory(scenario, kind, theta), theta, config)


# -- sweeps -------------------------------------------------------------------------

@dataclass
class SweepTable:
    """Rows are grid points, columns trajectory kinds, cells eta (NaN on failure)."""

    parameter: str
    grid: list
    kinds: tuple
    eta: Dict[str, List[float]]
    errors: Dict[str, List[Optional[str]]] = field(default_factory=dict)
    trajectories: Dict[str, list] = field(default_factory=dict)

    def column(self, kind: str) -> np.ndarray:
        return np.asarray(self.eta[kind], dtype=float)


def theta_sweep(scenario: Scenario, theta_grid: Sequence, mode: str = "full_bcd",
                config: Optional[BcdConfig] = None, kinds: Sequence[str] = TRAJECTORY_KINDS) -> SweepTable:
    """Common throughput versus MRR for each trajectory kind.

    ``mode="fixed_trajectory"`` keeps one trajectory per kind for the whole
    grid (the proposed one comes from a full solve at the first grid point, the
    circle uses the MRR-free radius) and only re-solves the allocation.
    ``mode="full_bcd"`` solves every cell independently.
    """
    if mode not in ("fixed_trajectory", "full_bcd"):
        raise ValueError(f"mode must be 'fixed_trajectory' or 'full_bcd', got {mode!r}")
    config = config or BcdConfig()
    grid = [np.broadcast_to(np.asarray(t, dtype=float), (scenario.num_users,)).copy() for t in theta_grid]
    for t in grid:
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError(f"MRR grid values must lie in [0, 1], got {t}")
    table = SweepTable("theta", [g.tolist() for g in grid], tuple(kinds), {k: [] for k in kinds},
                       {k: [] for k in kinds}, {k: [] for k in kinds})
    fixed: Dict[str, Optional[Trajectory]] = {}
    if mode == "fixed_trajectory":
        for kind in kinds:
            try:
                if kind == "proposed":
                    fixed[kind] = solve_kind(scenario, "proposed", grid[0], config).trajectory
                else:
                    fixed[kind] = baseline_trajectory(scenario, kind, np.zeros(scenario.num_users))
            except Exception as exc:  # recorded per cell below
                fixed[kind] = None
                log.warning("no %s trajectory: %s", kind, exc)
    for t in grid:
        for kind in kinds:
            try:
                if mode == "fixed_trajectory":
                    if fixed[kind] is None:
                        raise RuntimeError(f"{kind} trajectory unavailable")
                    rep = solve_fixed(scenario, fixed[kind], t, config)
                else:
                    rep = solve_kind(scenario, kind, t, config)
                table.eta[kind].append(rep.eta)
                table.errors[kind].append(None)
                table.trajectories[kind].append(rep.trajectory)
            except Exception as exc:
                table.eta[kind].append(math.nan)
                table.errors[kind].append(f"{type(exc).__name__}: {exc}")
                table.trajectories[kind].append(None)
    return table


def period_sweep(scenario: Scenario, periods: Sequence[float], theta, slot_time: float = 2.7,
                 config: Optional[BcdConfig] = None, kinds: Sequence[str] = TRAJECTORY_KINDS) -> SweepTable:
    """Common throughput versus period ``T`` with ``N = round(T / slot_time)`` slots."""
    table = SweepTable("period_s", [float(T) for T in periods], tuple(kinds), {k: [] for k in kinds},
                       {k: [] for k in kinds}, {k: [] for k in kinds})
    for T in periods:
        sc = scenario.with_uav(period=float(T), slots=max(2, int(round(T / slot_time))))
        for kind in kinds:
            try:
                rep = solve_kind(sc, kind, theta, config)
                table.eta[kind].append(rep.eta)
                table.errors[kind].append(None)
                table.trajectories[kind].append(rep.trajectory)
            except Exception as exc:
                table.eta[kind].append(math.nan)
                table.errors[kind].append(f"{type(exc).__name__}: {exc}")
                table.trajectories[kind].append(None)
    return table
