"""System model: users, UAV parameters, trajectories, allocations and rates.

All quantities are stored in linear SI units once a :class:`Scenario` is
built; the dB-valued inputs (noise PSD, reference gain) are converted a single
time in :class:`UavParams`. Rates are in bps/Hz.

Indices ``k`` (user) and ``n`` (slot) are zero-based throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

LOG2E = 1.0 / math.log(2.0)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class UserSpec:
    """A ground user: horizontal position ``w_k`` (m) and minimum-rate ratio."""

    position: tuple
    mrr: float = 0.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 2 or not all(math.isfinite(v) for v in pos):
            raise ValueError(f"user position must be a finite 2-vector, got {self.position!r}")
        mrr = float(self.mrr)
        if not (0.0 <= mrr <= 1.0):
            raise ValueError(f"mrr must lie in [0, 1], got {mrr}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "mrr", mrr)


@dataclass(frozen=True)
class UavParams:
    """Physical and discretization parameters of the UAV link.

    Parameters
    ----------
    altitude : float
        Flight altitude ``H`` in meters.
    v_max : float
        Maximum horizontal speed in m/s.
    p_max : float
        Per-slot transmit power budget in W.
    period : float
        Flight period ``T`` in seconds.
    slots : int
        Number of slots ``N`` (``>= 2``).
    bandwidth : float
        System bandwidth ``B`` in Hz.
    noise_psd : float
        Noise power spectral density in dBm/Hz.
    ref_gain_db : float
        Channel power gain at 1 m, in dB.
    """

    altitude: float = 500.0
    v_max: float = 50.0
    p_max: float = 0.1
    period: float = 270.0
    slots: int = 540
    bandwidth: float = 10e6
    noise_psd: float = -169.0
    ref_gain_db: float = -50.0
    # derived, linear scale
    ref_gain: float = field(init=False, repr=False)
    noise_power: float = field(init=False, repr=False)
    gamma0: float = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("altitude", "v_max", "p_max", "period", "bandwidth"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")
            object.__setattr__(self, name, value)
        for name in ("noise_psd", "ref_gain_db"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if int(self.slots) != self.slots or int(self.slots) < 2:
            raise ValueError(f"slots must be an integer >= 2, got {self.slots}")
        object.__setattr__(self, "slots", int(self.slots))

        ref_gain = db_to_linear(self.ref_gain_db)
        noise_power = self.bandwidth * dbm_to_watt(self.noise_psd)
        object.__setattr__(self, "ref_gain", ref_gain)
        object.__setattr__(self, "noise_power", noise_power)
        object.__setattr__(self, "gamma0", ref_gain / noise_power)

    @property
    def slot_duration(self) -> float:
        return self.period / self.slots

    @property
    def s_max(self) -> float:
        """Largest horizontal displacement allowed between consecutive waypoints."""
        return self.v_max * self.slot_duration


@dataclass(frozen=True)
class Scenario:
    users: tuple
    uav: UavParams = field(default_factory=UavParams)

    def __post_init__(self):
        users = tuple(self.users)
        if not users:
            raise ValueError("a scenario needs at least one user")
        object.__setattr__(self, "users", users)
        pos = self.positions
        if len({tuple(p) for p in pos.tolist()}) < len(users):
            warnings.warn("scenario contains users at identical positions", stacklevel=2)

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_slots(self) -> int:
        return self.uav.slots

    @property
    def positions(self) -> np.ndarray:
        return np.array([u.position for u in self.users], dtype=float)

    @property
    def mrrs(self) -> np.ndarray:
        return np.array([u.mrr for u in self.users], dtype=float)

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def with_mrrs(self, theta) -> "Scenario":
        """Copy of the scenario with MRRs replaced (scalar or per-user)."""
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (self.num_users,))
        users = tuple(UserSpec(u.position, float(t)) for u, t in zip(self.users, theta))
        return Scenario(users, self.uav)

    def with_uav(self, **changes) -> "Scenario":
        params = {name: getattr(self.uav, name) for name in
                  ("altitude", "v_max", "p_max", "period", "slots", "bandwidth",
                   "noise_psd", "ref_gain_db")}
        params.update(changes)
        return Scenario(self.users, UavParams(**params))


@dataclass(frozen=True)
class Trajectory:
    """Horizontal UAV waypoints ``q[n]``, shape ``(N, 2)`` in meters."""

    waypoints: np.ndarray

    def __post_init__(self):
        q = np.array(self.waypoints, dtype=float)
        if q.ndim != 2 or q.shape[1] != 2 or q.shape[0] < 2:
            raise ValueError(f"waypoints must have shape (N, 2) with N >= 2, got {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("waypoints must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "waypoints", q)

    def __len__(self):
        return self.waypoints.shape[0]

    @classmethod
    def hover(cls, point, slots: int) -> "Trajectory":
        return cls(np.tile(np.asarray(point, dtype=float), (slots, 1)))

    def hop_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def spread(self) -> float:
        """Largest distance of a waypoint from the waypoint mean."""
        q = self.waypoints
        return float(np.max(np.linalg.norm(q - q.mean(axis=0), axis=1)))


@dataclass(frozen=True)
class Allocation:
    """Bandwidth fractions and powers (W), both of shape ``(K, N)``."""

    bandwidth: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        a = np.array(self.bandwidth, dtype=float)
        p = np.array(self.power, dtype=float)
        if a.ndim != 2 or a.shape != p.shape:
            raise ValueError(f"bandwidth and power must be equal-shape matrices, got {a.shape} and {p.shape}")
        a.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "bandwidth", a)
        object.__setattr__(self, "power", p)

    @classmethod
    def uniform(cls, scenario: Scenario) -> "Allocation":
        K, N = scenario.num_users, scenario.num_slots
        return cls(np.full((K, N), 1.0 / K), np.full((K, N), scenario.uav.p_max / K))

    @classmethod
    def zeros(cls, scenario: Scenario) -> "Allocation":
        shape = (scenario.num_users, scenario.num_slots)
        return cls(np.zeros(shape), np.zeros(shape))


def _check_shapes(scenario: Scenario, trajectory: Trajectory, allocation: Optional[Allocation] = None):
    if len(trajectory) != scenario.num_slots:
        raise ValueError(f"trajectory has {len(trajectory)} waypoints, scenario expects {scenario.num_slots}")
    if allocation is not None and allocation.bandwidth.shape != (scenario.num_users, scenario.num_slots):
        raise ValueError(f"allocation shape {allocation.bandwidth.shape} does not match "
                         f"(K, N) = ({scenario.num_users}, {scenario.num_slots})")


def squared_distances(positions: np.ndarray, waypoints: np.ndarray) -> np.ndarray:
    """Horizontal squared distances ``||q[n] - w_k||^2`` as a ``(K, N)`` matrix."""
    diff = waypoints[None, :, :] - positions[:, None, :]
    return np.einsum("knd,knd->kn", diff, diff)


def channel_gains(scenario: Scenario, trajectory: Trajectory) -> np.ndarray:
    """Free-space power gains ``h_k[n]`` for all users and slots, shape ``(K, N)``."""
    _check_shapes(scenario, trajectory)
    H = scenario.uav.altitude
    return scenario.uav.ref_gain / (H * H + squared_distances(scenario.positions, trajectory.waypoints))


def channel_gain(scenario: Scenario, trajectory: Trajectory, k: int, n: int) -> float:
    """Channel power gain between the UAV at slot ``n`` and user ``k``."""
    K, N = scenario.num_users, len(trajectory)
    if not (0 <= k < K) or not (0 <= n < N):
        raise IndexError(f"(k, n) = ({k}, {n}) outside [0, {K}) x [0, {N})")
    H = scenario.uav.altitude
    d2 = float(np.sum((trajectory.waypoints[n] - scenario.positions[k]) ** 2))
    return scenario.uav.ref_gain / (H * H + d2)


def gain_to_noise(scenario: Scenario, trajectory: Trajectory) -> np.ndarray:
    """``g_k[n] = h_k[n] / (B N_0)`` in 1/W, shape ``(K, N)``."""
    return channel_gains(scenario, trajectory) / scenario.uav.noise_power


def instantaneous_rate(alpha, power, gain):
    """OFDMA rate ``alpha * log2(1 + p g / alpha)`` in bps/Hz.

    Vectorized; entries with ``alpha == 0`` evaluate to exactly 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    power = np.asarray(power, dtype=float)
    gain = np.asarray(gain, dtype=float)
    served = alpha > 0
    safe_alpha = np.where(served, alpha, 1.0)
    rate = np.where(served, alpha * np.log1p(power * gain / safe_alpha) * LOG2E, 0.0)
    if rate.ndim == 0:
        return float(rate)
    return rate


def rate_matrix(scenario: Scenario, trajectory: Trajectory, allocation: Allocation) -> np.ndarray:
    _check_shapes(scenario, trajectory, allocation)
    return instantaneous_rate(allocation.bandwidth, allocation.power, gain_to_noise(scenario, trajectory))


def average_throughputs(scenario: Scenario, trajectory: Trajectory, allocation: Allocation) -> np.ndarray:
    return rate_matrix(scenario, trajectory, allocation).mean(axis=1)


def average_throughput(scenario: Scenario, trajectory: Trajectory, allocation: Allocation, k: int) -> float:
    """Period-average throughput ``R_k`` of user ``k``."""
    if not 0 <= k < scenario.num_users:
        raise IndexError(f"user index {k} out of range")
    return float(rate_matrix(scenario, trajectory, allocation)[k].sum() / scenario.num_slots)


def achievable_eta(rates: np.ndarray, theta) -> float:
    """Largest common throughput supported by a fixed rate matrix.

    That is ``max eta`` subject to ``mean_n r[k, n] >= eta`` and
    ``r[k, n] >= theta_k * eta``.
    """
    rates = np.asarray(rates, dtype=float)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (rates.shape[0],))
    eta = float(rates.mean(axis=1).min())
    active = theta > 0
    if np.any(active):
        eta = min(eta, float(np.min(rates[active] / theta[active, None])))
    return eta


@dataclass(frozen=True)
class Violation:
    constraint: str
    index: tuple
    slack: float

    def __str__(self):
        return f"{self.constraint}{list(self.index)}: slack {self.slack:.3e}"


@dataclass
class FeasibilityReport:
    violations: List[Violation]
    tol: float

    @property
    def feasible(self) -> bool:
        return not self.violations

    def by_constraint(self, name: str) -> List[Violation]:
        return [v for v in self.violations if v.constraint == name]

    def __bool__(self):
        return self.feasible


def check_feasibility(scenario: Scenario, trajectory: Trajectory, allocation: Allocation,
                      eta: float, theta: Optional[Sequence[float]] = None,
                      tol: float = 1e-6) -> FeasibilityReport:
    """List every violated constraint of the joint problem at a candidate point.

    Slack is signed (negative means violated). Tolerances are relative to the
    natural scale of each constraint family.

    Parameters
    ----------
    theta : sequence of float, optional
        MRRs to check against; defaults to the scenario's own.
    """
    _check_shapes(scenario, trajectory, allocation)
    theta = scenario.mrrs if theta is None else np.broadcast_to(
        np.asarray(theta, dtype=float), (scenario.num_users,))
    uav = scenario.uav
    found: List[Violation] = []

    def flag(name, slack, scale):
        slack = np.atleast_1d(np.asarray(slack, dtype=float))
        bad = slack < -tol * scale
        for idx in zip(*np.nonzero(bad)):
            found.append(Violation(name, tuple(int(i) for i in idx), float(slack[idx])))

    alpha, power = allocation.bandwidth, allocation.power
    rates = rate_matrix(scenario, trajectory, allocation)
    eta_scale = max(1.0, abs(eta))

    flag("average_rate", rates.mean(axis=1) - eta, eta_scale)
    flag("min_rate_ratio", rates - theta[:, None] * eta, eta_scale)
    flag("power_budget", uav.p_max - power.sum(axis=0), uav.p_max)
    flag("power_nonneg", power, uav.p_max)
    flag("bandwidth_budget", 1.0 - alpha.sum(axis=0), 1.0)
    flag("bandwidth_lower", alpha, 1.0)
    flag("bandwidth_upper", 1.0 - alpha, 1.0)
    flag("power_without_band", np.where(alpha <= 0, -np.abs(power), 0.0), uav.p_max)
    flag("speed", uav.s_max - trajectory.hop_lengths(), uav.s_max)
    gap = float(np.linalg.norm(trajectory.waypoints[0] - trajectory.waypoints[-1]))
    flag("periodicity", np.array([-gap]), max(1.0, uav.s_max))
    return FeasibilityReport(found, tol)
