import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_small_scenario, random_trajectory, square_scenario
from uavofdma.allocation import (DualState, bandwidth_indicator, bandwidth_utility, dual_function, recover_primal,
                                 solve_allocation, subgradients, waterfill_power_density)
from uavofdma.oracle import oracle_allocation
from uavofdma.scenario import (Scenario, Trajectory, UavParams, UserSpec, average_throughputs, check_feasibility,
                               gain_to_noise, rate_matrix)

LN2 = math.log(2.0)


def one_user(slots=2, mrr=0.0):
    return Scenario((UserSpec((0.0, 0.0), mrr),), UavParams(slots=slots, period=2.7 * slots))


def two_symmetric(slots=4, mrr=0.0):
    users = (UserSpec((-300.0, 0.0), mrr), UserSpec((300.0, 0.0), mrr))
    return Scenario(users, UavParams(slots=slots, period=2.7 * slots))


# -- closed forms --------------------------------------------------------------------

def test_waterfill_clipped_branch():
    assert waterfill_power_density(1.0, 0.0, 10.0, 0.01, 4) == 0.0


def test_waterfill_boundary_and_interior_examples():
    assert waterfill_power_density(1.0, 0.0, 1.0 / LN2, 1.0, 1) == pytest.approx(0.0, abs=1e-15)
    assert waterfill_power_density(2.0, 0.0, 1.0 / LN2, 2.0, 1) == pytest.approx(1.5, abs=1e-15)


def test_waterfill_beta_floor_and_cap():
    assert waterfill_power_density(1.0, 0.0, 0.0, 1.0, 1, p_max=0.1) == pytest.approx(100.0)
    assert waterfill_power_density(1.0, 0.0, 0.0, 1.0, 1) > 1e9


@given(lam=st.floats(0, 1), mu=st.floats(0, 1), beta=st.floats(1e-3, 10), g=st.floats(1e-2, 1e3))
def test_waterfill_maximizes_per_unit_lagrangian(lam, mu, beta, g):
    N = 5
    d = waterfill_power_density(lam, mu, beta, g, N)
    best = bandwidth_utility(lam, mu, beta, 0.0, g, d, N)
    for other in np.linspace(0, 2 * d + 1, 41):
        assert bandwidth_utility(lam, mu, beta, 0.0, g, other, N) <= best + 1e-9 * max(1.0, abs(best))


def test_bandwidth_indicator_rules():
    assert bandwidth_indicator(1.0, 0.0, 1.0, 1e6, 10.0, 1.0, 1) == 0
    d = waterfill_power_density(1.0, 0.0, 1.0, 10.0, 1)
    assert d > 0
    assert bandwidth_indicator(1.0, 0.0, 1.0, 0.0, 10.0, d, 1) == 1
    # choose nu equal to the gain so the utility is exactly zero
    util = bandwidth_utility(1.0, 0.0, 1.0, 0.0, 10.0, d, 1)
    assert bandwidth_utility(1.0, 0.0, 1.0, util, 10.0, d, 1) == 0.0
    assert bandwidth_indicator(1.0, 0.0, 1.0, util, 10.0, d, 1) == 0


# -- dual state and dual function -------------------------------------------------------

def test_dual_state_shapes_and_residuals():
    with pytest.raises(ValueError):
        DualState(np.ones(2), np.ones((2, 3)), np.ones(3), np.ones(2))
    d = DualState(np.array([0.5, 0.25]), np.full((2, 2), 0.125), np.ones(2), np.zeros(2))
    theta = np.array([1.0, 0.0])
    assert d.lemma_residual(theta) == pytest.approx(0.75 + 0.25 - 1.0)
    assert d.lemma_residual_minus(theta) == pytest.approx(0.75 - 0.25 - 1.0)
    assert d.is_nonnegative() and not d.scaled(-1.0).is_nonnegative()


def test_dual_function_with_only_budget_multipliers():
    sc = square_scenario(slots=3)
    traj = Trajectory.hover((0.0, 0.0), 3)
    beta, nu = np.array([50.0, 60.0, 70.0]), np.array([5.0, 6.0, 7.0])
    dual = DualState(np.zeros(4), np.zeros((4, 3)), beta, nu)
    dv = dual_function(sc, traj, dual)
    assert np.all(dv.alpha == 0) and np.all(dv.power == 0)
    assert dv.value == pytest.approx(beta.sum() * sc.uav.p_max + nu.sum(), rel=1e-14)
    assert not dv.bounded


def test_dual_function_flags_normalization():
    sc = one_user(slots=2)
    traj = Trajectory.hover((0.0, 0.0), 2)
    ok = DualState(np.array([1.0]), np.zeros((1, 2)), np.ones(2), np.ones(2))
    assert dual_function(sc, traj, ok).bounded
    bad = DualState(np.array([1.5]), np.zeros((1, 2)), np.ones(2), np.ones(2))
    dv = dual_function(sc, traj, bad)
    assert not dv.bounded and dv.lemma_residual == pytest.approx(0.5)
    with pytest.raises(ValueError):
        dual_function(sc, traj, bad.scaled(-1.0))


def test_dual_function_per_slot_matches_grid():
    # hover with two identical slots; the dual separates per slot
    sc = one_user(slots=2)
    traj = Trajectory.hover((0.0, 0.0), 2)
    g = gain_to_noise(sc, traj)[0, 0]
    weight = 0.5  # lambda / N
    beta = weight / (LN2 * (0.05 + 1.0 / g))
    nu = 0.5
    dual = DualState(np.array([1.0]), np.zeros((1, 2)), np.array([beta, beta]), np.array([nu, nu]))
    dv = dual_function(sc, traj, dual)
    a, p = np.meshgrid(np.linspace(0, 1, 1001), np.linspace(0, sc.uav.p_max, 1001), indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(a > 0, a * np.log2(1 + p * g / np.where(a > 0, a, 1.0)), 0.0)
    per_slot = np.max(weight * r - beta * p - nu * a) + beta * sc.uav.p_max + nu
    assert dv.value == pytest.approx(2 * per_slot, rel=1e-4)
    assert dv.value >= 2 * per_slot - 1e-12


def test_subgradient_at_zero_maximizers():
    sc = square_scenario(slots=3)
    traj = Trajectory.hover((0.0, 0.0), 3)
    dual = DualState(np.full(4, 0.25), np.zeros((4, 3)), np.ones(3), np.ones(3))
    sg = subgradients(sc, traj, dual, np.zeros((4, 3)), np.zeros((4, 3)))
    np.testing.assert_allclose(sg.objective.beta, sc.uav.p_max)
    np.testing.assert_allclose(sg.objective.nu, 1.0)
    assert not np.any(sg.objective.lam) and not np.any(sg.objective.mu)
    assert sg.cut is None


def test_subgradient_feasibility_cuts():
    sc = square_scenario(slots=2, theta=0.5)
    traj = Trajectory.hover((0.0, 0.0), 2)
    high = DualState(np.full(4, 0.25), np.full((4, 2), 0.125), np.ones(2), np.ones(2))  # 1 + 0.5 = 1.5
    assert high.lemma_residual(sc.mrrs) == pytest.approx(0.5)
    sg = subgradients(sc, traj, high, np.zeros((4, 2)), np.zeros((4, 2)))
    assert sg.violated == "normalization_high"
    np.testing.assert_allclose(sg.cut.lam, 1.0)
    np.testing.assert_allclose(sg.cut.mu, 0.5)
    neg = DualState(np.full(4, 0.25), np.zeros((4, 2)), np.array([1.0, -1.0]), np.ones(2))
    sg = subgradients(sc, traj, neg, np.zeros((4, 2)), np.zeros((4, 2)))
    assert sg.violated.startswith("nonnegativity:beta") and sg.cut.beta[1] == -1.0


@pytest.mark.parametrize("seed", range(6))
def test_subgradient_inequality_by_finite_differences(seed):
    rng = np.random.default_rng(seed)
    sc = square_scenario(slots=5, theta=rng.uniform(0, 1, 4))
    traj = random_trajectory(rng, sc)
    lam = rng.uniform(0.1, 1, 4)
    mu = rng.uniform(0, 0.2, (4, 5))
    dual = DualState(lam, mu, rng.uniform(1, 200, 5), rng.uniform(0, 2, 5))
    dv = dual_function(sc, traj, dual)
    sg = subgradients(sc, traj, dual, dv.alpha, dv.power).objective
    for _ in range(5):
        d = DualState(rng.normal(size=4) * 0.1, rng.normal(size=(4, 5)) * 0.02, rng.normal(size=5) * 10,
                      rng.normal(size=5) * 0.2)
        h = 1e-5
        moved = DualState(dual.lam + h * d.lam, dual.mu + h * d.mu, dual.beta + h * d.beta, dual.nu + h * d.nu)
        rate = (dual_function(sc, traj, moved).value - dv.value) / h
        slope = (sg.lam @ d.lam + np.sum(sg.mu * d.mu) + sg.beta @ d.beta + sg.nu @ d.nu)
        assert rate >= slope - 1e-6 * max(1.0, abs(slope))


# -- solves ---------------------------------------------------------------------------

def test_single_user_hover_closed_form():
    sc = one_user(slots=3)
    traj = Trajectory.hover((0.0, 0.0), 3)
    sol = solve_allocation(sc, traj, 0.0)
    expected = math.log2(1.0 + sc.uav.p_max * sc.uav.gamma0 / sc.uav.altitude ** 2)
    assert sol.eta == pytest.approx(expected, rel=2e-6)
    np.testing.assert_allclose(sol.allocation.bandwidth, 1.0, atol=1e-9)


def test_recovery_for_single_user_takes_whole_band():
    sc = one_user(slots=4)
    traj = Trajectory(np.array([[0.0, 0.0], [100.0, 0.0], [200.0, 0.0], [0.0, 0.0]]))
    sol = solve_allocation(sc, traj, 0.0)
    rec = recover_primal(sc, traj, sol.dual, 0.0)
    np.testing.assert_allclose(rec.allocation.bandwidth, 1.0, atol=1e-9)
    assert rec.eta == pytest.approx(average_throughputs(sc, traj, rec.allocation)[0], rel=1e-12)
    assert rec.dual_bound >= rec.eta - 1e-9


def test_symmetric_pair_equalizes_throughput():
    sc = two_symmetric(slots=4)
    traj = Trajectory.hover((0.0, 0.0), 4)
    sol = solve_allocation(sc, traj, 0.0)
    R = average_throughputs(sc, traj, sol.allocation)
    assert abs(R[0] - R[1]) <= 1e-6 * sol.eta
    np.testing.assert_allclose(sol.allocation.bandwidth.sum(axis=0), 1.0, atol=1e-8)
    assert sol.eta == pytest.approx(oracle_allocation(sc, traj, 0.0).value, rel=1e-6)


def test_full_mrr_makes_tight_users_rates_constant():
    sc = two_symmetric(slots=5, mrr=1.0)
    q = np.column_stack([np.linspace(-200, 200, 5), np.zeros(5)])
    q[-1] = q[0]
    traj = Trajectory(q)
    sol = solve_allocation(sc, traj)
    r = rate_matrix(sc, traj, sol.allocation)
    assert np.all(r >= sol.eta * (1 - 1e-6))
    for k in range(2):
        if r[k].mean() <= sol.eta * (1 + 1e-6):
            assert np.max(np.abs(r[k] - sol.eta)) <= 1e-4


def test_solution_is_feasible_and_kkt_small(rng):
    for _ in range(4):
        sc = random_small_scenario(rng, max_users=3, max_slots=6)
        traj = random_trajectory(rng, sc)
        sol = solve_allocation(sc, traj)
        report = check_feasibility(sc, traj, sol.allocation, sol.eta)
        assert not [v for v in report.violations if v.constraint not in ("speed", "periodicity")]
        assert sol.kkt_report["stationarity"] <= 1e-6
        assert sol.kkt_report["primal"] <= 1e-8
        assert sol.dual_bound >= sol.eta * (1 - 1e-9)


def test_mrr_monotonicity_on_fixed_trajectory(rng):
    sc = square_scenario(slots=6)
    traj = random_trajectory(rng, sc, spread=500)
    etas = [solve_allocation(sc, traj, t, gap_tol=1e-8).eta for t in np.linspace(0, 1, 6)]
    assert all(b <= a + 1e-6 for a, b in zip(etas, etas[1:]))


def test_methods_agree_with_each_other_and_the_oracle(rng):
    sc = random_small_scenario(rng, max_users=2, max_slots=5)
    traj = random_trajectory(rng, sc)
    ref = oracle_allocation(sc, traj).value
    for method in ("ellipsoid", "interior", "auto"):
        sol = solve_allocation(sc, traj, method=method)
        assert sol.eta == pytest.approx(ref, rel=1e-5), method


def test_auto_on_degenerate_hover_matches_oracle():
    sc = square_scenario(slots=20, period=54.0)
    traj = Trajectory.hover((0.0, 0.0), 20)
    sol = solve_allocation(sc, traj, 0.0)
    assert sol.eta == pytest.approx(oracle_allocation(sc, traj, 0.0).value, rel=1e-5)
    # relaxing the MRRs can only help
    assert sol.eta >= solve_allocation(sc, traj, 1.0).eta * (1 - 1e-6)


def test_rejects_bad_inputs():
    sc = one_user(slots=2)
    traj = Trajectory.hover((0.0, 0.0), 2)
    with pytest.raises(ValueError):
        solve_allocation(sc, traj, 1.5)
    with pytest.raises(ValueError):
        solve_allocation(sc, traj, method="simplex")
