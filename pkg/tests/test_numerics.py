import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uavofdma.numerics import (ConvexQcqp, Ellipsoid, EmptyEllipsoid, LinearProgram, LpStatus, NotPositiveSemidefinite,
                               NumericalBreakdown, QcqpStatus, ellipsoid_step, solve_lp, solve_qcqp,
                               volume_ratio_bound)
from uavofdma.oracle import oracle_lp, oracle_qcqp

# -- ellipsoid ----------------------------------------------------------------------


def test_one_dimensional_cut_bisects_interval():
    E = ellipsoid_step(Ellipsoid.ball([0.0], 1.0), [1.0])
    assert E.center[0] == pytest.approx(-0.5, abs=1e-15)
    assert E.shape[0, 0] == pytest.approx(0.25, abs=1e-15)
    E = ellipsoid_step(Ellipsoid.ball([0.0], 1.0), [-2.0])
    assert E.center[0] == pytest.approx(0.5, abs=1e-15)


def test_two_dimensional_central_cut_center():
    E = ellipsoid_step(Ellipsoid.ball([0.0, 0.0], 1.0), [1.0, 0.0])
    np.testing.assert_allclose(E.center, [-1.0 / 3.0, 0.0], atol=1e-15)
    # textbook shape: (m^2/(m^2-1)) (A - 2/(m+1) b b^T)
    expected = (4.0 / 3.0) * (np.eye(2) - (2.0 / 3.0) * np.outer([1.0, 0.0], [1.0, 0.0]))
    np.testing.assert_allclose(E.shape, expected, atol=1e-14)


def test_deep_cut_and_empty_localizer():
    E = Ellipsoid.ball([0.0, 0.0, 0.0], 1.0)
    deep = ellipsoid_step(E, [1.0, 0.0, 0.0], 0.5)
    central = ellipsoid_step(E, [1.0, 0.0, 0.0])
    assert deep.log_volume() < central.log_volume()
    with pytest.raises(EmptyEllipsoid):
        ellipsoid_step(E, [1.0, 0.0, 0.0], 1.5)


def test_invalid_cuts_and_shapes():
    E = Ellipsoid.ball([0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        ellipsoid_step(E, [0.0, 0.0])
    with pytest.raises(ValueError):
        ellipsoid_step(E, [1.0])
    with pytest.raises(NumericalBreakdown):
        Ellipsoid.from_shape([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])


def test_around_box_contains_corners():
    lo, hi = np.array([0.0, -1.0, 2.0]), np.array([1.0, 3.0, 2.5])
    E = Ellipsoid.around_box(lo, hi)
    for corner in np.array(np.meshgrid(*zip(lo, hi))).T.reshape(-1, 3):
        assert E.contains(corner, slack=1e-12)


@given(m=st.integers(1, 12), seed=st.integers(0, 2 ** 31 - 1), steps=st.integers(1, 25))
def test_volume_decreases_by_guaranteed_factor(m, seed, steps):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, m))
    E = Ellipsoid.from_shape(rng.normal(size=m), A @ A.T + 0.1 * np.eye(m))
    bound = math.log(volume_ratio_bound(m))
    for _ in range(steps):
        new = ellipsoid_step(E, rng.normal(size=m))
        assert new.log_volume() - E.log_volume() <= bound + 1e-10
        S = new.shape
        assert np.max(np.abs(S - S.T)) <= 1e-10 * max(1.0, np.max(np.abs(S)))
        np.linalg.cholesky(S)
        E = new


@given(m=st.integers(2, 8), seed=st.integers(0, 2 ** 31 - 1))
def test_step_keeps_the_retained_half(m, seed):
    rng = np.random.default_rng(seed)
    E = Ellipsoid.ball(rng.normal(size=m), 2.0)
    g = rng.normal(size=m)
    new = ellipsoid_step(E, g)
    # sample the old ellipsoid; every point on the kept side must stay inside
    z = rng.normal(size=(400, m))
    z /= np.linalg.norm(z, axis=1)[:, None]
    pts = E.center + 2.0 * z * rng.uniform(0, 1, (400, 1)) ** (1.0 / m)
    for p in pts[(pts - E.center) @ g <= 0]:
        assert new.contains(p, slack=1e-9)


# -- LP --------------------------------------------------------------------------------

def test_lp_single_variable():
    res = solve_lp(LinearProgram([1.0], A_ub=[[1.0]], b_ub=[1.0]))
    assert res.status is LpStatus.OPTIMAL
    assert res.x[0] == pytest.approx(1.0) and res.value == pytest.approx(1.0)


def test_lp_degenerate_face():
    res = solve_lp(LinearProgram([1.0, 1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0]))
    assert res.ok and res.value == pytest.approx(1.0, abs=1e-12)
    assert res.x.sum() == pytest.approx(1.0) and np.all(res.x >= 0)


def test_lp_infeasible_and_unbounded():
    assert solve_lp(LinearProgram([1.0], A_ub=[[1.0], [-1.0]], b_ub=[1.0, -2.0])).status is LpStatus.INFEASIBLE
    assert solve_lp(LinearProgram([1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0])).status is LpStatus.UNBOUNDED


def test_lp_equalities_and_bounds():
    lp = LinearProgram([1.0, 2.0, -1.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[2.0], lower=[-1.0, 0.0, 0.0],
                       upper=[3.0, 0.5, np.inf], maximize=False)
    res = solve_lp(lp)
    ref = oracle_lp(lp.c, A_eq=lp.A_eq, b_eq=lp.b_eq, bounds=list(zip(lp.lower, lp.upper)), maximize=False)
    assert res.value == pytest.approx(ref.value, abs=1e-9)


def test_lp_rejects_bad_input():
    with pytest.raises(ValueError):
        LinearProgram([1.0, np.nan])
    with pytest.raises(ValueError):
        LinearProgram([1.0], lower=[2.0], upper=[1.0])


def random_lp(rng, m=20, n=40):
    A = rng.normal(size=(m, n))
    x_feas = rng.uniform(0, 1, n)
    b = A @ x_feas + rng.uniform(0.1, 1.0, m)
    return A, b, rng.normal(size=n)


@pytest.mark.parametrize("seed", range(25))
def test_lp_matches_reference_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    A, b, c = random_lp(rng)
    upper = np.full(40, 2.0)
    res = solve_lp(LinearProgram(c, A_ub=A, b_ub=b, upper=upper))
    ref = oracle_lp(c, A_ub=A, b_ub=b, bounds=[(0, 2.0)] * 40)
    assert res.ok and ref.ok
    assert res.value == pytest.approx(ref.value, rel=1e-7, abs=1e-9)
    assert res.primal_residual <= 1e-8
    assert np.all(res.x >= -1e-12) and np.all(res.x <= 2.0 + 1e-12)
    # weak duality: the multiplier bound is an upper bound and closes the gap at the optimum
    assert res.dual_bound >= res.value - 1e-8 * max(1.0, abs(res.value))
    assert res.dual_bound == pytest.approx(res.value, rel=1e-7, abs=1e-8)


def test_lp_is_deterministic(rng):
    A, b, c = random_lp(rng)
    lp = LinearProgram(c, A_ub=A, b_ub=b, upper=np.full(40, 2.0))
    r1, r2 = solve_lp(lp), solve_lp(lp)
    assert r1.x.tobytes() == r2.x.tobytes()


# -- QCQP ------------------------------------------------------------------------------

def test_qcqp_linear_only():
    prob = ConvexQcqp.from_constraints([-1.0], [(None, [1.0], -3.0)])
    res = solve_qcqp(prob, [0.0])
    assert res.ok and res.x[0] == pytest.approx(3.0, abs=1e-7)


def test_qcqp_quadratic_peak():
    # variables (eta, x1, x2): eta <= 1 - ||x - c||^2
    c = np.array([0.3, -0.7])
    P = np.zeros((3, 3))
    P[1, 1] = P[2, 2] = 1.0
    q = np.array([1.0, -2 * c[0], -2 * c[1]])
    prob = ConvexQcqp.from_constraints([-1.0, 0.0, 0.0], [(P, q, float(c @ c) - 1.0)])
    res = solve_qcqp(prob, [0.0, 0.0, 0.0])
    assert res.ok
    assert res.x[0] == pytest.approx(1.0, abs=1e-7)
    np.testing.assert_allclose(res.x[1:], c, atol=1e-4)


def test_qcqp_rejects_indefinite_term():
    P = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveSemidefinite):
        ConvexQcqp.from_constraints([1.0, 0.0], [(P, None, -1.0)])


def test_qcqp_reports_infeasibility():
    # x^2 + 1 <= 0 has no solution
    prob = ConvexQcqp.from_constraints([1.0], [(np.eye(1), None, 1.0)])
    assert solve_qcqp(prob, [0.5]).status is QcqpStatus.INFEASIBLE


def random_qcqp(rng, n, m):
    cons = []
    x0 = rng.normal(size=n)
    for _ in range(m):
        L = rng.normal(size=(n, n)) * (rng.uniform() < 0.7)
        P = L @ L.T / n
        q = rng.normal(size=n)
        r = -(x0 @ P @ x0 + q @ x0) - rng.uniform(0.5, 2.0)
        cons.append((P, q, r))
    # keep the feasible set bounded
    cons.append((np.eye(n), -2 * x0, float(x0 @ x0) - 25.0))
    return rng.normal(size=n), cons, x0


@pytest.mark.parametrize("seed", range(8))
def test_qcqp_matches_reference_and_kkt(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 31))
    c, cons, x0 = random_qcqp(rng, n, int(rng.integers(1, 8)))
    A_eq = rng.normal(size=(1, n))
    b_eq = A_eq @ x0
    prob = ConvexQcqp.from_constraints(c, cons, A_eq, b_eq)
    res = solve_qcqp(prob, x0)
    ref = oracle_qcqp(c, cons, A_eq, b_eq)
    assert res.ok and ref.ok
    assert res.value == pytest.approx(ref.value, rel=1e-5, abs=1e-6)
    assert res.stationarity <= 1e-6 and res.primal_residual <= 1e-6 and res.complementarity <= 1e-6
    assert res.value <= float(c @ x0) + 1e-9
    assert np.max(prob.values(res.x)) <= 1e-6
    np.testing.assert_allclose(A_eq @ res.x, b_eq, atol=1e-8)


def test_qcqp_phase_one_from_infeasible_start(rng):
    c, cons, x0 = random_qcqp(rng, 5, 3)
    prob = ConvexQcqp.from_constraints(c, cons)
    res = solve_qcqp(prob, x0 + 50.0)
    ref = oracle_qcqp(c, cons)
    assert res.ok and res.value == pytest.approx(ref.value, rel=1e-5, abs=1e-6)


@given(arrays(float, 4, elements=st.floats(-3, 3)))
def test_qcqp_never_worse_than_feasible_start(start):
    # ball of radius 4 about the origin, minimize a fixed linear objective
    prob = ConvexQcqp.from_constraints([1.0, -2.0, 0.5, 0.0], [(np.eye(4), None, -16.0)])
    res = solve_qcqp(prob, start)
    assert res.ok
    assert res.value <= float(prob.c @ start) + 1e-9
    assert res.value == pytest.approx(-4.0 * math.sqrt(5.25), rel=1e-7)
