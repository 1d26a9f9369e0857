"""Scenario builders shared by the tests."""

import numpy as np

from uavofdma.scenario import Scenario, Trajectory, UavParams, UserSpec

SQUARE = ((-400.0, -400.0), (400.0, -400.0), (400.0, 400.0), (-400.0, 400.0))


def square_scenario(slots=100, period=270.0, theta=0.0) -> Scenario:
    theta = np.broadcast_to(np.asarray(theta, dtype=float), (4,))
    users = tuple(UserSpec(p, float(t)) for p, t in zip(SQUARE, theta))
    return Scenario(users, UavParams(period=period, slots=slots))


def random_small_scenario(rng, max_users=2, max_slots=8):
    K = int(rng.integers(1, max_users + 1))
    N = int(rng.integers(2, max_slots + 1))
    users = tuple(UserSpec(tuple(rng.uniform(-600, 600, 2)), float(rng.uniform())) for _ in range(K))
    scenario = Scenario(users, UavParams(period=2.7 * N, slots=N))
    return scenario


def random_trajectory(rng, scenario, spread=600.0):
    q = rng.uniform(-spread, spread, (scenario.num_slots, 2))
    q[-1] = q[0]
    return Trajectory(q)

