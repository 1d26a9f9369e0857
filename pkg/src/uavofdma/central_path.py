"""Central-path solver for the allocation problem on normalized powers.

Variables are ``z = (eta, alpha[K, N], x[K, N])`` with ``x = p / P_max``. The
log-barrier keeps every constraint strictly satisfied; at each centered point
the multipliers ``1 / (t * slack)`` form a dual-feasible point that satisfies
the bounded-dual normalization exactly, which is what the allocation module
needs to build power densities and a dual bound.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

LN2 = math.log(2.0)


class _Barrier:
    def __init__(self, g, theta):
        self.g = g
        self.K, self.N = g.shape
        self.theta = theta
        self.active = np.repeat((theta > 0)[:, None], self.N, axis=1)
        KN = self.K * self.N
        self.nv = 1 + 2 * KN
        self.ia = 1 + np.arange(KN).reshape(self.K, self.N)
        self.ix = self.ia + KN
        self.m = self.K + int(self.active.sum()) + 2 * self.N + 2 * KN
        # index pairs of the K x K per-slot budget blocks
        k1, k2 = np.meshgrid(np.arange(self.K), np.arange(self.K), indexing="ij")
        n_all = np.repeat(np.arange(self.N), self.K * self.K)
        self.blk_n = n_all
        self.blk_x = (self.ix[np.tile(k1.ravel(), self.N), n_all], self.ix[np.tile(k2.ravel(), self.N), n_all])
        self.blk_a = (self.ia[np.tile(k1.ravel(), self.N), n_all], self.ia[np.tile(k2.ravel(), self.N), n_all])

    def split(self, z):
        KN = self.K * self.N
        return z[0], z[1:1 + KN].reshape(self.K, self.N), z[1 + KN:].reshape(self.K, self.N)

    def slacks(self, z):
        eta, al, x = self.split(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = x * self.g / al
            r = al * np.log1p(s) / LN2
        a = r.mean(axis=1) - eta
        b = np.where(self.active, r - self.theta[:, None] * eta, 1.0)
        c = 1.0 - x.sum(axis=0)
        d = 1.0 - al.sum(axis=0)
        return a, b, c, d, al, x, s

    @staticmethod
    def feasible(parts) -> bool:
        a, b, c, d, al, x, _ = parts
        return bool(a.min() > 0 and b.min() > 0 and c.min() > 0 and d.min() > 0 and al.min() > 0 and x.min() > 0)

    def log_sum(self, parts) -> np.ndarray:
        a, b, c, d, al, x, _ = parts
        return (np.log(a).sum() + np.log(b[self.active]).sum() + np.log(c).sum() + np.log(d).sum()
                + np.log(al).sum() + np.log(x).sum())

    def derivatives(self, z, t, parts):
        a, b, c, d, al, x, s = parts
        g, N = self.g, self.N
        one_s = 1.0 + s
        dr_da = (np.log1p(s) - s / one_s) / LN2
        dr_dx = g / (one_s * LN2)
        curv = 1.0 / (al * one_s * one_s * LN2)
        inv_a = 1.0 / a
        inv_b = np.where(self.active, 1.0 / b, 0.0)

        grad = np.empty(self.nv)
        grad[0] = -t + inv_a.sum() + (self.theta[:, None] * inv_b).sum()
        grad[self.ia] = -dr_da * (inv_a[:, None] / N + inv_b) + 1.0 / d[None, :] - 1.0 / al
        grad[self.ix] = -dr_dx * (inv_a[:, None] / N + inv_b) + 1.0 / c[None, :] - 1.0 / x

        H = np.zeros((self.nv, self.nv))
        # average-rate constraints: dense rank-one term per user
        U = np.zeros((self.K, self.nv))
        U[:, 0] = -1.0
        rows = np.arange(self.K)[:, None]
        U[rows, self.ia] = dr_da / N
        U[rows, self.ix] = dr_dx / N
        U *= inv_a[:, None]
        H += U.T @ U
        # per-slot rate floors: 3x3 blocks on (eta, alpha_kn, x_kn)
        act = self.active
        if act.any():
            ib = inv_b[act]
            vecs = [np.full(ib.size, -1.0) * np.repeat(self.theta, N)[act.ravel()] * ib,
                    dr_da[act] * ib, dr_dx[act] * ib]
            idx = [np.zeros(ib.size, dtype=int), self.ia[act], self.ix[act]]
            for p in range(3):
                for q in range(3):
                    np.add.at(H, (idx[p], idx[q]), vecs[p] * vecs[q])
        # curvature of the rates
        w = curv * (inv_a[:, None] / N + inv_b)
        ia, ix = self.ia.ravel(), self.ix.ravel()
        sg = (w * s * g).ravel()
        H[ia, ia] += (w * s * s).ravel()
        H[ix, ix] += (w * g * g).ravel()
        H[ia, ix] -= sg
        H[ix, ia] -= sg
        # per-slot budgets couple the K users of a slot
        H[self.blk_x] += (1.0 / (c * c))[self.blk_n]
        H[self.blk_a] += (1.0 / (d * d))[self.blk_n]
        H[ia, ia] += (1.0 / (al * al)).ravel()
        H[ix, ix] += (1.0 / (x * x)).ravel()
        return grad, H

    def multipliers(self, t, parts):
        a, b, c, d, *_ = parts
        lam = 1.0 / (t * a)
        mu = np.where(self.active, 1.0 / (t * b), 0.0)
        return np.concatenate([lam, mu[self.active], 1.0 / (t * c), 1.0 / (t * d)])


def _newton_direction(H, grad):
    """Solve ``H dz = -grad`` after symmetric diagonal scaling (the bound terms span many decades)."""
    d = 1.0 / np.sqrt(np.diag(H))
    Hs = H * d[:, None] * d[None, :]
    rhs = -grad * d
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            if jitter:
                Hs[np.diag_indices_from(Hs)] += jitter
            return d * sla.cho_solve(sla.cho_factor(Hs, check_finite=False), rhs, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgError):
            continue
    return d * np.linalg.lstsq(Hs, rhs, rcond=None)[0]


def central_path_allocation(g, theta, gap_tol: float = 1e-6, factor: float = 5.0, max_newton: int = 1000):
    """Follow the central path to relative gap ``gap_tol``.

    Returns ``(y, alpha, x, newton_steps)`` where ``y`` packs the multipliers
    as ``(lam, mu[MRR users], beta', nu)``.
    """
    g = np.asarray(g, dtype=float)
    theta = np.asarray(theta, dtype=float)
    bar = _Barrier(g, theta)
    K, N = g.shape
    al = np.full((K, N), 1.0 / (K + 1))
    x = al.copy()
    r = al * np.log1p(x * g / al) / LN2
    eta0 = r.mean(axis=1).min()
    if np.any(theta > 0):
        eta0 = min(eta0, float((r[theta > 0] / theta[theta > 0, None]).min()))
    z = np.concatenate([[0.5 * eta0], al.ravel(), x.ravel()])
    t = bar.m / max(eta0, 1e-12)
    steps = 0
    parts = bar.slacks(z)
    while True:
        for _ in range(100):
            grad, H = bar.derivatives(z, t, parts)
            dz = _newton_direction(H, grad)
            dec = float(-grad @ dz)
            steps += 1
            if dec / 2.0 <= 1e-10 * max(1.0, t * 1e-6):
                break
            step = 1.0
            base = bar.log_sum(parts)
            while step > 1e-14:
                cand = z + step * dz
                new = bar.slacks(cand)
                if bar.feasible(new):
                    change = -t * step * dz[0] - (bar.log_sum(new) - base)
                    if change <= -0.25 * step * dec:
                        break
                step *= 0.5
            if step <= 1e-14:
                break
            z, parts = cand, new
            if steps >= max_newton:
                break
        if bar.m / t <= gap_tol * max(z[0], 1e-12) or steps >= max_newton:
            break
        t *= factor
    y = bar.multipliers(t, parts)
    _, al, x = bar.split(z)
    return y, al.copy(), x.copy(), steps
