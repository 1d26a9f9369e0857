"""Ellipsoid localizer with central and deep cuts.

The ellipsoid is ``{x : (x - c)^T A^{-1} (x - c) <= 1}``. Internally the
shape matrix is carried as a factor ``J`` with ``A = J J^T`` so repeated
rank-one updates keep it positive definite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NumericalBreakdown(ArithmeticError):
    """Raised when the shape matrix degenerates (``g^T A g <= 0``)."""


class EmptyEllipsoid(ArithmeticError):
    """Raised when a deep cut removes the whole ellipsoid."""


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    factor: np.ndarray

    @classmethod
    def from_shape(cls, center, shape) -> "Ellipsoid":
        shape = np.asarray(shape, dtype=float)
        shape = 0.5 * (shape + shape.T)
        try:
            factor = np.linalg.cholesky(shape)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("shape matrix is not positive definite") from exc
        return cls(np.asarray(center, dtype=float).copy(), factor)

    @classmethod
    def ball(cls, center, radius: float) -> "Ellipsoid":
        center = np.asarray(center, dtype=float).copy()
        return cls(center, radius * np.eye(center.size))

    @classmethod
    def around_box(cls, lower, upper) -> "Ellipsoid":
        """Smallest axis-aligned ellipsoid that covers the box ``[lower, upper]``."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        half = 0.5 * (upper - lower)
        if np.any(half <= 0):
            raise ValueError("box must have positive width in every coordinate")
        return cls(0.5 * (upper + lower), np.diag(math.sqrt(lower.size) * half))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def shape(self) -> np.ndarray:
        A = self.factor @ self.factor.T
        return 0.5 * (A + A.T)

    def half_widths(self) -> np.ndarray:
        """Half side lengths of the bounding box, ``sqrt(diag(A))``."""
        return np.sqrt(np.einsum("ij,ij->i", self.factor, self.factor))

    def log_volume(self) -> float:
        """Log-volume up to the unit-ball constant, ``log det J``."""
        sign, logdet = np.linalg.slogdet(self.factor)
        if sign == 0:
            return -math.inf
        return float(logdet)

    def contains(self, x, slack: float = 0.0) -> bool:
        y = np.linalg.solve(self.factor, np.asarray(x, dtype=float) - self.center)
        return float(y @ y) <= 1.0 + slack


def ellipsoid_step(ellipsoid: Ellipsoid, cut, depth: float = 0.0) -> Ellipsoid:
    """Minimum-volume ellipsoid containing ``E ∩ {x : cut^T (x - c) + depth <= 0}``.

    ``depth = 0`` is a central cut; ``depth > 0`` is a deep cut (the center
    itself is excluded). Raises :class:`EmptyEllipsoid` if the kept half-space
    misses ``E``.
    """
    g = np.asarray(cut, dtype=float)
    m = ellipsoid.dim
    if g.shape != (m,):
        raise ValueError(f"cut must have shape ({m},), got {g.shape}")
    J = ellipsoid.factor
    v = J.T @ g
    norm = math.sqrt(float(v @ v))
    if not norm > 0 or not math.isfinite(norm):
        if not np.any(g):
            raise ValueError("cut vector must be nonzero")
        raise NumericalBreakdown("g^T A g is not positive")
    a = depth / norm
    if a >= 1.0:
        raise EmptyEllipsoid(f"deep cut with relative depth {a:.3g} excludes the ellipsoid")
    a = max(a, -1.0 / m) if m > 1 else max(a, -1.0)
    u = v / norm
    b = J @ u  # = A g / sqrt(g^T A g)

    if m == 1:
        # exact interval cut: keep [c - r, c - a r]
        r = abs(float(J[0, 0]))
        lo = ellipsoid.center[0] - r
        hi = ellipsoid.center[0] - a * r * np.sign(g[0])
        if g[0] < 0:
            lo, hi = ellipsoid.center[0] + a * r, ellipsoid.center[0] + r
        center = np.array([0.5 * (lo + hi)])
        return Ellipsoid(center, np.array([[0.5 * (hi - lo)]]))

    tau = (1.0 + m * a) / (m + 1.0)
    sigma = 2.0 * tau / (1.0 + a)
    scale = (m * m / (m * m - 1.0)) * (1.0 - a * a)
    center = ellipsoid.center - tau * b
    # A+ = scale * J (I - sigma u u^T) J^T  ->  J+ = sqrt(scale) * J (I - w u u^T)
    w = 1.0 - math.sqrt(1.0 - sigma)
    factor = math.sqrt(scale) * (J - (w * b)[:, None] * u[None, :])
    return Ellipsoid(center, factor)


def volume_ratio_bound(m: int) -> float:
    """Guaranteed per-step volume ratio ``exp(-1 / (2 (m + 1)))`` for central cuts."""
    return math.exp(-1.0 / (2.0 * (m + 1)))
