"""Closed-form torus geometry.

The surface is parameterized by the toroidal angle u and the poloidal angle v,
with distance from the symmetry axis R(v) = R + r cos v.  R is the distance
from the torus center to the tube center, r is the tube radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusGeometry:
    R: float
    r: float

    def __post_init__(self):
        R, r = float(self.R), float(self.r)
        if not (np.isfinite(R) and np.isfinite(r)):
            raise ValueError("R and r must be finite")
        if r <= 0 or R <= 0:
            raise ValueError("R and r must be positive")
        if r >= R:
            raise ValueError("r must be < R (ring torus)")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @property
    def ratio(self) -> float:
        return self.R / self.r


def check_spin_sign(s: int) -> int:
    if s not in (1, -1):
        raise ValueError(f"spin sign must be +1 or -1, got {s!r}")
    return int(s)


def check_half_odd(m: float) -> float:
    """Return m as float, raising if 2m is not an odd integer."""
    twice = 2.0 * float(m)
    if not np.isfinite(twice) or twice != np.round(twice) or int(np.round(twice)) % 2 == 0:
        raise ValueError(f"m must be half-odd-integer (+-1/2, +-3/2, ...), got {m!r}")
    return float(m)


def canonical_angle(v):
    """Map angles into [0, 2pi)."""
    return np.mod(v, TWO_PI)


def profile(geom: TorusGeometry, v):
    """Return (R(v), R'(v), R''(v))."""
    v = canonical_angle(v)
    c, s = np.cos(v), np.sin(v)
    return geom.R + geom.r * c, -geom.r * s, -geom.r * c


def gaussian_curvature(geom: TorusGeometry, v):
    v = canonical_angle(v)
    c = np.cos(v)
    return c / (geom.r * (geom.R + geom.r * c))


def potential(geom: TorusGeometry, m: float, s: int, v):
    """Effective potential of the squared operator for spin component ``s``.

    V = (m^2 r^2 + s r m R' + R'^2/4 - R R''/2) / R^2
    """
    m = check_half_odd(m)
    s = check_spin_sign(s)
    Rv, dR, d2R = profile(geom, v)
    r = geom.r
    return (m * m * r * r + s * r * m * dR + 0.25 * dR * dR - 0.5 * Rv * d2R) / (Rv * Rv)


def weight(geom: TorusGeometry, grid) -> np.ndarray:
    """Measure weight R(v_k) at the grid nodes."""
    return profile(geom, grid.nodes)[0]


def midpoint_weight(geom: TorusGeometry, grid) -> np.ndarray:
    """Measure weight R(v_{k+1/2}) at the cell midpoints."""
    return profile(geom, grid.midpoints)[0]


def total_curvature(geom: TorusGeometry, N: int) -> float:
    """Trapezoid quadrature of K dA over the surface on N poloidal nodes.

    dA = R(v) r du dv; the u integral contributes 2pi.  On an even grid the
    integrand reduces to cos(v_k), which sums to zero.
    """
    if N < 2 or N % 2:
        raise ValueError("N must be even")
    h = TWO_PI / N
    v = h * np.arange(N)
    area = profile(geom, v)[0] * geom.r * h * TWO_PI
    return float(np.sum(gaussian_curvature(geom, v) * area))
