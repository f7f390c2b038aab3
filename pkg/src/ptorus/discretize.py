"""Finite-difference assembly of the first-order and squared operators.

The first-order problem couples two spinor components on a staggered periodic
grid: the upper component lives on the nodes v_k = k h, the lower component on
the midpoints v_{k+1/2}.  The node-to-midpoint operator ``Dplus`` uses the
compact difference (psi_{k+1} - psi_k)/h and the average (psi_{k+1} + psi_k)/2,
both second-order accurate at the midpoint.  ``Dminus`` is its adjoint with
respect to the weighted inner products sum_k R(v_k) h and sum_k R(v_{k+1/2}) h:

    Dminus = W_node^{-1} Dplus^T W_mid

so the squared operator Dminus Dplus is positive semidefinite and E^2 is real
at any resolution.  A collocated central difference would give the same
algebra but doubles every level (the alternating mode is a spurious zero of the
centered stencil).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    TWO_PI,
    TorusGeometry,
    check_half_odd,
    check_spin_sign,
    midpoint_weight,
    potential,
    profile,
    weight,
)

BOUNDARY_CONDITIONS = ("periodic", "antiperiodic")


@dataclass(frozen=True)
class Grid:
    N: int

    def __post_init__(self):
        N = self.N
        if isinstance(N, bool) or int(N) != N:
            raise ValueError(f"N must be an integer, got {N!r}")
        N = int(N)
        if N < 8 or N % 2:
            raise ValueError(f"N must be even and >= 8, got {N}")
        object.__setattr__(self, "N", N)

    @property
    def h(self) -> float:
        return TWO_PI / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.N)

    @property
    def midpoints(self) -> np.ndarray:
        return self.h * (np.arange(self.N) + 0.5)


@dataclass(frozen=True)
class SpinorMode:
    m: float = 0.5
    gamma: float = 0.0
    bc: str = "periodic"

    def __post_init__(self):
        object.__setattr__(self, "m", check_half_odd(self.m))
        g = float(self.gamma)
        if not np.isfinite(g) or g < 0:
            raise ValueError(f"gamma must be finite and >= 0, got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"bc must be one of {BOUNDARY_CONDITIONS}, got {self.bc!r}")

    @property
    def wrap_sign(self) -> float:
        return 1.0 if self.bc == "periodic" else -1.0

    def with_gamma(self, gamma: float) -> "SpinorMode":
        return SpinorMode(self.m, gamma, self.bc)


@dataclass(frozen=True)
class OperatorPair:
    """Node-to-midpoint ``dplus``, its weighted adjoint ``dminus`` and the weights."""

    dplus: np.ndarray
    dminus: np.ndarray
    weight: np.ndarray
    weight_mid: np.ndarray

    @property
    def N(self) -> int:
        return self.dplus.shape[0]


def shift_matrix(N: int, wrap_sign: float = 1.0) -> np.ndarray:
    """(S psi)_k = psi_{k+1}; the entry crossing the seam carries ``wrap_sign``."""
    S = np.zeros((N, N))
    k = np.arange(N - 1)
    S[k, k + 1] = 1.0
    S[N - 1, 0] = wrap_sign
    return S


def coupling_mid(geom: TorusGeometry, m: float, grid: Grid) -> np.ndarray:
    """(r / R(v)) (m - sin(v)/2) at the midpoints."""
    v = grid.midpoints
    return geom.r / profile(geom, v)[0] * (m - 0.5 * np.sin(v))


def build_dplus(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    N, h = grid.N, grid.h
    S = shift_matrix(N, mode.wrap_sign)
    eye = np.eye(N)
    a = coupling_mid(geom, mode.m, grid)
    D = (S - eye) / h + a[:, None] * (S + eye) * 0.5
    return D / geom.r


def weighted_adjoint(dplus: np.ndarray, w_node: np.ndarray, w_mid: np.ndarray) -> np.ndarray:
    return (dplus.T * w_mid[None, :]) / w_node[:, None]


def build_dminus(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    return weighted_adjoint(build_dplus(geom, mode, grid), weight(geom, grid), midpoint_weight(geom, grid))


def direct_dminus(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    """Independent midpoint-to-node discretization of
    -(1/r) [d/dv - (r/R)(m + sin(v)/2)].

    Only used to check ``build_dminus`` for consistency.
    """
    N, h = grid.N, grid.h
    v = grid.nodes
    b = geom.r / profile(geom, v)[0] * (mode.m + 0.5 * np.sin(v))
    # (T psi)_k = psi_{k-1}, midpoint k-1/2
    T = shift_matrix(N, mode.wrap_sign).T
    eye = np.eye(N)
    return -((eye - T) / h - b[:, None] * (eye + T) * 0.5) / geom.r


def operator_pair(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> OperatorPair:
    dplus = build_dplus(geom, mode, grid)
    w = weight(geom, grid)
    wm = midpoint_weight(geom, grid)
    return OperatorPair(dplus, weighted_adjoint(dplus, w, wm), w, wm)


def assemble_first_order(pair: OperatorPair, gamma: float, real_form: bool = False) -> np.ndarray:
    """Block operator [[-i G, Dminus], [Dplus, i G]].

    With ``real_form`` the unitarily similar real matrix
    K = [[-G, Dminus], [-Dplus, G]] is returned instead; H = T (i K) T^H with
    T = diag(I, i I), so eig(H) = i eig(K) and eigenvectors map by T.
    """
    N = pair.N
    if real_form:
        K = np.empty((2 * N, 2 * N))
        K[:N, :N] = -gamma * np.eye(N)
        K[:N, N:] = pair.dminus
        K[N:, :N] = -pair.dplus
        K[N:, N:] = gamma * np.eye(N)
        return K
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    H[:N, N:] = pair.dminus
    H[N:, :N] = pair.dplus
    idx = np.arange(N)
    H[idx, idx] = -1j * gamma
    H[idx + N, idx + N] = 1j * gamma
    return H


def build_first_order(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    return assemble_first_order(operator_pair(geom, mode, grid), mode.gamma)


def squared_laplacian(geom: TorusGeometry, grid: Grid, wrap_sign: float = 1.0) -> np.ndarray:
    """Conservative stencil for -(1/R) d/dv (R d/dv) = -d^2/dv^2 - (R'/R) d/dv."""
    N, h = grid.N, grid.h
    Rn = weight(geom, grid)
    Rp = midpoint_weight(geom, grid)  # R at k+1/2
    Rm = np.roll(Rp, 1)  # R at k-1/2
    L = np.zeros((N, N))
    k = np.arange(N)
    L[k, k] = (Rp + Rm) / Rn
    L[k, (k + 1) % N] = -Rp / Rn
    L[k, (k - 1) % N] = -Rm / Rn
    L[N - 1, 0] *= wrap_sign
    L[0, N - 1] *= wrap_sign
    return L / (h * h)


def build_squared(geom: TorusGeometry, mode: SpinorMode, grid: Grid, s: int):
    """Discretized (1/r^2)(-d^2 - (R'/R) d + V_s) - G^2, and the node weight."""
    s = check_spin_sign(s)
    A = squared_laplacian(geom, grid, mode.wrap_sign)
    V = potential(geom, mode.m, s, grid.nodes)
    A[np.diag_indices_from(A)] += V
    A /= geom.r ** 2
    if mode.gamma:
        A[np.diag_indices_from(A)] -= mode.gamma ** 2
    return A, weight(geom, grid)


class SymmetrizationError(ValueError):
    pass


def symmetrize(A: np.ndarray, w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """W^{1/2} A W^{-1/2}, checked for symmetry and returned exactly symmetric."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weight must be strictly positive")
    sq = np.sqrt(w)
    S = sq[:, None] * A / sq[None, :]
    scale = np.abs(S).max()
    asym = np.abs(S - S.T).max()
    if scale and asym > tol * scale:
        raise SymmetrizationError(f"matrix is not symmetrizable by the weight (asymmetry {asym / scale:.2e})")
    return 0.5 * (S + S.T)


def oracle_matrix(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    """Symmetrized Dminus Dplus; its eigenvalues are the exceptional-point thresholds G^2."""
    pair = operator_pair(geom, mode, grid)
    return symmetrize(pair.dminus @ pair.dplus, pair.weight)
