"""Phase classification, branch tracking and exceptional-point location.

Squaring the first-order operator gives diag(Dminus Dplus, Dplus Dminus) - G^2,
so every eigenvalue satisfies E^2 = nu - G^2 with nu in the (real, nonnegative)
spectrum of Dminus Dplus.  Exceptional points in G therefore sit exactly at
sqrt(nu_n); ``eps_from_oracle`` reads them off a symmetric eigensolve, while
``eps_by_bisection`` finds them by root-bracketing on spectra of the full
G-dependent operator.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .discretize import Grid, SpinorMode, assemble_first_order, oracle_matrix, operator_pair
from .eigensolve import ComplexSpectrum, eig_general, eig_symmetric
from .geometry import TorusGeometry

log = logging.getLogger(__name__)

LABELS = ("real", "imaginary", "complex")
DEFAULT_CLASSIFY_TOL = 1e-7
AMBIGUITY_TOL = 1e-6


class AssemblyError(RuntimeError):
    pass


@dataclass
class Classification:
    labels: np.ndarray
    broken_fraction: float
    tol: float
    scale: float

    def count(self, label: str) -> int:
        return int(np.sum(self.labels == label))


@dataclass(frozen=True)
class ExceptionalPoint:
    param_value: float
    branch_index: int
    method: str
    multiplicity: int = 1
    parameter: str = "gamma"


def _values(spec) -> np.ndarray:
    if isinstance(spec, ComplexSpectrum):
        return spec.eigenvalues
    return np.asarray(spec, dtype=complex)


def label_values(w, scale: float, tol: float = DEFAULT_CLASSIFY_TOL) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    cut = tol * scale
    re_small = np.abs(w.real) <= cut
    im_small = np.abs(w.imag) <= cut
    labels = np.full(w.shape, "complex", dtype=object)
    labels[~im_small & re_small] = "imaginary"
    labels[im_small] = "real"
    return labels


def classify(spec, tol: float = DEFAULT_CLASSIFY_TOL) -> Classification:
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    w = _values(spec)
    scale = float(np.abs(w).max()) if w.size else 0.0
    labels = label_values(w, scale, tol)
    broken = float(np.mean(labels != "real")) if w.size else 0.0
    return Classification(labels, broken, tol, scale)


# -- closure checks ---------------------------------------------------------


def pairing_defect(a, b) -> float:
    """Max distance under the optimal one-to-one matching of two multisets."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError("multisets differ in size")
    if not a.size:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def closure_defects(spec) -> dict:
    """Relative defects of closure under E -> conj(E) and E -> -E."""
    w = _values(spec)
    scale = float(np.abs(w).max()) or 1.0
    return {
        "conjugation": pairing_defect(w, w.conj()) / scale,
        "negation": pairing_defect(w, -w) / scale,
        "neg_conjugation": pairing_defect(w, -w.conj()) / scale,
    }


# -- branches ---------------------------------------------------------------


@dataclass
class Branch:
    params: np.ndarray
    values: np.ndarray
    indices: np.ndarray
    kind: str
    ambiguous: list = field(default_factory=list)

    def labels(self, scales, tol: float = DEFAULT_CLASSIFY_TOL) -> np.ndarray:
        out = np.empty(len(self.values), dtype=object)
        for i, (e, s) in enumerate(zip(self.values, scales)):
            out[i] = "failed" if np.isnan(e) else label_values([e], s, tol)[0]
        return out


def ground_index(w, rel: float = 1e-9) -> int:
    """Smallest |E|, preferring Im E >= 0, then Re E >= 0."""
    w = np.asarray(w, dtype=complex)
    mag = np.abs(w)
    scale = mag.max() if mag.size else 0.0
    slack = rel * scale
    cand = np.flatnonzero(mag <= mag.min() + slack)
    keys = [(w[i].imag < -slack, w[i].real < -slack, mag[i], i) for i in cand]
    return min(keys)[3]


def ground_branch(params, spectra) -> Branch:
    """The smallest-|E| eigenvalue at every sweep point."""
    vals = np.full(len(params), np.nan + 0j)
    idx = np.full(len(params), -1)
    for i, spec in enumerate(spectra):
        if spec is None:
            continue
        k = ground_index(spec.eigenvalues)
        vals[i], idx[i] = spec.eigenvalues[k], k
    return Branch(np.asarray(params, dtype=float), vals, idx, "ground")


def track_branch(sweep) -> Branch:
    """Continue one eigenvalue through ``sweep`` by eigenvector overlap.

    ``sweep`` is an ordered sequence of (param, ComplexSpectrum) with
    eigenvectors.  Near-ties in overlap (an exceptional point) are recorded in
    ``ambiguous`` and resolved toward the larger overlap.
    """
    params, vals, idx, ambiguous = [], [], [], []
    prev = None
    for p, spec in sweep:
        params.append(p)
        if spec is None:
            vals.append(np.nan + 0j)
            idx.append(-1)
            continue
        if spec.eigenvectors is None:
            raise ValueError("track_branch needs eigenvectors")
        if prev is None:
            k = ground_index(spec.eigenvalues)
        else:
            ov = np.abs(prev.conj() @ spec.eigenvectors)
            order = np.argsort(-ov, kind="stable")
            k = int(order[0])
            if len(order) > 1 and ov[order[0]] - ov[order[1]] < AMBIGUITY_TOL:
                ambiguous.append(p)
                log.info("ambiguous continuation at %s (overlaps %.3g, %.3g)", p, ov[order[0]], ov[order[1]])
        prev = spec.eigenvectors[:, k]
        vals.append(spec.eigenvalues[k])
        idx.append(k)
    return Branch(np.asarray(params, dtype=float), np.asarray(vals), np.asarray(idx), "continued", ambiguous)


@dataclass(frozen=True)
class Transition:
    left: float
    right: float
    before: str
    after: str

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.left + self.right)


def transitions(params, labels) -> list[Transition]:
    """Label changes between consecutive (non-failed) sweep points."""
    out = []
    last = None
    for p, lab in zip(params, labels):
        if lab == "failed":
            continue
        if last is not None and lab != last[1]:
            out.append(Transition(float(last[0]), float(p), last[1], lab))
        last = (p, lab)
    return out


def behavior_change_point(params, values, labels):
    """First parameter where Im E flips sign between imaginary-labeled points.

    Returns the midpoint between the last imaginary point of the old sign and
    the first of the new sign, or None.
    """
    prev = None
    for p, e, lab in zip(params, values, labels):
        if lab != "imaginary":
            continue
        sign = np.sign(e.imag)
        if prev is not None and sign != prev[1]:
            return 0.5 * (prev[0] + p)
        prev = (p, sign)
    return None


# -- exceptional points -----------------------------------------------------


def oracle_levels(geom: TorusGeometry, mode: SpinorMode, grid: Grid) -> np.ndarray:
    """Ascending eigenvalues nu_n of Dminus Dplus (G-independent)."""
    nu = eig_symmetric(oracle_matrix(geom, mode, grid))
    scale = max(float(np.abs(nu).max()), 1.0)
    if nu[0] < -1e-10 * scale:
        raise AssemblyError(f"negative level {nu[0]:.3e}: Dminus Dplus is not positive semidefinite")
    return np.clip(nu, 0.0, None)


def _group_degenerate(nu, rel: float):
    groups, start = [], 0
    for i in range(1, len(nu) + 1):
        if i == len(nu) or nu[i] - nu[i - 1] > rel * max(nu[i], 1e-300):
            groups.append((start, i))
            start = i
    return groups


def eps_from_oracle(geom, m, bc, grid, gamma_window, degeneracy_tol: float = 1e-8) -> list[ExceptionalPoint]:
    lo, hi = gamma_window
    if lo < 0 or hi < lo:
        raise ValueError("gamma window must satisfy 0 <= lo <= hi")
    nu = oracle_levels(geom, SpinorMode(m, 0.0, bc), grid)
    out = []
    for a, b in _group_degenerate(nu, degeneracy_tol):
        for n in range(a, b):
            g = float(np.sqrt(nu[n]))
            if lo <= g <= hi:
                out.append(ExceptionalPoint(g, n, "hermitian-oracle", b - a))
    return out


def doublet_onset(nu, window=(0.0, np.inf), split_tol: float = 1e-13):
    """Smallest G = sqrt(nu_n) in ``window`` whose level has coalesced with its neighbour.

    Levels come in pairs (counter-rotating waves along v) whose splitting
    decays exponentially up the spectrum.  Once the relative splitting drops
    below ``split_tol`` the two exceptional points of the pair merge into a
    double point at double precision; this returns where that regime starts,
    or None.
    """
    nu = np.asarray(nu, dtype=float)
    lo, hi = window
    for n in range(len(nu) - 1):
        g = np.sqrt(nu[n])
        if g < lo:
            continue
        if g > hi:
            break
        if nu[n + 1] - nu[n] <= split_tol * nu[n + 1]:
            return float(g)
    return None


class SquaredLevels:
    """Ascending E^2 of the first-order operator at a given G.

    E^2 is taken from the upper-left block of H(G)^2, formed by multiplying
    blocks of the assembled first-order matrix, and solved with the general
    (non-symmetric) eigensolver.  The real form K with H = T (iK) T^H is used,
    for which (H^2)_11 = -(K^2)_11.
    """

    def __init__(self, geom: TorusGeometry, m: float, bc: str, grid: Grid):
        self.pair = operator_pair(geom, SpinorMode(m, 0.0, bc), grid)
        self.N = grid.N
        self.calls = 0

    def __call__(self, gamma: float) -> np.ndarray:
        self.calls += 1
        N = self.N
        K = assemble_first_order(self.pair, gamma, real_form=True)
        block = -(K[:N, :] @ K[:, :N])
        w = eig_general(block).eigenvalues
        return np.sort(w.real)

    def nearest_signed(self, gamma: float) -> float:
        """Signed E^2 closest to zero (nu_closest - G^2)."""
        lev = self(gamma)
        return float(lev[np.argmin(np.abs(lev))])


def _positive(levels) -> int:
    return int(np.sum(np.atleast_1d(levels) > 0))


def eps_by_bisection(
    levels,
    window,
    tol: float = 1e-6,
    scan_points: int = 201,
    scan=None,
    parameter: str = "gamma",
) -> list[ExceptionalPoint]:
    """Bracket and bisect the zero crossings of a level diagnostic.

    ``levels(x)`` returns one value or an ascending array of values (E^2 for
    the G diagnostic); a crossing is a change in the number of positive
    entries.  Scanning on the count, rather than on the sign of the nearest
    level, skips the jumps where the nearest level hands over.  Each bracket is
    bisected to width <= tol; a bracket that cannot be split further carries
    the remaining crossings as its multiplicity.
    """
    if tol < 1e-8:
        raise ValueError("tol must be >= 1e-8")
    lo, hi = map(float, window)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ValueError("window must be a finite interval")
    xs = np.linspace(lo, hi, scan_points) if scan is None else np.asarray(scan, dtype=float)
    sampled = [np.atleast_1d(levels(x)) for x in xs]
    n_levels = len(sampled[0])
    counts = [_positive(v) for v in sampled]

    out = []
    unresolved = []
    for i in range(len(xs) - 1):
        a, b = xs[i], xs[i + 1]
        ca, cb = counts[i], counts[i + 1]
        if ca == cb:
            continue
        if abs(ca - cb) > 1:
            log.debug("%d crossings in scan cell [%.6g, %.6g]; splitting", abs(ca - cb), a, b)
        while ca != cb:
            left, right, cr = a, b, cb
            while right - left > tol:
                mid = 0.5 * (left + right)
                cm = _positive(levels(mid))
                if cm != ca:
                    right, cr = mid, cm
                else:
                    left = mid
            mult = abs(ca - cr)
            if mult > 1:
                unresolved.append(0.5 * (left + right))
            # levels are sorted, so the crossing level's ordinal is the number
            # of levels already below zero on the positive side of the bracket
            index = n_levels - max(ca, cr)
            out.append(ExceptionalPoint(0.5 * (left + right), index, "bisection", mult, parameter))
            a, ca = right, cr
    if unresolved:
        warnings.warn(
            f"{len(unresolved)} brackets hold coincident crossings unresolved within {tol:g} "
            f"(first at {unresolved[0]:.9g}); reported with multiplicity",
            stacklevel=2,
        )
    return out
