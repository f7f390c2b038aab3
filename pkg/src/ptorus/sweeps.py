"""Parameter sweeps over G and r, proportion studies and convergence checks."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .analysis import Branch
from .discretize import (
    Grid,
    OperatorPair,
    SpinorMode,
    assemble_first_order,
    build_squared,
    operator_pair,
    symmetrize,
)
from .eigensolve import ComplexSpectrum, SolverError, eig_general, eig_symmetric
from .geometry import TorusGeometry

log = logging.getLogger(__name__)

DEFAULT_N = 128
PRODUCTION_N = 512


def solve_first_order(pair: OperatorPair, gamma: float, vectors: bool = False) -> ComplexSpectrum:
    """Spectrum of [[-iG, Dminus], [Dplus, iG]] via its real similar form.

    H = T (i K) T^H with T = diag(I, iI) unitary, so residuals carry over
    unchanged and eigenvectors map as x_H = T x_K.
    """
    K = assemble_first_order(pair, gamma, real_form=True)
    spec = eig_general(K, vectors=vectors)
    w = 1j * spec.eigenvalues
    order = np.lexsort((w.imag, w.real))
    out = ComplexSpectrum(w[order], meta={"n": K.shape[0], "gamma": gamma})
    if spec.eigenvectors is not None:
        X = spec.eigenvectors[:, order].copy()
        X[pair.N :] *= 1j
        out.eigenvectors = X
        out.residuals = spec.residuals[order]
    return out


def _map(fn, items, workers: int):
    # results come back in input order whatever the completion order
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _guarded(fn):
    def run(x):
        try:
            return fn(x)
        except SolverError as exc:
            log.warning("solver failure at %s: %s", x, exc)
            return None

    return run


@dataclass
class PhaseDiagram:
    swept: str
    points: np.ndarray
    spectra: list
    classifications: list
    branch: Branch
    eps: list
    config: dict
    continued: Branch | None = None
    failed: list = field(default_factory=list)

    @property
    def scales(self) -> np.ndarray:
        return np.array([c.scale if c is not None else np.nan for c in self.classifications])

    def branch_labels(self, which: str = "ground") -> np.ndarray:
        b = self.branch if which == "ground" else self.continued
        return b.labels(self.scales, self.config.get("classify_tol", analysis.DEFAULT_CLASSIFY_TOL))

    def transitions(self, which: str = "ground"):
        b = self.branch if which == "ground" else self.continued
        return analysis.transitions(b.params, self.branch_labels(which))

    def broken_fraction_range(self):
        vals = [c.broken_fraction for c in self.classifications if c is not None]
        return (min(vals), max(vals)) if vals else (float("nan"), float("nan"))


def _check_increasing(points, name):
    points = np.asarray(points, dtype=float)
    if points.ndim != 1 or not len(points):
        raise ValueError(f"{name} grid must be a non-empty 1-d sequence")
    if np.any(np.diff(points) <= 0):
        raise ValueError(f"{name} grid must be strictly increasing")
    if not np.all(np.isfinite(points)):
        raise ValueError(f"{name} grid must be finite")
    return points


def _finish(swept, points, spectra, config, vectors):
    tol = config["classify_tol"]
    classes = [analysis.classify(s, tol) if s is not None else None for s in spectra]
    failed = [float(p) for p, s in zip(points, spectra) if s is None]
    branch = analysis.ground_branch(points, spectra)
    continued = analysis.track_branch(list(zip(points, spectra))) if vectors else None
    return PhaseDiagram(swept, points, spectra, classes, branch, [], config, continued, failed)


def sweep_gamma(
    geom: TorusGeometry,
    m: float,
    bc: str,
    gamma_grid,
    N: int = DEFAULT_N,
    vectors: bool = False,
    workers: int = 1,
    classify_tol: float = analysis.DEFAULT_CLASSIFY_TOL,
    ep_tol: float = 1e-6,
    bisection: bool = True,
) -> PhaseDiagram:
    gammas = _check_increasing(gamma_grid, "gamma")
    if gammas[0] < 0:
        raise ValueError("gamma grid must be >= 0")
    grid = Grid(N)
    mode = SpinorMode(m, 0.0, bc)
    pair = operator_pair(geom, mode, grid)
    spectra = _map(_guarded(lambda g: solve_first_order(pair, g, vectors)), gammas, workers)
    config = dict(swept="gamma", R=geom.R, r=geom.r, m=mode.m, bc=bc, N=grid.N, classify_tol=classify_tol, ep_tol=ep_tol)
    diagram = _finish("gamma", gammas, spectra, config, vectors)
    window = (float(gammas[0]), float(gammas[-1]))
    eps = analysis.eps_from_oracle(geom, mode.m, bc, grid, window)
    if bisection and len(gammas) > 1:
        levels = analysis.SquaredLevels(geom, mode.m, bc, grid)
        eps += analysis.eps_by_bisection(levels, window, ep_tol, scan=gammas)
    diagram.eps = sorted(eps, key=lambda e: (e.param_value, e.method))
    return diagram


def sweep_r(
    R: float,
    m: float,
    bc: str,
    gamma: float,
    r_grid,
    N: int = DEFAULT_N,
    vectors: bool = False,
    workers: int = 1,
    classify_tol: float = analysis.DEFAULT_CLASSIFY_TOL,
    ep_tol: float = 1e-6,
    bisection: bool = True,
) -> PhaseDiagram:
    rs = _check_increasing(r_grid, "r")
    if rs[-1] >= R:
        raise ValueError("r must be < R for every sweep point")
    if rs[0] <= 0:
        raise ValueError("r must be positive")
    grid = Grid(N)
    mode = SpinorMode(m, gamma, bc)

    def solve(r):
        return solve_first_order(operator_pair(TorusGeometry(R, r), mode, grid), gamma, vectors)

    spectra = _map(_guarded(solve), rs, workers)
    config = dict(swept="r", R=float(R), gamma=mode.gamma, m=mode.m, bc=bc, N=grid.N, classify_tol=classify_tol, ep_tol=ep_tol)
    diagram = _finish("r", rs, spectra, config, vectors)
    if bisection and len(rs) > 1:

        def levels(r):
            return analysis.oracle_levels(TorusGeometry(R, r), mode, grid) - gamma**2

        diagram.eps = analysis.eps_by_bisection(levels, (rs[0], rs[-1]), ep_tol, scan=rs, parameter="r")
    return diagram


@dataclass
class ProportionRow:
    R: float
    r: float
    sign_flip: float | None
    doublet_onset: float | None
    diagram: PhaseDiagram = field(repr=False, default=None)


def optimal_proportion_study(
    ratio: float,
    sizes,
    m: float,
    bc: str,
    gamma_grid,
    N: int = DEFAULT_N,
    vectors: bool = True,
    split_tol: float = 1e-13,
    workers: int = 1,
) -> list[ProportionRow]:
    """Behavior-change points across torus sizes sharing one aspect ratio.

    Two diagnostics per size: the first sign flip of Im E along the tracked
    branch (continued branch when ``vectors``), and the onset of coalesced
    exceptional-point doublets.
    """
    sizes = [(float(R), float(r)) for R, r in sizes]
    if not sizes:
        raise ValueError("need at least one size")
    for R, r in sizes:
        if abs(R / r - ratio) > 1e-12 * ratio:
            raise ValueError(f"size ({R}, {r}) does not have ratio {ratio}")
        TorusGeometry(R, r)
    gammas = _check_increasing(gamma_grid, "gamma")
    rows = []
    for R, r in sizes:
        geom = TorusGeometry(R, r)
        d = sweep_gamma(geom, m, bc, gammas, N, vectors=vectors, workers=workers, bisection=False)
        which = "continued" if vectors else "ground"
        b = d.continued if vectors else d.branch
        flip = analysis.behavior_change_point(b.params, b.values, d.branch_labels(which))
        nu = analysis.oracle_levels(geom, SpinorMode(m, 0.0, bc), Grid(N))
        onset = analysis.doublet_onset(nu, (gammas[0], gammas[-1]), split_tol)
        rows.append(ProportionRow(R, r, flip, onset, d))
    return rows


@dataclass
class ConvergenceResult:
    N_list: list
    eigenvalues: np.ndarray  # (len(N_list), k)
    orders: np.ndarray
    extrapolated: np.ndarray


def squared_levels(geom: TorusGeometry, mode: SpinorMode, grid: Grid, s: int = 1) -> np.ndarray:
    A, w = build_squared(geom, mode, grid, s)
    return eig_symmetric(symmetrize(A, w))


def convergence_study(geom: TorusGeometry, mode: SpinorMode, N_list, k: int = 5, s: int = 1) -> ConvergenceResult:
    """Richardson order estimate for the lowest ``k`` squared-operator eigenvalues."""
    N_list = [int(n) for n in N_list]
    if len(N_list) < 3:
        raise ValueError("need at least three resolutions")
    if any(b != 2 * a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("each resolution must double the previous one")
    lam = np.array([squared_levels(geom, mode, Grid(n), s)[:k] for n in N_list])
    d1 = lam[-3] - lam[-2]
    d2 = lam[-2] - lam[-1]
    # eigensolver error is ~eps * ||A||, ||A|| ~ 4 / (h r)^2 on the finest grid
    h = Grid(N_list[-1]).h
    floor = 64 * np.finfo(float).eps * (4.0 / (h * geom.r) ** 2 + np.abs(lam[-1]))
    orders = np.full(k, np.nan)
    for i in range(k):
        if abs(d2[i]) <= floor[i] or d1[i] == 0:
            warnings.warn(f"eigenvalue {i}: differences at rounding floor, order unreliable", stacklevel=2)
            continue
        orders[i] = np.log2(abs(d1[i] / d2[i]))
    p = np.where(np.isfinite(orders), orders, 2.0)
    extrap = lam[-1] + (lam[-1] - lam[-2]) / (2.0**p - 1.0)
    return ConvergenceResult(N_list, lam, orders, extrap)
