"""Spectra and exceptional points of the imaginary-mass Dirac operator on a torus."""

__version__ = "0.1.0"

from .analysis import (
    Classification,
    ExceptionalPoint,
    behavior_change_point,
    classify,
    doublet_onset,
    eps_by_bisection,
    eps_from_oracle,
    ground_branch,
    track_branch,
)
from .discretize import (
    Grid,
    OperatorPair,
    SpinorMode,
    build_dplus,
    build_first_order,
    build_squared,
    operator_pair,
    symmetrize,
)
from .eigensolve import ComplexSpectrum, SolverError, eig_general, eig_symmetric, validate
from .geometry import TorusGeometry, gaussian_curvature, potential, profile, weight
from .sweeps import (
    PhaseDiagram,
    convergence_study,
    optimal_proportion_study,
    solve_first_order,
    sweep_gamma,
    sweep_r,
)
