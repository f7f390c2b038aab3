"""Dense eigensolvers with residual validation.

Both routes go through LAPACK (``geev`` with balancing, ``syevd``) via scipy;
what this module adds is a fixed eigenvalue ordering, normalized eigenvectors
and an independent residual check on every accepted result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

GENERAL_RESIDUAL_TOL = 1e-8
SYMMETRIC_RESIDUAL_TOL = 1e-10
SYMMETRY_TOL = 1e-12


class SolverError(RuntimeError):
    """Eigensolver failure.  ``spectrum`` holds partial results, if any; they are unusable."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


@dataclass
class ComplexSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    residuals: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        if self.residuals is None or not len(self.residuals):
            return float("nan")
        return float(np.max(self.residuals))

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.n else 0.0

    def __len__(self):
        return self.n


def spectral_order(w: np.ndarray) -> np.ndarray:
    """Indices sorting by real part, then imaginary part."""
    return np.lexsort((w.imag, w.real))


def residuals(A: np.ndarray, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """||A x_i - w_i x_i|| / (||A||_1 ||x_i||) for each column of X."""
    normA = np.linalg.norm(A, 1)
    if normA == 0:
        normA = 1.0
    R = A @ X - X * w[None, :]
    return np.linalg.norm(R, axis=0) / (normA * np.linalg.norm(X, axis=0))


def eig_general(A, vectors: bool = False, tol: float = GENERAL_RESIDUAL_TOL) -> ComplexSpectrum:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    try:
        if vectors:
            w, X = sla.eig(A, right=True, check_finite=False)
        else:
            w = sla.eigvals(A, check_finite=False)
            X = None
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver did not converge: {exc}") from exc
    w = np.asarray(w, dtype=complex)
    order = spectral_order(w)
    w = w[order]
    spec = ComplexSpectrum(w, meta={"n": A.shape[0]})
    if X is not None:
        X = np.asarray(X, dtype=complex)[:, order]
        X /= np.linalg.norm(X, axis=0)[None, :]
        spec.eigenvectors = X
        spec.residuals = residuals(A, w, X)
        if spec.residual > tol:
            raise SolverError(f"residual {spec.residual:.2e} exceeds {tol:.0e}", spec)
    return spec


def eig_symmetric(S, tol: float = SYMMETRIC_RESIDUAL_TOL) -> np.ndarray:
    """Ascending eigenvalues of a real symmetric matrix."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    scale = np.abs(S).max() if S.size else 0.0
    if scale and np.abs(S - S.T).max() > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        w, X = sla.eigh(S, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"symmetric eigensolver did not converge: {exc}") from exc
    res = residuals(S, w, X)
    if res.size and res.max() > tol:
        raise SolverError(f"symmetric residual {res.max():.2e} exceeds {tol:.0e}")
    return w


def validate(A, spec: ComplexSpectrum) -> float:
    """Recompute the max residual of ``spec`` against ``A``."""
    if spec.eigenvectors is None:
        raise ValueError("spectrum carries no eigenvectors")
    return float(residuals(np.asarray(A), spec.eigenvalues, spec.eigenvectors).max())


def trace_defect(A, spec: ComplexSpectrum) -> float:
    """|sum(lambda) - trace(A)| / (n ||A||_1)."""
    A = np.asarray(A)
    n = A.shape[0]
    normA = np.linalg.norm(A, 1) or 1.0
    return float(abs(spec.eigenvalues.sum() - np.trace(A)) / (n * normA))
