"""Singular-system representation of a discrete operator and the
reduction of a vector observation to a heteroscedastic sequence model.

Conventions: the source side uses the Euclidean inner product on R^d,
the image side uses <u, v>_n = sum(u * v) / n.  With this normalisation
an orthonormal image basis psi_i has Euclidean norm sqrt(n), and the
singular values b_i are the Euclidean singular values divided by sqrt(n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient, SpecFilterError

ORTHO_TOL = 1e-8


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def inner_n(u, v):
    """Image-side inner product <u, v>_n (works along the last axis)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return (u * v).sum(axis=-1) / u.shape[-1]


@dataclass(frozen=True, eq=False)
class SingularSystem:
    """Singular values ``b`` with source basis ``phi`` (n x d, rows are the
    phi_i) and image basis ``psi`` (n x n, rows are the psi_i).

    When both bases are omitted the system is spectrum-only: phi_i = e_i
    in R^n and psi_i = sqrt(n) e_i.  Every sequence-space quantity depends
    only on ``b`` so this is exact for simulation.
    """

    b: np.ndarray
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        b = _frozen(self.b).reshape(-1)
        object.__setattr__(self, "b", b)
        n = b.size
        if n < 1:
            raise SpecFilterError("singular system needs at least one value")
        if not np.all(np.isfinite(b)) or np.any(b == 0):
            raise SpecFilterError("singular values must be finite and nonzero")
        b2 = b * b
        if np.any(np.diff(b2) > ORTHO_TOL * b2[:-1]):
            raise SpecFilterError("b_i^2 must be non-increasing in i")
        if (self.phi is None) != (self.psi is None):
            raise SpecFilterError("phi and psi must be given together")
        if self.phi is None:
            return
        phi = _frozen(self.phi)
        psi = _frozen(self.psi)
        if phi.ndim != 2 or phi.shape[0] != n or phi.shape[1] < n:
            raise DimensionMismatch(f"phi must be {n} x d with d >= {n}, got {phi.shape}")
        if psi.shape != (n, n):
            raise DimensionMismatch(f"psi must be {n} x {n}, got {psi.shape}")
        if np.max(np.abs(phi @ phi.T - np.eye(n))) > ORTHO_TOL:
            raise SpecFilterError("phi is not orthonormal")
        if np.max(np.abs(psi @ psi.T / n - np.eye(n))) > ORTHO_TOL:
            raise SpecFilterError("psi is not orthonormal under <.,.>_n")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def d(self) -> int:
        return self.n if self.phi is None else self.phi.shape[1]

    @property
    def spectrum_only(self) -> bool:
        return self.phi is None

    def source_basis(self) -> np.ndarray:
        return np.eye(self.n) if self.phi is None else self.phi

    def image_basis(self) -> np.ndarray:
        return np.sqrt(self.n) * np.eye(self.n) if self.psi is None else self.psi

    def project(self, y) -> np.ndarray:
        """Image coefficients <y, psi_i>_n; ``y`` may carry leading batch axes."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.n:
            raise DimensionMismatch(f"expected length {self.n}, got {y.shape[-1]}")
        if self.psi is None:
            return y / np.sqrt(self.n)
        return y @ self.psi.T / self.n

    def apply(self, coeffs) -> np.ndarray:
        """A_n applied to sum_i coeffs_i phi_i, i.e. sum_i b_i coeffs_i psi_i."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n:
            raise DimensionMismatch(f"expected length {self.n}, got {coeffs.shape[-1]}")
        return (self.b * coeffs) @ self.image_basis()


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    x: np.ndarray
    sigma: float
    system: SingularSystem

    def __post_init__(self):
        x = _frozen(self.x).reshape(-1)
        object.__setattr__(self, "x", x)
        if not self.sigma > 0:
            raise SpecFilterError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "sigma", float(self.sigma))
        if x.size != self.system.n:
            raise DimensionMismatch(f"x has length {x.size}, system has n={self.system.n}")

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def b(self) -> np.ndarray:
        return self.system.b

    @property
    def variances(self) -> np.ndarray:
        return noise_variances(self.system, self.sigma)

    @classmethod
    def from_spectrum(cls, b, x, sigma):
        return cls(x=x, sigma=sigma, system=SingularSystem(b))


@dataclass(frozen=True, eq=False)
class SequenceObservation:
    ydag: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        ydag = _frozen(self.ydag).reshape(-1)
        var = _frozen(self.variances).reshape(-1)
        if ydag.size != var.size:
            raise DimensionMismatch("ydag and variances lengths differ")
        if np.any(~(var > 0)):
            raise SpecFilterError("variances must be positive")
        object.__setattr__(self, "ydag", ydag)
        object.__setattr__(self, "variances", var)

    @property
    def n(self) -> int:
        return self.ydag.size


def build_singular_system(matrix, tolerance: float = 1e-12) -> SingularSystem:
    """SVD front-end: the n x d matrix A_n -> {b_i; phi_i, psi_i}.

    Singular values below ``tolerance * max|b|`` raise RankDeficient.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch("operator must be a 2-D matrix")
    n, d = a.shape
    if d < n:
        raise DimensionMismatch(f"need d >= n for a surjective operator, got {n} x {d}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0 or s[-1] <= tolerance * s[0]:
        rank = int(np.sum(s > tolerance * s[0])) if s[0] > 0 else 0
        raise RankDeficient(f"effective rank {rank} < n = {n}")
    # psi_i = sqrt(n) u_i has unit <.,.>_n norm, so b_i = s_i / sqrt(n)
    return SingularSystem(b=s / np.sqrt(n), phi=vt, psi=np.sqrt(n) * u.T)


def noise_variances(system: SingularSystem, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise SpecFilterError(f"sigma must be positive, got {sigma}")
    return sigma**2 / (system.b**2 * system.n)


def to_sequence(y, system: SingularSystem, sigma: float) -> SequenceObservation:
    """y_dag_i = b_i^{-1} <y, psi_i>_n with variances sigma^2 b_i^{-2} / n."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != system.n:
        raise DimensionMismatch(f"y has length {y.size}, system has n={system.n}")
    return SequenceObservation(system.project(y) / system.b, noise_variances(system, sigma))


def synthesize(coeffs, system: SingularSystem) -> np.ndarray:
    """sum_i coeffs_i phi_i in R^d."""
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if coeffs.size != system.n:
        raise DimensionMismatch(f"coeffs has length {coeffs.size}, system has n={system.n}")
    return coeffs @ system.source_basis()
