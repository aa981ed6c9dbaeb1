"""Filter estimators and binary model selection in the sequence model.

Coordinates are 0-based throughout the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SpecFilterError
from .sequence_model import SequenceObservation, _frozen

DEFAULT_BETA = 3.0


@dataclass(frozen=True, eq=False)
class FilterVector:
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise SpecFilterError("filter weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.weights == 0) | (self.weights == 1)))


@dataclass(frozen=True, eq=False)
class ModelSet:
    """A subset of coordinates, stored as a boolean mask of length n."""

    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen(self.mask, dtype=bool).reshape(-1))

    @classmethod
    def from_indices(cls, indices, n: int) -> "ModelSet":
        idx = np.asarray(sorted(set(int(i) for i in indices)), dtype=int)
        if idx.size and (idx[0] < 0 or idx[-1] >= n):
            raise SpecFilterError(f"indices must lie in [0, {n})")
        mask = np.zeros(n, dtype=bool)
        mask[idx] = True
        return cls(mask)

    @classmethod
    def empty(cls, n: int) -> "ModelSet":
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> "ModelSet":
        return cls(np.ones(n, dtype=bool))

    @property
    def n(self) -> int:
        return self.mask.size

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.mask))

    def as_filter(self) -> FilterVector:
        return FilterVector(self.mask.astype(float))

    def is_cutoff(self) -> bool:
        """True when the set is a prefix {0, ..., k-1}, i.e. a spectral cut-off."""
        return not np.any(np.diff(self.mask.astype(int)) > 0)

    def __contains__(self, i) -> bool:
        return bool(self.mask[i])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self):
        return iter(self.indices)

    def __eq__(self, other):
        if isinstance(other, ModelSet):
            return self.n == other.n and bool(np.array_equal(self.mask, other.mask))
        if isinstance(other, (set, frozenset)):
            return set(self.indices) == other
        return NotImplemented

    def __hash__(self):
        return hash((self.n, self.indices))

    def __repr__(self):
        return f"ModelSet({set(self.indices) or '{}'}, n={self.n})"


@dataclass(frozen=True, eq=False)
class ThresholdParams:
    beta: float
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen(self.mu).reshape(-1))


def _weights(selection) -> np.ndarray:
    if isinstance(selection, ModelSet):
        return selection.mask.astype(float)
    if isinstance(selection, FilterVector):
        return selection.weights
    return np.asarray(selection, dtype=float)


def apply_filter(selection, obs: SequenceObservation) -> np.ndarray:
    """Coefficients lambda_i * ydag_i; a ModelSet acts as the 0/1 filter."""
    w = _weights(selection)
    if w.shape[-1] != obs.n:
        raise DimensionMismatch(f"filter length {w.shape[-1]} != n = {obs.n}")
    return w * obs.ydag


def spectral_cutoff(k: int, n: int) -> FilterVector:
    if not 0 <= k <= n:
        raise SpecFilterError(f"cut-off k={k} outside [0, {n}]")
    return FilterVector((np.arange(n) < k).astype(float))


def tikhonov(tau: float, variances) -> FilterVector:
    if tau < 0:
        raise SpecFilterError(f"tau must be nonnegative, got {tau}")
    return FilterVector(1.0 / (1.0 + tau * np.asarray(variances, dtype=float)))


def ure_select(obs: SequenceObservation) -> ModelSet:
    """Minimiser of ||ydag - x_m||^2 + 2 sum_{i in m} sigma_i^2 over all subsets."""
    return ModelSet(obs.ydag**2 >= 2.0 * obs.variances)


def threshold_params(variances, beta: float = DEFAULT_BETA) -> ThresholdParams:
    """mu_i = max(beta * ln(n^2 sigma_i^2), 0)."""
    if not beta > 0:
        raise SpecFilterError(f"beta must be positive, got {beta}")
    var = np.asarray(variances, dtype=float)
    n = var.size
    with np.errstate(divide="ignore"):
        mu = np.maximum(beta * np.log(n * n * var), 0.0)
    return ThresholdParams(beta=float(beta), mu=mu)


def constant_params(n: int, value: float = 0.5) -> ThresholdParams:
    """Constant mu sequence; value 1/2 reproduces the URE selector."""
    return ThresholdParams(beta=float("nan"), mu=np.full(n, float(value)))


def selection_thresholds(variances, params: ThresholdParams) -> np.ndarray:
    return 4.0 * np.asarray(variances, dtype=float) * params.mu


def threshold_select(obs: SequenceObservation, params: ThresholdParams) -> ModelSet:
    """{i : ydag_i^2 >= 4 sigma_i^2 mu_i}, inclusive at the boundary."""
    if params.mu.size != obs.n:
        raise DimensionMismatch(f"mu has length {params.mu.size}, n = {obs.n}")
    return ModelSet(obs.ydag**2 >= selection_thresholds(obs.variances, params))


def penalized_criterion(candidate, obs: SequenceObservation, params: ThresholdParams) -> float:
    """||ydag - c||^2 + 4 sum_i sigma_i^2 mu_i 1{c_i != 0}."""
    c = np.asarray(candidate, dtype=float).reshape(-1)
    if c.size != obs.n or params.mu.size != obs.n:
        raise DimensionMismatch("candidate, observation and params lengths differ")
    resid = np.sum((obs.ydag - c) ** 2)
    return float(resid + np.sum(selection_thresholds(obs.variances, params)[c != 0]))
