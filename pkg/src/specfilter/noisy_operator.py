"""Threshold regularisation when the eigenvalues are only observed with
noise, b_hat_i = b_i + xi_i, and the eigenvectors are known.

Everything here is conditional on the realised xi: expectations are over
the observation noise only.  Sets use strict inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignal, DimensionMismatch, SpecFilterError, ZeroObservedEigenvalue
from .filters import ModelSet
from .oracles import BoundReport, RiskDecomposition
from .sequence_model import ProblemInstance, SingularSystem, _frozen

DEFAULT_ALPHA = 1.0


@dataclass(frozen=True, eq=False)
class NoisySpectrum:
    bhat: np.ndarray
    s: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        bhat = _frozen(self.bhat).reshape(-1)
        if not self.s > 0:
            raise SpecFilterError(f"eigenvalue noise scale s must be positive, got {self.s}")
        if not self.alpha > 0:
            raise SpecFilterError(f"alpha must be positive, got {self.alpha}")
        if np.any(bhat == 0):
            raise ZeroObservedEigenvalue(
                f"observed eigenvalue is zero at index {int(np.flatnonzero(bhat == 0)[0])}")
        object.__setattr__(self, "bhat", bhat)
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self) -> int:
        return self.bhat.size


@dataclass(frozen=True)
class TailCertificate2:
    """Claimed constants for the eigenvalue-noise assumptions:
    P(xi^2/s^2 > t) <= Kprime e^{-t/betaprime} and
    min(P(xi < -alpha s), P(xi > alpha s)) >= C."""

    Kprime: float
    betaprime: float
    C: float = 1.0

    def __post_init__(self):
        if not (self.Kprime > 0 and self.betaprime > 0):
            raise SpecFilterError("Kprime and betaprime must be positive")
        if not 0 < self.C <= 1:
            raise SpecFilterError(f"C must lie in (0, 1], got {self.C}")


@dataclass(frozen=True, eq=False)
class ConditionalContext:
    xi: np.ndarray
    instance: ProblemInstance
    spectrum: NoisySpectrum

    def __post_init__(self):
        xi = _frozen(self.xi).reshape(-1)
        object.__setattr__(self, "xi", xi)
        if xi.size != self.instance.n or self.spectrum.n != self.instance.n:
            raise DimensionMismatch("xi, spectrum and instance lengths differ")
        if not np.array_equal(self.spectrum.bhat, self.instance.b + xi):
            raise SpecFilterError("spectrum.bhat must equal b + xi exactly")

    @classmethod
    def from_xi(cls, instance: ProblemInstance, xi, s: float, alpha: float = DEFAULT_ALPHA):
        xi = np.asarray(xi, dtype=float)
        return cls(xi, instance, NoisySpectrum(instance.b + xi, s, alpha))

    @property
    def n(self) -> int:
        return self.instance.n

    @property
    def sigma_hat2(self) -> np.ndarray:
        return observed_variances(self.spectrum, self.instance.sigma)

    def to_dict(self):
        return {
            "xi": self.xi.tolist(),
            "bhat": self.spectrum.bhat.tolist(),
            "b": self.instance.b.tolist(),
            "x": self.instance.x.tolist(),
            "sigma": self.instance.sigma,
            "s": self.spectrum.s,
            "alpha": self.spectrum.alpha,
        }

    @classmethod
    def from_dict(cls, d):
        inst = ProblemInstance.from_spectrum(d["b"], d["x"], d["sigma"])
        ctx = cls.from_xi(inst, d["xi"], d["s"], d.get("alpha", DEFAULT_ALPHA))
        if "bhat" in d and not np.allclose(ctx.spectrum.bhat, d["bhat"], rtol=0, atol=1e-15):
            raise SpecFilterError("stored bhat disagrees with b + xi")
        return ctx


def observed_variances(spectrum: NoisySpectrum, sigma: float) -> np.ndarray:
    """sigma_hat_i^2 = sigma^2 / (n bhat_i^2)."""
    return sigma**2 / (spectrum.n * spectrum.bhat**2)


def noisy_sequence(y, spectrum: NoisySpectrum, system: SingularSystem) -> np.ndarray:
    """y_tilde_i = bhat_i^{-1} <y, psi_i>_n."""
    if np.any(spectrum.bhat == 0):
        raise ZeroObservedEigenvalue("observed eigenvalue is zero")
    if spectrum.n != system.n:
        raise DimensionMismatch("spectrum and system sizes differ")
    return system.project(y) / spectrum.bhat


def conditional_noise_power(ctx: ConditionalContext) -> np.ndarray:
    """E_xi(eta_tilde_i^2) = sigma_hat_i^2 + xi_i^2 x_i^2 / bhat_i^2."""
    bhat = ctx.spectrum.bhat
    return ctx.sigma_hat2 + ctx.xi**2 * ctx.instance.x**2 / bhat**2


def conditional_oracle(ctx: ConditionalContext) -> ModelSet:
    """{i : x_i^2 > E_xi(eta_tilde_i^2)}."""
    return ModelSet(ctx.instance.x**2 > conditional_noise_power(ctx))


def conditional_oracle_form1(ctx: ConditionalContext) -> ModelSet:
    """2|bhat_i| > sigma^2 / (n |b_i| x_i^2) + |b_i|; x_i = 0 is never selected."""
    inst = ctx.instance
    x2 = inst.x**2
    ab = np.abs(inst.b)
    with np.errstate(divide="ignore"):
        rhs = inst.sigma**2 / (inst.n * ab * x2) + ab
    return ModelSet((x2 > 0) & (2.0 * np.abs(ctx.spectrum.bhat) > rhs))


def conditional_oracle_form2(ctx: ConditionalContext) -> ModelSet:
    """x_i^2 > sigma^2 / (n (bhat_i^2 - xi_i^2)) and |bhat_i| > |b_i| / 2."""
    inst = ctx.instance
    bhat = ctx.spectrum.bhat
    denom = bhat**2 - ctx.xi**2
    with np.errstate(divide="ignore"):
        quotient = inst.sigma**2 / (inst.n * denom)
    return ModelSet((denom != 0) & (inst.x**2 > quotient) & (np.abs(bhat) > np.abs(inst.b) / 2))


def form_degenerate(ctx: ConditionalContext) -> np.ndarray:
    """Coordinates where the explicit oracle forms are not valid rewrites of
    the defining inequality: x_i = 0, bhat_i^2 = xi_i^2, or bhat_i and b_i
    of opposite sign (both forms take absolute values and so accept sign
    flipped observations that the defining inequality rejects)."""
    inst = ctx.instance
    bhat = ctx.spectrum.bhat
    return (inst.x == 0) | (bhat**2 == ctx.xi**2) | (np.sign(bhat) != np.sign(inst.b))


def noisy_threshold_params(spectrum: NoisySpectrum, sigma: float, beta: float) -> np.ndarray:
    """nu_i = max(beta ln(n^2 sigma_hat_i^2), 0)."""
    if not beta > 0:
        raise SpecFilterError(f"beta must be positive, got {beta}")
    n = spectrum.n
    return np.maximum(beta * np.log(n * n * observed_variances(spectrum, sigma)), 0.0)


def noisy_threshold_select(ytilde, spectrum: NoisySpectrum, sigma: float, beta: float) -> ModelSet:
    """{i : y_tilde_i^2 > 8 sigma_hat_i^2 nu_i and |bhat_i| > alpha s}."""
    yt = np.asarray(ytilde, dtype=float)
    if yt.shape[-1] != spectrum.n:
        raise DimensionMismatch(f"ytilde length {yt.shape[-1]} != n = {spectrum.n}")
    return ModelSet(noisy_selection_mask(yt, spectrum.bhat, sigma, beta,
                                         spectrum.alpha * spectrum.s))


def noisy_selection_mask(ytilde, bhat, sigma: float, beta: float, gate: float) -> np.ndarray:
    """Array form of the noisy threshold rule; ``bhat`` may vary along
    leading axes (one observed spectrum per replication)."""
    bhat = np.asarray(bhat, dtype=float)
    n = bhat.shape[-1]
    sh2 = sigma**2 / (n * bhat**2)
    nu = np.maximum(beta * np.log(n * n * sh2), 0.0)
    return (np.asarray(ytilde) ** 2 > 8.0 * sh2 * nu) & (np.abs(bhat) > gate)


def conditional_risk(m, ctx: ConditionalContext) -> RiskDecomposition:
    mask = m.mask if isinstance(m, ModelSet) else ModelSet.from_indices(m, ctx.n).mask
    x2 = ctx.instance.x**2
    power = conditional_noise_power(ctx)
    return RiskDecomposition(bias=float(x2[~mask].sum()), variance=float(power[mask].sum()))


def m_set(system: SingularSystem, alpha: float, s: float) -> ModelSet:
    """M = {i : |b_i| < 2 alpha s}."""
    return ModelSet(np.abs(system.b) < 2.0 * alpha * s)


def kappa(ctx: ConditionalContext, K: float, beta: float, betaprime: float) -> float:
    """4 K beta / n + 4 sum_{i not in m*_xi} xi_i^2 x_i^2 / (alpha s)^2 1{xi_i^2 > s^2 beta' ln n}."""
    n = ctx.n
    s, alpha = ctx.spectrum.s, ctx.spectrum.alpha
    outside = ~conditional_oracle(ctx).mask
    fired = ctx.xi**2 > s * s * betaprime * math.log(n)
    tail = ctx.xi**2 * ctx.instance.x**2 / (alpha * alpha * s * s)
    return 4.0 * K * beta / n + 4.0 * float(tail[outside & fired].sum())


def theorem2_constants(ctx: ConditionalContext, beta: float, K: float,
                       cert: TailCertificate2) -> dict:
    norm2 = float(np.sum(ctx.instance.x**2))
    if norm2 == 0:
        raise DegenerateSignal("||x_dag|| = 0, log ||x_dag||^2 undefined")
    alpha = ctx.spectrum.alpha
    return {
        "beta": beta,
        "K": K,
        "alpha": alpha,
        "s": ctx.spectrum.s,
        "Kprime": cert.Kprime,
        "betaprime": cert.betaprime,
        "C": cert.C,
        "K1prime": max(18.0 * beta, 4.0 * cert.betaprime / alpha**2),
        "K2prime": max(9.0 * (beta * math.log(norm2) + 1.0), 1.0),
        "norm2": norm2,
    }


def theorem2_bound(ctx: ConditionalContext, beta: float, K: float, cert: TailCertificate2,
                   lhs: float = float("nan"), stderr: float | None = None) -> BoundReport:
    """Conditional oracle inequality for the noisy-eigenvalue threshold
    estimator; ``lhs`` is a Monte Carlo estimate over the observation noise
    at the realised xi."""
    c = theorem2_constants(ctx, beta, K, cert)
    n = ctx.n
    oracle = conditional_oracle(ctx)
    oracle_risk = conditional_risk(oracle, ctx).total
    big_m = m_set(ctx.instance.system, ctx.spectrum.alpha, ctx.spectrum.s)
    m_term = float(np.sum(ctx.instance.x[big_m.mask] ** 2))
    kap = kappa(ctx, K, beta, cert.betaprime)
    rhs = (c["K1prime"] * math.log(n) + c["K2prime"]) * oracle_risk + m_term + kap
    return BoundReport("theorem2", float(lhs), rhs, c, stderr, details={
        "conditional_oracle_risk": oracle_risk,
        "M_sum": m_term,
        "kappa": kap,
        "M": [i + 1 for i in big_m.indices],
        "conditional_oracle": [i + 1 for i in oracle.indices],
    })


def lemma3_bounds(ctx: ConditionalContext, nu, K: float, beta: float) -> np.ndarray:
    """Per-coordinate pair
    (4 K beta sigma_hat^2 e^{-nu/beta} + 4 xi^2 x^2 / (alpha s)^2,
     9 sigma_hat^2 nu + 8 E_xi(eta_tilde^2) + x^2 1{|bhat| <= alpha s}), shape (n, 2)."""
    nu = np.asarray(nu, dtype=float)
    sh2 = ctx.sigma_hat2
    x2 = ctx.instance.x**2
    s, alpha = ctx.spectrum.s, ctx.spectrum.alpha
    first = 4.0 * K * beta * sh2 * np.exp(-nu / beta) + 4.0 * ctx.xi**2 * x2 / (alpha * s) ** 2
    gated = np.abs(ctx.spectrum.bhat) <= alpha * s
    second = 9.0 * sh2 * nu + 8.0 * conditional_noise_power(ctx) + x2 * gated
    return np.column_stack([first, second])


def lemma4_truncation(xi, s: float, betaprime: float, n: int) -> np.ndarray:
    """Pairs (s^2 beta' ln n, xi_i^2 1{xi_i^2 > s^2 beta' ln n}); their sum bounds xi_i^2."""
    xi = np.asarray(xi, dtype=float)
    level = s * s * betaprime * math.log(n)
    tail = np.where(xi**2 > level, xi**2, 0.0)
    return np.stack([np.full_like(tail, level), tail], axis=-1)


def lemma4_envelope(s: float, Kprime: float, betaprime: float, n: int) -> float:
    """K' beta' s^2 (1 + ln n) / n, the explicit bound on E(xi^2 1{...})."""
    return Kprime * betaprime * s * s * (1.0 + math.log(n)) / n
