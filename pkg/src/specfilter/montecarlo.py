"""Seeded noise generation, replicated risk estimation and empirical
certification of the tail assumptions and bound reports.

Every block of ``BLOCK_SIZE`` replications draws from its own Philox
stream keyed by (seed, purpose, block index), and block statistics are
merged in block order.  Results therefore do not depend on the number of
worker threads.
"""

from __future__ import annotations

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import filters, noisy_operator, oracles
from .errors import CertificateViolated, ConfigError, SpecFilterError, UnknownEstimator, UnknownFamily
from .noisy_operator import ConditionalContext, TailCertificate2
from .sequence_model import ProblemInstance

BLOCK_SIZE = 2048
DEFAULT_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
FAMILIES = ("gaussian", "laplace", "uniform-symmetric")
THREADS_ENV = "SPECFILTER_THREADS"

# stream purposes
EPS_STREAM = 0
XI_FIXED_STREAM = 1
XI_RANDOM_STREAM = 2
TAIL_STREAM = 3
LEMMA4_STREAM = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    if not 0 <= seed < 2**64:
        raise SpecFilterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def resolve_threads(threads: int | None = None) -> int:
    """Requested thread count, capped by $SPECFILTER_THREADS."""
    cap = os.environ.get(THREADS_ENV)
    n = threads if threads else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


@dataclass(frozen=True)
class NoiseSpec:
    """Noise law with variance ``scale**2`` and optional claimed tail
    constants: (K, beta) for the exponential envelope on the squared
    standardised noise, (alpha, C) for the two-sided mass condition."""

    family: str = "gaussian"
    scale: float = 1.0
    K: float | None = None
    beta: float | None = None
    alpha: float | None = None
    C: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnknownFamily(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if not self.scale > 0:
            raise SpecFilterError(f"noise scale must be positive, got {self.scale}")

    def with_scale(self, scale: float) -> "NoiseSpec":
        return NoiseSpec(self.family, scale, self.K, self.beta, self.alpha, self.C)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("family", "scale", "K", "beta", "alpha", "C")}


def draw_noise(spec: NoiseSpec, n: int, rng: np.random.Generator, size: int | None = None):
    """Centered i.i.d. draws with variance spec.scale**2, shape (n,) or (size, n)."""
    shape = (n,) if size is None else (size, n)
    if spec.family == "gaussian":
        return spec.scale * rng.standard_normal(shape)
    if spec.family == "laplace":
        return rng.laplace(0.0, spec.scale / math.sqrt(2.0), shape)
    if spec.family == "uniform-symmetric":
        a = spec.scale * math.sqrt(3.0)
        return rng.uniform(-a, a, shape)
    raise UnknownFamily(spec.family)


# ---------------------------------------------------------------------------
# tail certificates


@dataclass(frozen=True)
class TailPoint:
    t: float
    empirical: float
    envelope: float
    stderr: float

    @property
    def ok(self) -> bool:
        return self.empirical - 3.0 * self.stderr <= self.envelope

    @property
    def margin(self) -> float:
        return self.envelope - self.empirical


@dataclass(frozen=True)
class TailReport:
    spec: NoiseSpec
    samples: int
    points: tuple = ()
    two_sided: dict | None = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        if self.reason:
            return False
        if not all(p.ok for p in self.points):
            return False
        return self.two_sided is None or self.two_sided["ok"]

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "samples": self.samples,
            "grid": [
                {"t": p.t, "empirical": p.empirical, "envelope": p.envelope,
                 "stderr": p.stderr, "margin": p.margin, "ok": p.ok}
                for p in self.points
            ],
            "two_sided": self.two_sided,
            "passed": self.passed,
            "reason": self.reason,
        }


def verify_tail_certificate(spec: NoiseSpec, samples: int = 100_000, seed: int = 0,
                            grid=DEFAULT_GRID, raise_on_violation: bool = True) -> TailReport:
    """Compare the empirical survival of (noise/scale)^2 against
    K e^{-t/beta} on ``grid``; check min(P(z < -alpha), P(z > alpha)) >= C
    when alpha and C are claimed.  Each comparison allows 3 binomial
    standard errors."""
    if samples < 10_000:
        raise SpecFilterError(f"tail certification needs at least 10^4 samples, got {samples}")
    if spec.family == "gaussian" and spec.beta is not None and spec.beta <= 2:
        report = TailReport(spec, samples, reason=f"beta={spec.beta} <= 2 is inadmissible for Gaussian noise")
        if raise_on_violation:
            raise CertificateViolated(report.reason)
        return report
    z = draw_noise(spec.with_scale(1.0), samples, stream(seed, TAIL_STREAM))
    g = z * z
    points = []
    if spec.K is not None and spec.beta is not None:
        for t in grid:
            p = float(np.mean(g > t))
            points.append(TailPoint(float(t), p, spec.K * math.exp(-t / spec.beta),
                                    math.sqrt(p * (1 - p) / samples)))
    two_sided = None
    if spec.alpha is not None and spec.C is not None:
        lo = float(np.mean(z < -spec.alpha))
        hi = float(np.mean(z > spec.alpha))
        p = min(lo, hi)
        se = math.sqrt(p * (1 - p) / samples)
        two_sided = {"alpha": spec.alpha, "C": spec.C, "lower": lo, "upper": hi,
                     "stderr": se, "ok": bool(p + 3.0 * se >= spec.C)}
    report = TailReport(spec, samples, tuple(points), two_sided)
    if raise_on_violation and not report.passed:
        bad = next((p for p in points if not p.ok), None)
        if bad is not None:
            raise CertificateViolated(
                f"P(z^2 > {bad.t}) = {bad.empirical:.6g} exceeds envelope {bad.envelope:.6g}", bad.t)
        raise CertificateViolated(f"two-sided mass {two_sided} below C", spec.alpha)
    return report


# ---------------------------------------------------------------------------
# replicated estimation


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    stderr: float
    replications: int
    seed: int

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr,
                "replications": self.replications, "seed": self.seed}


class _Moments:
    """Running count/mean/M2, merged with Chan's pairwise update."""

    def __init__(self, values):
        v = np.asarray(values, dtype=float)
        self.count = v.shape[0]
        self.mean = v.mean(axis=0)
        self.m2 = ((v - self.mean) ** 2).sum(axis=0)

    def merge(self, other: "_Moments"):
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        self.count = n

    @property
    def stderr(self):
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def replicate(fn, replications: int, seed: int, key=(EPS_STREAM,), threads: int | None = None):
    """Run ``fn(rng, size) -> {name: array}`` over fixed-size blocks and
    return {name: (mean, stderr)}; arrays keep any trailing axes."""
    if replications < 2:
        raise SpecFilterError(f"need at least 2 replications, got {replications}")
    sizes = [min(BLOCK_SIZE, replications - start) for start in range(0, replications, BLOCK_SIZE)]

    def run(block):
        out = fn(stream(seed, *key, block), sizes[block])
        return {name: _Moments(v) for name, v in out.items()}

    workers = min(resolve_threads(threads), len(sizes))
    if workers == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    total = parts[0]
    for part in parts[1:]:
        for name, mom in part.items():
            total[name].merge(mom)
    return {name: (mom.mean, mom.stderr) for name, mom in total.items()}


# ---------------------------------------------------------------------------
# estimators

_ESTIMATOR_RE = re.compile(r"^\s*([a-z-]+)\s*(?:[:(]\s*([^)]*?)\s*\)?)?\s*$")

ESTIMATOR_KINDS = {
    "cutoff": 1, "tikhonov": 1, "ure": 0, "threshold": (0, 1),
    "noisy-threshold": (0, 1, 2), "oracle-model": 0, "oracle-filter": 0,
    "conditional-oracle": 0,
}
NOISY_KINDS = ("noisy-threshold", "conditional-oracle")


@dataclass(frozen=True)
class Estimator:
    kind: str
    params: tuple = ()

    @property
    def id(self) -> str:
        if not self.params:
            return self.kind
        return f"{self.kind}({','.join(_fmt(p) for p in self.params)})"

    @property
    def noisy(self) -> bool:
        return self.kind in NOISY_KINDS


def _fmt(v):
    return str(int(v)) if isinstance(v, int) else repr(float(v))


def parse_estimator(text: str, n: int, beta: float = filters.DEFAULT_BETA,
                    alpha: float = noisy_operator.DEFAULT_ALPHA) -> list[Estimator]:
    """Parse ``kind``, ``kind:args`` or ``kind(args)``; ``cutoff:*`` expands
    to every k in 0..n.  Defaults for beta and alpha are filled in so ids
    are fully explicit."""
    m = _ESTIMATOR_RE.match(text)
    if not m or m.group(1) not in ESTIMATOR_KINDS:
        raise UnknownEstimator(f"unknown estimator {text!r}; known kinds: {sorted(ESTIMATOR_KINDS)}")
    kind, raw = m.group(1), m.group(2)
    args = [a.strip() for a in raw.split(",")] if raw else []
    arity = ESTIMATOR_KINDS[kind]
    allowed = arity if isinstance(arity, tuple) else (arity,)
    if len(args) not in allowed:
        raise UnknownEstimator(f"estimator {kind!r} takes {allowed} arguments, got {len(args)}")
    try:
        if kind == "cutoff":
            if args[0] in ("*", "all"):
                return [Estimator("cutoff", (k,)) for k in range(n + 1)]
            k = int(args[0])
            if not 0 <= k <= n:
                raise UnknownEstimator(f"cutoff k={k} outside [0, {n}]")
            return [Estimator("cutoff", (k,))]
        if kind == "tikhonov":
            return [Estimator("tikhonov", (float(args[0]),))]
        if kind == "threshold":
            return [Estimator("threshold", (float(args[0]) if args else float(beta),))]
        if kind == "noisy-threshold":
            b = float(args[0]) if args else float(beta)
            a = float(args[1]) if len(args) > 1 else float(alpha)
            return [Estimator("noisy-threshold", (b, a))]
    except ValueError as exc:
        raise UnknownEstimator(f"bad arguments in estimator {text!r}: {exc}") from None
    return [Estimator(kind)]


def parse_estimators(texts, n, beta=filters.DEFAULT_BETA, alpha=noisy_operator.DEFAULT_ALPHA):
    out, seen = [], set()
    for t in texts:
        for e in parse_estimator(t, n, beta, alpha):
            if e.id not in seen:
                seen.add(e.id)
                out.append(e)
    return out


def _fixed_weights(est: Estimator, instance: ProblemInstance) -> np.ndarray | None:
    n = instance.n
    if est.kind == "cutoff":
        return filters.spectral_cutoff(est.params[0], n).weights
    if est.kind == "tikhonov":
        return filters.tikhonov(est.params[0], instance.variances).weights
    if est.kind == "oracle-model":
        return oracles.oracle_model(instance).mask.astype(float)
    if est.kind == "oracle-filter":
        return oracles.oracle_filter(instance).weights
    return None


def known_operator_losses(estimators, instance: ProblemInstance, eta) -> dict:
    """Squared sequence-space error of each known-operator estimator for a
    batch of noise vectors ``eta`` (shape (size, n))."""
    x = instance.x
    ydag = x + eta
    var = instance.variances
    out = {}
    for est in estimators:
        w = _fixed_weights(est, instance)
        if w is not None:
            out[est.id] = np.sum((w * ydag - x) ** 2, axis=-1)
        elif est.kind == "ure":
            mask = ydag**2 >= 2.0 * var
            out[est.id] = np.sum(np.where(mask, eta**2, x**2), axis=-1)
        elif est.kind == "threshold":
            mask = ydag**2 >= filters.selection_thresholds(var, filters.threshold_params(var, est.params[0]))
            out[est.id] = np.sum(np.where(mask, eta**2, x**2), axis=-1)
    return out


def noisy_operator_losses(estimators, instance: ProblemInstance, eps_coef, xi, s: float) -> dict:
    """Errors of the noisy-eigenvalue estimators; ``xi`` is either one
    realised vector (conditional) or one per replication."""
    x, b, sigma = instance.x, instance.b, instance.sigma
    bhat = b + xi
    ytilde = (b * x + eps_coef) / bhat
    err2 = (ytilde - x) ** 2
    out = {}
    for est in estimators:
        if est.kind == "noisy-threshold":
            beta, alpha = est.params
            mask = noisy_operator.noisy_selection_mask(ytilde, bhat, sigma, beta, alpha * s)
        elif est.kind == "conditional-oracle":
            power = sigma**2 / (instance.n * bhat**2) + xi**2 * x**2 / bhat**2
            mask = np.broadcast_to(x**2 > power, ytilde.shape)
        else:
            continue
        out[est.id] = np.sum(np.where(mask, err2, x**2), axis=-1)
    return out


def _eps_coefficients(instance: ProblemInstance, noise: NoiseSpec, rng, size):
    eps = draw_noise(noise.with_scale(instance.sigma), instance.n, rng, size)
    return instance.system.project(eps)


# ---------------------------------------------------------------------------
# experiment configuration and driver


@dataclass(frozen=True)
class ExperimentConfig:
    instance: ProblemInstance
    estimators: tuple = ()
    replications: int = 10_000
    seed: int = 0
    beta: float = filters.DEFAULT_BETA
    K: float | None = None
    alpha: float = noisy_operator.DEFAULT_ALPHA
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    xi: NoiseSpec | None = None
    xi_values: tuple | None = None
    xi_mode: str = "conditional"
    threads: int | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replications < 2:
            raise ConfigError(f"replications must be >= 2, got {self.replications}")
        if self.xi_mode not in ("conditional", "unconditional"):
            raise ConfigError(f"xi_mode must be conditional or unconditional, got {self.xi_mode!r}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")

    @property
    def effective_K(self) -> float:
        if self.K is not None:
            return float(self.K)
        if self.noise.K is not None:
            return float(self.noise.K)
        return oracles.gaussian_K(self.beta)

    @property
    def xi_certificate(self) -> TailCertificate2:
        spec = self.xi
        kp = spec.K if spec.K is not None else oracles.gaussian_K(self.xi_betaprime)
        return TailCertificate2(kp, self.xi_betaprime, spec.C if spec.C is not None else 1.0)

    @property
    def xi_betaprime(self) -> float:
        return float(self.xi.beta) if self.xi.beta is not None else float(self.beta)

    def parsed_estimators(self) -> list[Estimator]:
        if not self.estimators:
            raise ConfigError("estimator list is empty")
        ests = parse_estimators(self.estimators, self.instance.n, self.beta, self.alpha)
        if self.xi is None and any(e.noisy for e in ests):
            raise ConfigError("noisy-operator estimators need an 'xi' noise specification")
        return ests

    def realized_xi(self, index: int = 0) -> np.ndarray:
        if self.xi_values is not None:
            xi = np.asarray(self.xi_values, dtype=float)
            if xi.size != self.instance.n:
                raise ConfigError(f"xi has length {xi.size}, instance has n={self.instance.n}")
            return xi
        return draw_noise(self.xi, self.instance.n, stream(self.seed, XI_FIXED_STREAM, index))

    def context(self, index: int = 0) -> ConditionalContext:
        return ConditionalContext.from_xi(self.instance, self.realized_xi(index), self.xi.scale, self.alpha)

    def to_dict(self):
        return {
            "estimators": list(self.estimators),
            "replications": self.replications,
            "seed": self.seed,
            "beta": self.beta,
            "K": self.effective_K,
            "alpha": self.alpha,
            "noise": self.noise.to_dict(),
            "xi": None if self.xi is None else self.xi.to_dict(),
            "xi_mode": self.xi_mode,
            "block_size": BLOCK_SIZE,
            "labels": dict(self.labels),
        }


def estimate_risks(estimators, instance: ProblemInstance, config: ExperimentConfig,
                   ctx: ConditionalContext | None = None) -> dict:
    """{estimator id: RiskEstimate}; all estimators share the same noise draws."""
    ests = [e if isinstance(e, Estimator) else parse_estimator(e, instance.n, config.beta, config.alpha)[0]
            for e in estimators]
    known = [e for e in ests if not e.noisy]
    noisy = [e for e in ests if e.noisy]
    results = {}
    if known or (noisy and config.xi_mode == "conditional"):
        if noisy and ctx is None:
            ctx = config.context()

        def fn(rng, size):
            e = _eps_coefficients(instance, config.noise, rng, size)
            out = known_operator_losses(known, instance, e / instance.b)
            if noisy and config.xi_mode == "conditional":
                out.update(noisy_operator_losses(noisy, instance, e, ctx.xi, ctx.spectrum.s))
            return out

        for k, (m, se) in replicate(fn, config.replications, config.seed, (EPS_STREAM,), config.threads).items():
            results[k] = RiskEstimate(float(m), float(se), config.replications, config.seed)
    if noisy and config.xi_mode == "unconditional":
        results.update(_unconditional(noisy, instance, config))
    return {e.id: results[e.id] for e in ests}


def _unconditional(noisy, instance, config):
    def fn(rng, size):
        e = _eps_coefficients(instance, config.noise, rng, size)
        xi = draw_noise(config.xi, instance.n, rng, size)
        return noisy_operator_losses(noisy, instance, e, xi, config.xi.scale)

    raw = replicate(fn, config.replications, config.seed, (XI_RANDOM_STREAM,), config.threads)
    return {k: RiskEstimate(float(m), float(se), config.replications, config.seed) for k, (m, se) in raw.items()}


def estimate_risk(estimator_id, instance: ProblemInstance, config: ExperimentConfig) -> RiskEstimate:
    est = parse_estimator(estimator_id, instance.n, config.beta, config.alpha) \
        if isinstance(estimator_id, str) else [estimator_id]
    if len(est) != 1:
        raise UnknownEstimator(f"{estimator_id!r} names more than one estimator")
    if est[0].noisy and config.xi is None:
        raise ConfigError("noisy-operator estimators need an 'xi' noise specification")
    return estimate_risks(est, instance, config)[est[0].id]


# ---------------------------------------------------------------------------
# per-coordinate lemma certification


def simulate_lemma1(instance: ProblemInstance, params: filters.ThresholdParams, replications: int,
                    seed: int, noise: NoiseSpec = NoiseSpec(), threads=None):
    """Monte Carlo means/stderrs of (eta_i^2 - x_i^2) 1{i in mhat} and
    (x_i^2 - eta_i^2) 1{i not in mhat}, each shape (n,)."""
    thresh = filters.selection_thresholds(instance.variances, params)
    x2 = instance.x**2

    def fn(rng, size):
        eta = _eps_coefficients(instance, noise, rng, size) / instance.b
        eta2 = eta**2
        sel = (instance.x + eta) ** 2 >= thresh
        return {"in": np.where(sel, eta2 - x2, 0.0), "out": np.where(sel, 0.0, x2 - eta2)}

    return replicate(fn, replications, seed, (EPS_STREAM,), threads)


def lemma1_reports(instance, params, K, replications, seed, noise=NoiseSpec(), threads=None):
    sims = simulate_lemma1(instance, params, replications, seed, noise, threads)
    bounds = oracles.lemma1_bounds(instance, params, K)
    return _coordinate_reports("lemma1", sims, bounds, {"K": K, "beta": params.beta})


def simulate_lemma3(ctx: ConditionalContext, beta: float, replications: int, seed: int,
                    noise: NoiseSpec = NoiseSpec(), threads=None):
    inst = ctx.instance
    x2 = inst.x**2
    bhat = ctx.spectrum.bhat
    gate = ctx.spectrum.alpha * ctx.spectrum.s

    def fn(rng, size):
        e = _eps_coefficients(inst, noise, rng, size)
        ytilde = (inst.b * inst.x + e) / bhat
        err2 = (ytilde - inst.x) ** 2
        sel = noisy_operator.noisy_selection_mask(ytilde, bhat, inst.sigma, beta, gate)
        return {"in": np.where(sel, err2 - x2, 0.0), "out": np.where(sel, 0.0, x2 - err2)}

    return replicate(fn, replications, seed, (EPS_STREAM,), threads)


def lemma3_reports(ctx, beta, K, replications, seed, noise=NoiseSpec(), threads=None):
    sims = simulate_lemma3(ctx, beta, replications, seed, noise, threads)
    nu = noisy_operator.noisy_threshold_params(ctx.spectrum, ctx.instance.sigma, beta)
    bounds = noisy_operator.lemma3_bounds(ctx, nu, K, beta)
    return _coordinate_reports("lemma3", sims, bounds, {"K": K, "beta": beta,
                                                        "alpha": ctx.spectrum.alpha, "s": ctx.spectrum.s})


def _coordinate_reports(name, sims, bounds, constants):
    reports = []
    for part, col in (("in", 0), ("out", 1)):
        mean, se = sims[part]
        for i in range(bounds.shape[0]):
            reports.append(oracles.BoundReport(
                f"{name}.{part}[{i + 1}]", float(mean[i]), float(bounds[i, col]), constants,
                float(se[i]), mode="consistent"))
    return reports


def simulate_lemma4(spec: NoiseSpec, n: int, betaprime: float, draws: int, seed: int, threads=None):
    """Monte Carlo mean/stderr of xi^2 1{xi^2 > s^2 beta' ln n} for scalar xi ~ spec."""
    level = spec.scale**2 * betaprime * math.log(n)

    def fn(rng, size):
        xi = draw_noise(spec, 1, rng, size)[:, 0]
        return {"tail": np.where(xi**2 > level, xi**2, 0.0)}

    mean, se = replicate(fn, draws, seed, (LEMMA4_STREAM, n), threads)["tail"]
    return float(mean), float(se)


def lemma4_report(spec: NoiseSpec, n: int, Kprime: float, betaprime: float, draws: int, seed: int,
                  threads=None):
    mean, se = simulate_lemma4(spec, n, betaprime, draws, seed, threads)
    env = noisy_operator.lemma4_envelope(spec.scale, Kprime, betaprime, n)
    return oracles.BoundReport(f"lemma4[n={n}]", mean, env,
                               {"Kprime": Kprime, "betaprime": betaprime, "s": spec.scale, "n": n},
                               se, mode="consistent")


# ---------------------------------------------------------------------------


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    risks: dict
    exact: dict
    bounds: list
    context: ConditionalContext | None = None
    comparison: dict | None = None

    @property
    def all_passed(self) -> bool:
        return all(b.passed() for b in self.bounds)

    def to_dict(self):
        inst = self.config.instance
        return {
            "config": self.config.to_dict(),
            "instance": {"n": inst.n, "b": inst.b.tolist(), "x": inst.x.tolist(), "sigma": inst.sigma},
            "risks": [{"id": k, **v.to_dict()} for k, v in self.risks.items()],
            "exact": self.exact,
            "bounds": [b.to_dict() for b in self.bounds],
            "conditional_context": None if self.context is None else self.context.to_dict(),
            "comparison": self.comparison,
            "all_bounds_passed": self.all_passed,
        }


def exact_summary(instance: ProblemInstance) -> dict:
    m_star = oracles.oracle_model(instance)
    cut = [oracles.exact_filter_risk(filters.spectral_cutoff(k, instance.n), instance)
           for k in range(instance.n + 1)]
    return {
        "oracle_model": [i + 1 for i in m_star.indices],
        "oracle_model_is_cutoff": m_star.is_cutoff(),
        "oracle_model_risk": oracles.exact_model_risk(m_star, instance).to_dict(),
        "oracle_filter": oracles.oracle_filter(instance).weights.tolist(),
        "oracle_filter_risk": oracles.exact_filter_risk(oracles.oracle_filter(instance), instance),
        "variances": instance.variances.tolist(),
        "cutoff_risk": cut,
    }


def compare_threshold_to_cutoff(risks: dict) -> dict | None:
    cut = {k: v for k, v in risks.items() if k.startswith("cutoff(")}
    thr = [k for k in risks if k.startswith("threshold(")]
    if not cut or not thr:
        return None
    best = min(cut, key=lambda k: cut[k].mean)
    t = risks[thr[0]]
    c = cut[best]
    combined = math.sqrt(t.stderr**2 + c.stderr**2)
    diff = c.mean - t.mean
    return {"threshold": thr[0], "threshold_mean": t.mean, "best_cutoff": best,
            "best_cutoff_mean": c.mean, "difference": diff, "combined_stderr": combined,
            "threshold_better_3se": bool(diff > 3.0 * combined)}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Risk table for every configured estimator plus all bound reports.

    The threshold estimator at the configured beta (and, with eigenvalue
    noise, the noisy threshold estimator) are always simulated since the
    oracle inequalities need their risks.
    """
    inst = config.instance
    ests = config.parsed_estimators()
    K = config.effective_K
    thr = Estimator("threshold", (float(config.beta),))
    extra = [thr]
    ctx = None
    if config.xi is not None:
        ctx = config.context()
        extra.append(Estimator("noisy-threshold", (float(config.beta), float(config.alpha))))
    cond_cfg = config if config.xi_mode == "conditional" else _with_mode(config, "conditional")
    internal = estimate_risks(_merge(ests, extra), inst, cond_cfg, ctx)
    risks = {e.id: internal[e.id] for e in ests}
    if config.xi_mode == "unconditional":
        noisy = [e for e in ests if e.noisy]
        if noisy:
            risks.update(_unconditional(noisy, inst, config))
            risks = {e.id: risks[e.id] for e in ests}

    bounds = [oracles.factor_two_check(inst)]
    params = filters.threshold_params(inst.variances, config.beta)
    if np.any(inst.x != 0) and inst.n > 2:
        t = internal[thr.id]
        bounds.append(oracles.theorem1_bound(inst, config.beta, K, t.mean, t.stderr))
        bounds.append(oracles.corollary1_bound(inst, config.beta, K, t.mean, t.stderr))
    bounds += lemma1_reports(inst, params, K, config.replications, config.seed, config.noise, config.threads)

    if ctx is not None:
        cert = config.xi_certificate
        noisy_id = extra[1].id
        nt = internal[noisy_id]
        if np.any(inst.x != 0):
            bounds.append(noisy_operator.theorem2_bound(ctx, config.beta, K, cert, nt.mean, nt.stderr))
        bounds += lemma3_reports(ctx, config.beta, K, config.replications, config.seed,
                                 config.noise, config.threads)
        bounds.append(lemma4_report(config.xi, inst.n, cert.Kprime, cert.betaprime,
                                    config.replications, config.seed, config.threads))
        bounds.append(corollary2_scaffold(config))

    return ExperimentReport(config, risks, exact_summary(inst), bounds, ctx,
                            compare_threshold_to_cutoff(risks))


def corollary2_scaffold(config: ExperimentConfig) -> oracles.BoundReport:
    """sum_{i in M} x_i^2 against C^{-1} E||xhat_{m*_xi} - x_dag||^2, the
    expectation taken over both noises."""
    inst = config.instance
    cert = config.xi_certificate
    oracle_risk = _unconditional([Estimator("conditional-oracle")], inst, config)["conditional-oracle"]
    big_m = noisy_operator.m_set(inst.system, config.alpha, config.xi.scale)
    lhs = float(np.sum(inst.x[big_m.mask] ** 2))
    return oracles.BoundReport(
        "corollary2.M_term", lhs, oracle_risk.mean / cert.C,
        {"C": cert.C, "alpha": config.alpha, "s": config.xi.scale},
        oracle_risk.stderr / cert.C,
        details={"M": [i + 1 for i in big_m.indices], "oracle_risk": oracle_risk.mean},
        mode="consistent")


def _with_mode(config, mode):
    return replace(config, xi_mode=mode)


def _merge(ests, extra):
    ids = {e.id for e in ests}
    return list(ests) + [e for e in extra if e.id not in ids]
