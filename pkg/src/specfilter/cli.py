"""Command-line front-end.

Exit status: 0 on success, 1 on validation errors, 2 when ``--strict`` is
set and a tail certificate or bound check fails.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import filters, montecarlo, noisy_operator, oracles
from .errors import ConfigError, SpecFilterError, UnknownFamily
from .formats import (SCHEMA_VERSION, csv_bytes, instance_to_dict, json_bytes, load_config,
                      write_outputs)
from .montecarlo import NoiseSpec
from .sequence_model import ProblemInstance, SequenceObservation

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2

SPECTRUM_LAWS = ("polynomial",)
COEFFICIENT_LAWS = ("polynomial", "permutation", "sparse-spikes")
INSTANCE_STREAM = 10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# instance generation


def gen_instance(n: int, sigma: float, seed: int = 0, spectrum: str = "polynomial", p: float = 1.0,
                 coeffs: str = "sparse-spikes", q: float = 1.0, amplitude: float | None = None,
                 spikes: int | None = None) -> dict:
    """Fully explicit instance (b, x, sigma) as a JSON-ready dict.

    Spectrum: b_i = i^{-p}.  Coefficients:
      polynomial     x_i = amplitude * i^{-q}
      permutation    the polynomial values in random order, so x is
                     unrelated to the ordering of b
      sparse-spikes  ``spikes`` nonzero entries x_i = +-amplitude * sigma_i,
                     one of them forced into the second half of the
                     spectrum; with spikes < n/2 the oracle set is then not
                     a cut-off
    """
    if spectrum not in SPECTRUM_LAWS:
        raise UnknownFamily(f"unknown spectrum law {spectrum!r}; expected one of {SPECTRUM_LAWS}")
    if coeffs not in COEFFICIENT_LAWS:
        raise UnknownFamily(f"unknown coefficient law {coeffs!r}; expected one of {COEFFICIENT_LAWS}")
    if n < 3:
        raise SpecFilterError(f"n must exceed 2, got {n}")
    if not sigma > 0:
        raise SpecFilterError(f"sigma must be positive, got {sigma}")
    rng = montecarlo.stream(seed, INSTANCE_STREAM)
    i = np.arange(1, n + 1, dtype=float)
    b = i ** (-p)
    labels = {"spectrum": spectrum, "p": p, "coefficients": coeffs, "seed": seed,
              "note": "instance family chosen for the experiment harness"}
    if coeffs in ("polynomial", "permutation"):
        amp = 1.0 if amplitude is None else amplitude
        x = amp * i ** (-q)
        if coeffs == "permutation":
            x = x[rng.permutation(n)]
        labels.update(q=q, amplitude=amp)
    else:
        amp = 10.0 if amplitude is None else amplitude
        k = max(1, n // 10) if spikes is None else spikes
        if not 1 <= k < n / 2:
            raise SpecFilterError(f"sparse-spikes needs 1 <= spikes < n/2, got {k}")
        half = n // 2
        first = int(rng.integers(half, n))
        rest = rng.choice(np.setdiff1d(np.arange(n), [first]), size=k - 1, replace=False)
        pos = np.sort(np.concatenate([[first], rest]).astype(int))
        sd = sigma / (np.abs(b) * math.sqrt(n))
        x = np.zeros(n)
        x[pos] = amp * sd[pos] * rng.choice([-1.0, 1.0], size=k)
        labels.update(spikes=k, amplitude=amp, positions=[int(j) + 1 for j in pos])
    instance = ProblemInstance.from_spectrum(b, x, sigma)
    return instance_to_dict(instance, labels)


# ---------------------------------------------------------------------------
# subcommand handlers


def _config(args, require_estimators=False):
    overrides = {"seed": args.seed, "replications": args.replications, "beta": args.beta,
                 "alpha": args.alpha, "K": args.K}
    config = load_config(args.config, overrides)
    if args.threads:
        config = replace(config, threads=args.threads)
    if require_estimators and not config.estimators:
        raise ConfigError("estimator list is empty")
    return config


def _risk_rows(risks):
    return [(k, v.mean, v.stderr, v.replications) for k, v in risks.items()]


def _plot_files(report) -> dict:
    from . import plotting

    inst = report.config.instance
    exact = report.exact
    cut_mc = [(int(k[7:-1]), v.mean, v.stderr) for k, v in report.risks.items() if k.startswith("cutoff(")]
    thr = next((v.mean for k, v in report.risks.items() if k.startswith("threshold(")), None)
    rows = []
    mc = {k: (m, se) for k, m, se in cut_mc}
    for k, r in enumerate(exact["cutoff_risk"]):
        m, se = mc.get(k, (float("nan"), float("nan")))
        rows.append((k, float(r), float(m), float(se)))
    sel = [i + 1 for i in filters.threshold_select(
        _noiseless(inst), filters.threshold_params(inst.variances, report.config.beta)).indices]
    return {
        "plot_cutoff_risk.csv": csv_bytes(["k", "exact_risk", "mc_mean", "mc_stderr"], rows),
        "plot_estimator_risk.csv": csv_bytes(["id", "mean", "stderr"],
                                             [(k, v.mean, v.stderr) for k, v in report.risks.items()]),
        "cutoff_risk.png": plotting.cutoff_risk_figure(
            exact["cutoff_risk"], cut_mc, thr, exact["oracle_model_risk"]["total"]),
        "estimator_risk.png": plotting.estimator_risk_figure(
            list(report.risks), [v.mean for v in report.risks.values()],
            [v.stderr for v in report.risks.values()]),
        "selection.png": plotting.selection_figure(inst.x, inst.variances, exact["oracle_model"], sel),
    }


def _noiseless(inst):
    return SequenceObservation(inst.x, inst.variances)


def cmd_estimate(args) -> int:
    config = _config(args, require_estimators=True)
    report = montecarlo.run_experiment(config)
    files = {
        "risks.csv": csv_bytes(["id", "mean", "stderr", "replications"], _risk_rows(report.risks)),
        "report.json": json_bytes(report.to_dict()),
    }
    if args.emit_plot_data:
        files.update(_plot_files(report))
    write_outputs(args.out, files, "estimate")
    for k, v in report.risks.items():
        print(f"{k:<28s} {v.mean:.6g} +- {v.stderr:.2g}")
    if report.comparison:
        c = report.comparison
        print(f"threshold vs best cut-off {c['best_cutoff']}: difference {c['difference']:.6g} "
              f"(combined se {c['combined_stderr']:.2g})")
    return _strict_status(args, report.all_passed, report.bounds)


def cmd_check_bounds(args) -> int:
    config = _config(args)
    thr = f"threshold({config.beta!r})"
    config = replace(config, estimators=tuple(config.estimators) or (thr,))
    report = montecarlo.run_experiment(config)
    payload = {"config": config.to_dict(), "bounds": [b.to_dict() for b in report.bounds],
               "all_bounds_passed": report.all_passed}
    write_outputs(args.out, {"bounds.json": json_bytes(payload)}, "check-bounds")
    for b in report.bounds:
        if "[" not in b.name:
            print(f"{b.name:<22s} lhs={b.lhs:.6g} rhs={b.rhs:.6g} {'ok' if b.passed() else 'FAIL'}")
    failed = [b.name for b in report.bounds if not b.passed()]
    print(f"{len(report.bounds) - len(failed)}/{len(report.bounds)} bound checks passed"
          + (f"; failing: {', '.join(failed)}" if failed else ""))
    return _strict_status(args, report.all_passed, report.bounds)


def cmd_oracle_report(args) -> int:
    config = _config(args)
    inst = config.instance
    exact = montecarlo.exact_summary(inst)
    f2 = oracles.factor_two_check(inst)
    payload = {"instance": {"n": inst.n, "b": inst.b.tolist(), "x": inst.x.tolist(), "sigma": inst.sigma},
               "labels": config.labels, "exact": exact, "factor_two": f2.to_dict()}
    files = {"oracle.json": json_bytes(payload)}
    if args.emit_plot_data:
        from . import plotting
        files["plot_cutoff_risk.csv"] = csv_bytes(["k", "exact_risk"],
                                                  [(k, float(r)) for k, r in enumerate(exact["cutoff_risk"])])
        files["cutoff_risk.png"] = plotting.cutoff_risk_figure(
            exact["cutoff_risk"], oracle=exact["oracle_model_risk"]["total"])
        files["selection.png"] = plotting.selection_figure(inst.x, inst.variances, exact["oracle_model"])
    write_outputs(args.out, files, "oracle-report")
    print(f"oracle model {exact['oracle_model']} risk {exact['oracle_model_risk']['total']:.6g}; "
          f"oracle filter risk {exact['oracle_filter_risk']:.6g}")
    return _strict_status(args, f2.satisfied, [f2])


def cmd_noisy_op(args) -> int:
    config = _config(args)
    if config.xi is None:
        raise ConfigError("noisy-op needs an 'xi' section in the config")
    ctx = config.context()
    inst = ctx.instance
    K = config.effective_K
    beta = config.beta
    cert = config.xi_certificate
    nu = noisy_operator.noisy_threshold_params(ctx.spectrum, inst.sigma, beta)
    ests = [montecarlo.Estimator("noisy-threshold", (float(beta), float(config.alpha))),
            montecarlo.Estimator("conditional-oracle")]
    risks = montecarlo.estimate_risks(ests, inst, replace(config, xi_mode="conditional"), ctx)
    nt = risks[ests[0].id]
    bounds = []
    if np.any(inst.x != 0):
        bounds.append(noisy_operator.theorem2_bound(ctx, beta, K, cert, nt.mean, nt.stderr))
    bounds += montecarlo.lemma3_reports(ctx, beta, K, config.replications, config.seed,
                                        config.noise, config.threads)
    bounds.append(montecarlo.lemma4_report(config.xi, inst.n, cert.Kprime, cert.betaprime,
                                           config.replications, config.seed, config.threads))
    bounds.append(montecarlo.corollary2_scaffold(config))

    def members(m):
        return [i + 1 for i in m.indices]

    payload = {
        "config": config.to_dict(),
        "conditional_context": ctx.to_dict(),
        "sigma_hat2": ctx.sigma_hat2.tolist(),
        "conditional_noise_power": noisy_operator.conditional_noise_power(ctx).tolist(),
        "nu": nu.tolist(),
        "conditional_oracle": members(noisy_operator.conditional_oracle(ctx)),
        "conditional_oracle_form1": members(noisy_operator.conditional_oracle_form1(ctx)),
        "conditional_oracle_form2": members(noisy_operator.conditional_oracle_form2(ctx)),
        "form_degenerate": [i + 1 for i in np.flatnonzero(noisy_operator.form_degenerate(ctx))],
        "M": members(noisy_operator.m_set(inst.system, config.alpha, config.xi.scale)),
        "conditional_oracle_risk": noisy_operator.conditional_risk(
            noisy_operator.conditional_oracle(ctx), ctx).to_dict(),
        "risks": [{"id": k, **v.to_dict()} for k, v in risks.items()],
        "bounds": [b.to_dict() for b in bounds],
        "all_bounds_passed": all(b.passed() for b in bounds),
    }
    write_outputs(args.out, {"noisy.json": json_bytes(payload)}, "noisy-op")
    print(f"conditional oracle {payload['conditional_oracle']}; M = {payload['M']}")
    for k, v in risks.items():
        print(f"{k:<28s} {v.mean:.6g} +- {v.stderr:.2g}")
    return _strict_status(args, payload["all_bounds_passed"], bounds)


def cmd_certify_tails(args) -> int:
    specs = []
    if args.config:
        config = _config(args)
        n = config.noise
        beta = n.beta if n.beta is not None else config.beta
        K = n.K if n.K is not None else config.K
        specs.append(("observation_noise", NoiseSpec(n.family, 1.0, _default_K(K, beta, n.family), beta)))
        if config.xi is not None:
            c = config.xi_certificate
            specs.append(("eigenvalue_noise",
                          NoiseSpec(config.xi.family, 1.0, c.Kprime, c.betaprime, config.alpha, config.xi.C)))
    else:
        beta = args.beta if args.beta is not None else filters.DEFAULT_BETA
        K = _default_K(args.K, beta, args.family)
        specs.append(("noise", NoiseSpec(args.family, 1.0, K, beta, args.alpha, args.C)))
    seed = args.seed if args.seed is not None else 0
    grid = tuple(float(t) for t in args.grid.split(",")) if args.grid else montecarlo.DEFAULT_GRID
    reports = {name: montecarlo.verify_tail_certificate(spec, args.samples, seed, grid,
                                                       raise_on_violation=False)
               for name, spec in specs}
    payload = {"schema_version": SCHEMA_VERSION, "seed": seed,
               "reports": {k: r.to_dict() for k, r in reports.items()}}
    write_outputs(args.out, {"tails.json": json_bytes(payload)}, "certify-tails")
    ok = True
    for name, r in reports.items():
        status = "certified" if r.passed else "VIOLATED"
        ok &= r.passed
        detail = r.reason or ", ".join(f"t={p.t:g}:{'ok' if p.ok else 'x'}" for p in r.points)
        print(f"{name}: {status} ({detail})")
    if not ok and args.strict:
        return EXIT_FAILED
    return EXIT_OK


def _default_K(K, beta, family):
    if K is not None:
        return K
    return oracles.gaussian_K(beta) if family == "gaussian" and beta > 2 else 1.0


def cmd_gen_instance(args) -> int:
    d = gen_instance(args.n, args.sigma, args.seed or 0, args.spectrum, args.p, args.coeffs,
                     args.q, args.amplitude, args.spikes)
    write_outputs(args.out, {args.name: json_bytes(d)}, "gen-instance")
    print(f"wrote {Path(args.out) / args.name}")
    return EXIT_OK


def _strict_status(args, passed, bounds) -> int:
    if args.strict and not passed:
        failed = [b.name for b in bounds if not b.passed()]
        print(f"strict: bound checks failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specfilter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (JSON)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replications", type=int)
        p.add_argument("--beta", type=float, help="tail constant beta (default 3)")
        p.add_argument("--alpha", type=float, help="eigenvalue gate constant alpha (default 1)")
        p.add_argument("--K", type=float, help="tail constant K (default sqrt(1 - 2/beta))")
        p.add_argument("--threads", type=int, help=f"worker threads (capped by ${montecarlo.THREADS_ENV})")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--strict", action="store_true", help="exit 2 when a check fails")
        p.add_argument("--emit-plot-data", action="store_true",
                       help="write plot tables and render figures next to them")

    p = sub.add_parser("estimate", help="Monte Carlo risks and bound reports")
    common(p)
    p.set_defaults(func=cmd_estimate)
    p = sub.add_parser("check-bounds", help="oracle inequality and lemma checks")
    common(p)
    p.set_defaults(func=cmd_check_bounds)
    p = sub.add_parser("oracle-report", help="exact oracle risks, no sampling")
    common(p)
    p.set_defaults(func=cmd_oracle_report)
    p = sub.add_parser("noisy-op", help="conditional analysis with noisy eigenvalues")
    common(p)
    p.set_defaults(func=cmd_noisy_op)

    p = sub.add_parser("certify-tails", help="empirical check of claimed tail constants")
    common(p, config_required=False)
    p.add_argument("--family", default="gaussian", choices=montecarlo.FAMILIES)
    p.add_argument("--C", type=float)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--grid", help="comma-separated t values")
    p.set_defaults(func=cmd_certify_tails)

    p = sub.add_parser("gen-instance", help="write an explicit instance file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spectrum", default="polynomial")
    p.add_argument("--p", type=float, default=1.0, help="spectrum decay b_i = i^-p")
    p.add_argument("--coeffs", default="sparse-spikes")
    p.add_argument("--q", type=float, default=1.0, help="coefficient decay x_i = A i^-q")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--spikes", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--name", default="instance.json")
    p.set_defaults(func=cmd_gen_instance)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SpecFilterError as exc:
        print(f"specfilter {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
