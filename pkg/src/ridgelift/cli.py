"""Command-line entry point: plan, simulate, sweep, bounds, rip.

Exit codes: 0 success, 2 configuration or argument error, 3 search
exhausted without reaching the threshold.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .errors import ArgumentError, ConfigError, InfeasibleError, SearchExhausted
from .harness import (SEED_ENV, parse_epsilon, preset, read_config,
                      run_experiment, simulate, trial_epsilon, trial_model, trial_seed)
from .sampling import build_plan, operator_for, rip_diagnostic

EXIT_OK, EXIT_CONFIG, EXIT_EXHAUSTED = 0, 2, 3

_EXTRA_FLOATS = ("eta", "delta", "p1", "p2", "gamma")


def _load(args):
    """Config from --config or --preset, then the seed overrides."""
    if args.config:
        cfg, extra = read_config(args.config, seed=args.seed)
    else:
        cfg, extra = preset(args.preset), {}
        if os.environ.get(SEED_ENV):
            try:
                cfg = replace(cfg, seed=int(os.environ[SEED_ENV]))
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer") from None
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    if getattr(args, "m_phi", None):
        cfg = replace(cfg, m_phi=args.m_phi)
    return cfg, extra


def _extra_float(extra, key, default):
    if key not in extra:
        return default
    text = extra[key].strip().lower()
    if text in ("none", ""):
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {extra[key]!r}") from None


def _alpha(cfg, extra, model):
    """alpha from the config: a number, ``origin`` or ``mc`` (seeded Monte Carlo)."""
    spec = extra.get("alpha_method", "").strip().lower()
    if cfg.alpha and not spec:
        return analysis.alpha_known(cfg.alpha)
    if spec in ("", "origin"):
        return analysis.alpha_origin_approx(model)
    if spec == "mc":
        n = int(extra.get("alpha_samples", "10000"))
        return analysis.estimate_alpha_mc(model, n, cfg.seed)
    raise ConfigError(f"unknown alpha_method {spec!r}")


def bounds_inputs(cfg, extra):
    model = trial_model(cfg, trial_seed(cfg.seed, 0))
    m_phi = cfg.fixed_m_phi()
    eps = trial_epsilon(cfg, model, m_phi)
    eps_bar = eps * np.sqrt(cfg.d / m_phi)
    alpha = _alpha(cfg, extra, model)
    vals = {key: _extra_float(extra, key, None) for key in _EXTRA_FLOATS}
    kw = {k: v for k, v in vals.items() if v is not None}
    if "delta" in extra:
        kw["delta"] = vals["delta"]
    inputs = analysis.BoundsInputs(
        d=cfg.d, k=cfg.k, m_x=cfg.m_x, m_phi=m_phi, epsilon=eps,
        c2=cfg.c2 or model.c2(1.0 + eps_bar), alpha=alpha.alpha_hat, rho=cfg.rho,
        kappa=cfg.kappa, c0=cfg.c0, sigma=cfg.sigma(), **kw)
    return inputs, alpha


def cmd_bounds(args, out):
    cfg, extra = _load(args)
    inputs, alpha = bounds_inputs(cfg, extra)
    report = analysis.compute_bounds(inputs)
    out.write(f"# alpha provenance: {alpha.method}\n")
    out.write(report.format_text())
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "bounds.csv").write_text(report.format_csv())
    return EXIT_OK


def cmd_plan(args, out):
    cfg, extra = _load(args)
    model = trial_model(cfg, trial_seed(cfg.seed, 0))
    alpha = _alpha(cfg, extra, model)
    eta = _extra_float(extra, "eta", None) if args.eta is None else args.eta
    delta = _extra_float(extra, "delta", None) if args.delta is None else args.delta
    if eta is None and delta is None:
        eta = 0.99
    strict = not args.lenient and extra.get("strict", "true").strip().lower() != "false"
    plan = analysis.plan_experiment(
        cfg.d, cfg.k, cfg.c2 or model.c2(1.0), alpha, eta=eta, delta=delta,
        p1=_extra_float(extra, "p1", 0.05), p2=_extra_float(extra, "p2", 0.05),
        rho=cfg.rho, kappa=cfg.kappa, c0=cfg.c0,
        function_class=extra.get("function_class"), M=int(extra.get("m", "1")),
        strict=strict)
    for key, val in plan.as_dict().items():
        if isinstance(val, dict):
            for sub, text in val.items():
                out.write(f"class_{sub:<16}  {text}\n")
        else:
            out.write(f"{key:<22}  {val}\n")
    return EXIT_OK


def cmd_simulate(args, out):
    cfg, _ = _load(args)
    rec = simulate(cfg, cfg.fixed_m_phi(), args.trial)
    out.write(f"d {rec.d}  k {rec.k}  m_x {rec.m_x}  m_phi {rec.m_phi}  epsilon {rec.epsilon:.6g}\n")
    out.write(f"alignment      {rec.alignment:.6f}\n")
    out.write(f"criterion      {rec.criterion:.6f}\n")
    out.write(f"uniform_error  {rec.uniform_error:.6g}  (max over probes, a lower bound)\n")
    out.write(f"oracle_calls   {rec.oracle_calls}\n")
    out.write(f"iterations     {rec.iterations}  converged {rec.converged}\n")
    return EXIT_OK


def cmd_sweep(args, out):
    cfg, _ = _load(args)
    target = args.out or f"results/{cfg.name}"
    try:
        res = run_experiment(cfg, target, args.threads)
    finally:
        out.write(f"wrote {target}/trials.csv, summary.csv\n")
    for p in res.points:
        out.write(f"{cfg.sweep}={p.value}  m_phi*={p.m_phi_star}  m_phi*/d={p.ratio:.4f}  "
                  f"mean={p.mean_criterion:.4f}\n")
    return EXIT_OK


def cmd_rip(args, out):
    cfg, _ = _load(args)
    m_phi = cfg.fixed_m_phi()
    eps = parse_epsilon(cfg.epsilon)[1] if parse_epsilon(cfg.epsilon)[0] == "fixed" else 1e-3
    plan = build_plan(cfg.d, cfg.k, cfg.m_x, m_phi, eps, cfg.mode, cfg.seed, cfg.fill)
    diag = rip_diagnostic(operator_for(plan), args.rank or cfg.k, args.trials, cfg.seed)
    counts, edges = diag.histogram(args.bins)
    out.write(f"rank {diag.rank}  trials {len(diag.ratios)}  kappa_hat {diag.kappa_hat:.6f}\n")
    for c, lo, hi in zip(counts, edges, edges[1:]):
        out.write(f"[{lo:.4f}, {hi:.4f})  {c}\n")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config")
    common.add_argument("--preset", default="fig1", help="built-in config when --config is absent")
    common.add_argument("--seed", type=int, help="base seed (overrides config and environment)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="concurrent trials")

    p = argparse.ArgumentParser(prog="ridgelift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("plan", parents=[common], help="sample sizes and step ceiling")
    s.add_argument("--eta", type=float, help="target alignment (overrides config)")
    s.add_argument("--delta", type=float, help="failure probability for the noise term")
    s.add_argument("--lenient", action="store_true",
                   help="report instead of failing when m_phi_min >= m_x d")
    s.set_defaults(func=cmd_plan)
    s = sub.add_parser("simulate", parents=[common], help="one full run")
    s.add_argument("--m-phi", type=int, dest="m_phi", help="directions per center")
    s.add_argument("--trial", type=int, default=0, help="trial index (seed = base ^ index)")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("sweep", parents=[common], help="minimal m_phi at each sweep value")
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("bounds", parents=[common], help="closed-form bounds report")
    s.add_argument("--m-phi", type=int, dest="m_phi", help="m_phi used for the success probability")
    s.set_defaults(func=cmd_bounds)
    s = sub.add_parser("rip", parents=[common], help="empirical isometry ratios")
    s.add_argument("--m-phi", type=int, dest="m_phi", help="directions per center")
    s.add_argument("--rank", type=int, help="rank of the test matrices (default k)")
    s.add_argument("--trials", type=int, default=200, help="random test matrices")
    s.add_argument("--bins", type=int, default=10, help="histogram bins")
    s.set_defaults(func=cmd_rip)
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, out)
    except (ConfigError, ArgumentError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SearchExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED


if __name__ == "__main__":
    sys.exit(main())
