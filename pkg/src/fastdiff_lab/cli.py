"""Command-line front end: reproducible experiments over the library.

Subcommands: spectrum, evolve, expand, sweep, modes, selftest.
Exit codes: 0 success, 2 config validation, 3 solver failure, 4 selftest
tolerance failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import traceback

import numpy as np

from . import asymptotics, closedform, evolve, geometry, linop
from .closedform import ModeIndex, derive_params
from .config import (
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    load_config,
)
from .evolve import EvolveError
from .linop import EigensolveError
from .reporting import ReportBundle, default_output_dir

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SELFTEST = 4


def _params(cfg: ExperimentConfig):
    return derive_params(cfg.model.n, cfg.model.m, cfg.model.B)


def _grid(cfg: ExperimentConfig):
    return geometry.make_grid(cfg.grid.s_max, cfg.grid.count)


def _policy(cfg: ExperimentConfig):
    a = cfg.analysis
    return asymptotics.WindowPolicy(value_lo=a.fit_value_lo,
                                    value_hi=a.fit_value_hi,
                                    t_lo=a.fit_t_lo, t_hi=a.fit_t_hi)


def _initial_state(cfg: ExperimentConfig, params, grid):
    i = cfg.initial_data
    if i.kind == "eigenmode":
        return evolve.eigenmode_data(grid, ModeIndex(i.ell, i.k), i.amplitude, params)
    if i.kind == "bump":
        return evolve.bump_data(grid, i.amplitude, i.seed, params,
                                project_mass=i.project_mass, centers=i.centers)
    return evolve.delayed_barenblatt_data(grid, i.tau0, i.bplus, params)


def _etas(cfg: ExperimentConfig, params) -> list[float]:
    if cfg.analysis.etas:
        return list(cfg.analysis.etas)
    return [0.0, params.eta_cr]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_spectrum(cfg: ExperimentConfig) -> ReportBundle:
    """Closed-form eigenvalues/thresholds and the discrete comparison table."""
    params = _params(cfg)
    grid = _grid(cfg)
    bundle = ReportBundle("spectrum", cfg.to_dict())

    closed_rows = []
    for eta in _etas(cfg, params):
        for mode, lam in closedform.admissible_modes(eta, params):
            closed_rows.append([eta, mode.ell, mode.k, lam])
    bundle.add_table("closed_form", ["eta", "ell", "k", "lambda"], closed_rows)

    thr_rows = [[eta, ell, closedform.essential_threshold(ell, eta, params)]
                for eta in _etas(cfg, params) for ell in cfg.analysis.ell_list
                if not (params.n == 1 and ell > 1)]
    bundle.add_table("thresholds", ["eta", "ell", "threshold"], thr_rows)

    disc_rows = []
    for eta in _etas(cfg, params):
        for ell in cfg.analysis.ell_list:
            if params.n == 1 and ell > 1:
                continue
            op = linop.assemble(ell, eta, grid, params)
            rep = linop.top_eigenvalues(op, cfg.analysis.eigen_count)
            for e in rep.entries:
                disc_rows.append([
                    eta, ell, e.value,
                    e.mode.ell if e.mode else "",
                    e.mode.k if e.mode else "",
                    e.closed_form if e.mode else "",
                    e.error if e.mode else "",
                    e.continuum_artifact,
                ])
    bundle.add_table(
        "discrete",
        ["eta", "ell", "value", "match_ell", "match_k", "closed_form",
         "error", "continuum_artifact"],
        disc_rows,
    )
    matched = [r for r in disc_rows if r[6] != ""]
    bundle.summary = {
        "p": params.p,
        "eta_cr": params.eta_cr,
        "matched_count": len(matched),
        "max_match_error": max((abs(r[6]) for r in matched), default=None),
    }
    return bundle


def cmd_modes(cfg: ExperimentConfig) -> ReportBundle:
    """Admissible (l, k, lambda) per requested weight plus landmarks."""
    params = _params(cfg)
    bundle = ReportBundle("modes", cfg.to_dict())
    rows = []
    for eta in _etas(cfg, params):
        for mode, lam in closedform.admissible_modes(eta, params):
            rows.append([eta, mode.ell, mode.k, lam,
                         closedform.essential_threshold(mode.ell, eta, params)])
    bundle.add_table("modes", ["eta", "ell", "k", "lambda", "threshold"], rows)
    lm = closedform.landmarks(params)
    bundle.add_table("landmarks", ["name", "value"],
                     [[k, v] for k, v in sorted(lm.items())])
    bundle.summary = {"p": params.p, "eta_cr": params.eta_cr,
                      "count": {f"eta={eta}": sum(1 for r in rows if r[0] == eta)
                                for eta in _etas(cfg, params)}}
    return bundle


def cmd_evolve(cfg: ExperimentConfig) -> ReportBundle:
    """Nonlinear radial run: trace CSV plus fitted decay rates."""
    params = _params(cfg)
    grid = _grid(cfg)
    state0 = _initial_state(cfg, params, grid)
    etas = tuple(e for e in _etas(cfg, params) if e != 0.0)
    trace = evolve.run(
        state0, cfg.time.dt, cfg.time.t_final,
        evolve.RecordOptions(etas=etas, record_every=cfg.time.record_every,
                             snapshot_every=cfg.time.snapshot_every),
    )
    bundle = ReportBundle("evolve", cfg.to_dict())
    header = ["t", "sup_norm"] + [f"sup_eta_{eta:g}" for eta in etas] + \
        ["mass_defect", "energy", "min_v", "max_v"]
    rows = []
    for j, t in enumerate(trace.times):
        row = [t, trace.sup[j]]
        row += [trace.weighted[eta][j] for eta in etas]
        row += [trace.mass_defect[j], trace.energy[j],
                trace.min_v[j], trace.max_v[j]]
        rows.append(row)
    bundle.add_table("trace", header, rows)

    policy = _policy(cfg)
    rate_rows = []
    sup_slope = _fit_norm_series(trace.times, trace.sup, policy, rate_rows,
                                 "sup", 0.0)
    for eta in etas:
        _fit_norm_series(trace.times, trace.weighted_norm(eta), policy,
                         rate_rows, f"sup_eta_{eta:g}", eta)
    bundle.add_table("rates", ["norm", "eta", "slope", "r_squared",
                               "t_lo", "t_hi"], rate_rows)
    drift = float(np.max(np.abs(trace.mass_defect - trace.mass_defect[0])))
    bundle.summary = {
        "lambda_01": -2.0 * params.p,
        "sup_slope": sup_slope,
        "mass_drift": drift,
        "mass_drift_per_time": drift / max(trace.times[-1] - trace.times[0], 1e-300),
    }
    return bundle


def _fit_norm_series(times, values, policy, rate_rows, name, eta) -> float:
    """Append a rate row; stationary traces fit to slope 0, short traces
    widen the window before giving up."""
    values = np.asarray(values, dtype=float)
    scale = values.max()
    if scale == 0.0:
        rate_rows.append([name, eta, 0.0, 1.0, float(times[0]), float(times[-1])])
        return 0.0
    rel = values / scale
    try:
        fit = asymptotics.fit_rate(times, rel, policy)
    except asymptotics.EmptyWindowError:
        pos = rel[rel > 0.0]
        wide = asymptotics.WindowPolicy(value_lo=float(pos.min()) / 2.0,
                                        value_hi=1.0, min_samples=2)
        fit = asymptotics.fit_rate(times, rel, wide)
    rate_rows.append([name, eta, fit.slope, fit.r_squared,
                      fit.window[0], fit.window[1]])
    return fit.slope


def cmd_expand(cfg: ExperimentConfig) -> ReportBundle:
    """Coefficient extraction, time-shift modding, expansion residual."""
    params = _params(cfg)
    grid = _grid(cfg)
    state0 = _initial_state(cfg, params, grid)
    trace = evolve.run(
        state0, cfg.time.dt, cfg.time.t_final,
        evolve.RecordOptions(record_every=cfg.time.record_every,
                             snapshot_every=cfg.time.snapshot_every),
    )
    bundle = ReportBundle("expand", cfg.to_dict())
    policy = _policy(cfg)

    coeff_rows = []
    records = []
    for mode in (ModeIndex(0, 0), ModeIndex(0, 1)):
        if mode.degree >= params.p:
            continue
        rec = asymptotics.extract_coefficient(trace, mode, params)
        records.append(rec)
        coeff_rows.append([mode.ell, mode.k, rec.limit, rec.converged,
                           rec.tail_fraction, rec.flagged])
    bundle.add_table("coefficients",
                     ["ell", "k", "limit", "converged", "tail_fraction",
                      "flagged"], coeff_rows)

    Lambda = cfg.analysis.lambda_target
    shift = asymptotics.mod_time_shift(trace, params, Lambda=Lambda,
                                       policy=policy)
    bundle.add_table("time_shift",
                     ["tau0", "Lambda", "eta", "slope", "r_squared",
                      "gamma_measured", "c01_before"],
                     [[shift.tau0, shift.Lambda, shift.eta,
                       shift.shifted_rate.slope, shift.shifted_rate.r_squared,
                       shift.shifted_rate.slope / (-2.0 * params.p), shift.c0]])

    resid_fit = None
    rec01 = next((r for r in records if r.mode == ModeIndex(0, 1)), None)
    if rec01 is not None:
        resid_fit = asymptotics.expansion_residual(
            trace, shift.Lambda, [rec01], params, policy=policy)
        bundle.add_table("expansion_residual",
                         ["Lambda", "eta", "slope", "r_squared"],
                         [[shift.Lambda, shift.eta, resid_fit.slope,
                           resid_fit.r_squared]])
    so = closedform.second_order_rates(params)
    bundle.summary = {
        "tau0": shift.tau0,
        "gamma_measured": shift.shifted_rate.slope / (-2.0 * params.p),
        "gamma_closed_form": so.gamma,
        "delta_closed_form": so.delta,
        "branch": so.branch.value,
        "residual_slope": resid_fit.slope if resid_fit else None,
        # near-degenerate eigenvalue spacings widen the trustworthy error
        # bars on fitted rates (resonant rational m)
        "near_degenerate_pairs": asymptotics.near_degenerate_pairs(params),
    }
    return bundle


def _sweep_item(args):
    index, cfg_dict, mm = args
    from .config import config_from_dict
    cfg = config_from_dict(cfg_dict)
    base_p = _params(cfg).p
    cfg = apply_overrides(cfg, model={"m": mm})
    cfg.validate()
    params = _params(cfg)
    # rates scale with p: keep the number of lambda_01 e-folds (and steps)
    # fixed across the sweep by rescaling the base time configuration
    scale = base_p / params.p
    cfg = apply_overrides(cfg, time={"dt": cfg.time.dt * scale,
                                     "t_final": cfg.time.t_final * scale})
    so = closedform.second_order_rates(params)
    grid = _grid(cfg)
    state0 = _initial_state(cfg, params, grid)
    trace = evolve.run(
        state0, cfg.time.dt, cfg.time.t_final,
        evolve.RecordOptions(record_every=cfg.time.record_every,
                             snapshot_every=cfg.time.snapshot_every),
    )
    shift = asymptotics.mod_time_shift(trace, params, policy=_policy(cfg))
    gamma_meas = shift.shifted_rate.slope / (-2.0 * params.p)
    # flag branch points: competitors of the target rate closer than the
    # fit can resolve make gamma_measured untrustworthy
    competitors = [-2.0 * params.p, params.lambda_cont,
                   -2.0 * (params.p + params.n)]
    if params.p > 6.0:
        competitors.append(-4.0 * params.p + 8.0)
    gaps = [abs(shift.Lambda - c) for c in competitors
            if abs(shift.Lambda - c) > 1e-12]
    degenerate = bool(min(gaps, default=np.inf) < 0.25)
    return [index, mm, params.p, gamma_meas, so.gamma, so.delta,
            so.branch.value, shift.tau0, shift.shifted_rate.r_squared,
            degenerate, ""]


def cmd_sweep(cfg: ExperimentConfig) -> ReportBundle:
    """Map m to measured/closed-form (gamma, delta) rows, in parallel."""
    ms = cfg.analysis.sweep_m
    if not ms:
        raise ConfigError("analysis.sweep_m: sweep requires a list of m values")
    jobs = cfg.jobs or os.cpu_count() or 1
    tasks = [(i, cfg.to_dict(), mm) for i, mm in enumerate(ms)]
    results = {}
    if jobs == 1 or len(tasks) == 1:
        for task in tasks:
            results[task[0]] = _run_sweep_item(task)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {pool.submit(_run_sweep_item, t): t[0] for t in tasks}
            for fut in concurrent.futures.as_completed(futs):
                results[futs[fut]] = fut.result()
    rows = [results[i] for i in range(len(ms))]  # input order, not completion
    bundle = ReportBundle("sweep", cfg.to_dict())
    bundle.add_table("gamma_delta",
                     ["index", "m", "p", "gamma_measured", "gamma_closed",
                      "delta_closed", "branch", "tau0", "r_squared",
                      "near_degenerate", "error"],
                     rows)
    failures = [r for r in rows if r[10]]
    bundle.summary = {
        "rows": len(rows),
        "failures": len(failures),
        "max_gamma_rel_error": max(
            (abs(r[3] - r[4]) / abs(r[4]) for r in rows if not r[10]),
            default=None),
    }
    return bundle


def _run_sweep_item(task):
    index, _, mm = task
    try:
        return _sweep_item(task)
    except Exception as exc:  # partial-failure contract: row errors, rest run
        return [index, mm, "", "", "", "", "", "", "", "",
                f"{type(exc).__name__}: {exc}"]


def cmd_selftest(cfg: ExperimentConfig) -> tuple[ReportBundle, bool]:
    """Reduced-resolution acceptance checks; full suite lives in the tests."""
    from . import selftest
    results = selftest.run_selftest(fast=True)
    bundle = ReportBundle("selftest", cfg.to_dict())
    bundle.add_table("checks", ["criterion", "detail", "value", "bound", "passed"],
                     [[r.criterion, r.detail, r.value, r.bound, r.passed]
                      for r in results])
    ok = all(r.passed for r in results)
    bundle.summary = {"passed": ok,
                      "failed": [r.criterion for r in results if not r.passed]}
    return bundle, ok


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fastdiff-lab",
        description="Numerical laboratory for fast-diffusion asymptotics",
    )
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--n", type=int, help="spatial dimension")
    parser.add_argument("--m", type=float, help="diffusion exponent")
    parser.add_argument("--b-param", type=float, dest="b_param",
                        help="Barenblatt mass parameter B")
    parser.add_argument("--smax", type=float, help="grid truncation radius")
    parser.add_argument("--points", type=int, help="grid interval count")
    parser.add_argument("--dt", type=float, help="time step")
    parser.add_argument("--tfinal", type=float, help="final rescaled time")
    parser.add_argument("--eta", type=float, action="append",
                        help="weight exponent (repeatable)")
    parser.add_argument("--lambda-target", type=float, dest="lambda_target",
                        help="target rate for weighted analysis")
    parser.add_argument("--ell", type=int, help="initial-data angular index")
    parser.add_argument("--k", type=int, help="initial-data radial index")
    parser.add_argument("--amplitude", type=float, help="initial amplitude")
    parser.add_argument("--seed", type=int, help="bump seed")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument("--jobs", type=int, help="sweep worker count")
    parser.add_argument("--format", choices=["csv", "json"], action="append",
                        help="output formats (repeatable; default both)")
    parser.add_argument("command",
                        choices=["spectrum", "evolve", "expand", "sweep",
                                 "modes", "selftest"])
    parser.add_argument("--kind", choices=["eigenmode", "bump",
                                           "delayed-barenblatt"],
                        help="initial data kind")
    parser.add_argument("--sweep-m", type=float, action="append",
                        dest="sweep_m", help="m value for sweep (repeatable)")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(
        cfg,
        model={"n": args.n, "m": args.m, "B": args.b_param},
        grid={"s_max": args.smax, "count": args.points},
        time={"dt": args.dt, "t_final": args.tfinal},
        initial_data={"kind": args.kind, "ell": args.ell, "k": args.k,
                      "amplitude": args.amplitude, "seed": args.seed},
        analysis={"etas": tuple(args.eta) if args.eta else None,
                  "lambda_target": args.lambda_target,
                  "sweep_m": tuple(args.sweep_m) if args.sweep_m else None},
        output={"directory": args.out,
                "formats": tuple(args.format) if args.format else None},
        jobs={"jobs": args.jobs} if args.jobs else {},
    )
    return cfg.validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    outdir = cfg.output.directory or default_output_dir()
    try:
        if args.command == "selftest":
            bundle, ok = cmd_selftest(cfg)
        else:
            bundle = {
                "spectrum": cmd_spectrum,
                "evolve": cmd_evolve,
                "expand": cmd_expand,
                "sweep": cmd_sweep,
                "modes": cmd_modes,
            }[args.command](cfg)
            ok = True
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvolveError, EigensolveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except Exception:
        traceback.print_exc()
        return EXIT_SOLVER

    written = bundle.write(outdir, cfg.output.formats)
    for path in written:
        print(path)
    if args.command == "selftest" and not ok:
        print("selftest: tolerance failure", file=sys.stderr)
        return EXIT_SELFTEST
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
