"""Command-line driver: ``snlslab {run-one,ensemble,scaling,probe,fit}``.

Each command writes ``summary.json`` (byte-identical for identical config
and seed) and ``metadata.json`` (timestamps, worker count, backend) into
the output directory, plus delimited-text tables with a header row.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .config import ExperimentConfig, load_config
from .diagnostics import DiagnosticsRecorder
from .errors import BudgetError, ConfigError, FitError, SNLSError
from .integrator import evolve, initial_state
from .montecarlo import (ProbabilityEstimate, fit_scaling, monotone_within_intervals,
                         resolve_workers, simulate_ensemble)
from .noise import RngStream
from .probes import (jsonable, dispersive_decay_probe, khintchine_empirical_check,
                     stochastic_convolution_moment_probe, strong_convergence_study)

log = logging.getLogger("snlslab")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_INCOMPLETE = 4
EXIT_FIT = 5
EXIT_PROBE_FAILED = 6

PROBES = ("khintchine", "dispersive", "bdg", "convergence")
ROW_COLUMNS = ("cell", "index", "seed", "hit", "tau_R", "t_final", "sup_h1", "int_w8",
               "x1", "resolution_lost", "steps", "budget_error")


# -- output helpers --------------------------------------------------------------

def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


def _write_json(path: Path, obj):
    path.write_text(dumps(obj))


def _write_table(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def _write_metadata(out: Path, command: str, workers: int | None = None):
    meta = {
        "command": command,
        "argv": sys.argv[1:],
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": kernels.BACKEND,
        "workers": workers,
    }
    _write_json(out / "metadata.json", meta)


def _config_echo(cfg: ExperimentConfig) -> dict:
    """Config with every default filled in, minus fields that must not
    influence results (the worker count lives in metadata.json)."""
    d = cfg.to_dict()
    d["ensemble"].pop("workers")
    return d


def _estimate_dict(e: ProbabilityEstimate) -> dict:
    return {"T": e.T, "successes": e.successes, "trials": e.trials, "p_hat": e.p_hat,
            "lo": e.lo, "hi": e.hi, "complete": e.complete, "unresolved": e.unresolved}


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    out = Path(args.out if args.out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _workers(args, cfg: ExperimentConfig) -> int:
    return resolve_workers(args.workers if args.workers is not None else cfg.ensemble.workers)


# -- commands --------------------------------------------------------------------

def cmd_run_one(args) -> int:
    cfg, out = _prepare(args)
    grid = cfg.grid_spec()
    u0 = cfg.initial_field(grid)
    solver = cfg.solver_config(u0)
    state = initial_state(u0)
    keep = cfg.run.continue_past_hit
    with (out / "diagnostics.csv").open("w", newline="") as fh:
        rec = DiagnosticsRecorder(solver, every=cfg.run.diagnostics_every, stream=fh)
        outcome = evolve(state, solver, cfg.noise_spec(), cfg.cutoff_spec(),
                         RngStream(cfg.seed, (0,)), cfg.run.T,
                         callbacks=[lambda s: (rec(s), keep)[1]],
                         check_resolution=cfg.run.check_resolution)
    summary = {"command": "run-one", "config": _config_echo(cfg), "radius": solver.radius,
               "outcome": outcome.as_row()}
    _write_json(out / "summary.json", summary)
    _write_metadata(out, "run-one")
    print(f"hit={int(outcome.hit)} tau_R={outcome.tau_R} t_final={outcome.t:.6g} "
          f"x1={outcome.x1:.6g}")
    return EXIT_OK


def _ensemble(cfg: ExperimentConfig, out: Path, workers: int):
    ens = cfg.ensemble_config(workers)
    estimates, rows = simulate_ensemble(ens)
    _write_table(out / "trajectories.csv", ROW_COLUMNS,
                 [[r[c] for c in ROW_COLUMNS] for r in rows])
    summary = {
        "config": _config_echo(cfg),
        "radius": ens.solver.radius,
        "ladder": list(ens.ladder),
        "estimates": [_estimate_dict(e) for e in estimates],
        "monotone_within_intervals": monotone_within_intervals(estimates),
        "complete": all(e.complete for e in estimates),
        "regime": {"T0": ens.T0,
                   "note": "small-time regime conditions are recorded, not enforced"},
    }
    for e in estimates:
        print(f"T={e.T:.6g} s={e.successes}/{e.trials} p_hat={e.p_hat:.4g} "
              f"[{e.lo:.4g}, {e.hi:.4g}]{'' if e.complete else ' INCOMPLETE'}")
    return estimates, summary


def cmd_ensemble(args) -> int:
    cfg, out = _prepare(args)
    workers = _workers(args, cfg)
    _, summary = _ensemble(cfg, out, workers)
    summary["command"] = "ensemble"
    _write_json(out / "summary.json", summary)
    _write_metadata(out, "ensemble", workers)
    return EXIT_OK if summary["complete"] else EXIT_INCOMPLETE


def _fit_block(cfg: ExperimentConfig, estimates, fixed_beta) -> dict:
    f = cfg.fit
    block = {}
    if fixed_beta is not None:
        try:
            block["fixed_beta"] = fit_scaling(estimates, fixed_beta, f.bootstrap, cfg.seed,
                                              weighted=f.weighted).to_dict()
        except FitError as exc:
            block["fixed_beta"] = {"error": str(exc)}
    if f.free_beta:
        try:
            block["free_beta"] = fit_scaling(estimates, None, f.bootstrap, cfg.seed,
                                             weighted=f.weighted).to_dict()
        except FitError as exc:
            block["free_beta"] = {"error": str(exc)}
    block["reference_beta"] = 0.25
    return block


def _plot_rows(estimates):
    return [(e.T ** -0.25, math.log(e.p_hat)) for e in estimates if e.p_hat > 0]


def cmd_scaling(args) -> int:
    cfg, out = _prepare(args)
    workers = _workers(args, cfg)
    estimates, summary = _ensemble(cfg, out, workers)
    summary["command"] = "scaling"
    summary["fit"] = _fit_block(cfg, estimates, cfg.fit.fixed_beta)
    _write_table(out / "plot.csv", ("T_pow_minus_quarter", "log_p_hat"), _plot_rows(estimates))
    _write_json(out / "summary.json", summary)
    _write_metadata(out, "scaling", workers)
    for name, blk in summary["fit"].items():
        if isinstance(blk, dict):
            msg = blk.get("error") or f"a={blk['a']:.6g} c={blk['c']:.6g} beta={blk['beta']:.6g}"
            print(f"fit[{name}]: {msg}")
    if not summary["complete"]:
        return EXIT_INCOMPLETE
    primary = "fixed_beta" if cfg.fit.fixed_beta is not None else "free_beta"
    if "error" in summary["fit"].get(primary, {}):
        return EXIT_FIT
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg, out = _prepare(args)
    name = args.name
    pc = cfg.probe
    if name == "khintchine":
        k = pc.khintchine
        rep = khintchine_empirical_check(k.rhos, k.coefficients, k.samples, cfg.seed)
    elif name == "dispersive":
        d = pc.dispersive
        grid = cfg.grid_spec()
        f = cfg.initial_field(grid)
        # the closed-form slope depends only on the width
        sigma = cfg.initial.width if cfg.initial.family == "gaussian" else None
        rep = dispersive_decay_probe(grid, f, d.p, tuple(d.window), d.npoints,
                                     gaussian_sigma=sigma, tolerance=d.tolerance)
    elif name == "bdg":
        b = pc.bdg
        rep = stochastic_convolution_moment_probe(
            cfg.initial_field(), cfg.noise_spec(), b.T, tuple(b.rhos), b.samples, b.nsteps,
            cfg.seed, ratio_limit=b.ratio_limit)
    else:
        c = pc.convergence
        u0 = cfg.initial_field()
        rep = strong_convergence_study(u0, cfg.solver_config(u0), cfg.noise_spec(), c.T,
                                       c.levels, c.finest_extra, cfg.seed, cfg.cutoff_spec())
    summary = {"command": f"probe {name}", "config": _config_echo(cfg), "report": rep.to_dict()}
    _write_json(out / "summary.json", summary)
    _write_table(out / f"{name}_plot.csv", rep.plot_columns, rep.plot)
    _write_metadata(out, f"probe {name}")
    for key, ok in rep.checks.items():
        print(f"{name}.{key}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_PROBE_FAILED


def cmd_fit(args) -> int:
    src = Path(args.summary)
    try:
        data = json.loads(src.read_text())
        estimates = [ProbabilityEstimate(**e) for e in data["estimates"]]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read estimates from {src}: {exc}") from exc
    cfg_fit = data.get("config", {}).get("fit", {})
    seed = args.seed if args.seed is not None else data.get("config", {}).get("seed", 0)
    bootstrap = args.bootstrap if args.bootstrap is not None else cfg_fit.get("bootstrap", 200)
    fit = fit_scaling(estimates, args.beta, bootstrap, seed,
                      weighted=cfg_fit.get("weighted", True))
    out = Path(args.out) if args.out is not None else src.parent
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", {"command": "fit", "source": src.name,
                                   "fixed_beta": args.beta, "fit": fit.to_dict()})
    _write_metadata(out, "fit")
    print(f"a={fit.a:.10g} c={fit.c:.10g} beta={fit.beta:.10g}"
          f"{' (constraint c>=0 active)' if fit.constraint_active else ''}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="snlslab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH", help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
        sp.add_argument("--out", metavar="DIR", help="output directory")

    sp = sub.add_parser("run-one", help="single trajectory with diagnostics")
    common(sp)
    sp.set_defaults(func=cmd_run_one)
    for name, func, hlp in (("ensemble", cmd_ensemble, "probability estimates on a ladder"),
                            ("scaling", cmd_scaling, "ensemble plus scaling fit")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--workers", type=int, help="process count (SNLS_WORKERS overrides)")
        sp.set_defaults(func=func)
    sp = sub.add_parser("probe", help="numerical probes of constants and estimates")
    sp.add_argument("name", choices=PROBES)
    common(sp)
    sp.set_defaults(func=cmd_probe)
    sp = sub.add_parser("fit", help="re-fit the estimates of an existing summary")
    sp.add_argument("summary", metavar="SUMMARY", help="summary.json from ensemble or scaling")
    common(sp, config=False)
    sp.add_argument("--beta", type=float, help="fix beta (free fit when omitted)")
    sp.add_argument("--bootstrap", type=int, help="bootstrap replicates")
    sp.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except SNLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
