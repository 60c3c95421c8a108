"""Command-line entry point: ``rbk {simulate,verify,converge,ssa,bench}``.

Exit codes: 0 success with every check passing, 1 a check or invariant
failed (outputs are still written), 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import kernel as kern
from .config import (ConfigError, RunRecord, density_path, load_config, read_series,
                     write_series)
from .diagnostics import SuiteOptions, run_suite
from .harness import BenchmarkError, bench_rhs, convergence_study, worker_count
from .integrate import StiffnessError, TimeSeries, integrate
from .ssa import ssa_ensemble
from .state import ConfigurationError, init_state

OK, CHECK_FAILED, CONFIG_ERROR = 0, 1, 2

log = logging.getLogger("rbk")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _suite_options(cfg):
    return SuiteOptions(tail_r=cfg["diagnostics.tail_r"], w11_sizes=cfg["diagnostics.w11_sizes"],
                        algebraic_states=cfg["diagnostics.algebraic_states"], seed=cfg["seed"],
                        negativity_tol=cfg["integrator.negativity_tol"])


def _emit(lines, path=None):
    text = "\n".join(lines) + "\n"
    if path:
        Path(path).write_text(text)
    sys.stdout.write(text)


def _simulate(cfg):
    kernel = cfg.kernel()
    series = integrate(init_state(cfg.initial_data(), cfg.n), kernel, cfg.integrator())
    series.config_digest = cfg.digest()
    series.seed = cfg["seed"]
    return kernel, series


def cmd_simulate(args):
    start = _now()
    cfg = load_config(args.config)
    out = args.out or cfg.get("output.series")
    if not out:
        raise ConfigurationError("no output path: pass --out or set output.series")
    kernel, series = _simulate(cfg)
    full = args.full or cfg["output.full"]
    for p in write_series(series, out, "full" if full else "moments"):
        log.info("wrote %s", p)
    status = OK
    report_path = args.report or cfg.get("output.report")
    if cfg["diagnostics.enabled"]:
        report = run_suite(series, kernel, _suite_options(cfg))
        if report_path:
            Path(report_path).write_text(report.to_text())
        for c in report.failures():
            log.error("check %s failed: residual %.3e > %.1e %s", c.name, c.residual, c.tolerance, c.note)
        status = OK if report.passed else CHECK_FAILED
    record = RunRecord(cfg.digest(), __version__, start, _now(), str(out), report_path, status,
                       series.discarded_m0, series.step_stats)
    record.write(args.record or Path(out).with_suffix(".run.json"))
    return status


def cmd_verify(args):
    cfg = load_config(args.config)
    kernel = cfg.kernel()
    if args.series:
        dens = args.density
        if dens is None and density_path(args.series).exists():
            dens = density_path(args.series)
        series = read_series(args.series, dens)
        if series.densities is not None:
            series.omega = np.array(kernel.omega_vector(series.densities.shape[1]))
        else:
            series.omega = None
    else:
        kernel, series = _simulate(cfg)
    report = run_suite(series, kernel, _suite_options(cfg))
    _emit(report.lines(), args.report)
    return OK if report.passed else CHECK_FAILED


def cmd_converge(args):
    cfg = load_config(args.config)
    table = convergence_study(cfg.kernel(), cfg.initial_data(), cfg.integrator(), args.n,
                              workers=worker_count())
    _emit(table.lines(), args.out)
    if table.non_decreasing:
        log.error("successive differences do not decrease: %s", table.mass_diffs)
        return CHECK_FAILED
    return OK


def cmd_ssa(args):
    cfg = load_config(args.config)
    if args.replicates < 2:
        raise ConfigurationError("--replicates must be at least 2")
    seeds = [args.seed + k for k in range(args.replicates)]
    times = cfg.sample_times()
    t_end = cfg["integrator.t_end"]
    ens = ssa_ensemble(cfg.initial_data(), cfg.kernel(), args.volume, t_end, seeds,
                       sample_times=times, n=cfg.n, workers=worker_count())
    sizes = np.arange(1, ens.mean_densities.shape[1] + 1, dtype=float)

    def as_series(dens, m0, m1):
        return TimeSeries(ens.times, m0, dens @ np.sqrt(sizes), m1, None,
                          np.zeros(ens.times.size), densities=dens)

    mean = as_series(ens.mean_densities, ens.mean_M0, ens.mean_M1)
    se = as_series(ens.se_densities, ens.se_M0, ens.se_M1)
    if args.out:
        write_series(mean, args.out)
        out = Path(args.out)
        write_series(se, out.with_name(out.stem + "_se" + (out.suffix or ".csv")))
    lines = ["replicate,seed,events"]
    lines += [f"{k},{s},{e}" for k, (s, e) in enumerate(zip(ens.seeds, ens.events))]
    _emit(lines)
    return OK


BENCH_KERNELS = {
    "constant": lambda a: kern.constant(1.0),
    "product": lambda a: kern.separable_power(a),
    "product+constant": lambda a: kern.separable_plus_constant(a, 1.0, 1.0),
    "product+bounded": lambda a: kern.separable_plus_bounded(a, 1.0, 1.0),
}


def cmd_bench(args):
    names = [k for k in args.kernel.split(",") if k]
    unknown = [k for k in names if k not in BENCH_KERNELS]
    if unknown:
        raise ConfigurationError(f"unknown bench kernel(s) {unknown}; choose from {sorted(BENCH_KERNELS)}")
    kernels = [BENCH_KERNELS[k](args.alpha) for k in names]
    try:
        table = bench_rhs(args.n, kernels, repeats=args.repeats, seed=args.seed)
    except BenchmarkError as exc:
        log.error("%s", exc)
        return CHECK_FAILED
    _emit(table.lines(), args.out)
    return OK


def build_parser():
    p = argparse.ArgumentParser(prog="rbk", description="Cluster-eating coagulation kinetics engine.")
    p.add_argument("--version", action="version", version=f"rbk {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="{simulate,verify,converge,ssa,bench}")
    sub.required = True

    s = sub.add_parser("simulate", help="integrate one configuration and write CSV output")
    s.add_argument("--config", required=True, help="run configuration file")
    s.add_argument("--out", help="moment table path (overrides output.series)")
    s.add_argument("--full", action="store_true", help="also write the density table")
    s.add_argument("--report", help="diagnostics report path (overrides output.report)")
    s.add_argument("--record", help="run record JSON path (default: <out>.run.json)")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run the diagnostics suite on a run or a stored series")
    v.add_argument("--config", required=True, help="run configuration file (kernel and checks)")
    v.add_argument("--series", help="stored moment table; omit to simulate the configuration")
    v.add_argument("--density", help="density table matching --series (default: <series>_density.csv if present)")
    v.add_argument("--report", help="also write the report to this path")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("converge", help="truncation refinement study")
    c.add_argument("--config", required=True, help="base configuration (n is overridden)")
    c.add_argument("--n", required=True, type=_int_list, help="increasing sizes, e.g. 16,32,64")
    c.add_argument("--out", help="also write the table to this path")
    c.set_defaults(func=cmd_converge)

    e = sub.add_parser("ssa", help="stochastic particle ensemble")
    e.add_argument("--config", required=True, help="configuration (kernel, init, n, t_end, samples)")
    e.add_argument("--volume", type=float, required=True, help="system volume V")
    e.add_argument("--seed", type=int, default=0, help="first seed; replicate k uses seed + k")
    e.add_argument("--replicates", type=int, default=32, help="number of replicates (>= 2)")
    e.add_argument("--out", help="mean trajectory table; standard errors go to <out>_se.csv")
    e.set_defaults(func=cmd_ssa)

    b = sub.add_parser("bench", help="time the naive and fast right-hand sides")
    b.add_argument("--n", required=True, type=_int_list, help="sizes, e.g. 256,1024,4096")
    b.add_argument("--kernel", default="product",
                   help="comma-separated: constant, product, product+constant, product+bounded")
    b.add_argument("--alpha", type=float, default=1.0, help="exponent of omega_i = i**alpha")
    b.add_argument("--repeats", type=int, default=9, help="timed evaluations per row (>= 9)")
    b.add_argument("--seed", type=int, default=0, help="seed for the random test state")
    b.add_argument("--out", help="also write the table to this path")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"rbk: configuration error in {getattr(args, 'config', '?')}:\n{exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (ConfigurationError, ValueError) as exc:
        print(f"rbk: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except StiffnessError as exc:
        print(f"rbk: {exc}", file=sys.stderr)
        return CHECK_FAILED
    except OSError as exc:
        print(f"rbk: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
