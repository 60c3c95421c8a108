"""Truncation-refinement studies, decay-rate fits and RHS benchmarks."""
from __future__ import annotations

import math
import os
import statistics
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .integrate import IntegratorConfig, TimeSeries, integrate
from .kernel import KernelSpec
from .rhs import FastPathFallback, rhs_fast, rhs_naive
from .state import ConfigurationError, InitialData, init_state


def worker_count(default: int = 1) -> int:
    """Concurrency cap from RBK_THREADS (0 = one worker per CPU)."""
    raw = os.environ.get("RBK_THREADS", "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"RBK_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise ConfigurationError("RBK_THREADS must be >= 0")
    return value or (os.cpu_count() or 1)


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# truncation refinement

@dataclass
class ConvergenceRow:
    n: int
    paired_n: int
    mass_diff: float  # max_t sum_{i<=n} i |f_i^(n) - f_i^(paired)|
    number_diff: float  # same without the size weight


@dataclass
class ConvergenceTable:
    rows: List[ConvergenceRow]
    discarded_m0: Dict[int, float]
    series: Dict[int, TimeSeries] = field(default_factory=dict, repr=False)

    @property
    def mass_diffs(self) -> List[float]:
        return [r.mass_diff for r in self.rows]

    @property
    def non_decreasing(self) -> bool:
        """True when some successive difference fails to shrink."""
        d = self.mass_diffs
        return any(b >= a for a, b in zip(d, d[1:]))

    def lines(self, sep=",") -> List[str]:
        out = [sep.join(("n", "paired_n", "mass_weighted_diff", "number_diff", "discarded_m0"))]
        for r in self.rows:
            out.append(sep.join((str(r.n), str(r.paired_n), f"{r.mass_diff:.17g}",
                                 f"{r.number_diff:.17g}", f"{self.discarded_m0[r.n]:.17g}")))
        return out


def _run_one(job):
    kernel, init, cfg, n = job
    return integrate(init_state(init, n), kernel, cfg)


def convergence_study(kernel: KernelSpec, init: InitialData, cfg: IntegratorConfig,
                      n_list: Sequence[int], workers: Optional[int] = None) -> ConvergenceTable:
    """Run every n with the same integrator settings and difference neighbours."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2:
        raise ConfigurationError("a convergence study needs at least two sizes")
    if any(n < 2 for n in n_list) or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError("n_list must be strictly increasing with every n >= 2")
    if init.family == "monodisperse":
        raise ConfigurationError("monodisperse data does not depend on n; the study would be vacuous")
    workers = worker_count() if workers is None else workers
    runs = _map(_run_one, [(kernel, init, cfg, n) for n in n_list], workers)
    by_n = dict(zip(n_list, runs))
    rows = []
    for small, big in zip(n_list, n_list[1:]):
        a = by_n[small].densities
        b = by_n[big].densities[:, :small]
        delta = np.abs(a - b)
        sizes = np.arange(1, small + 1, dtype=float)
        rows.append(ConvergenceRow(small, big, float(np.max(delta @ sizes)),
                                   float(np.max(delta.sum(axis=1)))))
    return ConvergenceTable(rows, {n: s.discarded_m0 for n, s in by_n.items()}, by_n)


# late-time decay

@dataclass(frozen=True)
class DecayFit:
    exponent: float
    t_lo: float
    t_hi: float
    samples: int


def decay_exponent(series, t_lo: Optional[float] = None, t_hi: Optional[float] = None,
                   min_samples: int = 8) -> DecayFit:
    """Least-squares slope of log M1 against log t over a late-time window.

    The default window is the last decade of sample times (never below
    t = 1).  Returns exponent -inf when M1 vanishes inside the window.
    """
    times = np.asarray(series.times, dtype=float)
    M1 = np.asarray(series.M1, dtype=float)
    hi = times[-1] if t_hi is None else t_hi
    lo = max(1.0, hi / 10.0) if t_lo is None else t_lo
    sel = (times >= lo) & (times <= hi)
    if np.any(M1[sel] <= 0):
        return DecayFit(-math.inf, lo, hi, int(sel.sum()))
    if sel.sum() < min_samples:
        raise ValueError(f"need >= {min_samples} samples in [{lo:g}, {hi:g}], have {int(sel.sum())}")
    slope = np.polyfit(np.log(times[sel]), np.log(M1[sel]), 1)[0]
    return DecayFit(float(slope), lo, hi, int(sel.sum()))


# RHS benchmark

class BenchmarkError(RuntimeError):
    pass


@dataclass
class BenchRow:
    n: int
    family: str
    path: str
    median_s: float
    speedup: float


@dataclass
class BenchTable:
    rows: List[BenchRow]

    def lines(self, sep=",") -> List[str]:
        out = [sep.join(("n", "family", "path", "median_s", "speedup"))]
        for r in self.rows:
            out.append(sep.join((str(r.n), r.family, r.path, f"{r.median_s:.6e}", f"{r.speedup:.3f}")))
        return out


def kernel_label(kernel: KernelSpec) -> str:
    if kernel.family == "constant":
        return f"constant(c={kernel.c:g})"
    if kernel.family == "table":
        return "table"
    return f"{kernel.family}(alpha={kernel.alpha:g})"


def equivalence_gap(f, kernel: KernelSpec) -> float:
    """max |fast - naive| / (1 + max |naive|)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", FastPathFallback)
        fast = rhs_fast(f, kernel)
    naive = rhs_naive(f, kernel)
    return float(np.max(np.abs(fast - naive)) / (1.0 + np.max(np.abs(naive))))


def _median_time(fn, arg, repeats):
    fn(arg)  # warm caches (theta matrix, FFT plans)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(arg)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_rhs(n_list: Sequence[int], kernels: Sequence[KernelSpec], repeats: int = 9,
              seed: int = 0, tol: float = 1e-10) -> BenchTable:
    """Median wall time of both RHS paths on identical random states.

    The equivalence gate runs first; no timing row is produced for a pair
    that fails it.
    """
    if repeats < 9:
        raise ValueError("medians need at least 9 evaluations")
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_list:
        f = rng.uniform(0.0, 1.0, int(n))
        for kernel in kernels:
            label = kernel_label(kernel)
            gap = equivalence_gap(f, kernel)
            if not gap <= tol:
                raise BenchmarkError(f"fast and naive paths disagree for {label} at n={n}: "
                                     f"relative gap {gap:.3e} > {tol:g}; run `rbk verify` on this kernel")
            t_naive = _median_time(lambda x: rhs_naive(x, kernel), f, repeats)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", FastPathFallback)
                t_fast = _median_time(lambda x: rhs_fast(x, kernel), f, repeats)
            rows.append(BenchRow(int(n), label, "naive", t_naive, 1.0))
            rows.append(BenchRow(int(n), label, "fast" if kernel.is_fast else "fallback",
                                 t_fast, t_naive / t_fast))
    return BenchTable(rows)


def with_samples(cfg: IntegratorConfig, times) -> IntegratorConfig:
    return replace(cfg, sample_times=np.asarray(times, dtype=float))
