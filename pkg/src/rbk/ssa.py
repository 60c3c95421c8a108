"""Exact stochastic simulation of the finite-volume cluster-eating system.

Clusters of sizes i != j meet at rate theta_ij N_i N_j / V and leave one
cluster of size |i - j|; equal sizes meet at rate theta_ii N_i (N_i - 1) / (2V)
and both vanish.  With this convention the large-V drift of N_i / V is the
deterministic right-hand side, equal-size term included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence

import numpy as np

from .kernel import KernelSpec
from .rhs import rhs_naive
from .state import ConfigurationError, InitialData, StateVector, init_state


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; distinct seeds give non-overlapping streams."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def initial_counts(init, V: float, n: Optional[int] = None):
    """Integer counts N_i = round(V f_i) and the rounding residual sum_i |V f_i - N_i| / V.

    ``init`` may be a mapping {size: count}, a StateVector, an array of
    densities, or InitialData (``n`` then sets the truncation, defaulting to
    the monodisperse size).
    """
    if not V > 0:
        raise ConfigurationError(f"volume must be positive, got {V}")
    if isinstance(init, Mapping):
        top = max(init) if init else 0
        counts = np.zeros(top, dtype=np.int64)
        for size, c in init.items():
            if size < 1 or c < 0:
                raise ConfigurationError("counts need sizes >= 1 and nonnegative values")
            counts[size - 1] = int(c)
        return counts, 0.0
    if isinstance(init, InitialData):
        if n is None:
            n = max(init.size, 2)
        init = init_state(init, n)
    f = np.asarray(getattr(init, "f", init), dtype=float)
    exact = V * f
    counts = np.rint(exact).astype(np.int64)
    return counts, float(np.sum(np.abs(exact - counts)) / V)


@dataclass
class SsaTrajectory:
    times: np.ndarray
    densities: np.ndarray  # samples x max size, N_i / V
    M0: np.ndarray
    M1: np.ndarray
    events: int
    final_counts: np.ndarray
    V: float
    seed: int
    rounding_residual: float = 0.0
    event_log: Optional[List[tuple]] = None

    @property
    def Mhalf(self) -> np.ndarray:
        sizes = np.arange(1, self.densities.shape[1] + 1, dtype=float)
        return self.densities @ np.sqrt(sizes)


def _pair_rates(theta, sizes, N, V):
    """Upper-triangle (diagonal included) rate matrix over occupied sizes."""
    th = theta[np.ix_(sizes - 1, sizes - 1)]
    Nf = N.astype(float)
    rates = th * np.multiply.outer(Nf, Nf) / V
    np.fill_diagonal(rates, np.diag(th) * Nf * (Nf - 1.0) / (2.0 * V))
    return np.triu(rates)


def ssa_run(init, kernel: KernelSpec, V: float, t_end: float, seed: int,
            sample_times: Optional[Sequence[float]] = None, n: Optional[int] = None,
            keep_events: bool = False) -> SsaTrajectory:
    """One exact realisation up to ``t_end`` (or until no pair is left)."""
    counts, residual = initial_counts(init, V, n)
    if counts.sum() == 0 and not isinstance(init, Mapping):
        raise ConfigurationError("initial data rounds to zero particles; increase V")
    if not t_end > 0:
        raise ConfigurationError("t_end must be positive")
    times = np.asarray([0.0, t_end] if sample_times is None else sample_times, dtype=float)
    top = counts.size
    theta = kernel.theta_matrix(top) if top else np.zeros((0, 0))
    rng = make_rng(seed)
    rows = np.zeros((times.size, top))
    log = [] if keep_events else None
    t = 0.0
    k = 0
    events = 0
    while True:
        occupied = np.flatnonzero(counts) + 1
        N = counts[occupied - 1]
        rates = _pair_rates(theta, occupied, N, V) if occupied.size else np.zeros((0, 0))
        flat = rates.ravel()
        cum = np.cumsum(flat)
        W = float(cum[-1]) if cum.size else 0.0
        t_next = t + rng.exponential(1.0 / W) if W > 0 else math.inf
        while k < times.size and times[k] < t_next:
            rows[k] = counts / V
            k += 1
        if t_next > t_end:
            break
        u = rng.random() * W
        pick = min(int(np.searchsorted(cum, u, side="right")), flat.size - 1)
        a, b = divmod(pick, occupied.size)
        i, j = int(occupied[a]), int(occupied[b])
        t = t_next
        if i == j:
            counts[i - 1] -= 2
        else:
            counts[i - 1] -= 1
            counts[j - 1] -= 1
            counts[abs(i - j) - 1] += 1
        events += 1
        if log is not None:
            log.append((t, i, j))
    sizes = np.arange(1, top + 1, dtype=float)
    return SsaTrajectory(times, rows, rows.sum(axis=1), rows @ sizes, events, counts.copy(),
                         V, seed, residual, log)


@dataclass
class EnsembleResult:
    times: np.ndarray
    mean_densities: np.ndarray
    se_densities: np.ndarray
    mean_M0: np.ndarray
    se_M0: np.ndarray
    mean_M1: np.ndarray
    se_M1: np.ndarray
    events: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)
    V: float = 1.0


def _replicate(args):
    init, kernel, V, t_end, seed, times, n = args
    return ssa_run(init, kernel, V, t_end, seed, sample_times=times, n=n)


def ssa_ensemble(init, kernel: KernelSpec, V: float, t_end: float, seeds: Sequence[int],
                 sample_times: Optional[Sequence[float]] = None, n: Optional[int] = None,
                 workers: int = 1) -> EnsembleResult:
    """Pointwise mean and standard error over independent replicates."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ConfigurationError("an ensemble needs at least two seeds")
    times = np.asarray([0.0, t_end] if sample_times is None else sample_times, dtype=float)
    jobs = [(init, kernel, V, t_end, s, times, n) for s in seeds]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            runs = list(pool.map(_replicate, jobs))
    else:
        runs = [_replicate(j) for j in jobs]
    dens = np.stack([r.densities for r in runs])
    m0 = np.stack([r.M0 for r in runs])
    m1 = np.stack([r.M1 for r in runs])
    root = math.sqrt(len(runs))
    return EnsembleResult(
        times, dens.mean(axis=0), dens.std(axis=0, ddof=1) / root,
        m0.mean(axis=0), m0.std(axis=0, ddof=1) / root,
        m1.mean(axis=0), m1.std(axis=0, ddof=1) / root,
        [r.events for r in runs], seeds, V)


def expected_drift(counts, kernel: KernelSpec, V: float) -> np.ndarray:
    """E[d(N_i/V)/dt] by summing rate x stoichiometry over every admissible pair."""
    counts = np.asarray(counts, dtype=np.int64)
    top = counts.size
    theta = kernel.theta_matrix(top)
    drift = np.zeros(top)
    occupied = [int(s) for s in np.flatnonzero(counts) + 1]
    for a, i in enumerate(occupied):
        Ni = float(counts[i - 1])
        for j in occupied[a:]:
            Nj = float(counts[j - 1])
            if i == j:
                rate = theta[i - 1, i - 1] * Ni * (Ni - 1.0) / (2.0 * V)
                drift[i - 1] -= 2.0 * rate
            else:
                rate = theta[i - 1, j - 1] * Ni * Nj / V
                drift[i - 1] -= rate
                drift[j - 1] -= rate
                drift[abs(i - j) - 1] += rate
    return drift / V


def drift_consistency(counts, kernel: KernelSpec, V: float) -> float:
    """Max relative gap between the stochastic drift (less its O(1/V) part) and the ODE.

    Equal-size pairs use N(N-1) rather than N^2, which shifts the drift by
    theta_ii x_i / V exactly; that term is removed before comparing.
    """
    counts = np.asarray(counts, dtype=np.int64)
    x = counts / V
    theta_diag = np.diag(kernel.theta_matrix(counts.size))
    drift = expected_drift(counts, kernel, V) - theta_diag * x / V
    ode = rhs_naive(x, kernel)
    return float(np.max(np.abs(drift - ode)) / max(np.max(np.abs(ode)), np.finfo(float).tiny))
