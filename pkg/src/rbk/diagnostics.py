"""Runtime checks of the identities and inequalities the truncated system obeys.

Algebraic checks act on single states and hold to round-off.  Trajectory
checks act on a ``TimeSeries`` and carry one-sided slacks sized to absorb
integrator and quadrature error.  Every inequality check reports its
residual as a relative excess ``lhs / bound - 1`` so that ``residual <=
tolerance`` is the pass condition throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .kernel import HypothesisClass, KernelSpec, classify_hypothesis
from .rhs import rhs_naive

STATE = "state"
TRAJECTORY = "trajectory"

MONOTONE_SLACK = 1e-8
INTEGRAL_SLACK = 1e-6
QUADRATURE_SLACK = 1e-4
IDENTITY_TOL = 1e-12


# test sequences psi_1..psi_n

def psi_preset(name: str, n: int) -> np.ndarray:
    sizes = np.arange(1, n + 1, dtype=float)
    if name == "ones":
        return np.ones(n)
    if name == "linear":
        return sizes
    if name == "sqrt":
        return np.sqrt(sizes)
    raise ValueError(f"unknown test sequence {name!r}")


PSI_PRESETS = ("ones", "linear", "sqrt")


def _psi(psi, n):
    if isinstance(psi, str):
        return psi_preset(psi, n)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (n,) or np.any(psi < 0):
        raise ValueError("test sequence must hold n nonnegative values")
    return psi


def _pair_terms(f, kernel):
    f = np.asarray(getattr(f, "f", f), dtype=float)
    theta = kernel.theta_matrix(f.size)
    return f, theta * np.multiply.outer(f, f)


def weak_form_sides(state, kernel: KernelSpec, psi, m: int):
    """(L, R, scale) for the general-m weak identity.

    L = sum_{i>=m} psi_i (df_i/dt) from the ODE; R is the collision-pair
    form over T1 = {j <= i - m} and T2 = {j >= i - m + 1}, i in m..n.
    """
    f, pair = _pair_terms(state, kernel)
    n = f.size
    if not 1 <= m <= n:
        raise ValueError(f"m must lie in 1..{n}, got {m}")
    psi = _psi(psi, n)
    d = rhs_naive(f, kernel)
    L = float(psi[m - 1:] @ d[m - 1:])
    i = np.arange(1, n + 1)[:, None]
    j = np.arange(1, n + 1)[None, :]
    rows = i >= m
    t1 = rows & (j <= i - m)
    t2 = rows & (j >= i - m + 1)
    lag = np.clip(i - j, 1, n) - 1
    gain = np.where(t1, psi[i - 1] - psi[lag], 0.0)
    loss = np.where(t2, psi[i - 1], 0.0)
    R = -float(np.sum(gain * pair)) - float(np.sum(loss * pair))
    scale = 1.0 + float(psi @ np.abs(d))
    return L, R, scale


def weak_form_residual(state, kernel: KernelSpec, psi, m: int) -> float:
    L, R, _ = weak_form_sides(state, kernel, psi, m)
    return L - R


def corrected_m1_identity_residual(state, kernel: KernelSpec) -> float:
    """sum_i i df_i/dt minus its pair form, including the equal-size term."""
    f, pair = _pair_terms(state, kernel)
    n = f.size
    sizes = np.arange(1, n + 1, dtype=float)
    lhs = float(sizes @ rhs_naive(f, kernel))
    i = sizes[:, None]
    j = sizes[None, :]
    below = np.tril(np.ones((n, n), dtype=bool), -1)
    off = float(np.sum(np.where(below, (i - j) - i - j, 0.0) * pair))
    diag = float(sizes @ np.diag(pair))
    return lhs - (off - diag)


def m1_display_gap(state, kernel: KernelSpec, psi) -> float:
    """Strict-lower-triangle pair form minus the true sum_i psi_i df_i/dt.

    The form sum_{i>j} (psi_{i-j} - psi_i - psi_j) theta_ij f_i f_j leaves
    out equal-size collisions, so this gap equals
    sum_i psi_i theta_ii f_i^2 rather than zero.
    """
    f, pair = _pair_terms(state, kernel)
    n = f.size
    psi = _psi(psi, n)
    true = float(psi @ rhs_naive(f, kernel))
    i = np.arange(1, n + 1)[:, None]
    j = np.arange(1, n + 1)[None, :]
    below = j < i
    lag = np.clip(i - j, 1, n) - 1
    weight = np.where(below, psi[lag] - psi[i - 1] - psi[j - 1], 0.0)
    return float(np.sum(weight * pair)) - true


def diagonal_sum(state, kernel: KernelSpec, psi) -> float:
    f, pair = _pair_terms(state, kernel)
    return float(_psi(psi, f.size) @ np.diag(pair))


# reports

@dataclass
class CheckRecord:
    name: str
    scope: str
    residual: float
    tolerance: float
    passed: Optional[bool]  # None: not applicable / not evaluated
    citation: str
    note: str = ""

    @property
    def status(self) -> str:
        if self.passed is None:
            return "skipped"
        return "pass" if self.passed else "fail"

    @property
    def ok(self) -> bool:
        return self.passed is not False


@dataclass
class DiagnosticsReport:
    checks: List[CheckRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name) -> CheckRecord:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> List[CheckRecord]:
        return [c for c in self.checks if not c.ok]

    def lines(self, sep=",") -> List[str]:
        out = [sep.join(("name", "scope", "residual", "tolerance", "pass", "citation"))]
        for c in self.checks:
            out.append(sep.join((c.name, c.scope, f"{c.residual:.6e}", f"{c.tolerance:.1e}",
                                 c.status, c.citation)))
        return out

    def to_text(self, sep=",") -> str:
        return "\n".join(self.lines(sep)) + "\n"


def _record(name, scope, residual, tol, citation, note=""):
    residual = float(residual)
    return CheckRecord(name, scope, residual, tol, bool(residual <= tol), citation, note)


def _skip(name, scope, tol, citation, note):
    return CheckRecord(name, scope, math.nan, tol, None, citation, note)


def _rel_excess(lhs, bound):
    """max over points of lhs / bound - 1, with 0/0 counted as no excess."""
    lhs = np.atleast_1d(np.asarray(lhs, dtype=float))
    bound = np.atleast_1d(np.asarray(bound, dtype=float))
    out = np.where(bound > 0, lhs / np.where(bound > 0, bound, 1.0) - 1.0,
                   np.where(lhs > 0, math.inf, 0.0))
    k = int(np.argmax(out))
    return float(out[k]), k


def _monotone(values, times, name, citation):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return _skip(name, TRAJECTORY, MONOTONE_SLACK, citation, "fewer than 2 samples")
    running_min = np.minimum.accumulate(values)
    rise = values - running_min
    k = int(np.argmax(rise))
    ref = values[0]
    if ref > 0:
        residual = rise[k] / ref
    else:
        residual = 0.0 if rise[k] <= 0 else math.inf
    note = ""
    if rise[k] > 0:
        k1 = int(np.flatnonzero(values[:k + 1] == running_min[k])[0])
        note = f"largest rise between samples {k1} (t={times[k1]:.6g}) and {k} (t={times[k]:.6g})"
    return _record(name, TRAJECTORY, residual, MONOTONE_SLACK, citation, note)


def check_mass_monotone(series) -> CheckRecord:
    """M1 never increases across samples (slack 1e-8 M1(0))."""
    return _monotone(series.M1, series.times, "mass_monotone", "truncated-mass-nonincreasing")


def check_sqrt_monotone(series) -> CheckRecord:
    return _monotone(series.Mhalf, series.times, "sqrt_moment_monotone",
                     "half-moment-nonincreasing")


def check_number_dissipation(series) -> CheckRecord:
    """M0(t) + D(t)/2 <= M0(0) (1 + 1e-6), D the running dissipation integral."""
    name, cite = "number_dissipation", "number-plus-dissipation-bound"
    if series.dissipation is None or np.all(np.isnan(series.dissipation)):
        return _skip(name, TRAJECTORY, INTEGRAL_SLACK, cite, "not evaluated: no dissipation accumulator")
    lhs = np.asarray(series.M0) + 0.5 * np.asarray(series.dissipation)
    residual, k = _rel_excess(lhs, np.full(lhs.shape, series.M0[0]))
    return _record(name, TRAJECTORY, residual, INTEGRAL_SLACK, cite, f"worst at t={series.times[k]:.6g}")


def _trapezoid(y, t):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def check_tail_L2(series, r: int, t1: Optional[float] = None, t2: Optional[float] = None) -> CheckRecord:
    """int_{t1}^{t2} (sum_{i>=r} omega_i f_i)^2 <= 2 r^{-1/2} Mhalf(t1) (1 + 1e-4).

    The integral is the trapezoid rule on the stored samples.
    """
    name, cite = f"tail_L2_r{r}", "weighted-tail-L2-bound"
    if series.densities is None or series.omega is None:
        return _skip(name, TRAJECTORY, QUADRATURE_SLACK, cite, "not evaluated: no density samples")
    times = np.asarray(series.times)
    t1 = times[0] if t1 is None else t1
    t2 = times[-1] if t2 is None else t2
    n = series.densities.shape[1]
    if not 1 <= r <= n:
        raise ValueError(f"r must lie in 1..{n}")
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    k1 = int(np.searchsorted(times, t1))
    k2 = int(np.searchsorted(times, t2, side="right"))
    if k1 >= times.size or not np.isclose(times[k1], t1, rtol=1e-12, atol=0):
        raise ValueError("t1 must be a sample time")
    window = slice(k1, k2)
    tail = series.densities[window, r - 1:] @ series.omega[r - 1:]
    lhs = _trapezoid(tail * tail, times[window])
    bound = 2.0 / math.sqrt(r) * series.Mhalf[k1]
    residual, _ = _rel_excess(lhs, bound)
    return _record(name, TRAJECTORY, residual, QUADRATURE_SLACK, cite,
                   f"integral {lhs:.6e} vs bound {bound:.6e} on [{times[k1]:.6g}, {times[k2 - 1]:.6g}]")


def check_decay_bound(series, hyp: HypothesisClass) -> CheckRecord:
    """M1(t) <= (2/R) M0(0)^{1/2} t^{-1/2} (1 + 1e-6) for every sample t > 0."""
    name, cite = "decay_bound", "mass-decay-inverse-sqrt-t"
    if not hyp.is_ker3:
        return _skip(name, TRAJECTORY, INTEGRAL_SLACK, cite, f"not applicable to {hyp}")
    times = np.asarray(series.times)
    pos = times > 0
    if not pos.any():
        return _skip(name, TRAJECTORY, INTEGRAL_SLACK, cite, "no sample with t > 0")
    bound = 2.0 / hyp.R * math.sqrt(series.M0[0]) / np.sqrt(times[pos])
    residual, k = _rel_excess(np.asarray(series.M1)[pos], bound)
    return _record(name, TRAJECTORY, residual, INTEGRAL_SLACK, cite,
                   f"worst at t={times[pos][k]:.6g}")


def check_w11(series, kernel: KernelSpec, hyp: HypothesisClass,
              sizes: Optional[Sequence[int]] = None) -> CheckRecord:
    """int_0^T |df_i/dt| <= 4 (1 + A) M0(0) (1 + 1e-4) for the tracked sizes."""
    name, cite = "w11_bound", "derivative-L1-bound"
    if not hyp.is_ker3:
        return _skip(name, TRAJECTORY, QUADRATURE_SLACK, cite, f"not applicable to {hyp}")
    if series.deriv_l1 is None:
        return _skip(name, TRAJECTORY, QUADRATURE_SLACK, cite, "not evaluated: no derivative accumulator")
    var = np.asarray(series.deriv_l1)
    idx = np.arange(var.size) if sizes is None else np.asarray(sizes, dtype=int) - 1
    idx = idx[idx < var.size]
    bound = 4.0 * (1.0 + hyp.A) * series.M0[0]
    residual, k = _rel_excess(var[idx], np.full(idx.size, bound))
    return _record(name, TRAJECTORY, residual, QUADRATURE_SLACK, cite,
                   f"worst size {idx[k] + 1}: {var[idx[k]]:.6e} vs {bound:.6e}")


def check_support(series, negativity_tol: float = 1e-12) -> CheckRecord:
    """Sizes above the initial support's top index never become populated."""
    name, cite = "support_invariance", "no-growth-above-support"
    if series.densities is None:
        return _skip(name, TRAJECTORY, negativity_tol, cite, "not evaluated: no density samples")
    init = series.densities[0]
    occupied = np.flatnonzero(init > 0)
    top = occupied[-1] + 1 if occupied.size else 0
    above = series.densities[:, top:]
    residual = float(above.max()) if above.size else 0.0
    return _record(name, TRAJECTORY, residual, negativity_tol, cite, f"support top index {top}")


def check_weak_forms(kernel: KernelSpec, n: int, count: int = 200, seed: int = 0) -> List[CheckRecord]:
    """Round-off checks of the pair identities on ``count`` random states."""
    rng = np.random.default_rng(seed)
    worst_weak = 0.0
    worst_m1 = 0.0
    sizes = np.arange(1, n + 1, dtype=float)
    for s in range(count):
        f = rng.uniform(0.0, 1.0, n)
        m = int(rng.integers(1, n + 1))
        psi = PSI_PRESETS[s % len(PSI_PRESETS)]
        L, R, scale = weak_form_sides(f, kernel, psi, m)
        worst_weak = max(worst_weak, abs(L - R) / scale)
        d = rhs_naive(f, kernel)
        worst_m1 = max(worst_m1, abs(corrected_m1_identity_residual(f, kernel)) / (1.0 + sizes @ np.abs(d)))
    return [
        _record("weak_form_identity", STATE, worst_weak, IDENTITY_TOL, "general-weak-formulation",
                f"{count} random states, n={n}"),
        _record("mass_rate_identity", STATE, worst_m1, IDENTITY_TOL, "mass-rate-with-diagonal",
                f"{count} random states, n={n}"),
    ]


@dataclass
class SuiteOptions:
    tail_r: Sequence[int] = (1, 4, 16)
    w11_sizes: Optional[Sequence[int]] = None
    algebraic_states: int = 200
    algebraic_n: int = 16
    seed: int = 0
    negativity_tol: float = 1e-12
    hypothesis: Optional[HypothesisClass] = None


def run_suite(series, kernel: KernelSpec, options: Optional[SuiteOptions] = None) -> DiagnosticsReport:
    """Every applicable check, ordered by name."""
    opts = options or SuiteOptions()
    hyp = opts.hypothesis or classify_hypothesis(kernel)
    checks = [
        check_mass_monotone(series),
        check_sqrt_monotone(series),
        check_number_dissipation(series),
        check_decay_bound(series, hyp),
        check_w11(series, kernel, hyp, opts.w11_sizes),
        check_support(series, opts.negativity_tol),
    ]
    n = series.n
    if series.densities is not None and len(series.times) >= 2:
        for r in opts.tail_r:
            if r <= n:
                checks.append(check_tail_L2(series, r))
    if opts.algebraic_states > 0:
        cap = kernel.size_cap
        an = n or opts.algebraic_n
        if cap is not None:
            an = min(an, cap)
        checks.extend(check_weak_forms(kernel, an, opts.algebraic_states, opts.seed))
    checks.sort(key=lambda c: c.name)
    return DiagnosticsReport(checks)
