"""Time integration of the truncated system.

Two schemes:

* ``adaptive-explicit``: Dormand-Prince 5(4) with per-component error
  control.  A step is rejected when its error exceeds
  ``abs_tol + rel_tol |f_i|`` or when any component drops below
  ``-negativity_tol``; accepted steps clamp the remaining tiny negatives
  to zero and the clamped mass is audited.
* ``semi-implicit``: f' = (f + dt birth) / (1 + dt deathrate) with frozen
  coefficients.  First order and unconditionally nonnegative; step size
  is chosen by step doubling.

States between accepted steps are recovered by cubic Hermite
interpolation, so sample times never influence the step sequence.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .kernel import KernelSpec, classify_hypothesis
from .rhs import birth_fast, death_rate, select_rhs
from .state import ConfigurationError, MomentVector, StateVector

log = logging.getLogger(__name__)

ADAPTIVE = "adaptive-explicit"
SEMI_IMPLICIT = "semi-implicit"

DEFAULT_SAMPLES = 256


class StiffnessError(RuntimeError):
    """Step size fell below dt_min while steps kept being rejected."""

    def __init__(self, t, dt):
        super().__init__(f"step size {dt:.3e} below dt_min at t = {t:.17g}; "
                         "the problem looks stiff, try method = semi-implicit")
        self.t = t
        self.dt = dt


def default_sample_times(t_end: float, count: int = DEFAULT_SAMPLES) -> np.ndarray:
    """t = 0 followed by ``count - 1`` geometrically spaced times up to t_end."""
    if count < 2:
        return np.array([0.0, t_end])[-count:] if count == 1 else np.array([], float)
    return np.concatenate(([0.0], np.geomspace(t_end * 1e-4, t_end, count - 1)))


@dataclass
class IntegratorConfig:
    method: str = ADAPTIVE
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    dt_init: float = 1e-4
    dt_min: float = 1e-14
    dt_max: float = math.inf
    negativity_tol: float = 1e-12
    t_end: float = 1.0
    sample_times: Optional[Sequence[float]] = None
    rhs_path: str = "auto"
    # fixed-step mode takes dt_init steps without error control
    adaptive: bool = True

    def __post_init__(self):
        if self.method not in (ADAPTIVE, SEMI_IMPLICIT):
            raise ConfigurationError(f"unknown integrator method {self.method!r}")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigurationError("abs_tol and rel_tol must be positive")
        if self.negativity_tol < 0:
            raise ConfigurationError("negativity_tol must be nonnegative")
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ConfigurationError("need 0 < dt_min <= dt_init <= dt_max")
        if self.sample_times is None:
            times = default_sample_times(self.t_end)
        else:
            times = np.asarray(self.sample_times, dtype=float)
        if times.size == 0:
            raise ConfigurationError("at least one sample time is required")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("sample_times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.t_end * (1 + 1e-12):
            raise ConfigurationError("sample_times must lie in [0, t_end]")
        self.sample_times = times


@dataclass
class TimeSeries:
    """Sampled trajectory plus the integrals accumulated along accepted steps.

    ``dissipation[k]`` is the integral of (sum_i omega_i f_i)^2 over
    [0, times[k]]; ``deriv_l1[i]`` is the integral of |df_{i+1}/dt| over
    [0, t_end].  ``densities`` is None for moment-only records.
    """

    times: np.ndarray
    M0: np.ndarray
    Mhalf: np.ndarray
    M1: np.ndarray
    dissipation: Optional[np.ndarray]
    clamped_mass: np.ndarray
    densities: Optional[np.ndarray] = None
    deriv_l1: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    t_end: Optional[float] = None
    discarded_m0: float = 0.0
    config_digest: str = ""
    seed: Optional[int] = None
    step_stats: dict = field(default_factory=dict)

    @property
    def moments(self) -> List[MomentVector]:
        return [MomentVector(a, b, c) for a, b, c in zip(self.M0, self.Mhalf, self.M1)]

    @property
    def n(self) -> Optional[int]:
        return None if self.densities is None else self.densities.shape[1]

    def state_at(self, k: int) -> StateVector:
        return StateVector(self.densities[k], float(self.times[k]))

    @classmethod
    def from_densities(cls, times, densities, omega=None, **kw):
        """Build a series from sampled densities (moments computed here)."""
        dens = np.asarray(densities, dtype=float)
        sizes = np.arange(1, dens.shape[1] + 1, dtype=float)
        return cls(np.asarray(times, dtype=float), dens.sum(axis=1),
                   dens @ np.sqrt(sizes), dens @ sizes,
                   kw.pop("dissipation", None),
                   kw.pop("clamped_mass", np.zeros(len(times))),
                   densities=dens, omega=omega, **kw)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
# fifth-order weights minus embedded fourth-order weights
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _dp_stages(fun, y, k1, dt):
    """One DP5 step from y with f(y) = k1; returns (y5, err, k7 = f(y5))."""
    ks = [k1]
    for s in range(1, 6):
        acc = y.copy()
        for a, k in zip(_A[s], ks):
            if a != 0.0:
                acc += (dt * a) * k
        ks.append(fun(acc))
    y5 = y.copy()
    for b, k in zip(_A[6], ks):
        if b != 0.0:
            y5 += (dt * b) * k
    k7 = fun(y5)
    ks.append(k7)
    err = np.zeros_like(y)
    for e, k in zip(_E, ks):
        if e != 0.0:
            err += (dt * e) * k
    return y5, err, k7


def _error_ratio(err, y0, y1, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.max(np.abs(err) / scale))


def _clamp(y, cfg):
    """Zero out components in [-negativity_tol, 0); return (y, clamped mass)."""
    neg = y < 0.0
    if not neg.any():
        return y, 0.0
    sizes = np.flatnonzero(neg) + 1.0
    clamped = float(sizes @ -y[neg])
    y = y.copy()
    y[neg] = 0.0
    return y, clamped


def step_adaptive(state, kernel: KernelSpec, dt: float, cfg: IntegratorConfig):
    """Try one DP5(4) step of size dt.

    Returns ``(new_state, error_ratio, accepted)``.  On rejection the input
    state is returned unchanged.  ``error_ratio`` is the max over
    components of |err_i| / (abs_tol + rel_tol |f_i|).
    """
    y = np.asarray(getattr(state, "f", state), dtype=float)
    t = getattr(state, "t", 0.0)
    if not cfg.dt_min <= dt <= cfg.dt_max:
        raise ValueError(f"dt = {dt} outside [dt_min, dt_max]")
    fun = select_rhs(cfg.rhs_path, kernel)
    if y.min() < -cfg.negativity_tol:
        return StateVector(y, t), math.inf, False
    y5, err, _ = _dp_stages(fun, y, fun(y), dt)
    ratio = _error_ratio(err, y, y5, cfg)
    if ratio > 1.0 or y5.min() < -cfg.negativity_tol:
        return StateVector(y, t), ratio, False
    y5, _ = _clamp(y5, cfg)
    return StateVector(y5, t + dt), ratio, True


def step_semi_implicit(state, kernel: KernelSpec, dt: float) -> StateVector:
    """Positivity-preserving frozen-coefficient step (first order)."""
    y = np.asarray(getattr(state, "f", state), dtype=float)
    t = getattr(state, "t", 0.0)
    if y.min() < 0.0:
        raise ValueError("semi-implicit step needs a nonnegative state")
    return StateVector(_semi_implicit(y, kernel, dt), t + dt)


def _semi_implicit(y, kernel, dt):
    return (y + dt * birth_fast(y, kernel)) / (1.0 + dt * death_rate(y, kernel))


def _hermite(t0, t1, y0, y1, d0, d1, t):
    """Cubic Hermite value and derivative at t in [t0, t1]."""
    h = t1 - t0
    s = (t - t0) / h
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    dh00 = (6 * s2 - 6 * s) / h
    dh10 = 3 * s2 - 4 * s + 1
    dh01 = (-6 * s2 + 6 * s) / h
    dh11 = 3 * s2 - 2 * s
    der = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
    return val, der


def _dissipation_increment(h, q0, dq0, q1, dq1):
    # trapezoid with the endpoint-derivative correction (exact for cubics)
    return 0.5 * h * (q0 + q1) + h * h / 12.0 * (dq0 - dq1)


class _Recorder:
    """Collects samples and integrals as accepted steps come in."""

    def __init__(self, times, y0, d0, omega):
        self.times = times
        self.omega = omega
        self.rows = np.empty((times.size, y0.size))
        self.diss = np.empty(times.size)
        self.clamped = np.empty(times.size)
        self.k = 0
        self.D = 0.0
        self.clamped_total = 0.0
        self.deriv_l1 = np.zeros(y0.size)
        while self.k < times.size and times[self.k] <= 0.0:
            self._store(y0, 0.0)

    def _q(self, y, d):
        s = self.omega @ y
        return s * s, 2.0 * s * (self.omega @ d)

    def _store(self, y, diss, clamped=None):
        self.rows[self.k] = y
        self.diss[self.k] = diss
        self.clamped[self.k] = self.clamped_total if clamped is None else clamped
        self.k += 1

    def step(self, t0, t1, y0, y1, d0, d1, clamped):
        h = t1 - t0
        q0, dq0 = self._q(y0, d0)
        q1, dq1 = self._q(y1, d1)
        times = self.times
        before = self.clamped_total
        self.clamped_total += clamped
        while self.k < times.size and times[self.k] <= t1:
            ts = times[self.k]
            if ts >= t1:
                self._store(y1, self.D + _dissipation_increment(h, q0, dq0, q1, dq1))
            else:
                ys, ds = _hermite(t0, t1, y0, y1, d0, d1, ts)
                qs, dqs = self._q(ys, ds)
                self._store(ys, self.D + _dissipation_increment(ts - t0, q0, dq0, qs, dqs),
                            clamped=before)
        self.D += _dissipation_increment(h, q0, dq0, q1, dq1)
        self.deriv_l1 += 0.5 * h * (np.abs(d0) + np.abs(d1))


def integrate(init: StateVector, kernel: KernelSpec, cfg: IntegratorConfig) -> TimeSeries:
    """Integrate from ``init`` to ``cfg.t_end`` and sample at ``cfg.sample_times``."""
    hyp = classify_hypothesis(kernel)
    if hyp.tag == "Unclassified":
        warnings.warn(f"kernel {kernel.family!r} satisfies no certified growth hypothesis; "
                      "existence and the decay bounds are not guaranteed", stacklevel=2)
    y = np.array(init.f, dtype=float)
    if y.min() < 0:
        raise ConfigurationError("initial densities must be nonnegative")
    n = y.size
    fun = select_rhs(cfg.rhs_path, kernel)
    omega = np.array(kernel.omega_vector(n))
    times = np.asarray(cfg.sample_times, dtype=float)
    t = float(init.t)
    d = fun(y)
    rec = _Recorder(times, y, d, omega)
    accepted = rejected = 0
    dt = cfg.dt_init
    t_end = cfg.t_end
    semi = cfg.method == SEMI_IMPLICIT
    while t < t_end:
        last = t + dt >= t_end * (1 - 1e-15)
        h = t_end - t if last else dt
        if semi:
            y_big = _semi_implicit(y, kernel, h)
            y_mid = _semi_implicit(y, kernel, 0.5 * h)
            y_new = _semi_implicit(y_mid, kernel, 0.5 * h)
            ratio = _error_ratio(y_new - y_big, y, y_new, cfg) if cfg.adaptive else 0.0
            ok = ratio <= 1.0
            order = 2.0
        else:
            y_new, err, k7 = _dp_stages(fun, y, d, h)
            ratio = _error_ratio(err, y, y_new, cfg) if cfg.adaptive else 0.0
            ok = ratio <= 1.0 and y_new.min() >= -cfg.negativity_tol
            order = 5.0
        if not ok:
            rejected += 1
            if ratio > 1.0:
                factor = max(0.2, 0.9 * ratio ** (-1.0 / order))
            else:
                factor = 0.5  # negativity rejection
            dt = min(h, dt) * factor
            if dt < cfg.dt_min:
                raise StiffnessError(t, dt)
            continue
        y_new, clamped = _clamp(y_new, cfg)
        if semi or clamped:
            d_new = fun(y_new)
        else:
            d_new = k7
        t_new = t_end if last else t + h
        rec.step(t, t_new, y, y_new, d, d_new, clamped)
        accepted += 1
        t, y, d = t_new, y_new, d_new
        if cfg.adaptive:
            grow = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** (-1.0 / order)))
            if not last:
                dt = min(cfg.dt_max, max(cfg.dt_min, h * grow))
    log.debug("integrated to t=%g: %d accepted, %d rejected steps", t, accepted, rejected)
    dens = rec.rows[: rec.k]
    sizes = np.arange(1, n + 1, dtype=float)
    return TimeSeries(
        times=times[: rec.k].copy(),
        M0=dens.sum(axis=1),
        Mhalf=dens @ np.sqrt(sizes),
        M1=dens @ sizes,
        dissipation=rec.diss[: rec.k].copy(),
        clamped_mass=rec.clamped[: rec.k].copy(),
        densities=dens.copy(),
        deriv_l1=rec.deriv_l1,
        omega=omega,
        t_end=t_end,
        discarded_m0=init.discarded_m0,
        step_stats={"accepted": accepted, "rejected": rejected},
    )
