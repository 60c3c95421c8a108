"""Density vectors, initial-data constructors and moments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import zeta


class ConfigurationError(ValueError):
    """Invalid run parameters (bad initial data, kernel, integrator settings)."""


@dataclass(frozen=True, eq=False)
class StateVector:
    """Densities f_1..f_n at time t.

    ``discarded_m0`` is the number density cut off when the initial data was
    truncated to n sizes (zero for states not built by ``init_state``).
    """

    f: np.ndarray
    t: float = 0.0
    discarded_m0: float = 0.0

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("state must be a non-empty 1-d sequence")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def n(self) -> int:
        return self.f.size

    def moments(self) -> "MomentVector":
        return MomentVector(moment(self, 0), moment(self, 0.5), moment(self, 1))


@dataclass(frozen=True)
class MomentVector:
    M0: float
    Mhalf: float
    M1: float


def moment(state, p: float) -> float:
    """sum_i i**p f_i over the stored sizes. Accepts a StateVector or an array."""
    f = state.f if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    if p == 0:
        return float(np.sum(f))
    sizes = np.arange(1, f.size + 1, dtype=float)
    if p == 1:
        return float(sizes @ f)
    if p == 0.5:
        return float(np.sqrt(sizes) @ f)
    return float(sizes ** p @ f)


# initial data families

MONODISPERSE = "monodisperse"
GEOMETRIC = "geometric"
HEAVY_TAIL = "heavytail"
EXPLICIT = "table"


@dataclass(frozen=True)
class InitialData:
    """Initial density family; apply ``init_state`` to truncate to n sizes.

    monodisperse: ``size`` clusters at density ``density``.
    geometric: f_i = density (1 - ratio) ratio**(i-1), total number ``density``.
    heavytail: f_i = density i**-p / zeta(p), total number ``density``; for
        1 < p <= 2 the mass is infinite, so the truncated mass grows with n.
    table: explicit densities, zero-padded or cut at n.
    """

    family: str
    size: int = 1
    density: float = 1.0
    ratio: float = 0.5
    p: float = 1.5
    table: tuple = ()

    @property
    def extends_with_n(self) -> bool:
        return self.family in (GEOMETRIC, HEAVY_TAIL)


def monodisperse(size: int = 1, density: float = 1.0) -> InitialData:
    return InitialData(MONODISPERSE, size=size, density=density)


def geometric(ratio: float = 0.5, density: float = 1.0) -> InitialData:
    return InitialData(GEOMETRIC, ratio=ratio, density=density)


def heavy_tail(p: float = 1.5, density: float = 1.0) -> InitialData:
    return InitialData(HEAVY_TAIL, p=p, density=density)


def explicit(values: Sequence[float]) -> InitialData:
    return InitialData(EXPLICIT, table=tuple(float(v) for v in values))


def init_state(spec: InitialData, n: int) -> StateVector:
    """Truncate ``spec`` to sizes 1..n at t = 0."""
    if n < 2:
        raise ConfigurationError(f"truncation size n must be >= 2, got {n}")
    if spec.density < 0:
        raise ConfigurationError("initial density must be nonnegative")
    sizes = np.arange(1, n + 1, dtype=float)
    f = np.zeros(n)
    discarded = 0.0
    fam = spec.family
    if fam == MONODISPERSE:
        if not 1 <= spec.size <= n:
            raise ConfigurationError(f"monodisperse size {spec.size} outside 1..{n}")
        f[spec.size - 1] = spec.density
    elif fam == GEOMETRIC:
        q = spec.ratio
        if not 0.0 < q < 1.0:
            raise ConfigurationError(f"geometric ratio must lie in (0, 1), got {q}")
        f = spec.density * (1.0 - q) * q ** (sizes - 1.0)
        discarded = spec.density * q ** n
    elif fam == HEAVY_TAIL:
        p = spec.p
        if not p > 1.0:
            raise ConfigurationError(f"heavy-tail exponent must exceed 1, got {p}")
        norm = float(zeta(p))
        f = spec.density * sizes ** -p / norm
        # tail of zeta(p) beyond n: zeta(p, n + 1)
        discarded = spec.density * float(zeta(p, n + 1)) / norm
    elif fam == EXPLICIT:
        vals = np.asarray(spec.table, dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ConfigurationError("explicit initial densities must be finite and nonnegative")
        k = min(n, vals.size)
        f[:k] = vals[:k]
        discarded = float(np.sum(vals[n:]))
    else:
        raise ConfigurationError(f"unknown initial-data family {fam!r}")
    return StateVector(f, 0.0, discarded)
