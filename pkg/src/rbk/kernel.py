"""Collision-rate families theta_ij = omega_i * omega_j + kappa_ij.

Every family declares its separable part ``omega`` and its remainder
``kappa``; ``eval_kernel`` is always computed as ``omega(i)*omega(j) +
kappa(i, j)`` so the decomposition holds bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

CONSTANT = "constant"
SEPARABLE_POWER = "product"
SEPARABLE_PLUS_CONSTANT = "product+constant"
SEPARABLE_PLUS_BOUNDED = "product+bounded"
TABLE = "table"

FAMILIES = (CONSTANT, SEPARABLE_POWER, SEPARABLE_PLUS_CONSTANT,
            SEPARABLE_PLUS_BOUNDED, TABLE)

# families whose kappa is zero or a constant: the correlation fast path applies
FAST_FAMILIES = (CONSTANT, SEPARABLE_POWER, SEPARABLE_PLUS_CONSTANT)


_CACHED_SIZES = 4


def _unit_factor(i, j):
    return 1.0


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A symmetric, nonnegative coagulation kernel.

    Build instances through the family constructors (``constant``,
    ``separable_power``, ...) rather than directly.
    """

    family: str
    alpha: float = 0.0
    scale: float = 1.0
    c: float = 0.0
    A: float = 0.0
    bound_factor: Callable[[int, int], float] = _unit_factor
    table: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        for name in ("alpha", "scale", "c", "A"):
            value = getattr(self, name)
            if not (value >= 0.0 and math.isfinite(value)):
                raise ValueError(f"kernel parameter {name} must be a finite nonnegative real, got {value!r}")
        if self.family == TABLE:
            t = np.array(self.table, dtype=float)
            if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] == 0:
                raise ValueError("table kernel needs a non-empty square matrix")
            if np.any(t < 0) or not np.all(np.isfinite(t)):
                raise ValueError("table kernel entries must be finite and nonnegative")
            if not np.array_equal(t, t.T):
                raise ValueError("table kernel must be symmetric")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    @property
    def size_cap(self) -> Optional[int]:
        return None if self.table is None else self.table.shape[0]

    @property
    def is_fast(self) -> bool:
        return self.family in FAST_FAMILIES

    def _remember(self, key, value):
        # keep the dense arrays of the few most recent sizes; n x n matrices add up fast
        value.setflags(write=False)
        cache = self._cache
        cache[key] = value
        same_kind = [k for k in cache if k[0] == key[0]]
        for old in same_kind[:-_CACHED_SIZES]:
            del cache[old]
        return value

    def _check(self, i, j=1):
        if i < 1 or j < 1:
            raise IndexError(f"cluster sizes start at 1, got ({i}, {j})")
        cap = self.size_cap
        if cap is not None and (i > cap or j > cap):
            raise IndexError(f"size ({i}, {j}) beyond table cap {cap}")

    def omega(self, i: int) -> float:
        self._check(i)
        if self.family in (CONSTANT, TABLE):
            return 0.0
        return self.scale * float(i) ** self.alpha

    def kappa(self, i: int, j: int) -> float:
        self._check(i, j)
        if self.family == CONSTANT:
            return self.c
        if self.family == SEPARABLE_POWER:
            return 0.0
        if self.family == SEPARABLE_PLUS_CONSTANT:
            return self.c
        if self.family == SEPARABLE_PLUS_BOUNDED:
            return self.A * (self.omega(i) * self.omega(j)) * self.bound_factor(i, j)
        return float(self.table[i - 1, j - 1])

    def __call__(self, i: int, j: int) -> float:
        return eval_kernel(self, i, j)

    # dense arrays, cached per truncation size

    def omega_vector(self, n: int) -> np.ndarray:
        """omega_1..omega_n as a read-only array (index 0 is size 1)."""
        key = ("omega", n)
        if key not in self._cache:
            self._check(n)
            sizes = np.arange(1, n + 1, dtype=float)
            if self.family in (CONSTANT, TABLE):
                w = np.zeros(n)
            else:
                w = self.scale * sizes ** self.alpha
            return self._remember(key, w)
        return self._cache[key]

    def kappa_matrix(self, n: int) -> np.ndarray:
        key = ("kappa", n)
        if key not in self._cache:
            self._check(n, n)
            if self.family in (CONSTANT, SEPARABLE_PLUS_CONSTANT):
                k = np.full((n, n), self.c)
            elif self.family == SEPARABLE_POWER:
                k = np.zeros((n, n))
            elif self.family == SEPARABLE_PLUS_BOUNDED:
                w = self.omega_vector(n)
                if self.bound_factor is _unit_factor:
                    b = np.ones((n, n))
                else:
                    b = np.array([[self.bound_factor(i, j) for j in range(1, n + 1)]
                                  for i in range(1, n + 1)], dtype=float)
                k = self.A * np.multiply.outer(w, w) * b
            else:
                k = np.array(self.table[:n, :n])
            return self._remember(key, k)
        return self._cache[key]

    def theta_matrix(self, n: int) -> np.ndarray:
        """theta_ij for 1 <= i, j <= n, built as omega outer omega + kappa."""
        key = ("theta", n)
        if key not in self._cache:
            w = self.omega_vector(n)
            t = np.multiply.outer(w, w) + self.kappa_matrix(n)
            return self._remember(key, t)
        return self._cache[key]


def constant(c: float = 1.0) -> KernelSpec:
    return KernelSpec(CONSTANT, c=c)


def separable_power(alpha: float, scale: float = 1.0) -> KernelSpec:
    """omega_i = scale * i**alpha, kappa = 0 (alpha = 1 is the product kernel)."""
    return KernelSpec(SEPARABLE_POWER, alpha=alpha, scale=scale)


def separable_plus_constant(alpha: float, scale: float = 1.0, c: float = 1.0) -> KernelSpec:
    return KernelSpec(SEPARABLE_PLUS_CONSTANT, alpha=alpha, scale=scale, c=c)


def separable_plus_bounded(alpha: float, scale: float = 1.0, A: float = 1.0,
                           bound_factor: Optional[Callable[[int, int], float]] = None) -> KernelSpec:
    """kappa_ij = A * omega_i * omega_j * b(i, j) with b in [0, 1], default b = 1."""
    return KernelSpec(SEPARABLE_PLUS_BOUNDED, alpha=alpha, scale=scale, A=A,
                      bound_factor=bound_factor or _unit_factor)


def table(matrix) -> KernelSpec:
    """Explicit symmetric kernel matrix; entry [i-1, j-1] is theta_ij."""
    return KernelSpec(TABLE, table=np.asarray(matrix, dtype=float))


def eval_kernel(spec: KernelSpec, i: int, j: int) -> float:
    return spec.omega(i) * spec.omega(j) + spec.kappa(i, j)


omega = KernelSpec.omega
kappa = KernelSpec.kappa


@dataclass(frozen=True)
class HypothesisClass:
    """Which growth hypothesis a kernel satisfies.

    ``tag`` is ``"Ker2"`` (sublinear omega, kappa_ij / j -> 0),
    ``"Ker3"`` (inf omega_i / i = R > 0 and kappa <= A omega omega) or
    ``"Unclassified"``.
    """

    tag: str
    R: Optional[float] = None
    A: Optional[float] = None

    @property
    def is_ker3(self) -> bool:
        return self.tag == "Ker3"

    def __str__(self):
        if self.is_ker3:
            return f"Ker3(R={self.R:g}, A={self.A:g})"
        return self.tag


KER2 = HypothesisClass("Ker2")
UNCLASSIFIED = HypothesisClass("Unclassified")


def classify_hypothesis(spec: KernelSpec, probe_depth: int = 64) -> HypothesisClass:
    """Classify ``spec`` into Ker2 / Ker3 / Unclassified.

    Closed-form families are classified exactly. ``probe_depth`` bounds the
    number of leading sizes inspected where data has to be probed (a custom
    bound factor, or a table).  Tables are never certified: a limit as
    ``j -> infinity`` cannot be read off finitely many entries.
    """
    if probe_depth < 1:
        raise ValueError("probe_depth must be >= 1")
    fam = spec.family
    if fam == TABLE:
        return UNCLASSIFIED
    if fam == CONSTANT:
        return KER2
    # omega_i = scale * i**alpha
    if spec.scale == 0.0 or spec.alpha < 1.0:
        # omega_i / i -> 0; kappa is constant, zero, or <= A scale^2 (ij)^alpha
        if fam == SEPARABLE_PLUS_BOUNDED and not _bound_factor_ok(spec, probe_depth):
            return UNCLASSIFIED
        return KER2
    # alpha >= 1: inf_i omega_i / i is attained at i = 1
    R = spec.scale
    if fam == SEPARABLE_POWER:
        return HypothesisClass("Ker3", R=R, A=0.0)
    if fam == SEPARABLE_PLUS_CONSTANT:
        # c <= A omega_i omega_j with the smallest product omega_1^2 = scale^2
        A = spec.c / spec.scale ** 2
        while A * spec.scale * spec.scale < spec.c:  # round up so the bound survives underflow
            A = math.nextafter(A, math.inf)
        return HypothesisClass("Ker3", R=R, A=A)
    if not _bound_factor_ok(spec, probe_depth):
        return UNCLASSIFIED
    return HypothesisClass("Ker3", R=R, A=spec.A)


def _bound_factor_ok(spec, depth):
    if spec.bound_factor is _unit_factor:
        return True
    for i in range(1, depth + 1):
        for j in range(1, depth + 1):
            b = spec.bound_factor(i, j)
            if not (0.0 <= b <= 1.0) or b != spec.bound_factor(j, i):
                return False
    return True
