"""Right-hand side of the truncated cluster-eating system.

    df_i/dt = sum_{j=1}^{n-i} theta_{i+j,j} f_{i+j} f_j - sum_{j=1}^{n} theta_{i,j} f_i f_j

``rhs_naive`` walks the double sum directly; ``rhs_fast`` writes the birth
term as a lagged correlation and evaluates it with a real FFT, which is
O(n log n) for kernels whose kappa is zero or constant.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy import fft as sfft

from .kernel import CONSTANT, SEPARABLE_PLUS_CONSTANT, SEPARABLE_POWER, KernelSpec


class FastPathFallback(UserWarning):
    """rhs_fast was asked for a kernel without a correlation structure."""


def _densities(state):
    f = getattr(state, "f", state)
    return np.asarray(f, dtype=float)


def birth_death_naive(f, kernel: KernelSpec):
    """Birth vector and death-rate vector sum_j theta_ij f_j by direct summation."""
    f = _densities(f)
    n = f.size
    theta = kernel.theta_matrix(n)
    pair = theta * np.multiply.outer(f, f)
    birth = np.zeros(n)
    # lag j: clusters i+j eaten by j leave i; row slice pair[j:, j-1] covers i = 1..n-j
    for j in range(1, n):
        birth[: n - j] += pair[j:, j - 1]
    death_rate = theta @ f
    return birth, death_rate


def rhs_naive(state, kernel: KernelSpec) -> np.ndarray:
    """Reference O(n^2) evaluation of df/dt. Negative entries are not clamped."""
    f = _densities(state)
    birth, death_rate = birth_death_naive(f, kernel)
    return birth - f * death_rate


def correlate_direct(a, b) -> np.ndarray:
    """out_i = sum_{j=1}^{n-i} a_{i+j} b_j (1-based), by explicit summation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("correlate needs equal-length inputs")
    n = a.size
    out = np.zeros(n)
    for i in range(1, n):
        out[i - 1] = a[i:] @ b[: n - i]
    return out


def correlate_fft(a, b) -> np.ndarray:
    """Same as ``correlate_direct`` via a zero-padded real FFT of length >= 2n."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("correlate needs equal-length inputs")
    n = a.size
    out = np.zeros(n)
    nz = np.flatnonzero(a)
    if nz.size == 0:
        return out
    # a_{i+j} = 0 past the last occupied index, so only the leading block matters
    m = int(nz[-1]) + 1
    length = sfft.next_fast_len(2 * m, real=True)
    fa = sfft.rfft(a[:m], length)
    fb = fa if b is a else sfft.rfft(b[:m], length)
    full = sfft.irfft(fa * np.conj(fb), length)
    # full[k] = sum_t a[t + k] b[t]; lag k = i
    out[: m - 1] = full[1:m]
    return out


def correlate(a, b, method: str = "fft") -> np.ndarray:
    if method == "direct":
        return correlate_direct(a, b)
    if method == "fft":
        return correlate_fft(a, b)
    raise ValueError(f"unknown correlate method {method!r}")


def rhs_fast(state, kernel: KernelSpec) -> np.ndarray:
    """FFT-accelerated df/dt; matches ``rhs_naive`` to round-off.

    Kernels outside {constant, product, product+constant} fall back to
    ``rhs_naive`` and emit a ``FastPathFallback`` warning.
    """
    f = _densities(state)
    fam = kernel.family
    if fam not in (CONSTANT, SEPARABLE_POWER, SEPARABLE_PLUS_CONSTANT):
        warnings.warn(f"no fast path for {fam!r} kernels; using the double sum",
                      FastPathFallback, stacklevel=2)
        return rhs_naive(f, kernel)
    n = f.size
    d = np.zeros(n)
    if fam != CONSTANT:
        g = kernel.omega_vector(n) * f
        d += correlate_fft(g, g) - g * g.sum()
    if fam != SEPARABLE_POWER and kernel.c != 0.0:
        d += kernel.c * (correlate_fft(f, f) - f * f.sum())
    return d


def death_rate(state, kernel: KernelSpec) -> np.ndarray:
    """sum_j theta_ij f_j, using the separable structure where available."""
    f = _densities(state)
    if kernel.family in (CONSTANT, SEPARABLE_POWER, SEPARABLE_PLUS_CONSTANT):
        n = f.size
        w = kernel.omega_vector(n)
        rate = w * (w @ f)
        if kernel.family != SEPARABLE_POWER:
            rate = rate + kernel.c * f.sum()
        return rate
    return kernel.theta_matrix(f.size) @ f


def birth_fast(state, kernel: KernelSpec) -> np.ndarray:
    f = _densities(state)
    if kernel.family not in (CONSTANT, SEPARABLE_POWER, SEPARABLE_PLUS_CONSTANT):
        return birth_death_naive(f, kernel)[0]
    n = f.size
    b = np.zeros(n)
    if kernel.family != CONSTANT:
        g = kernel.omega_vector(n) * f
        b += correlate_fft(g, g)
    if kernel.family != SEPARABLE_POWER:
        b += kernel.c * correlate_fft(f, f)
    return b


def select_rhs(path: str, kernel: KernelSpec):
    """Map the ``rhs.path`` setting to a callable ``f -> df/dt``."""
    if path == "naive":
        return lambda f: rhs_naive(f, kernel)
    if path == "fast":
        return lambda f: rhs_fast(f, kernel)
    if path == "auto":
        if kernel.is_fast:
            return lambda f: rhs_fast(f, kernel)
        return lambda f: rhs_naive(f, kernel)
    raise ValueError(f"unknown rhs path {path!r}")
