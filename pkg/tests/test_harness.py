import math

import numpy as np
import pytest

from rbk import kernel as kern
from rbk.diagnostics import check_decay_bound
from rbk.harness import (BenchmarkError, bench_rhs, convergence_study, decay_exponent,
                         worker_count)
from rbk.integrate import IntegratorConfig, TimeSeries, integrate
from rbk.kernel import classify_hypothesis
from rbk.state import ConfigurationError, explicit, geometric, heavy_tail, init_state, monodisperse

CONST = kern.constant(1.0)


def geometric_tail_mass(q, n):
    # sum_{i>n} i (1-q) q^(i-1)
    return q ** n * (n + 1 - n * q) / (1 - q)


def test_convergence_geometric():
    table = convergence_study(CONST, geometric(0.5), IntegratorConfig(t_end=1.0), [16, 32, 64])
    d = table.mass_diffs
    assert d[0] > d[1]
    assert not table.non_decreasing
    for row in table.rows:
        assert row.mass_diff <= 10 * geometric_tail_mass(0.5, row.n) + 1e-13
    assert table.lines()[0] == "n,paired_n,mass_weighted_diff,number_diff,discarded_m0"
    assert table.discarded_m0[16] == pytest.approx(0.5 ** 16)


def test_convergence_zero_tail():
    data = explicit([0.3, 0.2, 0.1, 0.1, 0.05, 0.05, 0.1, 0.1])
    table = convergence_study(CONST, data, IntegratorConfig(t_end=1.0), [16, 32])
    assert table.mass_diffs == [0.0]
    assert not table.non_decreasing

@pytest.mark.parametrize("n_list", [[16], [32, 16], [1, 4], [8, 8]])
def test_convergence_rejects_bad_lists(n_list):
    with pytest.raises(ConfigurationError):
        convergence_study(CONST, geometric(0.5), IntegratorConfig(), n_list)


def test_convergence_rejects_monodisperse():
    with pytest.raises(ConfigurationError, match="vacuous"):
        convergence_study(CONST, monodisperse(1), IntegratorConfig(), [4, 8])


def test_heavy_tail_refinement():
    k = kern.separable_power(1.0)
    cfg = IntegratorConfig(t_end=1.0)
    table = convergence_study(k, heavy_tail(1.5), cfg, [32, 64, 128])
    runs = list(table.series.values())
    m1_init = [s.M1[0] for s in runs]
    assert all(b > a for a, b in zip(m1_init, m1_init[1:]))
    # the initial mass grows without bound but M1(1) obeys one n-independent bound
    hyp = classify_hypothesis(k)
    for s in runs:
        assert s.M0[0] <= 1.0
        assert s.M1[-1] <= 2.0 / hyp.R
        assert check_decay_bound(s, hyp).passed


def test_decay_exponent_dimer_closed_form():
    s = integrate(init_state(monodisperse(2), 4), CONST, IntegratorConfig(t_end=100.0))
    fit = decay_exponent(s, 10.0, 100.0)
    assert fit.exponent == pytest.approx(-1.0, abs=0.05)
    assert fit.samples >= 8


def test_decay_exponent_product_monodisperse():
    s = integrate(init_state(monodisperse(1), 16), kern.separable_power(1.0),
                  IntegratorConfig(t_end=100.0))
    assert decay_exponent(s).exponent <= -0.4


def test_decay_exponent_sentinel_and_window():
    t = np.concatenate(([0.0], np.geomspace(1, 100, 20)))
    zero = TimeSeries.from_densities(t, np.zeros((t.size, 3)))
    assert decay_exponent(zero).exponent == -math.inf
    one = TimeSeries.from_densities(t[:3], np.ones((3, 1)))
    with pytest.raises(ValueError):
        decay_exponent(one)


def test_bench_shape_and_gate():
    table = bench_rhs([256, 4096], [kern.separable_power(1.0)], repeats=9)
    assert len(table.rows) == 4
    assert all(r.median_s > 0 for r in table.rows)
    fast = [r for r in table.rows if r.path == "fast"]
    assert fast[-1].speedup > 1


def test_bench_fallback_label():
    table = bench_rhs([64], [kern.table(np.ones((64, 64)))], repeats=9)
    assert [r.path for r in table.rows] == ["naive", "fallback"]


def test_bench_gate_aborts(monkeypatch):
    import rbk.harness as h
    monkeypatch.setattr(h, "rhs_fast", lambda f, k: np.zeros_like(f) + 1.0)
    with pytest.raises(BenchmarkError, match="disagree"):
        bench_rhs([16], [CONST])


def test_bench_repeats_floor():
    with pytest.raises(ValueError):
        bench_rhs([16], [CONST], repeats=3)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RBK_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RBK_THREADS", "x")
    with pytest.raises(ConfigurationError):
        worker_count()
