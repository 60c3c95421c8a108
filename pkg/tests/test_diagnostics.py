
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rbk import kernel as kern
from rbk.diagnostics import (PSI_PRESETS, SuiteOptions, check_decay_bound, check_mass_monotone,
                             check_number_dissipation, check_support, check_tail_L2, check_w11,
                             corrected_m1_identity_residual, diagonal_sum, m1_display_gap,
                             run_suite, weak_form_residual, weak_form_sides)
from rbk.integrate import IntegratorConfig, TimeSeries, integrate
from rbk.kernel import KER2, HypothesisClass
from rbk.state import geometric, init_state, monodisperse

CONST = kern.constant(1.0)
PRODUCT = kern.separable_power(1.0)
ONES3 = np.ones(3)
KER3_R1 = HypothesisClass("Ker3", R=1.0, A=0.0)


def run(kernel, init, n, t_end):
    return integrate(init_state(init, n), kernel, IntegratorConfig(t_end=t_end))


def fabricated(M1=None, M0=None, times=None, Mhalf=None, dissipation=None):
    k = len(M1 if M1 is not None else M0)
    times = np.arange(k, dtype=float) if times is None else np.asarray(times, float)
    fill = np.ones(k)
    return TimeSeries(times, np.asarray(M0 if M0 is not None else fill, float),
                      np.asarray(Mhalf if Mhalf is not None else fill, float),
                      np.asarray(M1 if M1 is not None else fill, float),
                      None if dissipation is None else np.asarray(dissipation, float), np.zeros(k))


# algebraic identities, hand-evaluated

@pytest.mark.parametrize("m, L", [(1, -14.0), (2, -13.0)])
def test_weak_form_hand_values(m, L):
    lhs, rhs, _ = weak_form_sides(ONES3, CONST, "linear", m)
    assert lhs == pytest.approx(L) and rhs == pytest.approx(L)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("psi", PSI_PRESETS)
def test_weak_form_zero_state(m, psi):
    assert weak_form_residual(np.zeros(3), CONST, psi, m) == 0.0


@pytest.mark.parametrize("m", [0, 4])
def test_weak_form_m_out_of_range(m):
    with pytest.raises(ValueError):
        weak_form_residual(ONES3, CONST, "ones", m)


@pytest.mark.parametrize("f, k", [(ONES3, CONST), ([1.0, 1.0, 0.0], PRODUCT), (np.zeros(4), CONST)])
def test_corrected_m1_identity(f, k):
    assert corrected_m1_identity_residual(f, k) == pytest.approx(0.0, abs=1e-14)


def test_display_gap_is_diagonal():
    # display -8 against the true -14: gap +6 = sum_i i * 1 * 1
    assert m1_display_gap(ONES3, CONST, "linear") == pytest.approx(6.0)
    assert diagonal_sum(ONES3, CONST, "linear") == pytest.approx(6.0)


KERNELS = [CONST, PRODUCT, kern.separable_power(0.5), kern.separable_plus_constant(1.0, 1.0, 1.0)]


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.family}-{k.alpha}")
@settings(max_examples=30, deadline=None)
@given(f=arrays(np.float64, st.integers(1, 24), elements=st.floats(0, 4)),
       psi=st.sampled_from(PSI_PRESETS), frac=st.floats(0, 1))
def test_weak_form_property(k, f, psi, frac):
    n = f.size
    m = 1 + int(frac * (n - 1))
    L, R, scale = weak_form_sides(f, k, psi, m)
    assert abs(L - R) <= 1e-12 * scale
    gap = m1_display_gap(f, k, psi)
    diag = diagonal_sum(f, k, psi)
    assert abs(gap - diag) <= 1e-12 * (1 + abs(diag) + scale)


# trajectory checks on fabricated input

@pytest.mark.parametrize("M1, ok", [((14, 10, 7), True), ((14, 15, 7), False), ((0, 0, 0), True)])
def test_mass_monotone_examples(M1, ok):
    rec = check_mass_monotone(fabricated(M1=M1))
    assert rec.passed is ok
    if not ok:
        assert "samples 0" in rec.note and "and 1" in rec.note


def test_number_dissipation_fails_on_growth():
    rec = check_number_dissipation(fabricated(M0=[1.0, 1.1, 0.9], dissipation=[0, 0, 0]))
    assert rec.passed is False and rec.residual == pytest.approx(0.1)


def test_number_dissipation_missing_accumulator():
    rec = check_number_dissipation(fabricated(M0=[1.0, 0.5]))
    assert rec.passed is None and rec.status == "skipped" and "not evaluated" in rec.note


@pytest.mark.parametrize("m1, ok", [(0.8, True), (1.2, False)])
def test_decay_bound_examples(m1, ok):
    series = fabricated(M0=[1.0, 0.5], M1=[3.0, m1], times=[0.0, 4.0])
    assert check_decay_bound(series, KER3_R1).passed is ok


def test_decay_bound_not_applicable():
    rec = check_decay_bound(fabricated(M1=[1, 1]), KER2)
    assert rec.passed is None and "not applicable" in rec.note


def test_w11_zero_data_and_ker2():
    s = run(PRODUCT, monodisperse(1, 0.0), 4, 1.0)
    assert check_w11(s, PRODUCT, KER3_R1).passed is True
    assert check_w11(s, CONST, KER2).passed is None


def test_tail_l2_trivial_cases():
    s = run(CONST, geometric(0.5), 8, 2.0)
    assert check_tail_L2(s, 1).passed is True
    s = run(PRODUCT, monodisperse(2), 8, 2.0)
    rec = check_tail_L2(s, 8)
    assert rec.passed is True and rec.residual == -1.0


def test_tail_l2_argument_errors():
    s = run(CONST, geometric(0.5), 8, 2.0)
    with pytest.raises(ValueError):
        check_tail_L2(s, 9)
    with pytest.raises(ValueError):
        check_tail_L2(s, 1, t1=0.123456)


def test_support_detects_leak():
    dens = np.array([[1.0, 0.0], [0.9, 1e-9]])
    assert check_support(TimeSeries.from_densities([0, 1], dens)).passed is False


# oracle runs

@pytest.mark.parametrize("kernel, init, n, t_end", [
    (CONST, monodisperse(1), 8, 10.0),
    (PRODUCT, monodisperse(1), 8, 10.0),
    (PRODUCT, geometric(0.5), 64, 10.0),
])
def test_suite_passes_on_oracle_runs(kernel, init, n, t_end):
    report = run_suite(run(kernel, init, n, t_end), kernel, SuiteOptions(algebraic_states=20))
    assert report.passed, [c for c in report.failures()]


def test_suite_fails_on_fabricated_series():
    report = run_suite(fabricated(M1=[1.0, 2.0], dissipation=[0, 0]), CONST,
                       SuiteOptions(algebraic_states=0))
    assert not report.passed
    assert report["mass_monotone"].status == "fail"
    assert report.lines()[0] == "name,scope,residual,tolerance,pass,citation"


def test_report_lookup_error():
    report = run_suite(fabricated(M1=[1.0, 1.0]), CONST, SuiteOptions(algebraic_states=0))
    with pytest.raises(KeyError):
        report["nope"]
