import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from spdelab.core import (
    ConditionedState,
    ConvergenceError,
    ModelParams,
    blow_up_time,
    conditional_field,
    fourth_order_symbols,
    heat_kernel_datum,
    lp_condition,
    second_order_symbols,
    single_mode,
)
from spdelab.moments import (
    ADAPTIVE_TAIL,
    GAUSS_HERMITE,
    GaussianReduction,
    MomentEstimate,
    conditional_norm,
    divergence_time,
    exact_second_moment,
    expected_norm_p,
    gaussian_exp_moment,
    log_conditional_norm,
    tail_coefficient,
    time_integrated_moment,
)
from spdelab.spaces import TWO_PI, NormSpec, bessel_norm

L2 = NormSpec.bessel()


def _single_mode_moment(alpha, beta, p, q, k, t):
    # |v_k| = exp(-t k^2 (1 + 2 theta) + 2 beta |k| W), ||e_k||_q = (2 pi)^{1/q}
    theta = beta**2 - alpha**2
    log_m = -p * t * k * k * (1 + 2 * theta) + 2 * p * p * beta**2 * k * k * t
    return TWO_PI ** (p / q) * math.exp(log_m)


@pytest.mark.parametrize("p", [1.25, 1.5, 3.0, 5.0])
@pytest.mark.parametrize("q", [2.0, 3.0, 4.0])
def test_single_mode_moment_closed_form(p, q):
    par = ModelParams(0.2, 0.25, p, q)
    k, t = 3, 0.4
    est = expected_norm_p(t, par, second_order_symbols(par), single_mode(5, k), NormSpec.bessel(0.0, q))
    assert est.value == pytest.approx(_single_mode_moment(0.2, 0.25, p, q, k, t), rel=1e-9)
    assert est.norm == pytest.approx(est.value ** (1 / p))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0.05, 1.5), st.floats(0.2, 2.0), st.floats(0, 1))
def test_second_moment_matches_mode_sum(alpha, beta, t, delta, s):
    par = ModelParams(alpha, beta, 2.0, 2.0, s)
    init = heat_kernel_datum(48, delta)
    est = expected_norm_p(t, par, second_order_symbols(par), init, NormSpec.bessel(s, 2.0))
    n = init.modes.astype(float)
    oracle = TWO_PI * np.sum((1 + n * n) ** s * np.exp(-2 * t * n * n * (1 - 2 * beta**2 - 2 * alpha**2)) * np.abs(init.coeffs) ** 2)
    assert est.value == pytest.approx(oracle, rel=1e-9)
    assert exact_second_moment(t, par, second_order_symbols(par), init, s) == pytest.approx(oracle, rel=1e-12)


def test_second_moment_by_direct_quadrature():
    # E F(sqrt(t) Z) by adaptive quadrature of the conditional norm itself
    par = ModelParams(0.3, 0.35, 2.0, 3.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(12, 0.6)
    spec = NormSpec.bessel(0.0, 3.0)
    t = 0.3

    def f(z):
        return conditional_norm(t, math.sqrt(t) * z, par, sym, init, spec) ** 2 * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)

    want = integrate.quad(f, -12, 12, epsabs=0, epsrel=1e-11, limit=400)[0]
    assert expected_norm_p(t, par, sym, init, spec).value == pytest.approx(want, rel=1e-8)


def test_conditional_norm_matches_field_norm():
    par = ModelParams(0.2, 0.4, 2.0, 3.0, 0.5)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(16, 0.3)
    for q in (2.0, 3.0):
        spec = NormSpec.bessel(0.5, q)
        for w in (-1.0, 0.0, 0.7):
            field = conditional_field(ConditionedState(0.4, w, par, sym, init))
            assert conditional_norm(0.4, w, par, sym, init, spec) == pytest.approx(bessel_norm(field, 0.5, q), rel=1e-8)


def test_log_norm_survives_overflow():
    par = ModelParams(0.0, 1.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(256, 1.0)
    vals = log_conditional_norm(1.0, np.array([200.0, 400.0]), par, sym, init, L2)
    assert np.all(np.isfinite(vals)) and vals[1] > vals[0] > 300


def test_dichotomy_and_monotone_growth():
    par = ModelParams(0.0, 1.0, 2.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(256, 1.0)
    values = [expected_norm_p(t, par, sym, init, L2).value for t in (0.5, 0.9, 0.99, 0.999)]
    assert all(a < b for a, b in zip(values, values[1:]))
    for t in (1.0, 1.01, 1.5, 3.0):
        est = expected_norm_p(t, par, sym, init, L2)
        assert math.isinf(est.value) and not est.finite


def test_critical_band_raises():
    par = ModelParams(0.0, 1.0, 2.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(64, 1.0)
    with pytest.raises(ConvergenceError):
        expected_norm_p(1 - 1e-12, par, sym, init, L2)
    assert expected_norm_p(0.995, par, sym, init, L2).method == ADAPTIVE_TAIL


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0.05, 1.5), st.floats(1.05, 6), st.floats(0.1, 3), st.floats(0.01, 5))
def test_tail_sign_matches_blow_up_time(alpha, beta, p, delta, t):
    par = ModelParams(alpha, beta, p)
    tau = blow_up_time(par, delta)
    coef = tail_coefficient(t, par, delta)
    if abs(t - tau) > 1e-9 * max(tau, 1):
        assert (coef >= 0) == (t > tau)


def test_divergence_time_against_formula():
    for alpha in (0.0, 0.3, 0.5):
        for beta in (0.3, 0.6, 1.0):
            for p in (1.25, 2.0, 4.0):
                par = ModelParams(alpha, beta, p)
                for delta in (0.5, 1.0, 3.0):
                    found = divergence_time(par, second_order_symbols(par), heat_kernel_datum(8, delta), L2)
                    want = blow_up_time(par, delta)
                    if math.isinf(want):
                        assert math.isinf(found)
                    else:
                        assert found == pytest.approx(want, rel=1e-12)


def test_finite_support_never_diverges():
    par = ModelParams(0.0, 1.0, 2.0)
    sym = second_order_symbols(par)
    f = single_mode(4, 2)
    assert math.isinf(divergence_time(par, sym, f))
    assert math.isfinite(expected_norm_p(3.0, par, sym, f, L2).value)


def test_gaussian_exp_moment():
    for c in (-2.0, 0.0, 0.1, 0.45):
        want = integrate.quad(lambda z: math.exp(c * z * z - z * z / 2) / math.sqrt(2 * math.pi), -np.inf, np.inf)[0]
        assert gaussian_exp_moment(c) == pytest.approx(want, rel=1e-10)
    assert math.isinf(gaussian_exp_moment(0.5))


def test_gaussian_reduction_fields():
    par = ModelParams(0.2, 0.5, 3.0)
    red = GaussianReduction(0.4, par, 1.0)
    assert red.denominator == pytest.approx(0.4 * (1 + 2 * par.theta()) + 1.0)
    assert red.g_tilde(0.0) == 0
    assert red.h_tilde(1.0) > 0


def test_time_integrated_single_mode():
    par = ModelParams(0.1, 0.2, 3.0)
    sym = second_order_symbols(par)
    k, T = 2, 0.8
    rate = math.log(_single_mode_moment(0.1, 0.2, 3.0, 2.0, k, 1.0) / TWO_PI**1.5)
    want = (TWO_PI**1.5 * (math.exp(rate * T) - 1) / rate) ** (1 / 3)
    assert time_integrated_moment(T, par, sym, single_mode(3, k), L2) == pytest.approx(want, rel=1e-8)


def test_time_integrated_zero_mode():
    par = ModelParams(0.3, 0.3, 2.0)
    got = time_integrated_moment(2.0, par, second_order_symbols(par), single_mode(2, 0, 1.5), L2)
    assert got == pytest.approx(2.0**0.5 * 1.5 * math.sqrt(TWO_PI))


def test_time_integrated_past_blow_up():
    par = ModelParams(0.0, 1.0, 2.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(64, 1.0)
    assert math.isinf(time_integrated_moment(1.5, par, sym, init, L2))
    assert math.isfinite(time_integrated_moment(0.5, par, sym, init, L2))


def test_fourth_order_threshold():
    par = ModelParams(0.0, 0.6, 4.0)
    sym = fourth_order_symbols(par)
    init = heat_kernel_datum(24, 1.0, sym)
    tau = divergence_time(par, sym, init)
    assert tau == pytest.approx(1 / (2 * 0.36 * 3 - 1))
    assert math.isfinite(expected_norm_p(0.9 * tau, par, sym, init, L2).value)
    assert math.isinf(expected_norm_p(1.1 * tau, par, sym, init, L2).value)


def test_methods_agree():
    par = ModelParams(0.2, 0.5, 1.5, 3.0)
    sym = second_order_symbols(par)
    init = heat_kernel_datum(32, 0.5)
    spec = NormSpec.bessel(0.0, 3.0)
    gh = expected_norm_p(0.3, par, sym, init, spec, method=GAUSS_HERMITE)
    tr = expected_norm_p(0.3, par, sym, init, spec, method=ADAPTIVE_TAIL)
    assert gh.method == GAUSS_HERMITE and tr.method == ADAPTIVE_TAIL
    assert gh.value == pytest.approx(tr.value, rel=1e-9)
    with pytest.raises(ValueError):
        expected_norm_p(0.3, par, sym, init, spec, method="simpson")


def test_truncation_warning(caplog):
    par = ModelParams(0.0, 1.0, 2.0)
    sym = second_order_symbols(par)
    with caplog.at_level(logging.WARNING, logger="spdelab.moments"):
        expected_norm_p(0.999, par, sym, heat_kernel_datum(16, 1.0), L2)
    assert any("truncation" in r.message for r in caplog.records)


def test_zero_time_and_zero_field():
    par = ModelParams(0.2, 0.2, 2.0)
    sym = second_order_symbols(par)
    f = single_mode(2, 1, 2.0)
    assert expected_norm_p(0.0, par, sym, f, L2).value == pytest.approx(4 * TWO_PI)
    assert expected_norm_p(0.5, par, sym, 0 * f, L2).value == 0
    assert MomentEstimate(8.0, GAUSS_HERMITE, 1, 0.0, 3.0).norm == pytest.approx(2.0)
