import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liqshock.errors import DegenerateSpectrum, DomainError, IllposedFactors, ValidationError
from liqshock.params import ModelParams, derive_constants, evaluate_factors, merton_residuals, merton_spectrum

positive = st.floats(min_value=0.05, max_value=1.0)
rate = st.floats(min_value=0.01, max_value=5.0)


def test_derived_constants_hand_values():
    assert derive_constants(0.2, 0.0, 1.0, 1.0, 1.0, 1.0).d0 == 0.0
    assert derive_constants(0.2, 0.0, 1.0, 1.0, 1.0, 1.0).kappa == 0.0
    assert derive_constants(0.2, 0.06, 1.0, 1.0, 1.0, 1.0).d0 == pytest.approx(0.045, rel=1e-15)


def test_derived_fields_cannot_be_passed():
    with pytest.raises(TypeError):
        ModelParams(0.2, 0.0, 1.0, 1.0, 1.0, 1.0, d0=3.0)


@pytest.mark.parametrize("field, kwargs", [
    ("sigma", dict(sigma=0.0)), ("gamma", dict(gamma=-1.0)), ("T", dict(T=0.0)),
    ("nu01", dict(nu01=-0.1)), ("nu10", dict(nu10=float("nan"))), ("mu", dict(mu=float("inf"))),
])
def test_validation_names_the_field(field, kwargs):
    base = dict(sigma=0.3, mu=0.06, nu01=1.0, nu10=2.0, gamma=1.0, T=1.0)
    base.update(kwargs)
    with pytest.raises(ValidationError) as err:
        ModelParams(**base)
    assert err.value.field == field


def test_spectrum_small_case():
    f = merton_spectrum(ModelParams(1.0, 0.0, 1.0, 0.0, 1.0, 1.0))
    assert f.lambda1 == pytest.approx(1.0, abs=1e-15)
    assert f.lambda2 == pytest.approx(0.0, abs=1e-15)


def test_spectrum_product_example():
    p = ModelParams(0.2, 0.06, 1.0, 2.0, 1.0, 1.0)
    f = merton_spectrum(p)
    assert f.lambda1 * f.lambda2 == pytest.approx(0.09, rel=1e-12)
    assert f.lambda1 >= f.lambda2


def test_illposed_and_degenerate():
    with pytest.raises(IllposedFactors):
        merton_spectrum(ModelParams(0.3, 0.06, 0.0, 2.0, 1.0, 1.0))
    # the discriminant vanishes only when nu01 = 0 and d0 = nu10, so repeated roots need nu01 ~ 0
    with pytest.raises(DegenerateSpectrum):
        merton_spectrum(ModelParams(1.0, math.sqrt(2.0), 1e-300, 1.0, 1.0, 1.0))


def test_domain_error_outside_horizon(desk_params):
    f = merton_spectrum(desk_params)
    with pytest.raises(DomainError):
        evaluate_factors(f, 1.5)
    with pytest.raises(DomainError):
        evaluate_factors(f, np.array([0.2, -0.1]))


def test_scalar_and_array_agree(desk_params):
    f = merton_spectrum(desk_params)
    t = np.linspace(0.0, 1.0, 7)
    arr = evaluate_factors(f, t)
    for k, tk in enumerate(t):
        assert evaluate_factors(f, float(tk)) == pytest.approx(tuple(a[k] for a in arr), rel=1e-15)


def test_large_rates_do_not_overflow():
    f = merton_spectrum(ModelParams(0.05, 2.0, 40.0, 40.0, 1.0, 30.0))
    F0, F1, _, _ = evaluate_factors(f, np.linspace(0.0, 30.0, 11))
    assert np.all(np.isfinite(F0)) and np.all(np.isfinite(F1))
    assert F0[-1] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(sigma=positive, mu=st.floats(-0.5, 0.5), nu01=rate, nu10=rate, T=st.floats(0.1, 5.0))
def test_spectrum_identities(sigma, mu, nu01, nu10, T):
    p = ModelParams(sigma, mu, nu01, nu10, 1.0, T)
    f = merton_spectrum(p)
    s = p.d0 + nu01 + nu10
    assert f.lambda1 + f.lambda2 == pytest.approx(s, rel=1e-12)
    assert f.lambda1 * f.lambda2 == pytest.approx(p.d0 * nu10, rel=1e-12, abs=1e-300)
    F0, F1, _, _ = evaluate_factors(f, T)
    assert abs(F0 - 1.0) <= 1e-12 and abs(F1 - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(sigma=positive, mu=st.floats(-0.5, 0.5), nu01=rate, nu10=st.floats(0.0, 5.0), T=st.floats(0.1, 5.0),
       seed=st.integers(0, 2**32 - 1))
def test_factor_odes_and_positivity(sigma, mu, nu01, nu10, T, seed):
    f = merton_spectrum(ModelParams(sigma, mu, nu01, nu10, 1.0, T))
    t = np.random.default_rng(seed).uniform(0.0, T, 50)
    F0, F1, _, _ = evaluate_factors(f, t)
    r0, r1 = merton_residuals(f, t)
    scale = np.maximum(1.0, np.maximum(np.abs(F0), np.abs(F1)))
    assert np.all(np.abs(r0) <= 1e-10 * scale)
    assert np.all(np.abs(r1) <= 1e-10 * scale)
    assert np.all(F0 > 0.0) and np.all(F1 > 0.0)
