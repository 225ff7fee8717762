import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweedie_exposure.tweedie import (
    CompoundRepresentation,
    TweedieParams,
    sample,
    sample_compound,
    to_compound,
    unit_deviance,
    variance,
)

# 50-digit mpmath evaluations, frozen
VAR_2_HALF_2 = 0.66896377739305602439986198332365127045523834895191
POISSON_MEAN_3_2 = 1.630318056236179881300820259872366850075130571153
GAMMA_SHAPE_142 = 1.3809523809523809523809523809523809523809523809524
GAMMA_MEAN_3_2 = 1.8401317390337471084827006571525939871064454967342
DEVIANCE_2_1_15 = 0.68629150101523960958649020632241537144262499698443


def test_variance_values():
    assert variance(TweedieParams(1.0, 2.0, 4.0, 1.42)) == pytest.approx(0.5, rel=1e-15)
    assert variance(TweedieParams(4.0, 1.0, 1.0, 1.5)) == pytest.approx(8.0, rel=1e-15)
    assert variance(TweedieParams(2.0, 0.5, 2.0, 1.42)) == pytest.approx(VAR_2_HALF_2, rel=1e-14)


@pytest.mark.parametrize("power", [1.0, 2.0, 0.5, 2.5])
def test_power_outside_open_interval_rejected(power):
    with pytest.raises(ValueError):
        TweedieParams(1.0, 1.0, 1.0, power)


@pytest.mark.parametrize("field", ["mu", "phi", "weight"])
def test_nonpositive_parameters_rejected(field):
    kwargs = dict(mu=1.0, phi=1.0, weight=1.0, power=1.5)
    kwargs[field] = 0.0
    with pytest.raises(ValueError):
        TweedieParams(**kwargs)


def test_compound_unit_case():
    c = to_compound(TweedieParams(1.0, 1.0, 1.0, 1.5))
    assert (c.poisson_mean, c.gamma_shape, c.gamma_mean) == pytest.approx((2.0, 1.0, 0.5), rel=1e-15)


def test_exponential_severity_at_power_one_and_a_half():
    for mu in (0.3, 2.0, 17.0):
        assert to_compound(TweedieParams(mu, 0.7, 3.0, 1.5)).gamma_shape == pytest.approx(1.0, rel=1e-15)


def test_compound_reference_values():
    c = to_compound(TweedieParams(3.0, 2.0, 1.0, 1.42))
    assert c.poisson_mean == pytest.approx(POISSON_MEAN_3_2, rel=1e-14)
    assert c.gamma_shape == pytest.approx(GAMMA_SHAPE_142, rel=1e-14)
    assert c.gamma_mean == pytest.approx(GAMMA_MEAN_3_2, rel=1e-14)
    assert c.poisson_mean * c.gamma_mean == pytest.approx(3.0, rel=1e-12)
    # the shape is not a factor of the mean: including it scales by 0.58/0.42
    assert c.poisson_mean * c.gamma_shape * c.gamma_mean == pytest.approx(3.0 * 0.58 / 0.42, rel=1e-12)


def test_compound_rejects_broken_identity():
    with pytest.raises(ArithmeticError):
        CompoundRepresentation(1.0, 1.0, 1.0, mu=2.0)
    CompoundRepresentation(4.0, 3.0, 0.5, mu=2.0)


@settings(max_examples=300, deadline=None)
@given(
    mu=st.floats(1e-3, 1e4),
    phi=st.floats(1e-2, 1e2),
    w=st.floats(1e-2, 1e2),
    p=st.floats(1.01, 1.99),
)
def test_compound_mean_identity_property(mu, phi, w, p):
    c = to_compound(TweedieParams(mu, phi, w, p))
    assert abs(c.poisson_mean * c.gamma_mean / mu - 1.0) < 1e-12
    assert c.gamma_shape * c.gamma_scale == pytest.approx(c.gamma_mean, rel=1e-14)


def test_sampler_is_seeded():
    params = TweedieParams(2.0, 1.0, 1.0, 1.42)
    a = sample(params, np.random.default_rng(5), size=1000)
    b = sample(params, np.random.default_rng(5), size=1000)
    assert np.array_equal(a, b)


def test_zero_draws_have_no_claims(rng):
    counts, losses = sample_compound(np.full(20000, 0.5), 1.0, 1.0, 1.42, rng)
    assert np.all((counts == 0) == (losses == 0))
    assert np.all(losses >= 0)


def test_sample_moments_small_power(rng):
    params = TweedieParams(0.8, 2.0, 3.0, 1.2)
    y = sample(params, rng, size=200_000)
    assert y.mean() == pytest.approx(0.8, rel=0.015)
    assert y.var() == pytest.approx(variance(params), rel=0.06)


def test_scalar_sample_is_float(rng):
    v = sample(TweedieParams(1.0, 1.0, 1.0, 1.5), rng)
    assert isinstance(v, float) and v >= 0


def test_deviance_saturated_and_limit():
    for mu in (0.1, 1.0, 7.5):
        for p in (1.1, 1.42, 1.9):
            assert unit_deviance(mu, mu, p) == pytest.approx(0.0, abs=1e-12)
    assert unit_deviance(0.0, 1.0, 1.5) == pytest.approx(4.0, rel=1e-15)
    assert unit_deviance(0.0, 3.0, 1.42) == pytest.approx(2 * 3.0**0.58 / 0.58, rel=1e-14)


def test_deviance_reference_value():
    d = unit_deviance(2.0, 1.0, 1.5)
    assert d > 0
    assert d == pytest.approx(DEVIANCE_2_1_15, rel=1e-13)


def test_deviance_rejects_negative_loss():
    with pytest.raises(ValueError):
        unit_deviance(-0.1, 1.0, 1.5)


def test_deviance_vectorised():
    y = np.array([0.0, 1.0, 2.0])
    d = unit_deviance(y, np.ones(3), 1.5)
    assert d.shape == (3,)
    assert d[1] == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(y=st.floats(0.0, 1e3), mu=st.floats(1e-3, 1e3), p=st.floats(1.01, 1.99))
def test_deviance_nonnegative_property(y, mu, p):
    d = unit_deviance(y, mu, p)
    assert d >= 0
    if abs(y - mu) > 1e-3 * mu:
        assert d > 0


def test_variance_increasing_in_mean(rng):
    mus = np.sort(rng.uniform(0.01, 50, 200))
    v = [variance(TweedieParams(m, 1.3, 0.7, 1.42)) for m in mus]
    assert np.all(np.diff(v) > 0)


def test_zero_mass_matches_poisson(rng):
    params = TweedieParams(0.7, 1.5, 1.0, 1.6)
    n = 200_000
    y = sample(params, rng, size=n)
    p0 = math.exp(-to_compound(params).poisson_mean)
    se = math.sqrt(p0 * (1 - p0) / n)
    assert abs((y == 0).mean() - p0) < 3 * se
