import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweedie_exposure.fitting import FitSpec, fit
from tweedie_exposure.penalty import (
    PenaltySchedule,
    adjust,
    constrain,
    constrain_values,
    constrain_values_sequential,
    default_grid,
    pava,
    penalty,
    premium_decomposition,
    refit_with_offset,
)
from tweedie_exposure.portfolio import ExposureLaw, SyntheticSpec, simulate
from tweedie_exposure.splines import ExposureCurve, KnotGrid


def qp_projection(values, t):
    """Least-squares fit under monotonicity, t <= g <= 1 and g[-1] = 1."""
    g = cp.Variable(len(values))
    cons = [cp.diff(g) >= 0, g >= t, g <= 1, g[-1] == 1]
    cp.Problem(cp.Minimize(cp.sum_squares(g - values)), cons).solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return g.value


def random_shape(rng, t):
    alpha = rng.uniform(0.3, 1.3)
    bump = rng.uniform(-0.4, 0.6) * np.sin(np.pi * t * rng.uniform(1, 4))
    g = t**alpha * (1 + bump * (1 - t)) + rng.normal(0, 0.03, t.size)
    g[-1] = 1.0
    return g


def test_pava_basics():
    assert np.array_equal(pava([1, 2, 3]), [1, 2, 3])
    assert np.allclose(pava([3, 1, 2]), [2, 2, 2])
    assert np.allclose(pava([1, 3, 2, 4]), [1, 2.5, 2.5, 4])
    assert np.allclose(pava([2, 0], weights=[3, 1]), [1.5, 1.5])


def test_grid():
    t = default_grid()
    assert t.size == 200 and t[0] == 0.005 and t[-1] == 1.0


def test_identity_and_feasible_fixed_points():
    t = default_grid()
    assert np.array_equal(constrain_values(t, t), t)
    g = t**0.5
    assert np.array_equal(constrain_values(g, t), g)
    grid = KnotGrid.default()
    identity = ExposureCurve.identity(grid)
    sched = constrain(identity)
    assert np.allclose(sched.gamma_con, t, atol=1e-12)


def test_cap_at_one_against_qp():
    t = np.arange(1, 21) / 20
    values = np.minimum(1.3, 0.4 + 1.6 * t)
    values[-1] = 1.0
    values[12:17] = 1.15  # interior excursion above a full year
    out = constrain_values(values, t)
    assert np.all(out[np.flatnonzero(values >= 1)] == 1.0)
    assert np.all(np.diff(out) >= 0)
    assert np.max(np.abs(out - qp_projection(values, t))) < 1e-6


def test_matches_qp_oracle_random(rng):
    t = np.arange(1, 21) / 20
    for _ in range(100):
        values = random_shape(rng, t)
        assert np.max(np.abs(constrain_values(values, t) - qp_projection(values, t))) < 1e-6


def test_sequential_clipping_is_feasible_but_not_closer(rng):
    t = np.arange(1, 21) / 20
    worse = 0
    for _ in range(100):
        values = random_shape(rng, t)
        seq = constrain_values_sequential(values, t)
        assert np.all(np.diff(seq) >= 0) and np.all(seq >= t) and np.all(seq <= 1) and seq[-1] == 1
        d_seq = np.sum((seq - values) ** 2)
        d_opt = np.sum((constrain_values(values, t) - values) ** 2)
        assert d_opt <= d_seq + 1e-15
        worse += d_seq > d_opt + 1e-12
    # the floor splitting a pooled block happens often enough to matter
    assert worse > 0


def test_bounded_pava_small_case():
    # pooling 0.4173 and 0.4103 gives 0.4138, but the second point must reach
    # 0.45, after which the first keeps its own value
    t = np.array([0.4, 0.45, 1.0])
    out = constrain_values([0.4173, 0.4103, 1.0], t)
    assert np.allclose(out, [0.4173, 0.45, 1.0], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_constraints_hold_exactly(seed):
    rng = np.random.default_rng(seed)
    t = default_grid()
    out = constrain_values(random_shape(rng, t), t)
    assert np.all(np.diff(out) >= 0)
    assert np.all(out >= t) and np.all(out <= 1.0) and out[-1] == 1.0
    assert np.array_equal(constrain_values(out, t), out)


def test_schedule_validation():
    t = default_grid()
    with pytest.raises(ValueError):
        PenaltySchedule(t, t[::-1].copy())
    with pytest.raises(ValueError):
        PenaltySchedule(t, t * 0.9)
    with pytest.raises(ValueError):
        PenaltySchedule(t, np.minimum(1.2 * t + 0.1, 1.05))
    with pytest.raises(ValueError):
        PenaltySchedule(t, t, a=1.5)


def test_penalty_values():
    t = default_grid()
    g = np.minimum(1.0, np.sqrt(t))
    g[99] = 0.8  # t = 0.5
    g = constrain_values(g, t)
    sched = PenaltySchedule(t, g)
    assert penalty(sched, 1.0, 500.0) == 0.0
    assert penalty(PenaltySchedule.identity(), 0.37, 900.0) == pytest.approx(0.0, abs=1e-12)
    manual = PenaltySchedule(t, np.where(t == 0.5, 0.8, np.maximum(t, np.where(t < 0.5, 0.8 * t / 0.5, 0.8 + (t - 0.5) * 0.4))))
    assert penalty(manual, 0.5, 1000.0) == pytest.approx(300.0, rel=1e-12)
    with pytest.raises(ValueError):
        penalty(sched, 0.0, 1.0)
    with pytest.raises(ValueError):
        penalty(sched, 1.2, 1.0)


def test_adjust_endpoints_and_midpoint():
    t = default_grid()
    g = constrain_values(t**0.5, t)
    sched = PenaltySchedule(t, g)
    assert np.array_equal(adjust(sched, 0.0).gamma_con, t)
    assert np.array_equal(adjust(sched, 1.0).gamma_con, g)
    j = np.flatnonzero(t == 0.4)[0]
    g2 = g.copy()
    g2[j] = 0.9
    g2 = np.maximum.accumulate(g2)
    s2 = PenaltySchedule(t, g2)
    assert adjust(s2, 0.5).gamma_con[j] == pytest.approx(0.65, rel=1e-15)
    for bad in (-0.1, 1.1):
        with pytest.raises(ValueError):
            adjust(sched, bad)


def test_penalty_increasing_in_a_and_total_payment_monotone():
    t = default_grid()
    sched = PenaltySchedule(t, constrain_values(t**0.4, t))
    levels = np.linspace(0, 1, 11)
    pens = np.array([adjust(sched, a).gamma_con - t for a in levels])
    inside = sched.gamma_con > t
    assert np.all(np.diff(pens[:, inside], axis=0) > 0)
    for a in levels:
        assert np.all(np.diff(adjust(sched, a).gamma_con) >= 0)


def test_schedule_round_trip():
    t = default_grid()
    sched = PenaltySchedule(t, constrain_values(t**0.7, t), 0.5, {"intercept": -1.0})
    again = PenaltySchedule.from_dict(sched.to_dict())
    assert np.array_equal(again.gamma_con, sched.gamma_con) and again.a == 0.5


@pytest.fixture(scope="module")
def planted():
    p = simulate(SyntheticSpec(20_000, delta=ExposureLaw("power", 0.6), xo_fraction=0.6, seed=31))
    flex = fit(p, FitSpec(scheme="ewm"))
    return p, flex, constrain(flex.curve)


def test_refit_at_zero_equals_traditional(planted):
    p, flex, sched = planted
    refit = refit_with_offset(p, adjust(sched, 0.0), FitSpec(scheme="ratio"), flex.curve)
    traditional = fit(p, FitSpec(scheme="ratio"))
    assert np.max(np.abs(refit.beta - traditional.beta)) < 1e-8


def test_refit_at_one_close_to_flexible(planted):
    p, flex, sched = planted
    refit = refit_with_offset(p, sched, FitSpec(scheme="ewm"), flex.curve)
    assert np.max(np.abs(refit.beta - flex.beta)) < 0.05
    assert refit.offset_a == 1.0


def test_schedule_positive_below_first_grid_point():
    t = default_grid()
    sched = PenaltySchedule(t, t.copy())
    assert sched.gamma(0.001) > 0


def test_decomposition(planted):
    p, flex, sched = planted
    refit = refit_with_offset(p, sched, FitSpec(scheme="ewm"), flex.curve)
    d = premium_decomposition(refit, sched, p)
    annual = refit.annual_premium(p)
    rho = annual * (sched.gamma(p.exposure) - p.exposure)
    share = rho.sum() / (annual * sched.gamma(p.exposure)).sum()
    assert d.penalty_share > 0
    assert d.penalty_share == pytest.approx(share, rel=1e-12)
    xo = ~p.is_xx
    assert d.penalty_share_xo == pytest.approx(rho[xo].sum() / (annual * sched.gamma(p.exposure))[xo].sum(), rel=1e-12)
    assert d.cumulative["premium"][-1] == pytest.approx(1.0)
    assert np.all(np.diff(d.cumulative["premium"]) >= 0)


def test_decomposition_zero_cases(planted):
    p, flex, sched = planted
    xx = p.subset(np.flatnonzero(p.is_xx))
    assert premium_decomposition(flex, sched, xx).penalty_share == 0.0
    assert premium_decomposition(flex, PenaltySchedule.identity(), p).penalty_share == pytest.approx(0.0, abs=1e-15)
