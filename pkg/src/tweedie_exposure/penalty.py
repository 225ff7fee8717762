"""Cancellation-penalty schedules built from a fitted exposure curve.

A schedule holds a constrained curve ``gamma_con`` on an equispaced grid in
(0, 1]. It is non-decreasing, never below the pro-rata line ``t``, never
above the full-year level 1, and equal to 1 at ``t = 1``. The penalty for a
cancellation at ``t`` is ``annual_premium * (gamma(t) - t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from tweedie_exposure.fitting import FitError, FitResult, FitSpec, compute_weights, fit_with_offset, interp_schedule
from tweedie_exposure.portfolio import Portfolio
from tweedie_exposure.splines import ExposureCurve

GRID_POINTS = 200


def default_grid(points: int = GRID_POINTS) -> np.ndarray:
    return np.arange(1, points + 1) / points


def pava(values, weights=None, lower=None, upper=None) -> np.ndarray:
    """Non-decreasing least-squares fit by pool-adjacent-violators.

    With ``lower``/``upper`` each pooled block takes its weighted mean clipped
    to the tightest bounds of its members. Pooling under those clipped values
    is still exact, since every term of the objective stays separable and
    convex.
    """
    y = np.asarray(values, dtype=float)
    n = y.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    # parallel stacks: fitted value, weighted sum, weight, max lower, min upper, length
    vals, wy, ws, los, his, sizes = [], [], [], [], [], []
    for i in range(n):
        vals.append(min(max(y[i], lo[i]), hi[i]))
        wy.append(w[i] * y[i])
        ws.append(w[i])
        los.append(lo[i])
        his.append(hi[i])
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            a_wy, a_w, a_lo, a_hi, a_n = wy.pop(), ws.pop(), los.pop(), his.pop(), sizes.pop()
            vals.pop()
            wy[-1] += a_wy
            ws[-1] += a_w
            los[-1] = max(los[-1], a_lo)
            his[-1] = min(his[-1], a_hi)
            sizes[-1] += a_n
            vals[-1] = min(max(wy[-1] / ws[-1], los[-1]), his[-1])
    return np.repeat(vals, sizes)


def constrain_values(values, grid_t) -> np.ndarray:
    """Least-squares projection onto non-decreasing curves with t <= g <= 1 and g(1) = 1."""
    t = np.asarray(grid_t, dtype=float)
    lower = t.copy()
    lower[-1] = 1.0
    return pava(values, lower=lower, upper=np.ones_like(t))


def constrain_values_sequential(values, grid_t) -> np.ndarray:
    """Pool, clip to [t, 1], pool again, pin the endpoint.

    Always feasible but not always the least-squares point; kept for
    comparison with :func:`constrain_values`.
    """
    t = np.asarray(grid_t, dtype=float)
    g = pava(np.clip(pava(values), t, 1.0))
    g = np.minimum(np.maximum(g, t), 1.0)
    g[-1] = 1.0
    return g


@dataclass(frozen=True)
class PenaltySchedule:
    grid_t: np.ndarray
    gamma_con: np.ndarray
    a: float = 1.0
    beta: Optional[dict] = None

    def __post_init__(self):
        t = np.asarray(self.grid_t, dtype=float)
        g = np.asarray(self.gamma_con, dtype=float)
        object.__setattr__(self, "grid_t", t)
        object.__setattr__(self, "gamma_con", g)
        if t.shape != g.shape:
            raise ValueError("grid and curve lengths differ")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"smoothing level a = {self.a} outside [0, 1]")
        if t[-1] != 1.0 or np.any(np.diff(t) <= 0) or t[0] <= 0:
            raise ValueError("grid must be increasing in (0, 1] and end at 1")
        if np.any(np.diff(g) < 0):
            raise ValueError("schedule is not non-decreasing")
        if np.any(g < t):
            raise ValueError("schedule falls below the pro-rata line")
        if np.any(g > 1.0) or g[-1] != 1.0:
            raise ValueError("schedule must stay at or below 1 and end at 1")

    @classmethod
    def identity(cls, points: int = GRID_POINTS) -> "PenaltySchedule":
        t = default_grid(points)
        return cls(t, t.copy(), 0.0)

    def gamma(self, t):
        return interp_schedule(t, self.grid_t, self.gamma_con)

    def annual_premium(self, x, bms) -> float:
        """Full-year premium exp(x'beta) for one covariate vector."""
        if self.beta is None:
            raise ValueError("schedule carries no coefficients")
        b = self.beta
        eta = b["intercept"] + b.get("bms", 0.0) * (bms - 100)
        for i, name in enumerate(("x1", "x2", "x3", "x4", "x5")):
            eta += b.get(name, 0.0) * x[i]
        return float(np.exp(eta))

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "grid_t": [float(v) for v in self.grid_t],
            "gamma": [float(v) for v in self.gamma_con],
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PenaltySchedule":
        return cls(np.asarray(data["grid_t"]), np.asarray(data["gamma"]), data["a"], data.get("beta"))


def constrain(curve: Union[ExposureCurve, PenaltySchedule], grid_t=None) -> PenaltySchedule:
    """Constrained schedule from a fitted curve (or re-projection of a schedule)."""
    if isinstance(curve, PenaltySchedule):
        return replace(curve, gamma_con=constrain_values(curve.gamma_con, curve.grid_t))
    t = default_grid() if grid_t is None else np.asarray(grid_t, dtype=float)
    values = np.asarray(curve(t), dtype=float)
    if np.any(~(values > 0)):
        raise ValueError("curve must be positive on the grid")
    return PenaltySchedule(t, constrain_values(values, t), 1.0)


def penalty(schedule: PenaltySchedule, t, annual_premium):
    """Surcharge over the pro-rata premium for cancelling at ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0) or np.any(t_arr > 1):
        raise ValueError("exposure outside (0, 1]")
    rho = np.asarray(annual_premium) * np.maximum(schedule.gamma(t_arr) - t_arr, 0.0)
    return float(rho) if np.ndim(rho) == 0 else rho


def adjust(schedule: PenaltySchedule, a: float) -> PenaltySchedule:
    """Blend the constrained curve with the identity: a*gamma_con + (1-a)*t.

    ``schedule`` is the unblended (a = 1) schedule.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"smoothing level a = {a} outside [0, 1]")
    t = schedule.grid_t
    if a == 1.0:
        g = schedule.gamma_con.copy()
    elif a == 0.0:
        g = t.copy()
    else:
        g = a * schedule.gamma_con + (1.0 - a) * t
        g = np.minimum(np.maximum(g, t), 1.0)
        g[-1] = 1.0
    return PenaltySchedule(t, g, float(a), schedule.beta)


def refit_with_offset(portfolio: Portfolio, schedule: PenaltySchedule, spec: FitSpec, weight_curve: ExposureCurve) -> FitResult:
    """Refit coefficients with ``log gamma_adj(t)`` as a fixed offset.

    Prior weights follow ``spec.scheme`` evaluated with the frozen
    pre-constraint ``weight_curve`` (only GWM uses it).
    """
    gamma = schedule.gamma(portfolio.exposure)
    if np.any(~(gamma > 0)):
        bad = portfolio.exposure[np.flatnonzero(~(gamma > 0))[0]]
        raise FitError(f"adjusted curve not positive at exposure {bad}")
    weights = compute_weights(spec.scheme, portfolio.exposure, weight_curve, spec.power)
    res, names = fit_with_offset(portfolio, spec, np.log(gamma), weights)
    return FitResult(
        scheme=spec.scheme,
        power=spec.power,
        names=names,
        beta=res.beta,
        curve=weight_curve,
        deviance_train=res.deviance,
        converged=res.converged,
        trace=res.trace,
        irls_trace=res.trace,
        offset_t=schedule.grid_t.copy(),
        offset_gamma=schedule.gamma_con.copy(),
        offset_a=schedule.a,
        message="" if res.converged else "no convergence",
    )


@dataclass
class Decomposition:
    pro_rata: np.ndarray
    penalty: np.ndarray
    penalty_share: float
    penalty_share_xo: float
    cumulative: dict

    def to_dict(self) -> dict:
        return {
            "total_pro_rata": float(self.pro_rata.sum()),
            "total_penalty": float(self.penalty.sum()),
            "penalty_share": self.penalty_share,
            "penalty_share_xo": self.penalty_share_xo,
        }


def premium_decomposition(fit: FitResult, schedule: PenaltySchedule, portfolio: Portfolio, bin_width: float = 0.05) -> Decomposition:
    """Split each charged premium gamma(t)*pi into pro-rata t*pi and penalty rho(t)."""
    t = portfolio.exposure
    annual = fit.annual_premium(portfolio)
    pro_rata = t * annual
    rho = annual * np.maximum(schedule.gamma(t) - t, 0.0)
    charged = pro_rata + rho
    xo = ~portfolio.is_xx
    share = float(rho.sum() / charged.sum()) if charged.sum() > 0 else 0.0
    share_xo = float(rho[xo].sum() / charged[xo].sum()) if xo.any() and charged[xo].sum() > 0 else 0.0

    edges = np.append(np.arange(bin_width, 1.0 - 1e-12, bin_width), 1.0)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    upto = np.searchsorted(ts, edges, side="right")
    def cum(v):
        c = np.concatenate(([0.0], np.cumsum(v[order])))
        return c[upto] / v.sum() if v.sum() > 0 else np.zeros(len(edges))
    cumulative = {
        "exposure": edges,
        "premium": cum(charged),
        "pro_rata": cum(pro_rata),
        "penalty": np.concatenate(([0.0], np.cumsum(rho[order])))[upto] / max(charged.sum(), 1e-300),
        "loss": cum(portfolio.loss),
    }
    return Decomposition(pro_rata, rho, share, share_xo, cumulative)
