"""Model comparison: normalized deviance, concentration/Lorenz curves, Murphy diagrams."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from tweedie_exposure.tweedie import unit_deviance

DEVIANCE_DISPLAY_SCALE = 100.0


def normalized_deviance(y, mu_hat, weights, power: float) -> float:
    """Deviance with weights rescaled to sum to one (raw, not x100)."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ValueError("total weight is zero")
    mu_hat = np.asarray(mu_hat, dtype=float)
    if np.any(mu_hat <= 0):
        raise ValueError("fitted premiums must be positive")
    return float(np.sum(w / total * unit_deviance(y, mu_hat, power)))


def fit_deviance(fit, portfolio) -> float:
    """Normalized deviance of a fitted model on a portfolio, using its own weights."""
    return normalized_deviance(
        portfolio.loss, fit.predict(portfolio), fit.weights(portfolio.exposure), fit.power
    )


@dataclass(frozen=True)
class CurvePair:
    """Empirical concentration (cc) and Lorenz (lc) curves on theta = k/n."""

    theta: np.ndarray
    cc: np.ndarray
    lc: np.ndarray


def concentration_lorenz(y, mu_hat) -> CurvePair:
    """Curves after rescaling ``mu_hat`` to global balance.

    Contracts are ordered by increasing premium; ties keep their input order.
    """
    y = np.asarray(y, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if y.shape != mu_hat.shape or y.ndim != 1:
        raise ValueError("losses and premiums must be 1-d sequences of equal length")
    if not y.sum() > 0:
        raise ValueError("losses are all zero")
    if not mu_hat.sum() > 0:
        raise ValueError("premiums sum to zero")
    mu_c = rescale_to_balance(y, mu_hat)
    order = np.argsort(mu_hat, kind="stable")
    n = y.size
    cc = np.concatenate(([0.0], np.cumsum(y[order]) / y.sum()))
    lc = np.concatenate(([0.0], np.cumsum(mu_c[order]) / mu_c.sum()))
    cc[-1] = lc[-1] = 1.0
    return CurvePair(np.arange(n + 1) / n, cc, lc)


def rescale_to_balance(y, mu_hat) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    return mu_hat * (y.sum() / mu_hat.sum())


def area_between(curves: CurvePair) -> tuple[float, float]:
    """(Area, ABC): trapezoid integrals of |cc - lc| and cc - lc over theta."""
    diff = curves.cc - curves.lc
    area = float(trapezoid(np.abs(diff), curves.theta))
    abc = float(trapezoid(diff, curves.theta))
    return area, abc


def default_m_grid(mu_hat, points: int = 201) -> np.ndarray:
    return np.linspace(0.0, 1.05 * float(np.max(mu_hat)), points)


def murphy_curve(y, mu_hat, m_grid=None) -> np.ndarray:
    """Empirical mean elementary loss (1/2n) sum (m - y_i) 1{mu_i > m}, per m."""
    y = np.asarray(y, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    m = default_m_grid(mu_hat) if m_grid is None else np.asarray(m_grid, dtype=float)
    if m.size == 0:
        raise ValueError("empty threshold grid")
    order = np.argsort(mu_hat, kind="stable")
    mu_sorted = mu_hat[order]
    # tail sums over the contracts with premium strictly above m
    tail_y = np.concatenate((np.cumsum(y[order][::-1])[::-1], [0.0]))
    start = np.searchsorted(mu_sorted, m, side="right")
    count = y.size - start
    return (m * count - tail_y[start]) / (2.0 * y.size)


@dataclass(frozen=True)
class Dominance:
    dominates: bool
    violations: list
    fraction: float


def murphy_dominates(grid_a, loss_a, grid_b, loss_b, tolerance: float = 0.0) -> Dominance:
    """Whether curve a lies on or below curve b (within ``tolerance``) at every m."""
    grid_a = np.asarray(grid_a, dtype=float)
    grid_b = np.asarray(grid_b, dtype=float)
    if grid_a.shape != grid_b.shape or not np.array_equal(grid_a, grid_b):
        raise ValueError("Murphy curves are on different threshold grids")
    loss_a = np.asarray(loss_a, dtype=float)
    loss_b = np.asarray(loss_b, dtype=float)
    ok = loss_a <= loss_b + tolerance
    violations = [float(v) for v in grid_a[~ok]]
    return Dominance(bool(ok.all()), violations, float(ok.mean()))


@dataclass
class ScoreReport:
    model: str
    dataset_tag: str
    deviance: float
    area: float
    abc: float
    m_grid: np.ndarray = field(repr=False)
    murphy: np.ndarray = field(repr=False)
    curves: Optional[CurvePair] = field(default=None, repr=False)

    @property
    def deviance_display(self) -> float:
        return DEVIANCE_DISPLAY_SCALE * self.deviance

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "dataset_tag": self.dataset_tag,
            "deviance": self.deviance,
            "deviance_x100": self.deviance_display,
            "area": self.area,
            "abc": self.abc,
            "murphy": [[float(m), float(v)] for m, v in zip(self.m_grid, self.murphy)],
        }


def score(fit, portfolio, dataset_tag: str = "test", m_grid=None, model: str = "") -> ScoreReport:
    if dataset_tag not in ("train", "test"):
        raise ValueError("dataset tag must be 'train' or 'test'")
    mu_hat = fit.predict(portfolio)
    dev = normalized_deviance(portfolio.loss, mu_hat, fit.weights(portfolio.exposure), fit.power)
    curves = concentration_lorenz(portfolio.loss, mu_hat)
    area, abc = area_between(curves)
    grid = default_m_grid(mu_hat) if m_grid is None else np.asarray(m_grid, dtype=float)
    return ScoreReport(
        model or fit.scheme.value, dataset_tag, dev, area, abc, grid, murphy_curve(portfolio.loss, mu_hat, grid), curves
    )
