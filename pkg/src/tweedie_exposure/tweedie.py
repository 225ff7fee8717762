"""Tweedie(mu, w, phi, p) distribution for 1 < p < 2.

Only what ratemaking needs: the variance law, the compound Poisson-Gamma
image of a parameter set, exact sampling through that image, and the unit
deviance. The series normalizer of the density is never evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TweedieParams:
    """Mean, dispersion, weight and variance power of a Tweedie law."""

    mu: float
    phi: float = 1.0
    weight: float = 1.0
    power: float = 1.42

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.phi > 0:
            raise ValueError(f"phi must be positive, got {self.phi}")
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")
        check_power(self.power)


@dataclass(frozen=True)
class CompoundRepresentation:
    """Poisson claim-count mean and Gamma severity (shape, mean).

    The compound mean is ``poisson_mean * gamma_mean``; it must reproduce
    ``mu``. The shape does not enter the mean (it is already folded into
    ``gamma_mean``), so the three-way product equals ``mu * shape``.
    """

    poisson_mean: float
    gamma_shape: float
    gamma_mean: float
    mu: float

    def __post_init__(self):
        product = self.poisson_mean * self.gamma_mean
        if abs(product - self.mu) > 1e-12 * abs(self.mu):
            raise ArithmeticError(
                f"compound image does not reproduce mu: {product!r} != {self.mu!r}"
            )

    @property
    def gamma_scale(self) -> float:
        # numpy's gamma uses (shape, scale); mean = shape * scale
        return self.gamma_mean / self.gamma_shape


def check_power(power: float) -> float:
    if not 1.0 < power < 2.0:
        raise ValueError(f"variance power must lie strictly inside (1, 2), got {power}")
    return power


def variance(params: TweedieParams) -> float:
    return params.phi / params.weight * params.mu**params.power


def to_compound(params: TweedieParams) -> CompoundRepresentation:
    mu, phi, w, p = params.mu, params.phi, params.weight, params.power
    return CompoundRepresentation(
        poisson_mean=w * mu ** (2.0 - p) / ((2.0 - p) * phi),
        gamma_shape=(2.0 - p) / (p - 1.0),
        gamma_mean=(2.0 - p) * phi / (w * mu ** (1.0 - p)),
        mu=mu,
    )


def sample_compound(mu, phi, weight, power, rng: np.random.Generator):
    """Vectorised draw of (claim counts, loss costs).

    Arguments broadcast against each other. The sum of ``n`` independent
    Gamma(shape, scale) variates is drawn as one Gamma(n * shape, scale)
    variate, which has the same law.
    """
    check_power(power)
    mu, phi, weight = np.broadcast_arrays(
        np.asarray(mu, dtype=float), np.asarray(phi, dtype=float), np.asarray(weight, dtype=float)
    )
    poisson_mean = weight * mu ** (2.0 - power) / ((2.0 - power) * phi)
    shape = (2.0 - power) / (power - 1.0)
    scale = (2.0 - power) * phi / (weight * mu ** (1.0 - power)) / shape
    counts = rng.poisson(poisson_mean)
    losses = np.zeros(counts.shape)
    hit = counts > 0
    losses[hit] = rng.gamma(counts[hit] * shape, scale[hit])
    return counts, losses


def sample(params: TweedieParams, rng: np.random.Generator, size=None):
    """Draw loss costs from ``params``; a float when ``size`` is None."""
    comp = to_compound(params)
    if size is None:
        n = rng.poisson(comp.poisson_mean)
        if n == 0:
            return 0.0
        return float(rng.gamma(comp.gamma_shape, comp.gamma_scale, size=n).sum())
    _, losses = sample_compound(
        np.full(size, params.mu), params.phi, params.weight, params.power, rng
    )
    return losses


def unit_deviance(y, mu, power):
    """Tweedie unit deviance; zero losses use the analytic limit."""
    check_power(power)
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any(y < 0):
        raise ValueError("loss costs must be non-negative")
    if np.any(mu <= 0):
        raise ValueError("means must be positive")
    p = power
    # y * y**(1-p) written as y**(2-p): no overflow for tiny y, and exact 0 at y = 0
    first = (y ** (2 - p) - y * mu ** (1 - p)) / (1 - p)
    second = (y ** (2 - p) - mu ** (2 - p)) / (2 - p)
    dev = 2.0 * (first - second)
    # rounding can leave tiny negatives when y is close to mu
    dev = np.maximum(dev, 0.0)
    if dev.ndim == 0:
        return float(dev)
    return dev
