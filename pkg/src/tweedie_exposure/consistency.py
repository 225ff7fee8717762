"""Quasi-likelihood consistency diagnostics for a possibly wrong exposure law.

If losses have true mean ``delta(t) * exp(x @ beta_true)`` but a model uses
``gamma(t) * exp(x @ beta)``, the Tweedie quasi-likelihood estimator converges
to the maximizer of the expected criterion. Its gradient at ``beta_true``
vanishes when ``delta == gamma``, so a nonzero expected gradient there signals
bias and gives its direction.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from tweedie_exposure.tweedie import check_power

ExposureFn = Callable[[np.ndarray], np.ndarray]


def kl_criterion(mu, mu_true, power: float):
    """Expected quasi-log-likelihood of mean ``mu`` under true mean ``mu_true``."""
    check_power(power)
    mu = np.asarray(mu, dtype=float)
    mu_true = np.asarray(mu_true, dtype=float)
    if np.any(mu <= 0) or np.any(mu_true <= 0):
        raise ValueError("means must be positive")
    value = mu ** (1.0 - power) / (1.0 - power) * mu_true - mu ** (2.0 - power) / (2.0 - power)
    return float(value) if value.ndim == 0 else value


def consistency_gradient(beta, beta_true, x, t, delta: ExposureFn, gamma: ExposureFn, power: float) -> np.ndarray:
    """Gradient of the criterion in ``beta`` for one contract.

    ``x`` is the full design row (include the leading 1 for an intercept).
    """
    check_power(power)
    beta = np.asarray(beta, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    x = np.asarray(x, dtype=float)
    d = float(delta(t))
    g = float(gamma(t))
    if not (d > 0 and g > 0):
        raise ValueError("exposure functions must be positive at t")
    xb = float(x @ beta)
    xb_true = float(x @ beta_true)
    # both terms share exp((2-p) x'beta); factor it out so delta == gamma at
    # beta == beta_true cancels to rounding
    common = g ** (1.0 - power) * np.exp((2.0 - power) * xb)
    return (d * np.exp(xb_true - xb) - g) * common * x


def expected_gradient(design, exposure, beta, beta_true, delta: ExposureFn, gamma: ExposureFn, power: float, weights=None) -> np.ndarray:
    """Portfolio-average gradient, with optional prior weights per contract."""
    check_power(power)
    X = np.asarray(design, dtype=float)
    t = np.asarray(exposure, dtype=float)
    w = np.ones(len(t)) if weights is None else np.asarray(weights, dtype=float)
    d = np.asarray(delta(t), dtype=float)
    g = np.asarray(gamma(t), dtype=float)
    if np.any(d <= 0) or np.any(g <= 0):
        raise ValueError("exposure functions must be positive on the exposures")
    xb = X @ np.asarray(beta, dtype=float)
    xb_true = X @ np.asarray(beta_true, dtype=float)
    scale = w * (d * np.exp(xb_true - xb) - g) * g ** (1.0 - power) * np.exp((2.0 - power) * xb)
    return X.T @ scale / w.sum()
