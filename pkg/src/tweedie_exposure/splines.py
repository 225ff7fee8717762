"""Natural cubic regression splines in value-at-knot form.

A curve is stored by its values at the knots. Between knots it is the
natural cubic interpolant of those values; outside the knot range it
continues linearly. The same knots are shared by every model so curves from
different fits can be compared point by point.

Fitted exposure curves live on the log scale (the spline enters the linear
predictor), so :class:`ExposureCurve` carries a ``scale`` tag: ``"linear"``
curves evaluate to the spline itself, ``"log"`` curves to its exponential.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DEFAULT_KNOTS = (0.02,) + tuple(np.round(np.linspace(0.1, 1.0, 9), 12))


@dataclass(frozen=True)
class KnotGrid:
    knots: tuple

    def __post_init__(self):
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 4:
            raise ValueError("a knot grid needs at least 4 knots")
        k = np.asarray(knots)
        if not np.all(np.diff(k) > 0):
            raise ValueError("knots must be strictly increasing")
        if k[0] <= 0:
            raise ValueError("first knot must be positive")
        if k[-1] != 1.0:
            raise ValueError("last knot must be exactly 1")

    @classmethod
    def default(cls) -> "KnotGrid":
        return cls(DEFAULT_KNOTS)

    @classmethod
    def parse(cls, text: str) -> "KnotGrid":
        """Parse ``"0.02,0.1,...,1"`` or ``"uniform:K"`` (K knots on [1/K, 1])."""
        text = text.strip()
        if text in ("", "default"):
            return cls.default()
        if text.startswith("uniform:"):
            count = int(text.split(":", 1)[1])
            return cls(tuple(np.linspace(1.0 / count, 1.0, count)))
        return cls(tuple(float(v) for v in text.split(",")))

    def __len__(self):
        return len(self.knots)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots)

    @cached_property
    def _second_derivative_map(self) -> np.ndarray:
        # Maps knot values c to second derivatives M at every knot, with the
        # natural conditions M[0] = M[-1] = 0: R @ M_int = Q.T @ c.
        q, r = _q_r(self.array)
        m_int = np.linalg.solve(r, q.T)
        out = np.zeros((len(self), len(self)))
        out[1:-1] = m_int
        return out


def _q_r(k: np.ndarray):
    h = np.diff(k)
    n = len(k)
    q = np.zeros((n, n - 2))
    r = np.zeros((n - 2, n - 2))
    for j in range(1, n - 1):
        q[j - 1, j - 1] = 1.0 / h[j - 1]
        q[j, j - 1] = -1.0 / h[j - 1] - 1.0 / h[j]
        q[j + 1, j - 1] = 1.0 / h[j]
        r[j - 1, j - 1] = (h[j - 1] + h[j]) / 3.0
        if j < n - 2:
            r[j - 1, j] = r[j, j - 1] = h[j] / 6.0
    return q, r


def build_basis(points, grid: KnotGrid) -> np.ndarray:
    """Cardinal natural-cubic-spline basis, one row per point.

    Row ``i`` dotted with knot values gives the interpolant at ``points[i]``.
    Points below the first knot are extrapolated linearly.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.size == 0:
        raise ValueError("no points to evaluate")
    if np.any(x <= 0) or np.any(x > 1):
        raise ValueError("points must lie in (0, 1]")
    k = grid.array
    h = np.diff(k)
    m = grid._second_derivative_map
    n_k = len(k)
    eye = np.eye(n_k)

    j = np.clip(np.searchsorted(k, x, side="right") - 1, 0, n_k - 2)
    hj = h[j]
    a = (k[j + 1] - x) / hj
    b = (x - k[j]) / hj
    basis = (
        a[:, None] * eye[j]
        + b[:, None] * eye[j + 1]
        + ((a**3 - a) * hj**2 / 6.0)[:, None] * m[j]
        + ((b**3 - b) * hj**2 / 6.0)[:, None] * m[j + 1]
    )

    below = x < k[0]
    if np.any(below):
        # value and slope at the first knot, with M[0] = 0
        slope = (eye[1] - eye[0]) / h[0] - h[0] / 6.0 * m[1]
        basis[below] = eye[0] + (x[below] - k[0])[:, None] * slope

    exact = np.searchsorted(k, x)
    on_knot = (exact < n_k) & (k[np.minimum(exact, n_k - 1)] == x)
    basis[on_knot] = eye[exact[on_knot]]
    return basis


def penalty_matrix(grid: KnotGrid) -> np.ndarray:
    """Matrix S with c @ S @ c equal to the integral of the squared second derivative."""
    q, r = _q_r(grid.array)
    s = q @ np.linalg.solve(r, q.T)
    return 0.5 * (s + s.T)


@dataclass(frozen=True)
class ExposureCurve:
    grid: KnotGrid
    coefficients: tuple
    scale: str = "linear"
    label: str = field(default="", compare=False)

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coefs)
        if len(coefs) != len(self.grid):
            raise ValueError(
                f"{len(coefs)} coefficients for a grid of {len(self.grid)} knots"
            )
        if self.scale not in ("linear", "log"):
            raise ValueError(f"unknown curve scale {self.scale!r}")

    @classmethod
    def identity(cls, grid: KnotGrid) -> "ExposureCurve":
        return cls(grid, grid.knots, "linear", "identity")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coefficients)

    def spline(self, t) -> np.ndarray:
        """The underlying spline (log gamma for log-scale curves)."""
        return build_basis(t, self.grid) @ self.array

    def __call__(self, t):
        values = self.spline(t)
        if self.scale == "log":
            values = np.exp(values)
        if np.ndim(t) == 0:
            return float(values[0])
        return values

    def to_dict(self) -> dict:
        return {
            "knots": list(self.grid.knots),
            "coefficients": list(self.coefficients),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExposureCurve":
        return cls(KnotGrid(tuple(data["knots"])), tuple(data["coefficients"]), data["scale"])


def evaluate(curve: ExposureCurve, t: float) -> float:
    if not 0.0 < t <= 1.0:
        raise ValueError(f"exposure {t} outside (0, 1]")
    return curve(t)


def normalize(curve: ExposureCurve) -> ExposureCurve:
    """Rescale so the curve equals 1 at a full year of exposure."""
    at_one = curve(1.0)
    if not at_one > 0:
        raise ValueError(f"curve is not normalizable: value {at_one} at t = 1")
    if curve.scale == "log":
        coefs = curve.array - curve.coefficients[-1]
    else:
        coefs = curve.array / at_one
    return ExposureCurve(curve.grid, tuple(coefs), curve.scale, curve.label)
