"""Penalized IRLS fitting of traditional and flexible Tweedie premium models.

All models share a log link and the linear predictor

    eta = intercept + x @ beta + beta_bms * (bms - 100) + log gamma(t)

Traditional schemes fix ``log gamma(t) = log t`` as an offset. Flexible
schemes represent ``log gamma`` by a natural cubic spline in value-at-knot
form whose value at ``t = 1`` is pinned to zero, so ``gamma(1) = 1`` holds by
construction and the intercept carries the annual premium level.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from tweedie_exposure.portfolio import BMS_REFERENCE, COVARIATES, Portfolio
from tweedie_exposure.splines import ExposureCurve, KnotGrid, build_basis, penalty_matrix
from tweedie_exposure.tweedie import check_power, unit_deviance

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = COVARIATES + ("bms",)
LAMBDA_GRID = tuple(np.logspace(-4, 4, 20))
STEP_TOL = 1e-9


class FitError(RuntimeError):
    """Model cannot be fitted (rank deficiency, bad weights, empty groups)."""


class Scheme(str, Enum):
    OFFSET = "TraditionalOffset"
    RATIO = "TraditionalRatio"
    CWM = "CWM"
    GWM = "GWM"
    EWM = "EWM"

    @property
    def flexible(self) -> bool:
        return self in (Scheme.CWM, Scheme.GWM, Scheme.EWM)

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        if isinstance(name, cls):
            return name
        short = {"offset": cls.OFFSET, "ratio": cls.RATIO, "cwm": cls.CWM, "gwm": cls.GWM, "ewm": cls.EWM}
        key = str(name).strip()
        if key.lower() in short:
            return short[key.lower()]
        return cls(key)

    @property
    def short(self) -> str:
        return {"TraditionalOffset": "offset", "TraditionalRatio": "ratio"}.get(self.value, self.value.lower())


@dataclass(frozen=True)
class FitSpec:
    scheme: Scheme = Scheme.EWM
    power: float = 1.42
    grid: KnotGrid = field(default_factory=KnotGrid.default)
    ridge_lambda: Optional[float] = None  # None selects by GCV
    max_iter: int = 100
    tol: float = 1e-6
    columns: tuple = DEFAULT_COLUMNS
    lambda_grid: tuple = LAMBDA_GRID

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        check_power(self.power)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.ridge_lambda is not None and self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")
        unknown = set(self.columns) - set(DEFAULT_COLUMNS)
        if unknown:
            raise ValueError(f"unknown covariate columns {sorted(unknown)}")


# ---------------------------------------------------------------------------
# Weights and design
# ---------------------------------------------------------------------------

def compute_weights(scheme, exposures, curve: Optional[ExposureCurve], power: float) -> np.ndarray:
    """Prior weights omega(t) for a weighting scheme."""
    scheme = Scheme.parse(scheme)
    t = np.asarray(exposures, dtype=float)
    if scheme in (Scheme.OFFSET, Scheme.CWM):
        return np.ones_like(t)
    if scheme in (Scheme.RATIO, Scheme.EWM):
        return t ** (power - 1.0)
    if curve is None:
        raise FitError("GWM weights need an exposure curve")
    # exposures below the first knot are clipped for weights only
    tc = np.maximum(t, curve.grid.knots[0])
    gamma = np.atleast_1d(curve(tc))
    at_one = curve(1.0)
    bad = ~(gamma > 0)
    if bad.any() or not at_one > 0:
        first = t[np.flatnonzero(bad)[0]] if bad.any() else 1.0
        raise FitError(f"GWM weight undefined: gamma({first}) is not positive")
    return (gamma / at_one) ** (power - 1.0)


def design_matrix(portfolio: Portfolio, columns: Sequence[str] = DEFAULT_COLUMNS):
    names = ["intercept"]
    cols = [np.ones(len(portfolio))]
    for name in columns:
        if name == "bms":
            cols.append(portfolio.bms - float(BMS_REFERENCE))
        else:
            cols.append(portfolio.x[:, COVARIATES.index(name)])
        names.append(name)
    return np.column_stack(cols), names


def spline_block(exposure, grid: KnotGrid):
    """Basis columns and penalty for log gamma with the value at t = 1 pinned to 0."""
    basis = build_basis(exposure, grid)[:, :-1]
    pen = penalty_matrix(grid)[:-1, :-1]
    return basis, pen


# ---------------------------------------------------------------------------
# Penalized IRLS
# ---------------------------------------------------------------------------

@dataclass
class IRLSResult:
    beta: np.ndarray
    lam: tuple
    deviance: float
    penalized: float
    edf: float
    converged: bool
    iterations: int
    trace: list


class PenalizedTweedie:
    """Weighted Tweedie deviance plus quadratic curvature penalties, log link.

    Prior weights are rescaled to unit mean so the objective, and therefore
    the estimates, do not depend on the overall scale of the weights.
    """

    def __init__(self, X, y, weights, offset, penalties: Sequence[np.ndarray], power: float):
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise FitError("prior weights must be finite and positive")
        self.weights = w / w.mean()
        self.offset = np.zeros(len(self.y)) if offset is None else np.asarray(offset, dtype=float)
        self.penalties = [np.asarray(p, dtype=float) for p in penalties]
        self.power = check_power(power)
        n, k = self.X.shape
        if n == 0:
            raise FitError("no observations")
        if np.linalg.matrix_rank(self.X) < k:
            raise FitError(f"design matrix is rank deficient ({k} columns)")

    # objective pieces ---------------------------------------------------
    def mean(self, beta) -> np.ndarray:
        return np.exp(self.X @ beta + self.offset)

    def penalty_matrix(self, lam) -> np.ndarray:
        k = self.X.shape[1]
        total = np.zeros((k, k))
        for l, p in zip(lam, self.penalties):
            total += l * p
        return total

    def deviance(self, beta) -> float:
        return float(np.sum(self.weights * unit_deviance(self.y, self.mean(beta), self.power)))

    def objective(self, beta, lam) -> float:
        return self.deviance(beta) + float(beta @ self.penalty_matrix(lam) @ beta)

    def gradient(self, beta, lam) -> np.ndarray:
        mu = self.mean(beta)
        score = self.weights * mu ** (1.0 - self.power) * (self.y - mu)
        return -2.0 * self.X.T @ score + 2.0 * self.penalty_matrix(lam) @ beta

    def _working(self, mu):
        eta = np.log(mu)
        W = self.weights * mu ** (2.0 - self.power)
        z = eta - self.offset + (self.y - mu) / mu
        XtW = self.X.T * W
        return XtW @ self.X, XtW @ z, float(np.sum(W * z * z))

    @staticmethod
    def _solve(M, b):
        try:
            return cho_solve(cho_factor(M), b)
        except LinAlgError:
            return np.linalg.solve(M, b)

    def _start_mean(self):
        ybar = np.average(self.y, weights=self.weights)
        if not ybar > 0:
            raise FitError("all loss costs are zero; the mean is not identifiable")
        return 0.5 * (self.y + ybar)

    # GCV ------------------------------------------------------------------
    def _gcv_pick(self, A, b, c, candidates):
        n = len(self.y)
        best = None
        for lam in candidates:
            M = A + self.penalty_matrix(lam)
            beta = self._solve(M, b)
            rss = c - 2.0 * beta @ b + beta @ A @ beta
            edf = float(np.trace(self._solve(M, A)))
            score = n * max(rss, 0.0) / (n - edf) ** 2
            if best is None or score < best[0]:
                best = (score, lam, beta)
        return best[1], best[2]

    def select_lambda(self, grid: Sequence[float], max_iter: int = 50, beta0=None) -> tuple:
        """GCV choice of smoothing parameters by performance iteration.

        Each step scores every grid combination on the current working
        linear model and moves to the best one, until the choice repeats and
        the deviance settles.
        """
        if not self.penalties:
            return (), beta0
        candidates = list(itertools.product(grid, repeat=len(self.penalties)))
        mu = self._start_mean() if beta0 is None else self.mean(beta0)
        lam, beta, old_dev = None, None, np.inf
        for _ in range(max_iter):
            A, b, c = self._working(mu)
            new_lam, beta = self._gcv_pick(A, b, c, candidates)
            mu = self.mean(beta)
            dev = self.deviance(beta)
            settled = abs(old_dev - dev) < 1e-6 * (0.1 + abs(dev))
            if new_lam == lam and settled:
                break
            lam, old_dev = new_lam, dev
        return new_lam, beta

    # fixed-lambda fit -----------------------------------------------------
    def fit(self, lam=(), beta0=None, max_iter: int = 100, tol: float = 1e-8) -> IRLSResult:
        lam = tuple(lam)
        P = self.penalty_matrix(lam)
        if beta0 is None:
            mu = self._start_mean()
            beta = None
            current = np.inf
        else:
            beta = np.asarray(beta0, dtype=float)
            mu = self.mean(beta)
            current = self.objective(beta, lam)
        trace = []
        converged = False
        change = np.inf
        it = 0
        for it in range(1, max_iter + 1):
            A, b, _ = self._working(mu)
            candidate = self._solve(A + P, b)
            value = self.objective(candidate, lam)
            halvings = 0
            while beta is not None and not value <= current and halvings < 10:
                candidate = 0.5 * (beta + candidate)
                value = self.objective(candidate, lam)
                halvings += 1
            if halvings:
                log.debug("IRLS iteration %d: %d step halving(s)", it, halvings)
            if beta is not None and not value <= current:
                # no descent even after halving: stay put; after an already
                # negligible change this is the rounding floor, not a failure
                trace.append({"iteration": it, "penalized_deviance": current, "halvings": halvings})
                converged = change < tol
                break
            change = abs(current - value) / (0.1 + abs(value)) if np.isfinite(current) else np.inf
            step = np.inf if beta is None else float(np.max(np.abs(candidate - beta)))
            beta, current = candidate, value
            mu = self.mean(beta)
            trace.append({"iteration": it, "penalized_deviance": value, "halvings": halvings})
            # scoring converges linearly, so a flat objective alone stops early
            if change < tol and step < STEP_TOL * (1.0 + float(np.max(np.abs(beta)))):
                converged = True
                break
        A, _, _ = self._working(mu)
        edf = float(np.trace(self._solve(A + P, A)))
        return IRLSResult(beta, lam, self.deviance(beta), current, edf, converged, it, trace)

    def solve(self, lam=None, lambda_grid=LAMBDA_GRID, max_iter=100, tol=1e-8) -> IRLSResult:
        beta0 = None
        if lam is None:
            lam, beta0 = self.select_lambda(lambda_grid)
        return self.fit(lam, beta0=beta0, max_iter=max_iter, tol=tol)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


@dataclass
class FitResult:
    scheme: Scheme
    power: float
    names: list
    beta: np.ndarray
    curve: ExposureCurve
    deviance_train: float
    converged: bool
    trace: list
    lam: tuple = ()
    edf: float = float("nan")
    message: str = ""
    irls_trace: list = field(default_factory=list)
    # fixed offset schedule log(gamma_adj) for constrained refits
    offset_t: Optional[np.ndarray] = None
    offset_gamma: Optional[np.ndarray] = None
    offset_a: Optional[float] = None
    # group-specific log-scale curves f_1, f_2 and the BMS levels of group 1
    group_curves: Optional[tuple] = None
    group_one_levels: Optional[tuple] = None

    @property
    def beta_map(self) -> dict:
        return {name: float(b) for name, b in zip(self.names, self.beta)}

    @property
    def columns(self) -> tuple:
        return tuple(self.names[1:])

    def group_index(self, bms) -> np.ndarray:
        return np.where(np.isin(bms, self.group_one_levels), 1, 2)

    def log_gamma(self, exposure, bms=None) -> np.ndarray:
        t = np.asarray(exposure, dtype=float)
        if self.offset_t is not None:
            return np.log(interp_schedule(t, self.offset_t, self.offset_gamma))
        if self.group_curves is not None:
            g = self.group_index(bms)
            out = np.empty(t.shape)
            for k, curve in enumerate(self.group_curves, start=1):
                m = g == k
                if m.any():
                    out[m] = curve.spline(t[m])
            return out
        if not self.scheme.flexible:
            return np.log(t)
        return self.curve.spline(t)

    def annual_premium(self, portfolio: Portfolio) -> np.ndarray:
        X, _ = design_matrix(portfolio, self.columns)
        return np.exp(X @ self.beta)

    def predict(self, portfolio: Portfolio) -> np.ndarray:
        X, _ = design_matrix(portfolio, self.columns)
        return np.exp(X @ self.beta + self.log_gamma(portfolio.exposure, portfolio.bms))

    def weights(self, exposure) -> np.ndarray:
        return compute_weights(self.scheme, exposure, self.curve, self.power)

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "scheme": self.scheme.value,
            "power": self.power,
            "beta": self.beta_map,
            "knots": list(self.curve.grid.knots),
            "coefficients": list(self.curve.coefficients),
            "curve_scale": self.curve.scale,
            "lambda": list(self.lam),
            "edf": self.edf,
            "deviance_train": self.deviance_train,
            "converged": self.converged,
            "message": self.message,
            "trace": self.trace,
        }
        if self.offset_t is not None:
            out["offset"] = {
                "a": self.offset_a,
                "t": [float(v) for v in self.offset_t],
                "gamma": [float(v) for v in self.offset_gamma],
            }
        if self.group_curves is not None:
            out["groups"] = {
                "group_one_levels": [int(v) for v in self.group_one_levels],
                "coefficients": [list(c.coefficients) for c in self.group_curves],
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported fit schema version {data.get('schema_version')!r}")
        grid = KnotGrid(tuple(data["knots"]))
        curve = ExposureCurve(grid, tuple(data["coefficients"]), data["curve_scale"])
        result = cls(
            scheme=Scheme.parse(data["scheme"]),
            power=float(data["power"]),
            names=list(data["beta"].keys()),
            beta=np.array(list(data["beta"].values()), dtype=float),
            curve=curve,
            deviance_train=float(data["deviance_train"]),
            converged=bool(data["converged"]),
            trace=list(data["trace"]),
            lam=tuple(data.get("lambda", ())),
            edf=float(data.get("edf", float("nan"))),
            message=data.get("message", ""),
        )
        if "offset" in data:
            result.offset_a = data["offset"]["a"]
            result.offset_t = np.asarray(data["offset"]["t"], dtype=float)
            result.offset_gamma = np.asarray(data["offset"]["gamma"], dtype=float)
        if "groups" in data:
            result.group_one_levels = tuple(data["groups"]["group_one_levels"])
            result.group_curves = tuple(
                ExposureCurve(grid, tuple(c), "log") for c in data["groups"]["coefficients"]
            )
        return result


def interp_schedule(t, grid_t, gamma):
    """Piecewise-linear schedule through (0, 0) and the grid points."""
    t = np.asarray(t, dtype=float)
    return np.interp(t, np.concatenate(([0.0], grid_t)), np.concatenate(([0.0], gamma)))


# ---------------------------------------------------------------------------
# Public fitting entry points
# ---------------------------------------------------------------------------

def _check_portfolio(portfolio: Portfolio):
    if len(portfolio) == 0:
        raise FitError("cannot fit an empty portfolio")


def _log_curve(grid: KnotGrid, coefs, label="") -> ExposureCurve:
    return ExposureCurve(grid, tuple(np.append(coefs, 0.0)), "log", label)


def _fit_fixed_weights(portfolio, spec: FitSpec, weights, lam=None, beta0=None):
    X, names = design_matrix(portfolio, spec.columns)
    tol = min(spec.tol, 1e-9)
    if spec.scheme.flexible:
        B, S = spline_block(portfolio.exposure, spec.grid)
        k = X.shape[1]
        full = np.hstack([X, B])
        pen = np.zeros((full.shape[1],) * 2)
        pen[k:, k:] = S
        problem = PenalizedTweedie(full, portfolio.loss, weights, None, [pen], spec.power)
        if lam is None and spec.ridge_lambda is not None:
            lam = (spec.ridge_lambda,)
        res = problem.solve(lam, spec.lambda_grid, spec.max_iter, tol) if beta0 is None else \
            problem.fit(lam, beta0, spec.max_iter, tol)
        curve = _log_curve(spec.grid, res.beta[k:], spec.scheme.value)
        return res, names, res.beta[:k], curve, problem
    problem = PenalizedTweedie(X, portfolio.loss, weights, np.log(portfolio.exposure), [], spec.power)
    res = problem.fit((), None, spec.max_iter, tol)
    return res, names, res.beta, ExposureCurve.identity(spec.grid), problem


def fit(portfolio: Portfolio, spec: FitSpec) -> FitResult:
    """Fit one model; GWM is dispatched to :func:`fit_gwm`."""
    _check_portfolio(portfolio)
    if spec.scheme == Scheme.GWM:
        return fit_gwm(portfolio, spec)
    weights = compute_weights(spec.scheme, portfolio.exposure, None, spec.power)
    res, names, beta, curve, problem = _fit_fixed_weights(portfolio, spec, weights)
    message = "" if res.converged else f"no convergence after {res.iterations} iterations"
    return FitResult(
        scheme=spec.scheme,
        power=spec.power,
        names=names,
        beta=beta,
        curve=curve,
        deviance_train=res.deviance,
        converged=res.converged,
        trace=res.trace,
        lam=res.lam,
        edf=res.edf,
        message=message,
        irls_trace=res.trace,
    )


def fit_gwm(portfolio: Portfolio, spec: FitSpec) -> FitResult:
    """Gamma-weight model by fixed-point iteration on the exposure curve.

    Start from weights ``t``; refit with weights ``(s_k(t)/s_k(1))**(p-1)``
    until the knot values of successive curves agree to ``spec.tol``
    (relative). The smoothing parameter is chosen once, on the initial fit.
    Three successive increases of the weight change trigger one damped
    restart (half-steps on the weights); a second trigger aborts.
    """
    _check_portfolio(portfolio)
    spec = replace(spec, scheme=Scheme.GWM)
    t = portfolio.exposure
    res, names, beta, curve, _ = _fit_fixed_weights(portfolio, spec, t.copy())
    lam = res.lam
    trace = [_gwm_record(0, curve, None, None, lam)]
    weights = compute_weights(Scheme.GWM, t, curve, spec.power)
    knot_w = curve(curve.grid.array) ** (spec.power - 1.0)

    damping = 1.0
    rises = 0
    converged = False
    message = ""
    prev_change = None
    for k in range(1, spec.max_iter + 1):
        res, names, beta, new_curve, _ = _fit_fixed_weights(
            portfolio, spec, weights, lam=lam, beta0=res.beta
        )
        old_s = curve(curve.grid.array)
        new_s = new_curve(curve.grid.array)
        change = float(np.max(np.abs(new_s - old_s) / np.maximum(np.abs(old_s), 1e-8)))
        new_knot_w = new_s ** (spec.power - 1.0)
        w_change = float(np.max(np.abs(new_knot_w - knot_w)))
        trace.append(_gwm_record(k, new_curve, change, w_change, lam))
        curve, knot_w = new_curve, new_knot_w

        if change < spec.tol:
            converged = True
            break
        rises = rises + 1 if prev_change is not None and w_change > prev_change else 0
        prev_change = w_change
        if rises >= 3:
            if damping < 1.0:
                message = f"GWM oscillating: weight change rose 3 times in a row at iteration {k}"
                log.warning(message)
                break
            log.warning("GWM weight change rose 3 times; damping weight updates")
            damping, rises = 0.5, 0
        target = compute_weights(Scheme.GWM, t, curve, spec.power)
        weights = damping * target + (1.0 - damping) * weights
    else:
        message = f"GWM did not stabilise within {spec.max_iter} iterations"

    return FitResult(
        scheme=Scheme.GWM,
        power=spec.power,
        names=names,
        beta=beta,
        curve=curve,
        deviance_train=res.deviance,
        converged=converged and res.converged,
        trace=trace,
        lam=lam,
        edf=res.edf,
        message=message,
        irls_trace=res.trace,
    )


def _gwm_record(k, curve, change, w_change, lam):
    return {
        "iteration": k,
        "curve": list(curve.coefficients),
        "curve_change": change,
        "weight_change": w_change,
        "lambda": list(lam),
    }


def fit_with_offset(portfolio: Portfolio, spec: FitSpec, log_offset, weights):
    """Fit ``beta`` only, with a fixed offset and given prior weights."""
    _check_portfolio(portfolio)
    X, names = design_matrix(portfolio, spec.columns)
    problem = PenalizedTweedie(X, portfolio.loss, weights, log_offset, [], spec.power)
    return problem.fit((), None, spec.max_iter, min(spec.tol, 1e-9)), names
