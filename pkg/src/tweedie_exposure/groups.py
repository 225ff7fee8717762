"""Group-specific exposure curves split by BMS level.

The mean is ``exp(x @ beta + f_k(t))`` with shared ``beta`` and one log-scale
spline ``f_k`` per group, each pinned to ``f_k(1) = 0`` and carrying its own
curvature penalty.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from tweedie_exposure.fitting import (
    FitError,
    FitResult,
    FitSpec,
    PenalizedTweedie,
    Scheme,
    _log_curve,
    compute_weights,
    design_matrix,
    spline_block,
)
from tweedie_exposure.penalty import default_grid
from tweedie_exposure.portfolio import BMS_LEVELS, Portfolio

log = logging.getLogger(__name__)

CUTS = tuple(range(95, 104))
MAX_FAILURE_RATE = 0.10


def groups_from_cut(cut: int) -> tuple:
    """BMS levels of group 1 (levels at or below ``cut``)."""
    return tuple(level for level in BMS_LEVELS if level <= cut)


def _group_labels(portfolio: Portfolio, group_one: Sequence[int]) -> np.ndarray:
    return np.where(np.isin(portfolio.bms, group_one), 1, 2)


def fit_group_splines(portfolio: Portfolio, spec: FitSpec, group_one: Sequence[int], lam=None) -> FitResult:
    """Shared-coefficient fit with separate exposure curves for two BMS groups.

    ``group_one`` lists the BMS levels of group 1; all other levels form
    group 2. ``lam`` fixes the two smoothing parameters; otherwise both are
    chosen jointly by GCV.
    """
    if spec.scheme not in (Scheme.CWM, Scheme.EWM):
        raise FitError("group splines support the CWM and EWM weighting schemes")
    labels = _group_labels(portfolio, group_one)
    for k in (1, 2):
        if not np.any(labels == k):
            raise FitError(f"group {k} is empty")
    X, names = design_matrix(portfolio, spec.columns)
    B, S = spline_block(portfolio.exposure, spec.grid)
    p, q = X.shape[1], B.shape[1]
    full = np.hstack([X, B * (labels == 1)[:, None], B * (labels == 2)[:, None]])
    pens = []
    for k in range(2):
        pen = np.zeros((p + 2 * q,) * 2)
        lo = p + k * q
        pen[lo:lo + q, lo:lo + q] = S
        pens.append(pen)
    weights = compute_weights(spec.scheme, portfolio.exposure, None, spec.power)
    problem = PenalizedTweedie(full, portfolio.loss, weights, None, pens, spec.power)
    if lam is None and spec.ridge_lambda is not None:
        lam = (spec.ridge_lambda,) * 2
    res = problem.solve(lam, spec.lambda_grid, spec.max_iter, min(spec.tol, 1e-9))
    curves = tuple(
        _log_curve(spec.grid, res.beta[p + k * q:p + (k + 1) * q], f"group {k + 1}") for k in range(2)
    )
    return FitResult(
        scheme=spec.scheme,
        power=spec.power,
        names=names,
        beta=res.beta[:p],
        curve=curves[0],
        deviance_train=res.deviance,
        converged=res.converged,
        trace=res.trace,
        lam=res.lam,
        edf=res.edf,
        message="" if res.converged else f"no convergence after {res.iterations} iterations",
        irls_trace=res.trace,
        group_curves=curves,
        group_one_levels=tuple(int(v) for v in group_one),
    )


def curve_difference(fit: FitResult, grid_t) -> np.ndarray:
    f1, f2 = fit.group_curves
    return f1.spline(grid_t) - f2.spline(grid_t)


def exposure_density(exposure, grid_t) -> np.ndarray:
    """Share of contracts per grid cell ``[t[k-1], t[k])``; the last cell includes 1."""
    edges = np.concatenate(([0.0], grid_t))
    counts, _ = np.histogram(exposure, bins=edges)
    return counts / counts.sum()


def cut_score(fit: FitResult, exposure, grid_t=None) -> float:
    """Exposure-weighted integrated squared difference of the two log curves."""
    grid_t = default_grid() if grid_t is None else np.asarray(grid_t, dtype=float)
    diff = curve_difference(fit, grid_t)
    return float(np.sum(exposure_density(exposure, grid_t) * diff**2))


@dataclass
class CutSearch:
    best: int
    scores: dict
    skipped: list
    fits: dict


def _score_cut(args):
    portfolio, spec, cut = args
    fit = fit_group_splines(portfolio, spec, groups_from_cut(cut))
    return cut, cut_score(fit, portfolio.exposure), fit


def _map(func, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def search_cutpoint(portfolio: Portfolio, spec: FitSpec, cuts: Sequence[int] = CUTS, jobs: int = 1) -> CutSearch:
    """Score each BMS cut by how far apart the two group curves are; pick the largest."""
    present = set(np.unique(portfolio.bms).tolist())
    if len(present) < 2:
        raise FitError("cut-point search needs at least two distinct BMS levels")
    usable, skipped = [], []
    for cut in cuts:
        below = any(level <= cut for level in present)
        above = any(level > cut for level in present)
        (usable if below and above else skipped).append(cut)
    for cut in skipped:
        log.info("cut %d skipped: one group is empty", cut)
    results = _map(_score_cut, [(portfolio, spec, c) for c in usable], jobs)
    scores = {cut: score for cut, score, _ in results}
    fits = {cut: fit for cut, _, fit in results}
    # strict comparison keeps the smallest cut on exact ties
    best = None
    for cut in usable:
        if best is None or scores[cut] > scores[best]:
            best = cut
    return CutSearch(best, scores, skipped, fits)


@dataclass
class BootstrapBand:
    grid_t: np.ndarray
    estimate: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    replicates: int
    failures: int

    def zero_inside(self, width: float = 2.0) -> np.ndarray:
        return np.abs(self.estimate) <= width * self.se

    def to_rows(self):
        for row in zip(self.grid_t, self.estimate, self.mean, self.se):
            yield tuple(float(v) for v in row)


def _bootstrap_one(args):
    portfolio, spec, group_one, lam, seed_seq = args
    rng = np.random.default_rng(seed_seq)
    labels = _group_labels(portfolio, group_one)
    index = []
    for k in (1, 2):
        members = np.flatnonzero(labels == k)
        index.append(rng.choice(members, size=members.size, replace=True))
    sample = portfolio.subset(np.sort(np.concatenate(index)))
    try:
        fit = fit_group_splines(sample, spec, group_one, lam=lam)
    except (FitError, np.linalg.LinAlgError) as exc:
        return None, str(exc)
    return fit, ""


def bootstrap_curve_difference(
    portfolio: Portfolio,
    spec: FitSpec,
    group_one: Sequence[int],
    B: int = 100,
    seed: int = 0,
    grid_t=None,
    jobs: int = 1,
    reselect: bool = True,
) -> BootstrapBand:
    """Pointwise standard errors of ``f_1 - f_2`` by resampling contracts within groups.

    Replicate ``b`` draws from ``SeedSequence(seed).spawn(B)[b]``, so results do
    not depend on ``jobs``. With ``reselect`` each replicate reruns the GCV
    choice of smoothing parameters, so the band includes that variability;
    otherwise they stay at the full-sample choice.
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if B < 50:
        warnings.warn(f"B = {B} bootstrap replicates is too few for stable standard errors")
    grid_t = default_grid() if grid_t is None else np.asarray(grid_t, dtype=float)
    full = fit_group_splines(portfolio, spec, group_one)
    estimate = curve_difference(full, grid_t)
    lam = None if reselect else full.lam
    seeds = np.random.SeedSequence(seed).spawn(B)
    outcomes = _map(_bootstrap_one, [(portfolio, spec, tuple(group_one), lam, s) for s in seeds], jobs)
    diffs, failures = [], 0
    for fit, error in outcomes:
        if fit is None:
            failures += 1
            log.warning("bootstrap refit failed: %s", error)
        else:
            diffs.append(curve_difference(fit, grid_t))
    if failures > MAX_FAILURE_RATE * B:
        raise FitError(f"{failures} of {B} bootstrap refits failed")
    diffs = np.asarray(diffs)
    se = diffs.std(axis=0, ddof=1 if len(diffs) > 1 else 0)
    return BootstrapBand(grid_t, estimate, diffs.mean(axis=0), se, len(diffs), failures)


def default_jobs() -> int:
    return max(1, min(4, os.cpu_count() or 1))
