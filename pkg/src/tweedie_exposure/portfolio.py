"""Portfolio data: records, CSV I/O, stratified splits, simulation, summaries.

CSV schema (UTF-8, comma separated, ``.`` decimal, one header line)::

    exposure,x1,x2,x3,x4,x5,bms,loss_cost,claim_count,contract_type

``claim_count`` may be empty. ``contract_type`` is ``XX`` exactly when
``exposure == 1`` and ``XO`` otherwise.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from tweedie_exposure.tweedie import check_power, sample_compound

log = logging.getLogger(__name__)

COLUMNS = ("exposure", "x1", "x2", "x3", "x4", "x5", "bms", "loss_cost", "claim_count", "contract_type")
COVARIATES = ("x1", "x2", "x3", "x4", "x5")
BMS_LEVELS = tuple(range(95, 105))
BMS_REFERENCE = 100

# Synthetic defaults: intercept, x1..x5, then the BMS slope.
DEFAULT_BETA = (-1.0, 0.2, -0.2, 0.5, 0.3, -0.1, 0.1)
# Mass at the favourable end of the scale, thinning out above the entry level.
DEFAULT_BMS_PROBS = (0.30, 0.08, 0.08, 0.08, 0.10, 0.16, 0.06, 0.05, 0.05, 0.04)


class DataError(ValueError):
    """Invalid portfolio content."""

    def __init__(self, message: str, errors: Sequence[tuple[int, str]] = ()):
        super().__init__(message)
        self.errors = list(errors)


@dataclass(frozen=True)
class PolicyRecord:
    exposure: float
    covariates: tuple
    bms_level: int
    loss_cost: float
    claim_count: Optional[int] = None

    @property
    def contract_type(self) -> str:
        return "XX" if self.exposure == 1.0 else "XO"


@dataclass
class Portfolio:
    """Columnar container; arrays are treated as read-only after creation."""

    exposure: np.ndarray
    x: np.ndarray
    bms: np.ndarray
    loss: np.ndarray
    claims: Optional[np.ndarray] = None

    def __post_init__(self):
        self.exposure = np.asarray(self.exposure, dtype=float).reshape(-1)
        n = self.exposure.size
        self.x = np.asarray(self.x, dtype=float).reshape(n, len(COVARIATES))
        self.bms = np.asarray(self.bms, dtype=int).reshape(-1)
        self.loss = np.asarray(self.loss, dtype=float).reshape(-1)
        if self.claims is not None:
            self.claims = np.asarray(self.claims, dtype=int).reshape(-1)
        problems = validate_rows(self.exposure, self.bms, self.loss, self.claims)
        if problems:
            raise DataError(f"{len(problems)} invalid record(s); first: {problems[0][1]}", problems)

    def __len__(self):
        return self.exposure.size

    @classmethod
    def empty(cls) -> "Portfolio":
        return cls(np.zeros(0), np.zeros((0, 5)), np.zeros(0, int), np.zeros(0), np.zeros(0, int))

    @classmethod
    def from_records(cls, records: Sequence[PolicyRecord]) -> "Portfolio":
        if not records:
            return cls.empty()
        has_claims = all(r.claim_count is not None for r in records)
        return cls(
            exposure=[r.exposure for r in records],
            x=[r.covariates for r in records],
            bms=[r.bms_level for r in records],
            loss=[r.loss_cost for r in records],
            claims=[r.claim_count for r in records] if has_claims else None,
        )

    @property
    def is_xx(self) -> np.ndarray:
        return self.exposure == 1.0

    @property
    def contract_type(self) -> np.ndarray:
        return np.where(self.is_xx, "XX", "XO")

    def records(self) -> Iterator[PolicyRecord]:
        for i in range(len(self)):
            yield PolicyRecord(
                float(self.exposure[i]),
                tuple(float(v) for v in self.x[i]),
                int(self.bms[i]),
                float(self.loss[i]),
                None if self.claims is None else int(self.claims[i]),
            )

    def subset(self, index) -> "Portfolio":
        return Portfolio(
            self.exposure[index],
            self.x[index],
            self.bms[index],
            self.loss[index],
            None if self.claims is None else self.claims[index],
        )

    def equals(self, other: "Portfolio") -> bool:
        if (self.claims is None) != (other.claims is None):
            return False
        same = (
            np.array_equal(self.exposure, other.exposure)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.bms, other.bms)
            and np.array_equal(self.loss, other.loss)
        )
        return same and (self.claims is None or np.array_equal(self.claims, other.claims))


def validate_rows(exposure, bms, loss, claims=None) -> list[tuple[int, str]]:
    """Index-tagged problems; an empty list means every row is valid."""
    problems = []
    bad_t = ~((exposure > 0) & (exposure <= 1))
    bad_bms = (bms < BMS_LEVELS[0]) | (bms > BMS_LEVELS[-1])
    bad_loss = ~(loss >= 0)
    for i in np.flatnonzero(bad_t | bad_bms | bad_loss):
        if bad_t[i]:
            problems.append((int(i), f"exposure {exposure[i]} outside (0, 1]"))
        if bad_bms[i]:
            problems.append((int(i), f"BMS level {bms[i]} outside [95, 104]"))
        if bad_loss[i]:
            problems.append((int(i), f"negative loss cost {loss[i]}"))
    if claims is not None:
        for i in np.flatnonzero((claims < 0) | ((loss > 0) & (claims < 1))):
            problems.append((int(i), f"loss {loss[i]} with claim count {claims[i]}"))
    return problems


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt(value: float) -> str:
    # repr round-trips floats exactly
    return repr(float(value))


def write_csv(portfolio: Portfolio, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        types = portfolio.contract_type
        for i in range(len(portfolio)):
            claims = "" if portfolio.claims is None else str(int(portfolio.claims[i]))
            writer.writerow(
                [_fmt(portfolio.exposure[i])]
                + [_fmt(v) for v in portfolio.x[i]]
                + [str(int(portfolio.bms[i])), _fmt(portfolio.loss[i]), claims, types[i]]
            )


def load_csv(path, strict: bool = True) -> Portfolio:
    """Read a portfolio CSV.

    In strict mode any invalid row raises :class:`DataError` listing every
    offending line; otherwise invalid rows are dropped and logged.
    """
    path = Path(path)
    rows, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: missing header")
        header = [h.strip() for h in header]
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        pos = {c: header.index(c) for c in COLUMNS}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                record = _parse_row(row, pos)
            except (ValueError, IndexError) as exc:
                errors.append((line_no, str(exc)))
                continue
            rows.append(record)

    if errors and strict:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in errors[:5])
        raise DataError(f"{path}: {len(errors)} invalid row(s): {detail}", errors)
    for ln, msg in errors:
        log.warning("%s line %d skipped: %s", path, ln, msg)
    if not rows:
        log.warning("%s holds no records", path)
        return Portfolio.empty()
    return Portfolio.from_records(rows)


def _parse_row(row, pos) -> PolicyRecord:
    t = float(row[pos["exposure"]])
    x = tuple(float(row[pos[c]]) for c in COVARIATES)
    bms = int(row[pos["bms"]])
    loss = float(row[pos["loss_cost"]])
    raw_claims = row[pos["claim_count"]].strip()
    claims = int(raw_claims) if raw_claims else None
    ctype = row[pos["contract_type"]].strip()
    if not (0.0 < t <= 1.0):
        raise ValueError(f"exposure {t} outside (0, 1]")
    if not (BMS_LEVELS[0] <= bms <= BMS_LEVELS[-1]):
        raise ValueError(f"BMS level {bms} outside [95, 104]")
    if not loss >= 0:
        raise ValueError(f"negative loss cost {loss}")
    if claims is not None and (claims < 0 or (loss > 0 and claims < 1)):
        raise ValueError(f"loss {loss} with claim count {claims}")
    expected = "XX" if t == 1.0 else "XO"
    if ctype != expected:
        raise ValueError(f"contract type {ctype!r} inconsistent with exposure {t}")
    return PolicyRecord(t, x, bms, loss, claims)


# ---------------------------------------------------------------------------
# Train / test split
# ---------------------------------------------------------------------------

def split(portfolio: Portfolio, train_fraction: float = 0.75, seed: int = 0):
    """Random train/test partition stratified by contract type."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train fraction must lie in (0, 1)")
    n = len(portfolio)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DataError(f"portfolio of {n} records is too small to split at {train_fraction}")

    rng = np.random.default_rng(seed)
    strata = [np.flatnonzero(portfolio.is_xx), np.flatnonzero(~portfolio.is_xx)]
    # largest-remainder allocation keeps the total at n_train exactly
    quotas = [train_fraction * len(s) for s in strata]
    alloc = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(strata)), key=lambda k: -(quotas[k] - alloc[k]))
    for k in order[: n_train - sum(alloc)]:
        alloc[k] += 1

    train_idx, test_idx = [], []
    for members, take in zip(strata, alloc):
        perm = rng.permutation(members)
        train_idx.append(perm[:take])
        test_idx.append(perm[take:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return portfolio.subset(train_idx), portfolio.subset(test_idx)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExposureLaw:
    """Named true exposure effect: ``identity``, ``power`` (t**alpha) or ``scurve``.

    ``scurve`` is t**kappa / (t**kappa + (1 - t)**kappa) scaled to one at t = 1,
    i.e. a logistic-in-log-odds ramp.
    """

    name: str = "identity"
    param: float = 1.0

    def __post_init__(self):
        if self.name not in ("identity", "power", "scurve"):
            raise ValueError(f"unknown exposure law {self.name!r}")
        if self.name != "identity" and not self.param > 0:
            raise ValueError("exposure law parameter must be positive")

    @classmethod
    def parse(cls, text: str) -> "ExposureLaw":
        name, _, param = text.partition(":")
        if name == "identity":
            return cls("identity", 1.0)
        return cls(name, float(param))

    def __str__(self):
        return "identity" if self.name == "identity" else f"{self.name}:{self.param:g}"

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "identity":
            return t.copy()
        if self.name == "power":
            return t**self.param
        k = self.param
        with np.errstate(divide="ignore"):
            return t**k / (t**k + (1.0 - t) ** k)

    def log(self, t):
        return np.log(self(t))


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    beta_true: tuple = DEFAULT_BETA
    delta: ExposureLaw = ExposureLaw("power", 0.6)
    xo_fraction: float = 0.35
    phi: float = 1.0
    power: float = 1.42
    seed: int = 0
    exposure_beta: tuple = (2.0, 2.0)
    exposure_range: tuple = (0.02, 0.98)
    bms_probs: tuple = DEFAULT_BMS_PROBS
    # XO contracts at high BMS levels get this extra log-mean loading
    xo_loading: float = 0.0
    # optional second exposure law for levels above ``delta_cut``
    delta_high: Optional[ExposureLaw] = None
    delta_cut: int = 99
    block_size: int = field(default=65536, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if len(self.beta_true) != len(COVARIATES) + 2:
            raise ValueError("beta_true needs intercept, 5 covariates and the BMS slope")
        if not 0.0 <= self.xo_fraction <= 1.0:
            raise ValueError("xo_fraction must lie in [0, 1]")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        check_power(self.power)
        if len(self.bms_probs) != len(BMS_LEVELS) or abs(sum(self.bms_probs) - 1) > 1e-9:
            raise ValueError("bms_probs must give 10 probabilities summing to 1")

    def true_mean(self, exposure, x, bms) -> np.ndarray:
        beta = np.asarray(self.beta_true)
        eta = beta[0] + x @ beta[1:6] + beta[6] * (bms - BMS_REFERENCE)
        log_delta = self.delta.log(exposure)
        if self.delta_high is not None:
            high = bms > self.delta_cut
            log_delta = np.where(high, self.delta_high.log(exposure), log_delta)
        return np.exp(eta + log_delta)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "beta_true": dict(zip(("intercept",) + COVARIATES + ("bms",), self.beta_true)),
            "delta": str(self.delta),
            "delta_high": None if self.delta_high is None else str(self.delta_high),
            "delta_cut": self.delta_cut,
            "xo_fraction": self.xo_fraction,
            "phi": self.phi,
            "power": self.power,
            "seed": self.seed,
            "exposure_beta": list(self.exposure_beta),
            "exposure_range": list(self.exposure_range),
            "bms_probs": list(self.bms_probs),
            "xo_loading": self.xo_loading,
        }


def simulate(spec: SyntheticSpec) -> Portfolio:
    """Draw a synthetic portfolio.

    Records are generated in fixed-size blocks, block ``b`` using the
    ``b``-th child of ``SeedSequence(spec.seed)``; the output depends only on
    the spec, never on how blocks are scheduled.
    """
    if spec.n == 0:
        return Portfolio.empty()
    n_blocks = -(-spec.n // spec.block_size)
    children = np.random.SeedSequence(spec.seed).spawn(n_blocks)
    parts = []
    for b, child in enumerate(children):
        size = min(spec.block_size, spec.n - b * spec.block_size)
        parts.append(_simulate_block(spec, size, np.random.default_rng(child)))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return Portfolio(*cols)


def _simulate_block(spec: SyntheticSpec, size: int, rng: np.random.Generator):
    x = (rng.random((size, len(COVARIATES))) < 0.5).astype(float)
    bms = rng.choice(np.array(BMS_LEVELS), size=size, p=np.asarray(spec.bms_probs))
    xo = rng.random(size) < spec.xo_fraction
    lo, hi = spec.exposure_range
    t_xo = lo + (hi - lo) * rng.beta(*spec.exposure_beta, size=size)
    exposure = np.where(xo, t_xo, 1.0)
    mu = spec.true_mean(exposure, x, bms)
    if spec.xo_loading:
        mu = mu * np.exp(spec.xo_loading * xo)
    claims, loss = sample_compound(mu, spec.phi, 1.0, spec.power, rng)
    return exposure, x, bms, loss, claims


# ---------------------------------------------------------------------------
# Exploratory summaries
# ---------------------------------------------------------------------------

def _ratio(num, den):
    return float(num / den) if den > 0 else float("nan")


def exploratory_summary(portfolio: Portfolio, bin_width: float = 0.05) -> dict:
    """Frequency/severity by contract type, exposure bins and BMS levels.

    Exposure bins cover (0, 1) in steps of ``bin_width``; full-year contracts
    form their own row at exposure 1.
    """
    if len(portfolio) == 0:
        raise DataError("cannot summarise an empty portfolio")
    t, y = portfolio.exposure, portfolio.loss
    has_claims = portfolio.claims is not None
    out: dict = {"n": len(portfolio), "has_claim_counts": has_claims, "notices": []}

    by_type = {}
    for label, mask in (("XX", portfolio.is_xx), ("XO", ~portfolio.is_xx), ("all", np.ones(len(t), bool))):
        row = {
            "count": int(mask.sum()),
            "exposure": float(t[mask].sum()),
            "mean_loss_cost": _ratio(y[mask].sum(), mask.sum()),
            "annualized_loss_cost": _ratio(y[mask].sum(), t[mask].sum()),
        }
        if has_claims:
            n_claims = portfolio.claims[mask].sum()
            row["claims"] = int(n_claims)
            row["frequency"] = _ratio(n_claims, t[mask].sum())
            row["severity"] = _ratio(y[mask].sum(), n_claims)
            row["decomposition_ok"] = _decomposition_holds(row)
            # average cost per claim of each claiming contract
            hit = mask & (portfolio.claims > 0)
            row["per_claim_cost_mean"] = _ratio((y[hit] / portfolio.claims[hit]).sum(), hit.sum())
        by_type[label] = row
    if not has_claims:
        out["notices"].append("claim counts absent: frequency and severity skipped")
    out["by_contract_type"] = by_type

    edges = np.arange(0.0, 1.0 + 1e-12, bin_width)
    bins = []
    xo_t = t[~portfolio.is_xx]
    xo_y = y[~portfolio.is_xx]
    idx = np.minimum((xo_t / bin_width).astype(int), len(edges) - 2)
    for b in range(len(edges) - 1):
        m = idx == b
        bins.append(_bin_row(edges[b], edges[b + 1], xo_t[m], xo_y[m]))
    xx = portfolio.is_xx
    bins.append(_bin_row(1.0, 1.0, t[xx], y[xx]))
    out["exposure_bins"] = bins

    levels = []
    for level in BMS_LEVELS:
        m = portfolio.bms == level
        row = {
            "bms": level,
            "count": int(m.sum()),
            "xo_proportion": _ratio((m & ~xx).sum(), m.sum()),
            "annualized_loss_cost": _ratio(y[m].sum(), t[m].sum()),
            "annualized_loss_cost_xx": _ratio(y[m & xx].sum(), t[m & xx].sum()),
            "annualized_loss_cost_xo": _ratio(y[m & ~xx].sum(), t[m & ~xx].sum()),
        }
        levels.append(row)
    out["bms_levels"] = levels
    return out


def _bin_row(lo, hi, t, y):
    return {
        "lower": float(lo),
        "upper": float(hi),
        "count": int(t.size),
        "mean_exposure": _ratio(t.sum(), t.size),
        "mean_loss_cost": _ratio(y.sum(), t.size),
        "annualized_loss_cost": _ratio(y.sum(), t.sum()),
    }


def _decomposition_holds(row) -> bool:
    if row["claims"] == 0:
        return row["annualized_loss_cost"] == 0 or math.isnan(row["annualized_loss_cost"])
    lhs = row["annualized_loss_cost"]
    rhs = row["frequency"] * row["severity"]
    return abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))
