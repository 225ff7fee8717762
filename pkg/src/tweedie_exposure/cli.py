"""Command-line front end: simulate, summary, fit, score, penalty, groupsplit, report.

Exit codes: 0 success, 1 data or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from tweedie_exposure import evaluation as ev
from tweedie_exposure import groups, penalty, plotting
from tweedie_exposure.fitting import FitError, FitResult, FitSpec, Scheme, fit
from tweedie_exposure.portfolio import (
    DataError,
    ExposureLaw,
    Portfolio,
    SyntheticSpec,
    exploratory_summary,
    load_csv,
    simulate,
    split,
    write_csv,
)
from tweedie_exposure.splines import KnotGrid

log = logging.getLogger("tweedie_exposure")

OUT_ENV = "TWEEDIE_EXPOSURE_OUT"
SCHEMES = ("offset", "ratio", "cwm", "gwm", "ewm")
DEFAULT_A = (0.0, 0.25, 0.5, 0.75, 1.0)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_table(out: Path, name: str, header: Sequence[str], rows: Iterable[Sequence], fmt: str) -> Path:
    rows = [list(r) for r in rows]
    if fmt == "json":
        path = out / f"{name}.json"
        records = [{h: _jsonable(v) for h, v in zip(header, r)} for r in rows]
        _dump_json(path, records)
        return path
    path = out / f"{name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for r in rows:
            writer.writerow([_num(v) for v in r])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def _dump_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=False)
        fh.write("\n")


def _load_fit(path) -> FitResult:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"fit file {path} not found")
    with open(path, encoding="utf-8") as fh:
        return FitResult.from_dict(json.load(fh))


def _load_data(path, lenient=False) -> Portfolio:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file {path} not found")
    return load_csv(path, strict=not lenient)


def _spec(args, scheme="ewm") -> FitSpec:
    return FitSpec(
        scheme=Scheme.parse(scheme),
        power=args.power,
        grid=args.grid,
        ridge_lambda=getattr(args, "lam", None),
        max_iter=getattr(args, "max_iter", 100),
        tol=getattr(args, "tol", 1e-6),
    )


def _partition(portfolio: Portfolio, args, tag: str) -> Portfolio:
    """The train or test part when ``--split`` is given, else everything."""
    if args.split is None:
        return portfolio
    train, test = split(portfolio, args.split, args.seed)
    return train if tag == "train" else test


def _curve_rows(fit: FitResult, grid_t):
    return zip(grid_t, np.exp(fit.log_gamma(grid_t)) if fit.group_curves is None else fit.curve(grid_t))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = SyntheticSpec(
        n=args.n,
        delta=ExposureLaw.parse(args.delta),
        delta_high=None if args.delta_high is None else ExposureLaw.parse(args.delta_high),
        delta_cut=args.delta_cut,
        xo_fraction=args.xo_fraction,
        phi=args.phi,
        power=args.power,
        seed=args.seed,
    )
    portfolio = simulate(spec)
    if len(portfolio) == 0:
        log.warning("n = 0: writing a header-only file")
    path = args.out / f"{args.name}.csv"
    write_csv(portfolio, path)
    _dump_json(args.out / f"{args.name}.truth.json", spec.to_dict())
    print(f"wrote {len(portfolio)} records to {path}")
    return 0


def cmd_summary(args) -> int:
    portfolio = _load_data(args.data, args.lenient)
    summary = exploratory_summary(portfolio)
    for notice in summary["notices"]:
        log.warning(notice)
    _dump_json(args.out / "summary.json", summary)
    bins = summary["exposure_bins"]
    write_table(args.out, "exposure_bins", list(bins[0].keys()), [r.values() for r in bins], args.format)
    levels = summary["bms_levels"]
    write_table(args.out, "bms_levels", list(levels[0].keys()), [r.values() for r in levels], args.format)
    print(f"summarised {summary['n']} records")
    return 0


def run_fits(portfolio: Portfolio, args, schemes) -> dict:
    fits = {}
    grid_t = penalty.default_grid()
    for name in schemes:
        result = fit(portfolio, _spec(args, name))
        if not result.converged:
            log.warning("%s: %s", result.scheme.value, result.message or "not converged")
        short = result.scheme.short
        fits[short] = result
        _dump_json(args.out / f"fit_{short}.json", result.to_dict())
        write_table(args.out, f"curve_{short}", ("t", "gamma"), _curve_rows(result, grid_t), args.format)
        if result.scheme == Scheme.GWM:
            write_table(
                args.out,
                "gwm_trace",
                ("iteration", "curve_change", "weight_change"),
                [(r["iteration"], r["curve_change"], r["weight_change"]) for r in result.trace],
                args.format,
            )
    names = next(iter(fits.values())).names
    rows = [[f.scheme.value] + list(f.beta) + [f.converged] for f in fits.values()]
    write_table(args.out, "coefficients", ["model"] + list(names) + ["converged"], rows, args.format)
    return fits


def cmd_fit(args) -> int:
    portfolio = _partition(_load_data(args.data, args.lenient), args, "train")
    schemes = SCHEMES if "all" in args.scheme else args.scheme
    fits = run_fits(portfolio, args, schemes)
    for short, f in fits.items():
        print(f"{f.scheme.value}: deviance {f.deviance_train:.6g} converged {f.converged}")
    return 0


def score_fits(fits: dict, portfolio: Portfolio, tag: str, out: Path, fmt: str, suffix: str = "") -> dict:
    mu_max = max(float(np.max(f.predict(portfolio))) for f in fits.values())
    m_grid = np.linspace(0.0, 1.05 * mu_max, 201)
    reports = {}
    for name, f in fits.items():
        rep = ev.score(f, portfolio, tag, m_grid, model=name)
        reports[name] = rep
        c = rep.curves
        step = max(1, len(c.theta) // 1000)
        keep = np.unique(np.append(np.arange(0, len(c.theta), step), len(c.theta) - 1))
        write_table(out, f"curves_{name}_{tag}{suffix}", ("theta", "cc", "lc"),
                    zip(c.theta[keep], c.cc[keep], c.lc[keep]), fmt)
    write_table(
        out, f"scores_{tag}{suffix}", ("model", "dataset", "deviance", "deviance_x100", "area", "abc"),
        [(r.model, tag, r.deviance, r.deviance_display, r.area, r.abc) for r in reports.values()], fmt,
    )
    header = ["m"] + [f"loss_{name}" for name in reports]
    rows = zip(m_grid, *[r.murphy for r in reports.values()])
    write_table(out, f"murphy_{tag}{suffix}", header, rows, fmt)
    return reports


def cmd_score(args) -> int:
    portfolio = _partition(_load_data(args.data, args.lenient), args, args.dataset)
    fits = {}
    for path in args.fits:
        f = _load_fit(path)
        fits[f.scheme.short if f.offset_a is None else f"{f.scheme.short}_a{f.offset_a:g}"] = f
    reports = score_fits(fits, portfolio, args.dataset, args.out, args.format)
    _dump_json(args.out / f"score_{args.dataset}.json", {k: r.to_dict() for k, r in reports.items()})
    for name, r in reports.items():
        print(f"{name}: deviance x100 {r.deviance_display:.4f} area {r.area:.5f}")
    return 0


def run_penalty(fit_result: FitResult, train: Portfolio, test: Portfolio, args, levels) -> dict:
    if not fit_result.scheme.flexible or fit_result.group_curves is not None:
        raise FitError("penalty schedules need a single flexible exposure curve")
    base = penalty.constrain(fit_result.curve)
    base = penalty.PenaltySchedule(base.grid_t, base.gamma_con, 1.0, fit_result.beta_map)
    spec = _spec(args, fit_result.scheme.value)
    out = args.out
    schedules, refits = {}, {}
    for a in levels:
        sched = penalty.adjust(base, a)
        schedules[a] = sched
        _dump_json(out / f"schedule_a{a:g}.json", sched.to_dict())
        refit = penalty.refit_with_offset(train, sched, spec, fit_result.curve)
        refits[a] = refit
        _dump_json(out / f"fit_{refit.scheme.short}_a{a:g}.json", refit.to_dict())
    t = base.grid_t
    header = ["t"] + [f"gamma_adj_a{a:g}" for a in levels] + [f"penalty_share_a{a:g}" for a in levels]
    rows = zip(t, *[schedules[a].gamma_con for a in levels], *[schedules[a].gamma_con - t for a in levels])
    write_table(out, "penalty_table", header, rows, args.format)
    names = fit_result.names
    write_table(out, "coefficients_by_a", ["a"] + list(names), [[a] + list(refits[a].beta) for a in levels], args.format)

    scored = {f"a{a:g}": refits[a] for a in levels}
    scored["unconstrained"] = fit_result
    reports = score_fits(scored, test, "test", out, args.format, suffix="_penalty")
    write_table(
        out, "scores_by_a", ("a", "deviance", "deviance_x100", "area", "abc"),
        [(a, reports[f"a{a:g}"].deviance, reports[f"a{a:g}"].deviance_display,
          reports[f"a{a:g}"].area, reports[f"a{a:g}"].abc) for a in levels], args.format,
    )
    top = max(levels)
    decomp = penalty.premium_decomposition(refits[top], schedules[top], train)
    _dump_json(out / "decomposition.json", {"a": top, **decomp.to_dict()})
    cum = decomp.cumulative
    write_table(out, "cumulative_shares", list(cum.keys()), zip(*cum.values()), args.format)
    return {"base": base, "schedules": schedules, "refits": refits, "reports": reports, "decomposition": decomp}


def cmd_penalty(args) -> int:
    levels = _a_levels(args.a)
    fit_result = _load_fit(args.fit)
    portfolio = _load_data(args.data, args.lenient)
    if args.split is None:
        train = test = portfolio
    else:
        train, test = split(portfolio, args.split, args.seed)
    res = run_penalty(fit_result, train, test, args, levels)
    d = res["decomposition"]
    print(f"penalty share {d.penalty_share:.4%} (XO {d.penalty_share_xo:.4%}) at a = {max(levels):g}")
    return 0


def _a_levels(values) -> list:
    levels = sorted(set(float(a) for a in values))
    bad = [a for a in levels if not 0.0 <= a <= 1.0]
    if bad:
        raise UsageError(f"smoothing level a must lie in [0, 1], got {bad}")
    return levels


def run_groupsplit(portfolio: Portfolio, args) -> dict:
    spec = _spec(args, args.scheme)
    search = groups.search_cutpoint(portfolio, spec, jobs=args.jobs)
    cut = search.best if args.cut is None else args.cut
    out = args.out
    write_table(out, "cut_scores", ("cut", "score"), sorted(search.scores.items()), args.format)
    best_fit = search.fits.get(cut) or groups.fit_group_splines(portfolio, spec, groups.groups_from_cut(cut))
    _dump_json(out / "fit_groups.json", best_fit.to_dict())
    t = penalty.default_grid()
    f1, f2 = best_fit.group_curves
    write_table(out, "group_curves", ("t", "gamma_group1", "gamma_group2"), zip(t, f1(t), f2(t)), args.format)
    band = groups.bootstrap_curve_difference(
        portfolio, spec, groups.groups_from_cut(cut), B=args.B, seed=args.seed, grid_t=t, jobs=args.jobs
    )
    write_table(out, "bootstrap_band", ("t", "difference", "bootstrap_mean", "se"), band.to_rows(), args.format)
    _dump_json(out / "groupsplit.json", {
        "best_cut": search.best,
        "used_cut": cut,
        "group_one_levels": groups.groups_from_cut(cut),
        "scores": {str(k): v for k, v in search.scores.items()},
        "skipped_cuts": search.skipped,
        "bootstrap_replicates": band.replicates,
        "bootstrap_failures": band.failures,
        "zero_inside_band_fraction": float(band.zero_inside().mean()),
    })
    return {"search": search, "cut": cut, "fit": best_fit, "band": band}


def cmd_groupsplit(args) -> int:
    portfolio = _partition(_load_data(args.data, args.lenient), args, "train")
    res = run_groupsplit(portfolio, args)
    print(f"best cut {res['search'].best}; group 1 = BMS levels 95..{res['cut']}")
    return 0


SENSITIVITY_KNOTS = ("uniform:6", "uniform:15")


def run_sensitivity(train: Portfolio, test: Portfolio, args, fits: dict, grp: dict) -> dict:
    """How much the EWM curve moves with the knot grid, and the best cut under other metrics."""
    t = penalty.default_grid()
    base = fits["ewm"]
    knot_rows = [("default", len(args.grid), 0.0, ev.fit_deviance(base, test))]
    for text in SENSITIVITY_KNOTS:
        alt = fit(train, replace(_spec(args, "ewm"), grid=KnotGrid.parse(text)))
        shift = float(np.max(np.abs(np.exp(alt.log_gamma(t)) - np.exp(base.log_gamma(t)))))
        knot_rows.append((text, len(alt.curve.grid), shift, ev.fit_deviance(alt, test)))
    write_table(args.out, "knot_sensitivity", ("knots", "count", "max_curve_shift", "test_deviance"), knot_rows, args.format)

    metrics = {
        "weighted_l2": lambda d, w: float(np.sum(w * d**2)),
        "unweighted_l2": lambda d, w: float(np.mean(d**2)),
        "sup": lambda d, w: float(np.max(np.abs(d))),
    }
    dens = groups.exposure_density(train.exposure, t)
    diffs = {c: groups.curve_difference(f, t) for c, f in sorted(grp["search"].fits.items())}
    cut_rows, best = [], {}
    for name, metric in metrics.items():
        scores = {c: metric(d, dens) for c, d in diffs.items()}
        best[name] = max(scores, key=lambda c: (scores[c], -c))
        cut_rows += [(name, c, v) for c, v in scores.items()]
    write_table(args.out, "cut_metric_sensitivity", ("metric", "cut", "score"), cut_rows, args.format)
    return {"knots": knot_rows, "best_cut": best}


def cmd_report(args) -> int:
    out = args.out
    if args.data is None:
        spec = SyntheticSpec(n=args.n, xo_fraction=args.xo_fraction, delta=ExposureLaw.parse(args.delta), seed=args.seed)
        portfolio = simulate(spec)
        write_csv(portfolio, out / "portfolio.csv")
        _dump_json(out / "portfolio.truth.json", spec.to_dict())
        source = f"simulated, n = {args.n}, exposure law {args.delta}, seed {args.seed}"
    else:
        portfolio = _load_data(args.data, args.lenient)
        source = f"file {Path(args.data).name}"
    train, test = split(portfolio, args.split or 0.75, args.seed)
    summary = exploratory_summary(train)
    _dump_json(out / "summary.json", summary)
    bins = summary["exposure_bins"]
    write_table(out, "exposure_bins", list(bins[0].keys()), [r.values() for r in bins], args.format)

    fits = run_fits(train, args, SCHEMES)
    train_reports = score_fits(fits, train, "train", out, args.format)
    test_reports = score_fits(fits, test, "test", out, args.format)
    pen = run_penalty(fits["ewm"], train, test, args, DEFAULT_A)
    args.scheme, args.cut = "ewm", None
    grp = run_groupsplit(train, args)
    sens = run_sensitivity(train, test, args, fits, grp)

    t = penalty.default_grid()
    figures = []
    figures.append(plotting.exposure_curves(
        {f.scheme.value: (t, np.exp(f.log_gamma(t))) for f in fits.values() if f.scheme.flexible},
        out / "fig_exposure_curves.png"))
    figures.append(plotting.concentration_lorenz(
        {k: r.curves for k, r in train_reports.items() if k in ("ratio", "ewm")}, out / "fig_concentration_lorenz.png"))
    figures.append(plotting.murphy(
        next(iter(test_reports.values())).m_grid, {k: r.murphy for k, r in test_reports.items()}, out / "fig_murphy.png"))
    figures.append(plotting.gwm_trace(fits["gwm"].trace, out / "fig_gwm_trace.png"))
    figures.append(plotting.penalty_family(t, {a: s.gamma_con for a, s in pen["schedules"].items()}, out / "fig_penalty_family.png"))
    names = fits["ewm"].names
    figures.append(plotting.coefficient_paths(
        list(DEFAULT_A), {n: [pen["refits"][a].beta[i] for a in DEFAULT_A] for i, n in enumerate(names)},
        out / "fig_coefficients_by_a.png"))
    figures.append(plotting.cumulative_shares(pen["decomposition"].cumulative, out / "fig_cumulative_shares.png"))
    figures.append(plotting.cut_scores(grp["search"].scores, grp["search"].best, out / "fig_cut_scores.png"))
    figures.append(plotting.group_difference(grp["band"], out / "fig_group_difference.png"))

    _write_markdown(out / "report.md", source, len(train), len(test), fits, train_reports, test_reports, pen, grp, sens, figures)
    print(f"report written to {out / 'report.md'}")
    return 0


def _write_markdown(path, source, n_train, n_test, fits, train_reports, test_reports, pen, grp, sens, figures):
    lines = ["# Exposure curve and cancellation penalty report", "", f"Data: {source}.",
             f"Training records: {n_train}. Test records: {n_test}.", "", "## Coefficients", ""]
    names = next(iter(fits.values())).names
    lines.append("| model | " + " | ".join(names) + " | converged |")
    lines.append("|---" * (len(names) + 2) + "|")
    for f in fits.values():
        lines.append(f"| {f.scheme.value} | " + " | ".join(f"{b:.4f}" for b in f.beta) + f" | {f.converged} |")
    lines += ["", "## Scores", "", "| model | deviance x100 train | deviance x100 test | area train | area test |",
              "|---|---|---|---|---|"]
    for k in fits:
        tr, te = train_reports[k], test_reports[k]
        lines.append(f"| {fits[k].scheme.value} | {tr.deviance_display:.4f} | {te.deviance_display:.4f} | "
                     f"{tr.area:.5f} | {te.area:.5f} |")
    lines += ["", "## Penalty schedule (EWM curve)", "", "| a | deviance x100 test | area test |", "|---|---|---|"]
    for a in DEFAULT_A:
        r = pen["reports"][f"a{a:g}"]
        lines.append(f"| {a:g} | {r.deviance_display:.4f} | {r.area:.5f} |")
    d = pen["decomposition"]
    lines += ["", f"Penalty share of total premium at a = 1: {d.penalty_share:.4%}; "
              f"among cancelled contracts: {d.penalty_share_xo:.4%}.", "", "## BMS group split", "",
              f"Best cut: group 1 holds levels 95 to {grp['search'].best}.",
              f"Zero inside the 2 SE bootstrap band at {grp['band'].zero_inside().mean():.1%} of grid points "
              f"({grp['band'].replicates} replicates).", "", "## Sensitivity", "",
              "| knots | count | max shift of EWM curve | test deviance |", "|---|---|---|---|"]
    for name, count, shift, dev in sens["knots"]:
        lines.append(f"| {name} | {count} | {shift:.4f} | {dev:.6f} |")
    lines += ["", "Best cut by metric: " + ", ".join(f"{k} {v}" for k, v in sens["best_cut"].items()) + ".",
              "", "## Figures", ""]
    for fig in figures:
        lines.append(f"![{Path(fig).stem}]({Path(fig).name})")
    lines += ["", "## Files", ""]
    lines += [f"- {p.name}" for p in sorted(Path(path).parent.iterdir()) if p.name != Path(path).name]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _power(text):
    p = float(text)
    if not 1.0 < p < 2.0:
        raise argparse.ArgumentTypeError("power must lie strictly between 1 and 2")
    return p


def _knots(text):
    try:
        return KnotGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _fraction(text):
    f = float(text)
    if not 0.0 < f < 1.0:
        raise argparse.ArgumentTypeError("fraction must lie in (0, 1)")
    return f


def _law(text):
    try:
        ExposureLaw.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--power", type=_power, default=1.42, help="Tweedie variance power (default 1.42)")
    common.add_argument("--knots", dest="grid", type=_knots, default=KnotGrid.default(),
                        help='comma-separated knots ending at 1, or "uniform:K"')
    common.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for cut search and bootstrap")
    common.add_argument("--lenient", action="store_true", help="skip invalid CSV rows instead of failing")
    common.add_argument("-v", "--verbose", action="store_true")

    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--lambda", dest="lam", type=float, default=None, help="fixed smoothing parameter")
    fitting.add_argument("--max-iter", type=int, default=100)
    fitting.add_argument("--tol", type=float, default=1e-6)
    fitting.add_argument("--split", type=_fraction, default=None, help="train fraction; fit on the train part")

    parser = argparse.ArgumentParser(prog="tweedie-exposure", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic portfolio")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=_law, default="power:0.6", help="true exposure law: identity, power:A, scurve:K")
    p.add_argument("--delta-high", type=_law, default=None, help="second law for BMS levels above --delta-cut")
    p.add_argument("--delta-cut", type=int, default=99)
    p.add_argument("--xo-fraction", type=float, default=0.35)
    p.add_argument("--phi", type=float, default=1.0)
    p.add_argument("--name", default="portfolio")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summary", parents=[common], help="exploratory tables")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("fit", parents=[common, fitting], help="fit premium models")
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", nargs="+", choices=SCHEMES + ("all",), default=["ewm"])
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", parents=[common], help="deviance, Lorenz area and Murphy curves")
    p.add_argument("--data", required=True)
    p.add_argument("--fits", nargs="+", required=True)
    p.add_argument("--dataset", choices=("train", "test"), default="test")
    p.add_argument("--split", type=_fraction, default=None, help="train fraction used to pick the partition")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("penalty", parents=[common, fitting], help="constrained penalty schedules and refits")
    p.add_argument("--data", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--a", nargs="+", type=float, default=list(DEFAULT_A))
    p.set_defaults(func=cmd_penalty)

    p = sub.add_parser("groupsplit", parents=[common, fitting], help="BMS cut search with bootstrap bands")
    p.add_argument("--data", required=True)
    p.add_argument("--scheme", choices=("cwm", "ewm"), default="ewm")
    p.add_argument("--cut", type=int, default=None, help="use this cut instead of the best one for the band")
    p.add_argument("--B", type=int, default=100, help="bootstrap replicates")
    p.set_defaults(func=cmd_groupsplit)

    p = sub.add_parser("report", parents=[common, fitting], help="full pipeline bundle with figures")
    p.add_argument("--data", default=None, help="portfolio CSV (simulated when omitted)")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--delta", type=_law, default="power:0.6")
    p.add_argument("--xo-fraction", type=float, default=0.65)
    p.add_argument("--B", type=int, default=50)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.out is None:
        args.out = Path(os.environ.get(OUT_ENV, "."))
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, FitError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
