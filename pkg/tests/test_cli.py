import csv
import json

import pytest

from tweedie_exposure.cli import main
from tweedie_exposure.portfolio import COLUMNS


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--n", 3000, "--seed", 4, "--xo-fraction", 0.6, "--out", out) == 0
    return out / "portfolio.csv"


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    out = tmp_path_factory.mktemp("planted")
    assert run("simulate", "--n", 6000, "--seed", 2, "--delta", "power:0.6", "--delta-high", "identity",
               "--xo-fraction", 0.65, "--out", out) == 0
    return out / "portfolio.csv"


def test_simulate_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--n", 500, "--seed", 9, "--out", tmp_path / d) == 0
    assert (tmp_path / "a/portfolio.csv").read_bytes() == (tmp_path / "b/portfolio.csv").read_bytes()
    truth = json.loads((tmp_path / "a/portfolio.truth.json").read_text())
    assert truth["seed"] == 9 and truth["n"] == 500
    with open(tmp_path / "a/portfolio.csv", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == COLUMNS and len(rows) == 501


def test_simulate_zero_records(tmp_path):
    assert run("simulate", "--n", 0, "--out", tmp_path) == 0
    assert (tmp_path / "portfolio.csv").read_text(encoding="utf-8").strip() == ",".join(COLUMNS)


def test_out_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("TWEEDIE_EXPOSURE_OUT", str(tmp_path / "env"))
    assert run("simulate", "--n", 10, "--name", "tiny") == 0
    assert (tmp_path / "env/tiny.csv").is_file()


def test_summary(tmp_path, data):
    assert run("summary", "--data", data, "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n"] == 3000
    assert (tmp_path / "exposure_bins.csv").is_file() and (tmp_path / "bms_levels.csv").is_file()


def test_fit_gwm_writes_trace(tmp_path, data):
    assert run("fit", "--data", data, "--scheme", "gwm", "--out", tmp_path) == 0
    with open(tmp_path / "gwm_trace.csv", encoding="utf-8") as fh:
        trace = list(csv.DictReader(fh))
    assert len(trace) >= 2
    assert json.loads((tmp_path / "fit_gwm.json").read_text())["scheme"] == "GWM"


def test_fit_json_tables(tmp_path, data):
    assert run("fit", "--data", data, "--scheme", "ratio", "ewm", "--format", "json", "--out", tmp_path) == 0
    rows = json.loads((tmp_path / "coefficients.json").read_text())
    assert [r["model"] for r in rows] == ["TraditionalRatio", "EWM"]


def test_bad_scheme_is_usage_error(tmp_path, data):
    with pytest.raises(SystemExit) as exc:
        run("fit", "--data", data, "--scheme", "xyz", "--out", tmp_path)
    assert exc.value.code == 2


@pytest.mark.parametrize("power", ["1.0", "2", "abc"])
def test_bad_power_is_usage_error(tmp_path, data, power):
    with pytest.raises(SystemExit) as exc:
        run("fit", "--data", data, "--power", power, "--out", tmp_path)
    assert exc.value.code == 2


def test_missing_inputs_exit_one(tmp_path, data):
    assert run("score", "--data", data, "--fits", tmp_path / "nope.json", "--out", tmp_path) == 1
    assert run("summary", "--data", tmp_path / "nope.csv", "--out", tmp_path) == 1


def test_invalid_rows(tmp_path, data):
    lines = data.read_text(encoding="utf-8").splitlines()
    bad = lines[1].split(",")
    bad[0] = "-0.5"
    lines[1] = ",".join(bad)
    broken = tmp_path / "broken.csv"
    broken.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run("summary", "--data", broken, "--out", tmp_path) == 1
    assert run("summary", "--data", broken, "--lenient", "--out", tmp_path) == 0
    assert json.loads((tmp_path / "summary.json").read_text())["n"] == 2999


def test_score_and_penalty(tmp_path, data):
    assert run("fit", "--data", data, "--scheme", "ratio", "ewm", "--split", 0.75, "--out", tmp_path) == 0
    assert run("score", "--data", data, "--fits", tmp_path / "fit_ratio.json", tmp_path / "fit_ewm.json",
               "--split", 0.75, "--out", tmp_path) == 0
    with open(tmp_path / "scores_test.csv", encoding="utf-8") as fh:
        assert [r["model"] for r in csv.DictReader(fh)] == ["ratio", "ewm"]
    assert run("penalty", "--data", data, "--fit", tmp_path / "fit_ewm.json", "--a", 0, 1,
               "--split", 0.75, "--out", tmp_path) == 0
    for name in ("schedule_a0.json", "schedule_a1.json", "penalty_table.csv", "scores_by_a.csv", "decomposition.json"):
        assert (tmp_path / name).is_file()
    # a traditional fit has no curve to turn into a schedule
    assert run("penalty", "--data", data, "--fit", tmp_path / "fit_ratio.json", "--out", tmp_path) == 1


def test_penalty_level_out_of_range(tmp_path, data):
    with pytest.raises(SystemExit) as exc:
        run("penalty", "--data", data, "--fit", tmp_path / "fit.json", "--a", 0.5, 1.5, "--out", tmp_path)
    assert exc.value.code == 2


def test_groupsplit(tmp_path, planted):
    with pytest.warns(UserWarning):
        assert run("groupsplit", "--data", planted, "--B", 3, "--out", tmp_path) == 0
    res = json.loads((tmp_path / "groupsplit.json").read_text())
    assert res["best_cut"] == 99 and res["bootstrap_replicates"] == 3
    with open(tmp_path / "bootstrap_band.csv", encoding="utf-8") as fh:
        assert len(list(csv.DictReader(fh))) == 200


def test_groupsplit_single_level(tmp_path, data):
    lines = data.read_text(encoding="utf-8").splitlines()
    bms = COLUMNS.index("bms")
    one = [lines[0]] + [ln for ln in lines[1:] if ln.split(",")[bms] == "100"]
    path = tmp_path / "one.csv"
    path.write_text("\n".join(one) + "\n", encoding="utf-8")
    assert run("groupsplit", "--data", path, "--B", 2, "--out", tmp_path) == 1


def test_report_bundle(tmp_path):
    with pytest.warns(UserWarning):
        assert run("report", "--n", 6000, "--B", 2, "--seed", 3, "--out", tmp_path) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert len([n for n in names if n.endswith(".png")]) == 9
    for name in ("report.md", "knot_sensitivity.csv", "cut_metric_sensitivity.csv", "bootstrap_band.csv",
                 "penalty_table.csv", "scores_test.csv", "murphy_test.csv", "gwm_trace.csv"):
        assert name in names
    text = (tmp_path / "report.md").read_text(encoding="utf-8")
    for fig in (n for n in names if n.endswith(".png")):
        assert f"({fig})" in text
    assert (tmp_path / "fig_murphy.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
