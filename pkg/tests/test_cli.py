import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from robustreg import cli
from robustreg.datasets import (
    FixtureChecksumError, SchemaError, fixture_path, load_csv, recorded_checksums, sha256_file,
    verify_fixture,
)
from robustreg.estimation import DataError, FitResult
from robustreg.report import Report, Series, dumps, emit_report, load_fit


# -- load_csv -------------------------------------------------------------------

def test_taylor_fixture_rows():
    recs = load_csv(fixture_path("taylor_triangle.csv"), {"AY": int, "DY": int, "paid": float})
    assert len(recs) == 55
    assert set(recs[0]) == {"AY", "DY", "paid"}
    cells = {(r["AY"], r["DY"]) for r in recs}
    assert cells == {(a, d) for a in range(10) for d in range(10) if a + d <= 9}
    assert recs[0]["paid"] == 357848.0


def test_shock_fixture_rows():
    recs = load_csv(fixture_path("shock.csv"), ["shocks", "time"])
    assert len(recs) == 16
    assert set(recs[0]) == {"shocks", "time"}


def test_empty_file_is_schema_error(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(SchemaError):
        load_csv(p, ["x"])


def test_header_only_is_schema_error(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n")
    with pytest.raises(SchemaError):
        load_csv(p, ["x", "y"])


def test_missing_column(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("x,z\n1,2\n")
    with pytest.raises(SchemaError, match="missing column"):
        load_csv(p, ["x", "y"])


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,2\n3,4\n5,abc\n")
    with pytest.raises(DataError, match=r"bad.csv:4:"):
        load_csv(p, ["x", "y"])


def test_missing_value_reports_line(tmp_path):
    p = tmp_path / "na.csv"
    p.write_text("x,y\n1,\n")
    with pytest.raises(DataError, match=r":2: missing value"):
        load_csv(p, ["x", "y"])


def test_ragged_row(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("x,y\n1,2,3\n")
    with pytest.raises(DataError, match="expected 2 fields"):
        load_csv(p, ["x", "y"])


# -- fixtures --------------------------------------------------------------------

def test_fixture_checksums_recorded():
    sums = recorded_checksums()
    for name in ("taylor_triangle.csv", "shock.csv"):
        assert sums[name] == sha256_file(fixture_path(name)) == verify_fixture(name)


def test_checksum_mismatch_refused(tmp_path):
    p = tmp_path / "shock.csv"
    shutil.copy(fixture_path("shock.csv"), p)
    p.write_text(p.read_text().replace("11.4", "11.5"))
    with pytest.raises(FixtureChecksumError):
        verify_fixture("shock.csv", p)


def test_reproduce_refuses_tampered_fixture(monkeypatch, tmp_path):
    import robustreg.studies as studies

    bad = tmp_path / "shock.csv"
    bad.write_text("shocks,time\n0,1\n1,2\n")
    monkeypatch.setattr(studies, "verify_fixture", lambda name: verify_fixture(name, bad))
    with pytest.raises(FixtureChecksumError):
        studies.reproduce_shock()
    assert cli.main(["reproduce", "shock", "--out", str(tmp_path / "o")]) == cli.EXIT_DATA


# -- report -----------------------------------------------------------------------

def test_dumps_round_trip_floats():
    vals = [0.1, 1 / 3, 2.0**-1074, 1e308, -0.0, 123456789.123456789]
    back = json.loads(dumps({"v": vals}))
    assert back["v"] == vals
    assert json.loads(dumps({"x": float("nan")}))["x"] != json.loads(dumps({"x": float("nan")}))["x"]


def test_fit_json_round_trip(tmp_path):
    assert cli.main(["fit", "--data", "@shock", "--model", "lptn", "--rho", "0.9",
                     "--out", str(tmp_path)]) == 0
    fit = load_fit(tmp_path / "fit.json")
    assert isinstance(fit, FitResult)
    again = tmp_path / "again"
    emit_report(Report(fits={"x": fit}), again)
    assert (again / "fit.json").read_text() == (tmp_path / "fit.json").read_text()
    header = (tmp_path / "weights.csv").read_text().splitlines()[0]
    assert header == "row_id,fitted,std_residual,weight"
    assert len((tmp_path / "residuals.csv").read_text().splitlines()) == 17


def test_manifest_contents(tmp_path):
    cli.main(["fit", "--data", "@shock", "--model", "tukey", "--seed", "7", "--out", str(tmp_path)])
    lines = (tmp_path / "MANIFEST.txt").read_text().splitlines()
    assert any(line.startswith("input ") and line.endswith("shock.csv") for line in lines)
    assert "seed 7" in lines
    assert any(line.startswith("config {") for line in lines)
    outs = {line.split()[2]: line.split()[1] for line in lines if line.startswith("output ")}
    assert set(outs) == {"fit.json", "weights.csv", "residuals.csv"}
    for name, digest in outs.items():
        assert sha256_file(tmp_path / name) == digest


def test_same_seed_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["fit", "--data", "@shock", "--model", "lptn", "--seed", "3",
                         "--out", str(tmp_path / d)]) == 0
    for name in ("fit.json", "weights.csv", "residuals.csv", "MANIFEST.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_reproduce_shock_bundle(tmp_path, shock_report):
    files = emit_report(shock_report, tmp_path, svg=True)
    names = {p.relative_to(tmp_path).as_posix() for p in files}
    assert {"fit.json", "weights.csv", "summary.json", "MANIFEST.txt",
            "series/fig1a_lines.csv", "series/fig1b_weights.csv",
            "series/fig1b_weights.svg"} <= names
    assert (tmp_path / "series/fig1b_weights.svg").read_text().startswith("<svg")
    assert len((tmp_path / "series/fig1a_points.csv").read_text().splitlines()) == 17


def test_taylor_residual_series_has_55_rows(tmp_path, taylor_report):
    emit_report(taylor_report, tmp_path)
    for panel in ("fig2_ols", "fig2_tukey", "fig2_lptn"):
        lines = (tmp_path / "series" / f"{panel}.csv").read_text().splitlines()
        assert lines[0] == "fitted,std_residual" and len(lines) == 56
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["n"] == 55 and summary["p"] == 19


# -- command line ------------------------------------------------------------------

def test_exit_codes(tmp_path, capsys):
    assert cli.main(["fit", "--data", "@shock", "--model", "huber"]) == 0
    assert cli.main(["fit", "--data", "@shock", "--model", "lptn", "--rho", "0.3"]) == 1
    assert cli.main(["fit", "--data", "@shock", "--model", "cauchy"]) == 1
    assert cli.main(["fit", "--data", str(tmp_path / "none.csv"), "--design",
                     str(tmp_path / "none.json")]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit"])
    assert exc.value.code == 1


def test_csv_without_design_is_usage_error(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y\n1,2\n2,3\n3,5\n")
    assert cli.main(["fit", "--data", str(p)]) == 1


def test_fit_with_user_design(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rng = np.random.default_rng(0)
    x = np.arange(20.0)
    y = 1 + 2 * x + rng.normal(size=20)
    y[3] += 40
    data.write_text("id,x,y\n" + "".join(f"r{i},{a},{b}\n" for i, (a, b) in enumerate(zip(x, y))))
    design = tmp_path / "design.json"
    design.write_text(json.dumps({"response": "y", "numeric": ["x"], "row_id": "id"}))
    assert cli.main(["weights", "--data", str(data), "--design", str(design), "--model", "tukey"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "row_id,fitted,std_residual,weight"
    assert out[4].startswith("r3,") and out[4].endswith(",0")


def test_data_error_exit_code(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("x,y\n1,2\n2,oops\n")
    design = tmp_path / "design.json"
    design.write_text(json.dumps({"response": "y", "numeric": ["x"]}))
    assert cli.main(["fit", "--data", str(data), "--design", str(design)]) == 2
    design.write_text("{not json")
    assert cli.main(["fit", "--data", str(data), "--design", str(design)]) == 2


def test_profile_and_path_commands(tmp_path, capsys):
    assert cli.main(["profile", "--data", "@shock", "--grid", "0.85:0.95:0.05",
                     "--out", str(tmp_path / "p")]) == 0
    out = capsys.readouterr().out
    assert "# best rho = 0.9" in out
    assert (tmp_path / "p" / "profile.csv").exists()
    assert cli.main(["path", "--data", "@shock", "--targets", "5", "--mags", "10,100",
                     "--models", "tukey"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3
    assert cli.main(["path", "--data", "@shock", "--targets", "zz", "--mags", "10"]) == 1


def test_parse_grid():
    assert cli.parse_grid("0.70:0.98:0.01")[0] == 0.70
    g = cli.parse_grid("0.70:0.98:0.01")
    assert len(g) == 29 and g[-1] == 0.98 and 0.88 in g
    assert cli.parse_grid("1,2,4") == [1.0, 2.0, 4.0]


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "robustreg.cli", "fit", "--data", "@shock",
                          "--model", "normal"], capture_output=True, text=True)
    assert res.returncode == 0 and "(Intercept)" in res.stdout
