import json
import shutil

import pytest

from airbridge.cli import main

from conftest import DEMO, GOLDEN


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_compile_matches_golden(tmp_path, capsys):
    code, out, _ = run(capsys, "compile", "--config", str(DEMO / "project.json"), "--out", str(tmp_path))
    assert code == 0 and "19 layers" in out
    assert (tmp_path / "demo.gds").read_bytes() == (GOLDEN / "demo.gds").read_bytes()
    assert (tmp_path / "demo_layers.csv").read_text() == (GOLDEN / "demo_layers.csv").read_text()
    report = json.loads((tmp_path / "demo_compile.json").read_text())
    assert report["n_layers"] == 19 and report["step_checks"][0]["pass"]


def test_verify_pass_and_exports(tmp_path, capsys):
    code, out, _ = run(
        capsys, "verify", "--config", str(DEMO / "project.json"), "--out", str(tmp_path), "--export-field"
    )
    assert code == 0
    doc = json.loads(out)
    assert doc["pass"] and doc["apex_clearance_um"] == pytest.approx(1.0)
    for suffix in ("_drc.json", "_field.csv", "_field.pgm"):
        assert (tmp_path / f"demo{suffix}").exists()


def test_verify_failure_exit_code(tmp_path, capsys):
    code, out, _ = run(
        capsys, "verify", "--config", str(DEMO / "project.json"), "--out", str(tmp_path), "--n-steps", "5"
    )
    assert code == 1
    assert json.loads(out)["pass"] is False


def test_verify_two_materials(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--config", str(DEMO / "project_cpw.json"), "--out", str(tmp_path))
    assert code == 0, out


def test_verify_empty_design(tmp_path, capsys):
    code, out, err = run(capsys, "verify", "--config", str(DEMO / "empty_project.json"), "--out", str(tmp_path))
    assert code == 0 and "vacuously" in err


def test_missing_calibration_error_line(tmp_path, capsys):
    cfg = json.loads((DEMO / "project_cpw.json").read_text())
    cfg["calibrations"] = {"Al": str(DEMO / "cal_Al.json")}
    cfg["material_map"] = str(DEMO / "map_cpw.json")
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run(capsys, "compile", "--config", str(path), "--out", str(tmp_path))
    assert code == 2
    line = err.strip().splitlines()[-1]
    assert line.startswith("airbridge: error[") and "'Si'" in line


def test_missing_config(tmp_path, capsys):
    code, _, err = run(capsys, "compile", "--config", str(tmp_path / "nope.json"))
    assert code == 2 and "error[config]" in err


def test_calibrate(tmp_path, capsys):
    out_path = tmp_path / "cal.json"
    code, out, _ = run(
        capsys, "calibrate", str(DEMO / "data" / "dose_Al.csv"), "--material", "Al", "--z0", "4",
        "--out", str(out_path),
    )
    assert code == 0
    cal = json.loads(out_path.read_text())
    assert cal["alpha_per_um"] == pytest.approx(0.5, rel=1e-3)
    assert cal["p0_mw"] == pytest.approx(10.0, rel=1e-3)
    assert json.loads(out)["converged"] is True


def test_calibrate_bad_csv(tmp_path, capsys):
    bad = tmp_path / "d.csv"
    bad.write_text("power_mw,residual_um\n20,2\n-1,1\n")
    code, _, err = run(capsys, "calibrate", str(bad), "--material", "Al", "--z0", "4")
    assert code == 2 and "d.csv:3" in err and "error[invalid-input]" in err


@pytest.mark.parametrize(
    "kind, csv, key, value",
    [
        ("series", "series_30um.csv", "per_bridge_ohms", 0.3),
        ("loss", "qi_sweep.csv", "loss_per_bridge", 2e-7),
    ],
)
def test_analyze(capsys, kind, csv, key, value):
    code, out, _ = run(capsys, "analyze", kind, str(DEMO / "data" / csv))
    assert code == 0
    assert json.loads(out)[key] == pytest.approx(value, rel=0.05)


def test_analyze_junction(capsys):
    code, out, _ = run(capsys, "analyze", "junction", str(DEMO / "data" / "junctions_150C.csv"))
    assert code == 0 and json.loads(out)["n"] == 10


def test_profile_preview(tmp_path, capsys):
    code, out, _ = run(capsys, "profile", "--length", "30", "--height", "3", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads(out)
    assert doc["radius_um"] == pytest.approx(39.0) and doc["step_check_pass"]
    assert (tmp_path / "arc_30x3_n18.csv").exists() and (tmp_path / "arc_30x3_n18.svg").exists()


def test_profile_unsupported(tmp_path, capsys):
    code, _, err = run(capsys, "profile", "--length", "30", "--height", "16", "--out", str(tmp_path))
    assert code == 2 and "error[unsupported-geometry]" in err


def test_timestamp_override_changes_only_dates(tmp_path, capsys):
    run(capsys, "compile", "--config", str(DEMO / "project.json"), "--out", str(tmp_path / "a"))
    run(capsys, "compile", "--config", str(DEMO / "project.json"), "--out", str(tmp_path / "b"),
        "--fixed-timestamp", "2025-01-02T03:04:05")
    a = (tmp_path / "a" / "demo.gds").read_bytes()
    b = (tmp_path / "b" / "demo.gds").read_bytes()
    assert len(a) == len(b) and a != b
    assert sum(x != y for x, y in zip(a, b)) <= 24


def test_project_with_dose_table(tmp_path, capsys):
    for name in ("map_al.json",):
        shutil.copy(DEMO / name, tmp_path / name)
    cfg = json.loads((DEMO / "project.json").read_text())
    cfg["calibrations"] = {"Al": {"dose_csv": str(DEMO / "data" / "dose_Al.csv"), "z0_um": 4.0}}
    (tmp_path / "p.json").write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "verify", "--config", str(tmp_path / "p.json"))
    assert code == 0 and json.loads(out)["pass"]
