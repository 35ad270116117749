"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from airbridge.analysis import QiSweep, junction_delta, per_bridge_loss
from airbridge.cli import main
from airbridge.develop import run_drc, simulate
from airbridge.exposure import (
    DoseSample,
    SubstrateCalibration,
    fit_calibration,
    forward_thickness,
    inverse_power,
)
from airbridge.gds import Boundary, GdsCell, GdsLibrary, read_gds, write_gds
from airbridge.layout import PIER_BAND, compile_plan, load_material_map
from airbridge.profile import build_arc, check_step_constraint, discretize

from conftest import DEMO


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def test_c01_roundtrip(verdict):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        cal = SubstrateCalibration(
            "X",
            z0=rng.uniform(0.5, 10),
            alpha=rng.uniform(0.05, 5),
            p0=rng.uniform(0, 50),
            p_clear=rng.uniform(0.1, 50),
        )
        z = rng.uniform(0, cal.z0)
        worst = max(worst, abs(forward_thickness(cal, inverse_power(cal, z)) - z))
    elapsed = time.perf_counter() - start
    verdict(1, "exposure roundtrip", worst <= 1e-9 and elapsed < 1.0,
            f"max error {worst:.2e} um in {elapsed:.3f} s")


# Four substrate roles: Al/sapphire, sapphire, Al/Si, Si.
PARAM_SETS = [(0.45, 8.0, 4.5), (0.5, 10.0, 5.0), (0.6, 12.0, 6.0), (0.7, 9.0, 7.5)]
Z0 = 4.0


def _fit(alpha, p0, pc):
    truth = SubstrateCalibration("X", Z0, alpha, p0, pc)
    powers = np.linspace(1.05 * truth.onset_power, 0.97 * truth.clear_power, 12)
    samples = [DoseSample(float(p), forward_thickness(truth, float(p))) for p in powers]
    return fit_calibration(samples, "X", Z0)


def test_c02_calibration_recovery(verdict):
    start = time.perf_counter()
    worst = 0.0
    for truth in PARAM_SETS:
        c = _fit(*truth).calibration
        for got, want in zip((c.alpha, c.p0, c.p_clear), truth):
            worst = max(worst, abs(got - want) / want)
    elapsed = time.perf_counter() - start
    verdict(2, "calibration recovery", worst <= 1e-3 and elapsed < 5.0,
            f"worst relative error {worst:.2e} over 4 sets in {elapsed:.3f} s")


def test_c03_decay_shape(verdict):
    ok = True
    for truth in PARAM_SETS:
        cal = _fit(*truth).calibration
        lo, hi = cal.onset_power, cal.clear_power
        span = hi - lo
        p = np.linspace(lo + 0.02 * span, hi - 0.02 * span, 100)
        h = 1e-3 * span
        f = lambda x: forward_thickness(cal, x)
        d1 = (f(p + h) - f(p - h)) / (2 * h)
        d2 = (f(p + h) - 2 * f(p) + f(p - h)) / h**2
        ok &= bool(np.all(d1 < 0) and np.all(d2 > 0))
    verdict(3, "exponential-decay shape", ok, "f' < 0 and f'' > 0 at 100 powers for 4 fitted curves")


def test_c04_reference_geometry(verdict):
    plan = discretize(build_arc(30.0, 3.0), 18)
    check = check_step_constraint(plan, 0.5)
    ok = abs(plan.step_height - 0.1667) < 5e-5 and plan.step_height < 0.5 and check.passed and check.margin >= 0.33
    verdict(4, "reference geometry", ok, f"step {plan.step_height:.4f} um, margin {check.margin:.4f} um")


def test_c05_pipeline(verdict, reference_bridge, al_map, al_cal):
    start = time.perf_counter()
    cals = {"Al": al_cal}
    plan = compile_plan([reference_bridge], al_map, cals)
    field = simulate(plan, al_map, cals, pitch=0.05)
    report = run_drc(field, [reference_bridge])
    elapsed = time.perf_counter() - start
    (b,) = report.bridges
    ok = (
        report.passed
        and b.pier_cleared and b.step_ok and b.clearance_ok and b.deviation_ok
        and report.profile_deviation <= 0.0834
        and abs(report.apex_clearance - 1.0) <= 0.01
        and elapsed < 30.0
    )
    verdict(5, "end-to-end pipeline", ok,
            f"deviation {report.profile_deviation:.4f} um, apex clearance {report.apex_clearance:.4f} um, "
            f"max step {report.max_step:.4f} um, {elapsed:.2f} s")


def test_c06_two_materials(verdict, reference_bridge, al_cal, si_cal):
    # Al ground planes and centre conductor with Si gaps at 5 < |x| < 10.
    cpw = load_material_map(DEMO / "map_cpw.json")
    cals = {"Al": al_cal, "Si": si_cal}
    plan = compile_plan([reference_bridge], cpw, cals)
    by_band = {}
    exact = True
    for layer in plan.layers:
        want = inverse_power(cals[layer.material], layer.target)
        if layer.band_index == PIER_BAND:
            want *= plan.options.pier_margin
        exact &= layer.power == want
        by_band.setdefault(layer.band_index, {})[layer.material] = layer.power
    mixed = [k for k, v in by_band.items() if len(v) == 2]
    differ = all(v["Al"] != v["Si"] for k, v in by_band.items() if len(v) == 2)
    total = sum(p.area_um2 for _, p in plan.polygons())
    footprint = (reference_bridge.length + 2 * plan.options.pier_extension) * reference_bridge.width
    rel = abs(total - footprint) / footprint
    ok = exact and bool(mixed) and differ and rel <= 1e-6
    verdict(6, "two-material compile", ok,
            f"{len(plan.layers)} layers, bands on both materials: {len(mixed)}, area error {rel:.1e}")


_coords = st.integers(-(2**31), 2**31 - 1)
_polys = st.lists(st.tuples(_coords, _coords), min_size=3, max_size=30, unique=True)
_libs = st.lists(st.tuples(st.integers(0, 1000), st.integers(0, 10), _polys), min_size=1, max_size=20)


def test_c07_gds_roundtrip(verdict, tmp_path, capsys):
    import gdstk

    failures = []

    @settings(max_examples=50, deadline=None, database=None)
    @given(_libs)
    def roundtrip(items):
        lib = GdsLibrary("RND", [GdsCell("TOP", [Boundary.from_polygon(l, p, d) for l, d, p in items])])
        again = read_gds(write_gds(lib))
        if again != lib:
            failures.append(items)
        assert again == lib

    roundtrip()
    main(["compile", "--config", str(DEMO / "project.json"), "--out", str(tmp_path)])
    capsys.readouterr()
    glib = gdstk.read_gds(str(tmp_path / "demo.gds"))
    layers = sorted({p.layer for p in glib.cells[0].polygons})
    ok = not failures and layers == list(range(19))
    verdict(7, "GDSII roundtrip", ok,
            f"50 random libraries identical; reference reader sees {len(glib.cells[0].polygons)} polygons "
            f"on layers {layers[0]}-{layers[-1]}")


def test_c08_loss_extraction(verdict):
    base, per = 1e-6, 2e-7
    sweep = QiSweep(((0, 2.0e4),) + tuple((n, 1.0 / (base + per * n)) for n in (5, 10, 20, 40, 80)))
    fit = per_bridge_loss(sweep)
    err = abs(fit.loss_per_bridge - per)
    verdict(8, "loss extraction", err <= 1e-12, f"slope {fit.loss_per_bridge:.6e}, error {err:.1e}")


def test_c09_junction_delta(verdict):
    before = [8470.0, 11568.0, 6576.0, 5753.0, 4417.0]
    after = [1.10 * b for b in before]
    d = junction_delta(before, after)
    same = junction_delta(before, before)
    ok = d.mean_relative_change == 0.10 and d.dispersion == 0.0 and same.mean_relative_change == 0.0 and same.dispersion == 0.0
    verdict(9, "junction delta", ok,
            f"mean {d.mean_relative_change!r}, identity {same.mean_relative_change!r}")


def test_c10_determinism(verdict, tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        main(["compile", "--config", str(DEMO / "project_cpw.json"), "--out", str(tmp_path / run),
              "--fixed-timestamp", "1970-01-01T00:00:00"])
        outs.append(((tmp_path / run / "demo_cpw.gds").read_bytes(),
                     (tmp_path / run / "demo_cpw_layers.csv").read_bytes()))
    capsys.readouterr()
    ok = outs[0] == outs[1]
    verdict(10, "determinism", ok, f".gds {len(outs[0][0])} bytes and sidecar identical across runs")
