import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from airbridge.analysis import (
    QiSweep,
    SeriesResistanceData,
    fit_series,
    junction_delta,
    junction_delta_table,
    ols_line,
    per_bridge_loss,
    read_junction_csv,
    read_qi_csv,
    read_series_csv,
)
from airbridge.errors import InsufficientDataError, InvalidInputError

from conftest import DEMO


def test_ols_against_scipy():
    rng = np.random.default_rng(0)
    x = np.arange(10.0)
    y = 0.3 * x + 1 + rng.normal(0, 0.05, 10)
    fit = ols_line(x, y)
    ref = stats.linregress(x, y)
    assert fit.slope == pytest.approx(ref.slope, rel=1e-12)
    assert fit.intercept == pytest.approx(ref.intercept, rel=1e-12)
    assert fit.r_squared == pytest.approx(ref.rvalue**2, rel=1e-12)
    assert fit.slope_stderr == pytest.approx(ref.stderr, rel=1e-10)


def test_zero_variance_flagged():
    fit = ols_line([1, 2, 3], [5, 5, 5])
    assert fit.zero_variance and fit.r_squared == 0.0 and fit.slope == 0.0


def test_series_fit_demo():
    fit = fit_series(read_series_csv(DEMO / "data" / "series_30um.csv"))
    assert fit.per_bridge_ohms == pytest.approx(0.3, abs=0.01)
    assert fit.intercept_ohms == pytest.approx(1.0, abs=0.3)


def test_series_needs_three_points():
    with pytest.raises(InsufficientDataError):
        fit_series(SeriesResistanceData(((1, 1.0), (2, 2.0))))


def test_series_rejects_duplicate_counts():
    with pytest.raises(InvalidInputError):
        SeriesResistanceData(((1, 1.0), (1, 2.0), (3, 4.0)))


def test_junction_exact_ten_percent():
    d = junction_delta([100.0, 200.0, 50.0], [110.0, 220.0, 55.0])
    assert d.mean_relative_change == 0.10
    assert d.dispersion == 0.0


@given(st.lists(st.floats(1.0, 1e6), min_size=1, max_size=30))
def test_junction_scaled_by_float_factor(values):
    d = junction_delta(values, [1.10 * v for v in values])
    assert d.mean_relative_change == 0.10 and d.dispersion == 0.0


def test_junction_hand_example():
    assert junction_delta([100, 200], [105, 220]).mean_relative_change == 0.075


@given(st.lists(st.floats(1.0, 1e6), min_size=1, max_size=30))
def test_junction_identity(values):
    d = junction_delta(values, values)
    assert d.mean_relative_change == 0.0 and d.dispersion == 0.0


def test_junction_matches_numpy_population_std():
    b = np.array([10.0, 12.0, 9.5, 11.0])
    a = np.array([11.2, 13.1, 10.6, 12.0])
    d = junction_delta(b, a)
    rel = (a - b) / b
    assert d.mean_relative_change == pytest.approx(rel.mean(), abs=1e-12)
    assert d.dispersion == pytest.approx(rel.std(ddof=0), abs=1e-12)


def test_junction_length_mismatch():
    with pytest.raises(InvalidInputError, match="length"):
        junction_delta([1.0, 2.0], [1.0])


def test_junction_table_demo():
    rows = read_junction_csv(DEMO / "data" / "junctions_150C.csv")
    d = junction_delta_table(rows)
    assert d.n == 10 and 0.05 < d.mean_relative_change < 0.15
    with pytest.raises(InvalidInputError, match="duplicate"):
        junction_delta_table(rows + rows[:1])


def exact_sweep(counts=(0, 5, 10, 20, 40), a=1e-6, b=2e-7):
    pts = [(n, 1.0 / (a + b * n)) for n in counts if n]
    return QiSweep(((0, 2.0e4),) + tuple(pts))


def test_loss_slope_and_exclusion():
    fit = per_bridge_loss(exact_sweep(), n_min=5)
    assert abs(fit.loss_per_bridge - 2e-7) <= 1e-12
    assert fit.base_loss == pytest.approx(1e-6, rel=1e-6)
    assert fit.excluded == (0,) and fit.n_used == 4


def test_loss_needs_three_counts():
    with pytest.raises(InsufficientDataError):
        per_bridge_loss(exact_sweep(counts=(0, 5, 10)), n_min=5)


def test_loss_from_demo_csv():
    fit = per_bridge_loss(read_qi_csv(DEMO / "data" / "qi_sweep.csv"))
    # CSV values are rounded to 1e-3, which moves the slope by ~1e-15.
    assert fit.loss_per_bridge == pytest.approx(2e-7, rel=1e-6)


def test_csv_errors_name_line():
    with pytest.raises(InvalidInputError, match=r"x\.csv:3"):
        read_series_csv("x.csv", text="n_bridges,resistance_ohm\n1,2\n2,abc\n")
    with pytest.raises(InvalidInputError, match="header"):
        read_qi_csv("q.csv", text="n,qi\n1,2\n")


@given(st.permutations([(10, 4.13), (20, 6.96), (30, 10.1), (40, 12.9), (50, 16.0)]))
def test_series_order_invariant(points):
    ref = fit_series(SeriesResistanceData(((10, 4.13), (20, 6.96), (30, 10.1), (40, 12.9), (50, 16.0))))
    fit = fit_series(SeriesResistanceData(tuple(points)))
    assert (fit.per_bridge_ohms, fit.intercept_ohms) == (ref.per_bridge_ohms, ref.intercept_ohms)


@given(st.floats(1e-8, 1e-5), st.floats(1e-9, 1e-6))
def test_doubling_excess_loss_doubles_slope(base, per):
    counts = (5, 10, 20, 40)
    one = per_bridge_loss(QiSweep(tuple((n, 1 / (base + per * n)) for n in counts)))
    two = per_bridge_loss(QiSweep(tuple((n, 1 / (base + 2 * per * n)) for n in counts)))
    assert two.loss_per_bridge == pytest.approx(2 * one.loss_per_bridge, rel=1e-9)
