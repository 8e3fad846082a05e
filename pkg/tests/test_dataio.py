import numpy as np
import pytest

from mare_forge.dataio import (
    DataValidationError,
    SidSelection,
    load_csv,
    load_sid_csv,
    mape,
    mare,
    relative_error,
    save_csv,
    sorted_view,
)
from mare_forge.fixtures import make_fixture

from conftest import series_from_values


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


WELL_FORMED = """datetime,forecasts,actuals
2021-01-01T00:00:00,10.0,12.5
2021-01-01T01:00:00,20.0,18.0
2021-01-01T02:00:00,30.0,33.0
"""


def test_load_csv_well_formed(tmp_path):
    s = load_csv(write(tmp_path, WELL_FORMED), cap=100.0)
    assert s.n == 3
    assert s.cap == 100.0
    np.testing.assert_allclose(s.x, [10.0, 20.0, 30.0])
    np.testing.assert_allclose(s.y, [12.5, 18.0, 33.0])


def test_load_csv_negative_value_rejected(tmp_path):
    text = WELL_FORMED.replace("18.0", "-5.0")
    with pytest.raises(DataValidationError, match=r"out of \[0,cap\]"):
        load_csv(write(tmp_path, text), cap=100.0)


def test_load_csv_cap_inferred(tmp_path):
    s0 = make_fixture("iid-error", 200, seed=5)
    p = tmp_path / "fixture.csv"
    save_csv(s0, p)
    s = load_csv(p)
    observed_max = max(np.max(s0.x), np.max(s0.y))
    assert s.cap >= observed_max
    assert s.cap == float(np.ceil(observed_max))


def test_load_csv_value_above_cap(tmp_path):
    with pytest.raises(DataValidationError, match="out of"):
        load_csv(write(tmp_path, WELL_FORMED), cap=20.0)


def test_load_csv_malformed_datetime(tmp_path):
    text = WELL_FORMED.replace("2021-01-01T01:00:00", "not-a-date")
    with pytest.raises(DataValidationError, match="malformed datetime at row 1"):
        load_csv(write(tmp_path, text), cap=100.0)


def test_load_csv_non_numeric(tmp_path):
    text = WELL_FORMED.replace("33.0", "thirty")
    with pytest.raises(DataValidationError, match="non-numeric value at row 2"):
        load_csv(write(tmp_path, text), cap=100.0)


def test_load_csv_missing_value_reports_row(tmp_path):
    text = WELL_FORMED.replace("20.0,18.0", "20.0,")
    with pytest.raises(DataValidationError, match="row 1"):
        load_csv(write(tmp_path, text), cap=100.0)


def test_load_csv_non_uniform_step(tmp_path):
    text = WELL_FORMED.replace("2021-01-01T02:00:00", "2021-01-01T02:30:00")
    with pytest.raises(DataValidationError, match="non-uniform timestep"):
        load_csv(write(tmp_path, text), cap=100.0)


def test_save_load_round_trip(tmp_path):
    s0 = make_fixture("heteroscedastic", 150, seed=9)
    p = tmp_path / "rt.csv"
    save_csv(s0, p)
    s1 = load_csv(p, cap=s0.cap)
    assert s1.timestamps == s0.timestamps
    np.testing.assert_array_equal(s1.x, s0.x)
    np.testing.assert_array_equal(s1.y, s0.y)


def test_relative_error():
    assert relative_error(100.0, 90.0) == pytest.approx(-0.1)
    assert relative_error(50.0, 50.0) == 0.0
    assert relative_error(200.0, 260.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        relative_error(0.0, 5.0)


def test_mare():
    assert mare([100.0, 200.0], [110.0, 180.0]) == pytest.approx(0.1)
    assert mare([0.0, 100.0], [5.0, 90.0]) == pytest.approx(0.1)  # zero-x index skipped
    x = np.linspace(3.0, 60.0, 17)
    assert mare(x, x) == 0.0
    with pytest.raises(ValueError):
        mare([0.0, 0.0], [1.0, 2.0])


def test_mape_is_100_mare():
    rng = np.random.default_rng(1)
    x = rng.uniform(1.0, 90.0, size=50)
    y = np.clip(x + rng.normal(0, 5, size=50), 0, 100)
    assert mape(x, y) == pytest.approx(100.0 * mare(x, y), rel=1e-12)


def test_mare_scale_invariance():
    rng = np.random.default_rng(2)
    x = rng.uniform(1.0, 90.0, size=40)
    y = np.clip(x + rng.normal(0, 5, size=40), 0, 100)
    for c in (0.1, 3.0, 1234.5):
        assert mare(c * x, c * y) == pytest.approx(mare(x, y), rel=1e-12)


def test_sorted_view():
    s = series_from_values([3.0, 1.0, 2.0], [3.0, 1.0, 2.0], cap=10.0)
    np.testing.assert_array_equal(sorted_view(s), [1, 2, 0])
    s2 = series_from_values([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], cap=10.0)
    np.testing.assert_array_equal(sorted_view(s2), [0, 1, 2])
    s3 = series_from_values([2.0, 2.0, 2.0], [1.0, 2.0, 3.0], cap=10.0)
    np.testing.assert_array_equal(sorted_view(s3), [0, 1, 2])  # stable on ties


def test_errors_bounds(ar1_series):
    eps = ar1_series.errors()
    np.testing.assert_array_equal(eps, ar1_series.y - ar1_series.x)
    assert np.all(np.abs(eps) <= ar1_series.cap)


def test_sid_selection_slice(ar1_series):
    start = ar1_series.timestamps[10]
    end = ar1_series.timestamps[29]
    sid = SidSelection.from_series(ar1_series, start, end)
    assert sid.n_sid == 20
    assert sid.subset_of_input
    np.testing.assert_array_equal(sid.x_sid, ar1_series.x[10:30])


def test_load_sid_csv(tmp_path):
    p = write(tmp_path, WELL_FORMED)
    sid = load_sid_csv(p)
    assert sid.n_sid == 3
    np.testing.assert_allclose(sid.x_sid, [10.0, 20.0, 30.0])
    assert not sid.subset_of_input


def test_slice_empty_raises(ar1_series):
    with pytest.raises(DataValidationError):
        ar1_series.slice(ar1_series.timestamps[-1], ar1_series.timestamps[0])
