"""Moment statistics and their per-class CSV emission."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridntl.dataset import SyntheticConfig, generate_synthetic, sample_proportion
from gridntl.diststats import (
    ClassMoments,
    moments,
    per_class_feature_moments,
    write_moments_csv,
    write_moments_gnuplot,
)
from gridntl.errors import DegenerateInputError
from gridntl.features import build_feature_table


def _brute_force_moments(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((x - mean) ** 2 for x in values) / n
    if var == 0:
        return mean, 0.0, None, None
    sigma = var ** 0.5
    mu3 = sum((x - mean) ** 3 for x in values) / n
    mu4 = sum((x - mean) ** 4 for x in values) / n
    return mean, var, mu3 / sigma ** 3, mu4 / sigma ** 4 - 3.0


def test_symmetric_values_zero_skewness():
    _, _, skew, _ = moments([-1.0, 0.0, 1.0])
    assert skew == 0.0


def test_constant_values_undefined_markers():
    mean, var, skew, kurt = moments([4.2, 4.2, 4.2])
    assert mean == 4.2 and var == 0.0
    assert skew is None and kurt is None


def test_single_value_undefined_markers():
    mean, var, skew, kurt = moments([7.0])
    assert (mean, var, skew, kurt) == (7.0, 0.0, None, None)


def test_empty_input_errors():
    with pytest.raises(DegenerateInputError):
        moments([])


def test_hand_computed_bernoulli_example():
    mean, var, skew, kurt = moments([0.0, 0.0, 0.0, 1.0])
    assert mean == 0.25
    assert var == 0.1875
    assert skew == pytest.approx(1.1547005383792515)
    assert kurt == pytest.approx(-0.6666666666666665)


def test_matches_four_pass_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        v = rng.exponential(3.0, n) + rng.normal(0, 2, n)
        got = moments(v)
        want = _brute_force_moments(list(v))
        assert got[0] == pytest.approx(want[0], rel=1e-12)
        assert got[1] == pytest.approx(want[1], rel=1e-12)
        assert got[2] == pytest.approx(want[2], rel=1e-12)
        assert got[3] == pytest.approx(want[3], rel=1e-12)


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 2 ** 32 - 1),
       st.floats(min_value=0.01, max_value=100.0),
       st.floats(min_value=-50.0, max_value=50.0))
def test_affine_invariance_of_standardized_moments(seed, a, b):
    v = np.random.default_rng(seed).normal(0, 1, 30)
    _, _, skew1, kurt1 = moments(v)
    _, _, skew2, kurt2 = moments(a * v + b)
    assert skew2 == pytest.approx(skew1, rel=1e-7, abs=1e-7)
    assert kurt2 == pytest.approx(kurt1, rel=1e-7, abs=1e-7)


def test_scale_location_of_mean_variance():
    v = np.array([1.0, 2.0, 5.0])
    mean1, var1, _, _ = moments(v)
    mean2, var2, _, _ = moments(2.0 * v + 3.0)
    assert mean2 == pytest.approx(2.0 * mean1 + 3.0, rel=1e-15)
    assert var2 == pytest.approx(4.0 * var1)


# --- per-class emission ---

@pytest.fixture(scope="module")
def clustered_sample():
    ds = generate_synthetic(SyntheticConfig(num_customers=2500, num_months=14, seed=13))
    sample = sample_proportion(ds, 0.5, 500, seed=2)
    return build_feature_table(sample, grid_sizes=(10, 25))


def test_positive_class_sees_higher_ntl_ratio(clustered_sample):
    rows = per_class_feature_moments(clustered_sample, (10, 25), 0.5)
    for gsz in (10, 25):
        by_label = {r.class_label: r for r in rows
                    if r.feature == "ntl_ratio" and r.grid_size == gsz}
        assert by_label[1].mean > by_label[0].mean


def test_row_structure_and_counts(clustered_sample):
    rows = per_class_feature_moments(clustered_sample, (10, 25), 0.5)
    assert len(rows) == 2 * 2 * 2
    keys = {(r.feature, r.grid_size, r.class_label) for r in rows}
    assert len(keys) == 8
    for r in rows:
        assert r.ntl_proportion == 0.5
        assert r.count > 0
        assert 0.0 <= r.mean <= 1.0
        assert r.variance_pop >= 0.0


def test_full_inspection_coverage_gives_unit_inspected_ratio():
    ds = generate_synthetic(SyntheticConfig(
        num_customers=300, num_months=13, seed=6,
        cluster_fraud_probs=(0.5,) * 12))
    # every generated customer carries an inspection row
    table = build_feature_table(ds, grid_sizes=(5,))
    rows = per_class_feature_moments(table, (5,), 0.5)
    for r in rows:
        if r.feature == "inspected_ratio":
            assert r.mean == 1.0
            assert r.variance_pop == 0.0
            assert r.skewness is None and r.kurtosis_excess is None


def test_mean_ntl_ratio_tracks_proportion():
    ds = generate_synthetic(SyntheticConfig(num_customers=4000, num_months=13, seed=17,
                                            cluster_fraud_probs=(0.55,) * 12))
    sample = sample_proportion(ds, 0.3, 1000, seed=4)
    table = build_feature_table(sample)
    for gsz in (50, 100, 200, 400):
        col = table.matrix_for([f"ntl_ratio_{gsz}"])[:, 0]
        assert abs(col.mean() - 0.3) <= 0.05


def test_absent_class_yields_na_markers(tmp_path):
    ds = generate_synthetic(SyntheticConfig(num_customers=900, num_months=13, seed=8,
                                            cluster_fraud_probs=(0.4,) * 12))
    sample = sample_proportion(ds, 0.0, 200, seed=1)
    table = build_feature_table(sample, grid_sizes=(10,))
    rows = per_class_feature_moments(table, (10,), 0.0)
    pos_rows = [r for r in rows if r.class_label == 1]
    assert pos_rows and all(r.count == 0 and r.mean is None for r in pos_rows)
    path = tmp_path / "moments.csv"
    write_moments_csv(path, rows)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == ("feature,grid_size,ntl_proportion,class,mean,"
                        "variance_pop,variance_sample,skewness,kurtosis_excess")
    na_lines = [ln for ln in lines[1:] if ln.split(",")[3] == "1"]
    assert na_lines and all(ln.endswith("NA,NA,NA,NA,NA") for ln in na_lines)


def test_csv_and_gnuplot_outputs(tmp_path, clustered_sample):
    rows = per_class_feature_moments(clustered_sample, (10, 25), 0.5)
    csv_path = tmp_path / "moments.csv"
    dat_path = tmp_path / "moments.dat"
    write_moments_csv(csv_path, rows)
    write_moments_gnuplot(dat_path, rows)
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 1 + len(rows)
    cells = lines[1].split(",")
    assert cells[0] in ("inspected_ratio", "ntl_ratio")
    assert float(cells[4]) == pytest.approx(float(cells[4]))
    dat = dat_path.read_text(encoding="utf-8")
    assert "# feature: inspected_ratio" in dat
    assert "# feature: ntl_ratio" in dat
    data_lines = [ln for ln in dat.splitlines() if ln and not ln.startswith("#")]
    assert len(data_lines) == len(rows)
    assert all(len(ln.split()) == 7 for ln in data_lines)


def test_single_member_class_has_mean_but_no_higher_moments():
    ds = generate_synthetic(SyntheticConfig(num_customers=900, num_months=13, seed=8,
                                            cluster_fraud_probs=(0.4,) * 12))
    sample = sample_proportion(ds, 0.01, 100, seed=1)  # exactly 1 positive
    table = build_feature_table(sample, grid_sizes=(10,))
    rows = per_class_feature_moments(table, (10,), 0.01)
    pos = [r for r in rows if r.class_label == 1]
    assert all(r.count == 1 for r in pos)
    assert all(r.mean is not None and r.variance_pop == 0.0 for r in pos)
    assert all(r.skewness is None and r.kurtosis_excess is None for r in pos)
