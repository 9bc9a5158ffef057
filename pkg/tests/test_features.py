"""Consumption features, one-hot encoding, variance filter, normalization,
matrix assembly."""

from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridntl.dataset import (
    CustomerRecord,
    Dataset,
    InspectionResult,
    MeterReading,
    SyntheticConfig,
    generate_synthetic,
)
from gridntl.errors import AlignmentError, ConfigError, EncodingError
from gridntl.features import (
    FeatureTable,
    apply_normalization,
    assemble_matrix,
    binary_feature_names,
    build_feature_table,
    consumption_feature_names,
    daily_average_consumption,
    filter_binary_features,
    fit_normalization,
    normalize,
    one_hot_encode,
    write_feature_csv,
    write_feature_manifest,
)


def _reads(cid, rows):
    return [MeterReading(cid, d, kwh) for d, kwh in rows]


# --- daily average consumption ---

def test_direct_division_example():
    rs = _reads("c1", [(date(2011, 1, 16), 250.0), (date(2011, 2, 15), 300.0)])
    res = daily_average_consumption(rs, date(2011, 2, 20), n_months=1)
    assert res.values.tolist() == [10.0]  # 300 kWh over 30 days
    assert res.missing_months == 0 and not res.zero_day_error


def test_no_readings_gives_zero_vector():
    res = daily_average_consumption([], date(2012, 5, 1), n_months=12)
    assert res.values.shape == (12,)
    assert not res.values.any()
    assert res.missing_months == 12


def test_first_reading_has_no_predecessor():
    rs = _reads("c1", [(date(2011, 1, 16), 250.0), (date(2011, 2, 15), 300.0)])
    res = daily_average_consumption(rs, date(2011, 2, 20), n_months=2)
    assert res.values.tolist() == [0.0, 10.0]
    assert res.missing_months == 1


def test_months_oldest_first_and_window_anchored():
    rows = [(date(2011, m, 10), 30.0 * m) for m in range(1, 7)]
    rs = _reads("c1", rows)
    res = daily_average_consumption(rs, date(2011, 6, 12), n_months=3)
    # months: april, may, june
    days_apr = (date(2011, 4, 10) - date(2011, 3, 10)).days
    days_may = (date(2011, 5, 10) - date(2011, 4, 10)).days
    days_jun = (date(2011, 6, 10) - date(2011, 5, 10)).days
    assert res.values.tolist() == [120.0 / days_apr, 150.0 / days_may, 180.0 / days_jun]


def test_gap_month_counts_as_missing():
    rs = _reads("c1", [(date(2011, 1, 16), 250.0), (date(2011, 3, 15), 300.0)])
    res = daily_average_consumption(rs, date(2011, 3, 20), n_months=3)
    assert res.values[0] == 0.0 and res.values[1] == 0.0
    assert res.values[2] == pytest.approx(300.0 / 58)
    assert res.missing_months == 2


def test_zero_day_gap_flags_and_zeroes():
    rs = _reads("c1", [(date(2011, 1, 16), 250.0), (date(2011, 1, 16), 50.0)])
    res = daily_average_consumption(rs, date(2011, 1, 20), n_months=1)
    assert res.zero_day_error
    assert res.values.tolist() == [0.0]


def test_scaling_consumption_scales_features_exactly():
    rows = [(date(2011, m, 10), 37.5 * m) for m in range(1, 13)]
    base = daily_average_consumption(_reads("c", rows), date(2011, 12, 15), 12)
    scaled_rows = [(d, kwh * 4.0) for d, kwh in rows]
    scaled = daily_average_consumption(_reads("c", scaled_rows), date(2011, 12, 15), 12)
    assert np.array_equal(scaled.values, base.values * 4.0)


def test_synthetic_visible_fraud_shows_drop_factor():
    ds = generate_synthetic(SyntheticConfig(
        num_customers=40, num_months=14, seed=3, noise_sigma=0.0,
        cluster_fraud_probs=(1.0,) * 12, fraud_visible_fraction=1.0,
        benign_drop_prob=0.0, background_fraud_prob=1.0, drop_factor=0.2))
    by = ds.readings_by_customer()
    latest = ds.latest_inspection()
    checked = 0
    for c in ds.customers:
        res = daily_average_consumption(by[c.customer_id],
                                        latest[c.customer_id].inspection_date, 12)
        v = res.values
        # only customers whose drop onset falls inside the 12-month window
        if v.min() > 0 and v.min() / v.max() < 0.5:
            assert v.min() / v.max() == pytest.approx(0.2, rel=1e-9)
            checked += 1
    assert checked > 10


def test_n_months_validation():
    with pytest.raises(ConfigError):
        daily_average_consumption([], date(2011, 1, 1), n_months=0)


def test_consumption_names_oldest_first():
    assert consumption_feature_names(3) == ["daily_avg_2", "daily_avg_1", "daily_avg_0"]


# --- one-hot encoding ---

def _cust(cid="c1", cls="residential", status="active", wires=2, volt="le_2_3kv"):
    return CustomerRecord(cid, 0.5, 0.5, cls, status, wires, volt)


def test_one_hot_single_customer():
    B = one_hot_encode([_cust()])
    assert B.shape == (1, 15)
    assert B.sum() == 4.0
    assert set(np.unique(B)) <= {0.0, 1.0}
    names = binary_feature_names()
    on = [names[k] for k in np.nonzero(B[0])[0]]
    assert on == ["class_residential", "contract_active", "wires_2", "voltage_le_2_3kv"]


def test_one_hot_identical_customers_identical_rows():
    B = one_hot_encode([_cust("a"), _cust("b")])
    assert np.array_equal(B[0], B[1])


def test_one_hot_group_exactly_one():
    from gridntl.dataset import CUSTOMER_CLASSES
    customers = [_cust(f"c{k}", cls=c) for k, c in enumerate(CUSTOMER_CLASSES)]
    B = one_hot_encode(customers)
    class_block = B[:, :7]
    assert np.array_equal(class_block.sum(axis=0), np.ones(7))
    # per-row group sums are exactly one
    assert np.array_equal(B[:, :7].sum(axis=1), np.ones(7))
    assert np.array_equal(B[:, 7:10].sum(axis=1), np.ones(7))
    assert np.array_equal(B[:, 10:13].sum(axis=1), np.ones(7))
    assert np.array_equal(B[:, 13:].sum(axis=1), np.ones(7))


def test_one_hot_other_class_needs_flag():
    c = _cust(cls="other")
    with pytest.raises(EncodingError):
        one_hot_encode([c])
    B = one_hot_encode([c], include_other_class=True)
    assert B.shape == (1, 16)
    assert B[0, 7] == 1.0
    assert len(binary_feature_names(include_other_class=True)) == 16


# --- variance filter ---

def test_filter_all_ones_removed():
    B = np.ones((10, 1))
    assert filter_binary_features(B, p=0.9).size == 0


def test_filter_half_ones_retained():
    B = np.array([[1.0], [0.0]] * 5)
    for p in (0.51, 0.7, 0.9, 1.0):
        assert filter_binary_features(B, p=p).tolist() == [0]


def test_filter_boundary_inclusive():
    B = np.zeros((10, 2))
    B[:9, 0] = 1.0   # exactly 90% ones
    B[0, 1] = 1.0    # 10% ones, the mirrored boundary
    assert filter_binary_features(B, p=0.9).tolist() == [0, 1]
    B2 = np.zeros((20, 1))
    B2[:19, 0] = 1.0  # 95% ones
    assert filter_binary_features(B2, p=0.9).size == 0


def test_filter_p_validation():
    B = np.ones((4, 1))
    for bad in (0.5, 0.2, 1.01):
        with pytest.raises(ConfigError):
            filter_binary_features(B, p=bad)


def test_filter_fraction_rule_matches_variance_rule():
    rng = np.random.default_rng(42)
    for trial in range(100):
        n = int(rng.integers(1, 40))
        d = int(rng.integers(1, 10))
        B = (rng.random((n, d)) < rng.random(d)).astype(float)
        p = float(rng.uniform(0.51, 1.0))
        by_fraction = filter_binary_features(B, p=p)
        f = B.mean(axis=0)
        by_variance = np.nonzero(f * (1.0 - f) >= p * (1.0 - p))[0]
        assert by_fraction.tolist() == by_variance.tolist()


# --- normalization ---

def test_normalize_hand_example_population_std():
    X = np.array([[1.0], [2.0], [3.0]])
    out, params = normalize(X)
    sigma = np.sqrt(2.0 / 3.0)
    assert out[:, 0] == pytest.approx([-1.0 / sigma, 0.0, 1.0 / sigma])
    assert out[0, 0] == pytest.approx(-1.224744871391589)
    assert params.mean[0] == 2.0
    assert params.std[0] == pytest.approx(sigma)


def test_normalize_constant_column_zeroed():
    X = np.full((5, 2), 7.0)
    X[:, 1] = [1, 2, 3, 4, 5]
    out, params = normalize(X)
    assert not out[:, 0].any()
    assert params.std[0] == 0.0


def test_normalize_idempotent_on_normalized_input():
    rng = np.random.default_rng(0)
    X = rng.normal(3.0, 2.5, (50, 4))
    once, _ = normalize(X)
    twice, _ = normalize(once)
    assert np.allclose(once, twice, atol=1e-12)


def test_normalize_moments_invariant():
    rng = np.random.default_rng(1)
    X = rng.exponential(5.0, (200, 6)) + rng.normal(0, 1, (200, 6))
    out, _ = normalize(X)
    scale = np.abs(X).mean(axis=0)
    assert (np.abs(out.mean(axis=0)) < 1e-9 * np.maximum(scale, 1.0)).all()
    assert out.std(axis=0) == pytest.approx(np.ones(6))


def test_apply_normalization_reuses_parameters():
    rng = np.random.default_rng(2)
    train = rng.normal(10.0, 3.0, (100, 3))
    test = rng.normal(10.0, 3.0, (40, 3))
    params = fit_normalization(train)
    out = apply_normalization(test, params)
    assert np.allclose(out, (test - train.mean(axis=0)) / train.std(axis=0))


@settings(deadline=None, max_examples=30)
@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_normalize_property_zero_mean_unit_variance(n, d, seed):
    X = np.random.default_rng(seed).normal(0, 10, (n, d))
    out, _ = normalize(X)
    live = X.std(axis=0) > 0
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-9)
    assert np.allclose(out.std(axis=0)[live], 1.0)


# --- assembly ---

def _blocks(ids, n_neigh=8, n_cons=12, n_bin=5):
    rng = np.random.default_rng(hash(tuple(ids)) % 2 ** 32)
    neigh = {c: rng.random(n_neigh) for c in ids}
    cons = {c: rng.random(n_cons) for c in ids}
    binary = {c: (rng.random(n_bin) < 0.5).astype(float) for c in ids}
    targets = {c: int(rng.random() < 0.5) for c in ids}
    return neigh, cons, binary, targets


@pytest.mark.parametrize("n_bin,expected", [(5, 25), (4, 24), (0, 20)])
def test_assemble_column_counts(n_bin, expected):
    ids = [f"c{k}" for k in range(6)]
    neigh, cons, binary, targets = _blocks(ids, n_bin=n_bin)
    out_ids, X, y = assemble_matrix(neigh, cons, binary, targets)
    assert X.shape == (6, expected)
    assert out_ids == sorted(ids)
    assert y.shape == (6,)


def test_assemble_rows_sorted_and_aligned():
    ids = ["c9", "c1", "c5"]
    neigh, cons, binary, targets = _blocks(ids)
    out_ids, X, y = assemble_matrix(neigh, cons, binary, targets)
    assert out_ids == ["c1", "c5", "c9"]
    for r, cid in enumerate(out_ids):
        assert np.array_equal(X[r, :8], neigh[cid])
        assert np.array_equal(X[r, 8:20], cons[cid])
        assert np.array_equal(X[r, 20:], binary[cid])
        assert y[r] == targets[cid]


def test_assemble_key_mismatch_errors():
    ids = ["c1", "c2"]
    neigh, cons, binary, targets = _blocks(ids)
    del neigh["c2"]
    with pytest.raises(AlignmentError):
        assemble_matrix(neigh, cons, binary, targets)


def test_assemble_pure_function():
    ids = [f"c{k}" for k in range(4)]
    neigh, cons, binary, targets = _blocks(ids)
    _, X1, y1 = assemble_matrix(neigh, cons, binary, targets)
    _, X2, y2 = assemble_matrix(neigh, cons, binary, targets)
    assert X1.tobytes() == X2.tobytes()
    assert np.array_equal(y1, y2)


# --- full table pipeline ---

def test_build_feature_table_shapes(small_dataset):
    table = build_feature_table(small_dataset, grid_sizes=(10, 20))
    n = len(table.ids)
    assert n == len(small_dataset.latest_inspection())
    assert table.ids == sorted(table.ids)
    assert table.n_neighborhood == 4 and table.n_consumption == 12
    assert table.matrix.shape == (n, 16 + len(table.retained_binary))
    assert table.X_full.shape == (n, 4 + 12 + 15)
    assert len(table.names) == 16 + len(table.retained_binary)
    assert table.y.shape == (n,)
    assert set(np.unique(table.y)) <= {0, 1}
    # neighborhood block within [0, 1]
    assert (table.matrix[:, :4] >= 0).all() and (table.matrix[:, :4] <= 1).all()
    # retained binary fractions obey the filter rule on sample rows
    for name in table.retained_binary:
        col = table.matrix_for([name])[:, 0]
        assert 0.1 <= col.mean() <= 0.9


def test_build_feature_table_excludes_outlier_rows():
    ds = generate_synthetic(SyntheticConfig(num_customers=120, num_months=14, seed=9))
    far = CustomerRecord("zzz_far", 1e5, 1e5, "residential", "active", 2, "le_2_3kv")
    customers = ds.customers + [far]
    inspections = ds.inspections + [InspectionResult("zzz_far", date(2012, 3, 1), 1)]
    ds2 = Dataset(customers, ds.readings, inspections)
    table = build_feature_table(ds2)
    assert "zzz_far" not in table.ids
    assert len(table.ids) == 120


def test_matrix_for_unknown_column_errors(small_dataset):
    table = build_feature_table(small_dataset)
    with pytest.raises(AlignmentError):
        table.matrix_for(["no_such_column"])


def test_columns_for_set(small_dataset):
    table = build_feature_table(small_dataset)
    cons = table.columns_for_set("consumption")
    assert cons == consumption_feature_names(12)
    assert table.columns_for_set("all") == table.names
    with pytest.raises(ConfigError):
        table.columns_for_set("geography")


def test_feature_csv_and_manifest_round_trip(tmp_path, tiny_dataset):
    import json
    table = build_feature_table(tiny_dataset)
    csv_path = tmp_path / "features.csv"
    man_path = tmp_path / "features.manifest.json"
    write_feature_csv(csv_path, table)
    _, params = normalize(table.matrix)
    write_feature_manifest(man_path, table, params)
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    assert header[0] == "customer_id" and header[-1] == "target"
    assert header[1:-1] == table.names
    assert len(lines) == 1 + len(table.ids)
    first = lines[1].split(",")
    assert first[0] == table.ids[0]
    assert float(first[1]) == table.matrix[0, 0]
    doc = json.loads(man_path.read_text(encoding="utf-8"))
    assert doc["columns"] == table.names
    assert doc["binary_retained"] == table.retained_binary
    assert len(doc["normalization"]["mean"]) == len(table.names)
