"""Per-customer feature construction: consumption averages, one-hot master
data with variance filtering, matrix assembly, and normalization.

The full matrix for a sample has one row per inspected customer (sorted
by customer_id) and columns in a fixed documented order:

1. neighborhood ratios, grid sizes in configuration order, inspected
   ratio before loss ratio (8 columns for the default four sizes);
2. daily average consumption for the N months ending at the customer's
   most recent inspection month, oldest month first (N default 12),
   named daily_avg_<k> where k is the month offset before the anchor;
3. one-hot master-data indicators in canonical category order (class,
   contract status, wire count, voltage), reduced to the columns whose
   ones-fraction within the sample lies in [1 - p, p].

Normalization (zero mean, unit population variance) is a separate step
so its parameters can be fit on a training split and reused on held-out
rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .dataset import (
    CONTRACT_STATUSES,
    CUSTOMER_CLASSES,
    EXTRA_CLASS,
    VOLTAGE_CLASSES,
    WIRE_COUNTS,
    Dataset,
)
from .errors import AlignmentError, ConfigError, EncodingError
from .geogrid import (
    DEFAULT_GRID_SIZES,
    assign_neighborhood_features,
    compute_bounding_box,
    neighborhood_feature_names,
    remove_coordinate_outliers,
)

DEFAULT_N_MONTHS = 12
DEFAULT_VARIANCE_P = 0.9


@dataclass
class ConsumptionResult:
    values: np.ndarray
    missing_months: int
    zero_day_error: bool


def consumption_feature_names(n_months: int = DEFAULT_N_MONTHS) -> list[str]:
    return [f"daily_avg_{k}" for k in range(n_months - 1, -1, -1)]


def _month_index(d: date) -> int:
    return d.year * 12 + (d.month - 1)


def daily_average_consumption(readings, anchor_date: date,
                              n_months: int = DEFAULT_N_MONTHS) -> ConsumptionResult:
    """Daily average consumption for the N months ending at the anchor month.

    The value for a month is that month's recorded consumption divided by
    the day count back to the previous reading. Months without a reading,
    or whose reading has no predecessor, contribute 0 and are counted in
    missing_months. A non-positive day gap sets the month to 0 and raises
    the zero_day_error flag instead of dividing.
    """
    if n_months < 1:
        raise ConfigError(f"n_months must be >= 1, got {n_months}")
    values = np.zeros(n_months, dtype=np.float64)
    anchor = _month_index(anchor_date)
    by_month = {}
    for pos, r in enumerate(readings):
        by_month[_month_index(r.reading_date)] = pos
    missing = 0
    zero_day = False
    for out_pos, mi in enumerate(range(anchor - n_months + 1, anchor + 1)):
        pos = by_month.get(mi)
        if pos is None or pos == 0:
            missing += 1
            continue
        cur, prev = readings[pos], readings[pos - 1]
        days = (cur.reading_date - prev.reading_date).days
        if days <= 0:
            zero_day = True
            continue
        values[out_pos] = cur.consumption_kwh / days
    return ConsumptionResult(values, missing, zero_day)


def binary_feature_names(include_other_class: bool = False) -> list[str]:
    classes = CUSTOMER_CLASSES + ((EXTRA_CLASS,) if include_other_class else ())
    names = [f"class_{c}" for c in classes]
    names += [f"contract_{s}" for s in CONTRACT_STATUSES]
    names += [f"wires_{w}" for w in WIRE_COUNTS]
    names += [f"voltage_{v}" for v in VOLTAGE_CLASSES]
    return names


def one_hot_encode(customers, include_other_class: bool = False) -> np.ndarray:
    """(n, 15 or 16) 0/1 matrix; exactly one 1 per categorical group."""
    classes = CUSTOMER_CLASSES + ((EXTRA_CLASS,) if include_other_class else ())
    class_pos = {c: k for k, c in enumerate(classes)}
    status_pos = {s: k for k, s in enumerate(CONTRACT_STATUSES)}
    wire_pos = {w: k for k, w in enumerate(WIRE_COUNTS)}
    volt_pos = {v: k for k, v in enumerate(VOLTAGE_CLASSES)}
    nc, ns, nw = len(classes), len(CONTRACT_STATUSES), len(WIRE_COUNTS)
    out = np.zeros((len(customers), nc + ns + nw + len(VOLTAGE_CLASSES)),
                   dtype=np.float64)
    for row, c in enumerate(customers):
        try:
            out[row, class_pos[c.customer_class]] = 1.0
            out[row, nc + status_pos[c.contract_status]] = 1.0
            out[row, nc + ns + wire_pos[c.num_wires]] = 1.0
            out[row, nc + ns + nw + volt_pos[c.voltage]] = 1.0
        except KeyError as exc:
            raise EncodingError(
                f"customer {c.customer_id!r} has unknown category token {exc.args[0]!r}"
            ) from None
    return out


def filter_binary_features(binary: np.ndarray,
                           p: float = DEFAULT_VARIANCE_P) -> np.ndarray:
    """Indices of columns whose ones-fraction lies in [1 - p, p].

    Equivalent to keeping columns with Bernoulli variance f(1-f) of at
    least p(1-p): near-constant indicators carry too little variance to
    matter and are dropped. Boundary is inclusive (a column that is one
    in exactly p of the rows stays).
    """
    if not 0.5 < p <= 1.0:
        raise ConfigError(f"variance filter p must be in (0.5, 1], got {p}")
    if binary.shape[0] == 0:
        return np.arange(binary.shape[1])
    f = binary.mean(axis=0)
    keep = (f >= 1.0 - p) & (f <= p)
    return np.nonzero(keep)[0]


@dataclass(frozen=True)
class NormParams:
    mean: np.ndarray
    std: np.ndarray


def fit_normalization(X: np.ndarray) -> NormParams:
    """Column means and population standard deviations."""
    return NormParams(X.mean(axis=0), X.std(axis=0))


def apply_normalization(X: np.ndarray, params: NormParams) -> np.ndarray:
    """x' = (x - mean) / std; columns with std 0 become all zeros."""
    std = np.where(params.std == 0.0, 1.0, params.std)
    out = (X - params.mean) / std
    out[:, params.std == 0.0] = 0.0
    return out


def normalize(X: np.ndarray) -> tuple[np.ndarray, NormParams]:
    params = fit_normalization(X)
    return apply_normalization(X, params), params


def assemble_matrix(neighborhood: dict, consumption: dict, binary: dict,
                    targets: dict) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Stack per-customer blocks into (ids, X, y), rows sorted by id.

    All four mappings must share exactly the same customer keys.
    """
    keys = set(targets)
    for name, part in (("neighborhood", neighborhood),
                       ("consumption", consumption), ("binary", binary)):
        if set(part) != keys:
            missing = keys ^ set(part)
            raise AlignmentError(
                f"{name} features keyed by a different customer set "
                f"({len(missing)} mismatched ids, e.g. {sorted(missing)[:3]})")
    ids = sorted(keys)
    if not ids:
        raise AlignmentError("no customers to assemble")
    X = np.hstack([
        np.vstack([np.asarray(neighborhood[c], dtype=np.float64) for c in ids]),
        np.vstack([np.asarray(consumption[c], dtype=np.float64) for c in ids]),
        np.vstack([np.asarray(binary[c], dtype=np.float64) for c in ids]),
    ])
    y = np.array([targets[c] for c in ids], dtype=np.int64)
    return ids, np.ascontiguousarray(X), y


@dataclass
class FeatureTable:
    """Assembled sample matrix plus enough context to re-project columns.

    X_full holds every column (neighborhood, consumption, all binary
    indicators before filtering) so a matrix can be produced for any
    column subset, e.g. the manifest of a model trained on a sample with
    a different retained set. `names` / `matrix` expose the filtered
    default view; feature sets "all" and "consumption" select the
    standard column groups.
    """

    ids: list[str]
    X_full: np.ndarray
    names_full: list[str]
    y: np.ndarray
    n_neighborhood: int
    n_consumption: int
    retained_binary: list[str]
    missing_months: np.ndarray
    zero_day_flags: np.ndarray
    _col: dict = field(default=None, repr=False, compare=False)

    def _colmap(self):
        if self._col is None:
            self._col = {n: k for k, n in enumerate(self.names_full)}
        return self._col

    @property
    def names(self) -> list[str]:
        base = self.names_full[:self.n_neighborhood + self.n_consumption]
        return base + self.retained_binary

    @property
    def matrix(self) -> np.ndarray:
        return self.matrix_for(self.names)

    def matrix_for(self, column_names) -> np.ndarray:
        cm = self._colmap()
        try:
            idx = [cm[n] for n in column_names]
        except KeyError as exc:
            raise AlignmentError(f"unknown feature column {exc.args[0]!r}") from None
        return np.ascontiguousarray(self.X_full[:, idx])

    def columns_for_set(self, feature_set: str) -> list[str]:
        if feature_set == "all":
            return self.names
        if feature_set == "consumption":
            a = self.n_neighborhood
            return self.names_full[a:a + self.n_consumption]
        raise ConfigError(f"unknown feature set {feature_set!r}")


def build_feature_table(ds: Dataset, n_months: int = DEFAULT_N_MONTHS,
                        grid_sizes=DEFAULT_GRID_SIZES,
                        variance_p: float = DEFAULT_VARIANCE_P,
                        include_other_class: bool = False,
                        outlier_k_sigma: float = 5.0,
                        outlier_mode: str = "per_axis",
                        workers: int = 1,
                        exclude_own: bool = False) -> FeatureTable:
    """Full pipeline from a sampled dataset to an unnormalized FeatureTable.

    Coordinate outliers are removed first; the grid is built over the
    retained customers and rows are the retained customers that carry an
    inspection. The variance filter runs on those rows only, so each
    sample selects its own binary columns.
    """
    retained, _ = remove_coordinate_outliers(
        ds.customers, k_sigma=outlier_k_sigma, mode=outlier_mode)
    box = compute_bounding_box(retained)
    grid_ds = Dataset(retained, ds.readings, ds.inspections)
    neigh = assign_neighborhood_features(
        grid_ds, box, grid_sizes=grid_sizes, workers=workers,
        exclude_own=exclude_own)

    latest = grid_ds.latest_inspection()
    retained_ids = {c.customer_id for c in retained}
    rows = sorted(cid for cid in latest if cid in retained_ids)
    if not rows:
        raise AlignmentError("no inspected customers remain after outlier removal")
    row_of = {c.customer_id: k for k, c in enumerate(retained)}
    by_customer = grid_ds.readings_by_customer()

    cons = np.zeros((len(rows), n_months), dtype=np.float64)
    missing = np.zeros(len(rows), dtype=np.int64)
    zero_day = np.zeros(len(rows), dtype=bool)
    for r, cid in enumerate(rows):
        res = daily_average_consumption(
            by_customer.get(cid, []), latest[cid].inspection_date, n_months)
        cons[r] = res.values
        missing[r] = res.missing_months
        zero_day[r] = res.zero_day_error

    row_customers = [retained[row_of[cid]] for cid in rows]
    binary = one_hot_encode(row_customers, include_other_class=include_other_class)
    keep = filter_binary_features(binary, p=variance_p)
    bin_names = binary_feature_names(include_other_class)

    neigh_rows = neigh[[row_of[cid] for cid in rows]]
    X_full = np.ascontiguousarray(np.hstack([neigh_rows, cons, binary]))
    names_full = (neighborhood_feature_names(grid_sizes)
                  + consumption_feature_names(n_months) + bin_names)
    y = np.array([latest[cid].ntl_found for cid in rows], dtype=np.int64)
    return FeatureTable(
        ids=rows, X_full=X_full, names_full=names_full, y=y,
        n_neighborhood=2 * len(grid_sizes), n_consumption=n_months,
        retained_binary=[bin_names[k] for k in keep],
        missing_months=missing, zero_day_flags=zero_day)


def write_feature_csv(path, table: FeatureTable) -> None:
    """Matrix dump: customer_id, retained columns, target."""
    names = table.names
    X = table.matrix
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["customer_id"] + names + ["target"]) + "\n")
        for r, cid in enumerate(table.ids):
            vals = [repr(v) for v in X[r].tolist()]
            fh.write(",".join([cid] + vals + [str(int(table.y[r]))]) + "\n")


def write_feature_manifest(path, table: FeatureTable,
                           params: NormParams | None = None) -> None:
    """Companion manifest: column names, retained mask, normalization."""
    doc = {
        "columns": table.names,
        "n_neighborhood": table.n_neighborhood,
        "n_consumption": table.n_consumption,
        "binary_all": table.names_full[table.n_neighborhood + table.n_consumption:],
        "binary_retained": table.retained_binary,
        "normalization": None if params is None else {
            "mean": params.mean.tolist(),
            "std": params.std.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
