"""Geographic grid features: cell binning and neighborhood inspection ratios.

Customers are binned into square grids at several resolutions over the
bounding box of their coordinates. Each occupied cell gets two
statistics: the fraction of its customers that were ever inspected, and
the fraction of its inspected customers where non-technical loss was
found. Every customer inherits the pair from its containing cell at each
resolution, giving 2 * len(grid_sizes) neighborhood features (8 for the
default four resolutions).

Cell tallying is a parallel fold over customer chunks: per-chunk integer
count arrays merge by exact addition, and ratios are computed only after
the final merge, so results are identical for any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import CustomerRecord, Dataset
from .errors import CellAssignmentError, ConfigError, DegenerateInputError

DEFAULT_GRID_SIZES = (50, 100, 200, 400)

GRID_CSV_HEADER = ["grid_size", "i", "j", "customers", "inspected", "ntl",
                   "inspected_ratio", "ntl_ratio"]


@dataclass(frozen=True)
class BoundingBox:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self):
        if not (self.lon_min < self.lon_max and self.lat_min < self.lat_max):
            raise DegenerateInputError(
                f"bounding box must have positive extent on both axes, got "
                f"lon [{self.lon_min}, {self.lon_max}], lat [{self.lat_min}, {self.lat_max}]")

    @property
    def width(self) -> float:
        return self.lon_max - self.lon_min

    @property
    def height(self) -> float:
        return self.lat_max - self.lat_min


@dataclass(frozen=True)
class GridSpec:
    cells_per_axis: int
    box: BoundingBox

    def __post_init__(self):
        if self.cells_per_axis < 1:
            raise ConfigError(f"cells_per_axis must be >= 1, got {self.cells_per_axis}")


@dataclass(frozen=True)
class GridCellStats:
    i: int
    j: int
    num_customers: int
    num_inspected: int
    num_ntl: int
    inspected_ratio: float
    ntl_ratio: float


def _coords(customers) -> tuple[np.ndarray, np.ndarray]:
    lon = np.array([c.longitude for c in customers], dtype=np.float64)
    lat = np.array([c.latitude for c in customers], dtype=np.float64)
    return lon, lat


def remove_coordinate_outliers(customers, k_sigma: float = 5.0,
                               mode: str = "per_axis"):
    """Split customers into (retained, removed) by distance from the mean.

    per_axis keeps a customer when both |lon - mean| <= k_sigma * std(lon)
    and |lat - mean| <= k_sigma * std(lat); radial applies the same test
    to the Euclidean distance from the mean point. Population standard
    deviations over the full input are used in both modes.
    """
    if mode not in ("per_axis", "radial"):
        raise ConfigError(f"outlier mode must be per_axis or radial, got {mode!r}")
    if k_sigma < 0:
        raise ConfigError(f"k_sigma must be >= 0, got {k_sigma}")
    if len(customers) < 2:
        raise DegenerateInputError(
            f"outlier removal needs at least 2 customers, got {len(customers)}")
    if math.isinf(k_sigma):
        return list(customers), []

    lon, lat = _coords(customers)
    if mode == "per_axis":
        keep = ((np.abs(lon - lon.mean()) <= k_sigma * lon.std())
                & (np.abs(lat - lat.mean()) <= k_sigma * lat.std()))
    else:
        d = np.hypot(lon - lon.mean(), lat - lat.mean())
        keep = d <= k_sigma * d.std()
    retained = [c for c, k in zip(customers, keep) if k]
    removed = [c for c, k in zip(customers, keep) if not k]
    if not retained:
        raise DegenerateInputError("outlier removal rejected every customer")
    return retained, removed


def compute_bounding_box(customers) -> BoundingBox:
    """Tight box over the coordinates, with degenerate axes epsilon-padded."""
    if not customers:
        raise DegenerateInputError("cannot compute bounding box of zero customers")
    lon, lat = _coords(customers)
    lon_min, lon_max = float(lon.min()), float(lon.max())
    lat_min, lat_max = float(lat.min()), float(lat.max())
    if lon_min == lon_max:
        pad = max(abs(lon_min), 1.0) * 1e-9
        lon_min, lon_max = lon_min - pad, lon_max + pad
    if lat_min == lat_max:
        pad = max(abs(lat_min), 1.0) * 1e-9
        lat_min, lat_max = lat_min - pad, lat_max + pad
    return BoundingBox(lon_min, lon_max, lat_min, lat_max)


def cell_indices(customers, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """(i, j) cell index per customer; i bins longitude, j latitude.

    Half-open binning floor((coord - min) / cell_width); the closed top
    edge clamps into the last cell. Coordinates outside the box raise.
    """
    lon, lat = _coords(customers)
    box, g = spec.box, spec.cells_per_axis
    bad = ((lon < box.lon_min) | (lon > box.lon_max)
           | (lat < box.lat_min) | (lat > box.lat_max))
    if bad.any():
        c = customers[int(np.argmax(bad))]
        raise CellAssignmentError(
            f"customer {c.customer_id!r} at ({c.longitude}, {c.latitude}) "
            f"outside bounding box")
    iw = np.floor((lon - box.lon_min) / (box.width / g)).astype(np.int64)
    jh = np.floor((lat - box.lat_min) / (box.height / g)).astype(np.int64)
    np.clip(iw, 0, g - 1, out=iw)
    np.clip(jh, 0, g - 1, out=jh)
    return iw, jh


def _tally(flat, inspected, ntl, n_bins):
    cust = np.bincount(flat, minlength=n_bins)
    insp = np.bincount(flat[inspected], minlength=n_bins)
    pos = np.bincount(flat[ntl], minlength=n_bins)
    return cust, insp, pos


def build_grid(ds: Dataset, spec: GridSpec, workers: int = 1) -> dict:
    """Per-cell statistics over the dataset's customers and inspections.

    Returns {(i, j): GridCellStats} for occupied cells only. A customer is
    counted as inspected when it has any inspection row; as NTL when its
    most recent inspection found a loss. ntl_ratio of a cell with no
    inspected customers is 0.0 by convention.
    """
    customers = ds.customers
    if not customers:
        return {}
    iw, jh = cell_indices(customers, spec)
    g = spec.cells_per_axis
    flat = iw * g + jh
    latest = ds.latest_inspection()
    inspected = np.array([c.customer_id in latest for c in customers], dtype=bool)
    ntl = np.array([c.customer_id in latest
                    and latest[c.customer_id].ntl_found == 1 for c in customers],
                   dtype=bool)

    n_bins = g * g
    if workers > 1 and len(customers) > workers:
        bounds = np.linspace(0, len(customers), workers + 1, dtype=int)
        chunks = [(flat[a:b], inspected[a:b], ntl[a:b])
                  for a, b in zip(bounds, bounds[1:]) if a < b]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ch: _tally(*ch, n_bins), chunks))
        cust = sum(p[0] for p in parts)
        insp = sum(p[1] for p in parts)
        pos = sum(p[2] for p in parts)
    else:
        cust, insp, pos = _tally(flat, inspected, ntl, n_bins)

    out = {}
    for b in np.nonzero(cust)[0]:
        nc, ni, nn = int(cust[b]), int(insp[b]), int(pos[b])
        out[(int(b) // g, int(b) % g)] = GridCellStats(
            i=int(b) // g, j=int(b) % g,
            num_customers=nc, num_inspected=ni, num_ntl=nn,
            inspected_ratio=ni / nc,
            ntl_ratio=nn / ni if ni > 0 else 0.0,
        )
    return out


def neighborhood_feature_names(grid_sizes=DEFAULT_GRID_SIZES) -> list[str]:
    names = []
    for gsz in grid_sizes:
        names.append(f"inspected_ratio_{gsz}")
        names.append(f"ntl_ratio_{gsz}")
    return names


def assign_neighborhood_features(ds: Dataset, box: BoundingBox,
                                 grid_sizes=DEFAULT_GRID_SIZES,
                                 workers: int = 1,
                                 exclude_own: bool = False) -> np.ndarray:
    """(n_customers, 2 * len(grid_sizes)) matrix of cell ratios.

    Column order follows neighborhood_feature_names(): for each grid size
    ascending by position in grid_sizes, the containing cell's
    inspected_ratio then ntl_ratio. With exclude_own, each customer's own
    inspection row is removed from its cell's counts before its ratios
    are computed (leave-one-out variant; the default reproduces ratios
    computed over the full inspection set, own row included).
    """
    n = len(ds.customers)
    out = np.zeros((n, 2 * len(grid_sizes)), dtype=np.float64)
    if n == 0:
        return out
    latest = ds.latest_inspection()
    own_i = np.array([c.customer_id in latest for c in ds.customers], dtype=np.int64)
    own_n = np.array([c.customer_id in latest
                      and latest[c.customer_id].ntl_found == 1 for c in ds.customers],
                     dtype=np.int64)
    for col, gsz in enumerate(grid_sizes):
        spec = GridSpec(gsz, box)
        cells = build_grid(ds, spec, workers=workers)
        iw, jh = cell_indices(ds.customers, spec)
        for row in range(n):
            cell = cells[(int(iw[row]), int(jh[row]))]
            if exclude_own:
                ni = cell.num_inspected - own_i[row]
                nn = cell.num_ntl - own_n[row]
                out[row, 2 * col] = ni / cell.num_customers
                out[row, 2 * col + 1] = nn / ni if ni > 0 else 0.0
            else:
                out[row, 2 * col] = cell.inspected_ratio
                out[row, 2 * col + 1] = cell.ntl_ratio
    return out


def cell_area(box: BoundingBox, cells_per_axis: int,
              km_per_degree_lon: float = 100.0,
              km_per_degree_lat: float = 100.0) -> float:
    """Area of one grid cell in km², given a degrees-to-km scale."""
    if km_per_degree_lon <= 0 or km_per_degree_lat <= 0:
        raise ConfigError("degree-to-km scales must be > 0")
    total = (box.width * km_per_degree_lon) * (box.height * km_per_degree_lat)
    return total / (cells_per_axis * cells_per_axis)


def write_grid_csv(path, grids: dict) -> None:
    """Dump {grid_size: {(i, j): GridCellStats}} sorted by size then cell."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_CSV_HEADER)
        for gsz in sorted(grids):
            for key in sorted(grids[gsz]):
                c = grids[gsz][key]
                w.writerow([gsz, c.i, c.j, c.num_customers, c.num_inspected,
                            c.num_ntl, repr(c.inspected_ratio), repr(c.ntl_ratio)])
