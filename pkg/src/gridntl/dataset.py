"""Canonical data schema, CSV persistence, synthetic data, proportion sampling.

Three record collections make up a dataset: customers (master data and
coordinates), meter readings (dated cumulative consumption), and
inspection results (the binary label source). The synthetic generator
plants spatial fraud clusters and consumption-drop signatures so the
downstream pipeline has a known signal to recover.

CSV formats (comma-delimited, header row required, UTF-8):

* customers.csv:   customer_id,longitude,latitude,class,contract_status,num_wires,voltage
* readings.csv:    customer_id,reading_date,consumption_kwh
* inspections.csv: customer_id,inspection_date,ntl_found

Dates are ISO-8601; categorical tokens are the lowercase snake_case
values enumerated below. Files written by this module are in canonical
form: records sorted by customer_id (readings additionally by date), and
floats rendered with repr() so a write/load cycle is byte-identical.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import ConfigError, IntegrityError, ParseError, SamplingError

CUSTOMER_CLASSES = (
    "residential",
    "commercial",
    "industrial",
    "public_illumination",
    "rural",
    "public_service",
    "power_generation",
)
# Optional eighth class; accepted on load, one-hot encoded only when the
# encoder is configured for it.
EXTRA_CLASS = "other"
CONTRACT_STATUSES = ("active", "suspended", "inactive")
WIRE_COUNTS = (1, 2, 3)
VOLTAGE_CLASSES = ("gt_2_3kv", "le_2_3kv")

CUSTOMERS_HEADER = ["customer_id", "longitude", "latitude", "class",
                    "contract_status", "num_wires", "voltage"]
READINGS_HEADER = ["customer_id", "reading_date", "consumption_kwh"]
INSPECTIONS_HEADER = ["customer_id", "inspection_date", "ntl_found"]

# Synthetic bounding box in degrees, 5:2 latitude:longitude extent to
# match a roughly 500 km x 200 km service area.
BOX_LON = (0.0, 2.0)
BOX_LAT = (0.0, 5.0)


@dataclass(frozen=True, slots=True)
class CustomerRecord:
    customer_id: str
    longitude: float
    latitude: float
    customer_class: str
    contract_status: str
    num_wires: int
    voltage: str


@dataclass(frozen=True, slots=True)
class MeterReading:
    customer_id: str
    reading_date: date
    consumption_kwh: float


@dataclass(frozen=True, slots=True)
class InspectionResult:
    customer_id: str
    inspection_date: date
    ntl_found: int


@dataclass
class Dataset:
    """Immutable-by-convention container for the three record collections."""

    customers: list[CustomerRecord]
    readings: list[MeterReading]
    inspections: list[InspectionResult]

    _readings_by_customer: dict | None = field(default=None, repr=False, compare=False)
    _latest_inspection: dict | None = field(default=None, repr=False, compare=False)

    def readings_by_customer(self) -> dict[str, list[MeterReading]]:
        """Readings per customer, date-ascending (cached)."""
        if self._readings_by_customer is None:
            by = {}
            for r in self.readings:
                by.setdefault(r.customer_id, []).append(r)
            for rs in by.values():
                rs.sort(key=lambda r: r.reading_date)
            self._readings_by_customer = by
        return self._readings_by_customer

    def latest_inspection(self) -> dict[str, InspectionResult]:
        """Most recent inspection per customer (cached); defines the target."""
        if self._latest_inspection is None:
            latest = {}
            for ins in self.inspections:
                cur = latest.get(ins.customer_id)
                if cur is None or ins.inspection_date >= cur.inspection_date:
                    latest[ins.customer_id] = ins
            self._latest_inspection = latest
        return self._latest_inspection


def _parse_float(token, path, line, what):
    try:
        v = float(token)
    except ValueError:
        raise ParseError(path, line, f"bad {what}: {token!r}") from None
    if not math.isfinite(v):
        raise ParseError(path, line, f"non-finite {what}: {token!r}")
    return v


def _parse_date(token, path, line):
    try:
        return date.fromisoformat(token)
    except ValueError:
        raise ParseError(path, line, f"bad date: {token!r}") from None


def _open_rows(path, expected_header):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header row") from None
        if header != expected_header:
            raise ParseError(path, 1, f"expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ParseError(path, lineno, f"expected {len(expected_header)} fields, got {len(row)}")
            yield lineno, row


def load_customers(path) -> list[CustomerRecord]:
    out = []
    seen = set()
    valid_classes = set(CUSTOMER_CLASSES) | {EXTRA_CLASS}
    for lineno, row in _open_rows(path, CUSTOMERS_HEADER):
        cid, lon, lat, cls, status, wires, voltage = row
        if cid in seen:
            raise IntegrityError(f"{path}: duplicate customer_id {cid!r}")
        seen.add(cid)
        if cls not in valid_classes:
            raise ParseError(path, lineno, f"unknown class token {cls!r}")
        if status not in CONTRACT_STATUSES:
            raise ParseError(path, lineno, f"unknown contract_status token {status!r}")
        if voltage not in VOLTAGE_CLASSES:
            raise ParseError(path, lineno, f"unknown voltage token {voltage!r}")
        try:
            nw = int(wires)
        except ValueError:
            raise ParseError(path, lineno, f"bad num_wires: {wires!r}") from None
        if nw not in WIRE_COUNTS:
            raise ParseError(path, lineno, f"num_wires must be one of {WIRE_COUNTS}, got {nw}")
        out.append(CustomerRecord(
            customer_id=cid,
            longitude=_parse_float(lon, path, lineno, "longitude"),
            latitude=_parse_float(lat, path, lineno, "latitude"),
            customer_class=cls,
            contract_status=status,
            num_wires=nw,
            voltage=voltage,
        ))
    return out


def load_readings(path) -> list[MeterReading]:
    out = []
    for lineno, row in _open_rows(path, READINGS_HEADER):
        cid, rdate, kwh = row
        v = _parse_float(kwh, path, lineno, "consumption_kwh")
        if v < 0:
            raise ParseError(path, lineno, f"consumption_kwh must be >= 0, got {kwh}")
        out.append(MeterReading(cid, _parse_date(rdate, path, lineno), v))
    return out


def load_inspections(path) -> list[InspectionResult]:
    out = []
    for lineno, row in _open_rows(path, INSPECTIONS_HEADER):
        cid, idate, found = row
        if found not in ("0", "1"):
            raise ParseError(path, lineno, f"ntl_found must be 0 or 1, got {found!r}")
        out.append(InspectionResult(cid, _parse_date(idate, path, lineno), int(found)))
    return out


def load_dataset(customers_path, readings_path, inspections_path) -> Dataset:
    """Load and cross-validate the three collections.

    Verifies referential integrity (every reading/inspection customer_id
    exists in customers) and the per-customer reading invariants (strictly
    date-ascending, at most one reading per calendar month).
    """
    customers = load_customers(customers_path)
    readings = load_readings(readings_path)
    inspections = load_inspections(inspections_path)

    known = {c.customer_id for c in customers}
    last_seen: dict[str, date] = {}
    for r in readings:
        if r.customer_id not in known:
            raise IntegrityError(f"{readings_path}: reading references unknown customer_id {r.customer_id!r}")
        prev = last_seen.get(r.customer_id)
        if prev is not None:
            if r.reading_date <= prev:
                raise IntegrityError(
                    f"{readings_path}: readings for {r.customer_id!r} not strictly date-ascending")
            if (prev.year, prev.month) == (r.reading_date.year, r.reading_date.month):
                raise IntegrityError(
                    f"{readings_path}: two readings in {prev.year}-{prev.month:02d} for {r.customer_id!r}")
        last_seen[r.customer_id] = r.reading_date
    for ins in inspections:
        if ins.customer_id not in known:
            raise IntegrityError(
                f"{inspections_path}: inspection references unknown customer_id {ins.customer_id!r}")
    return Dataset(customers, readings, inspections)


def write_dataset(ds: Dataset, customers_path, readings_path, inspections_path) -> None:
    """Write the three CSVs; record order is preserved as stored."""
    with open(customers_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CUSTOMERS_HEADER)
        for c in ds.customers:
            w.writerow([c.customer_id, repr(c.longitude), repr(c.latitude),
                        c.customer_class, c.contract_status, c.num_wires, c.voltage])
    with open(readings_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(READINGS_HEADER)
        for r in ds.readings:
            w.writerow([r.customer_id, r.reading_date.isoformat(), repr(r.consumption_kwh)])
    with open(inspections_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INSPECTIONS_HEADER)
        for i in ds.inspections:
            w.writerow([i.customer_id, i.inspection_date.isoformat(), i.ntl_found])


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic generator; the seed fully determines output.

    Fraudulent customers get their daily consumption level multiplied by
    drop_factor from a random onset month on, but only for the
    fraud_visible_fraction of them: most NTL types (meter bypass, billing
    errors) do not show up in the consumption series at all, which keeps
    pure time-series classifiers in the weak regime the geographic
    features are meant to fix. benign_drop_prob gives honest customers a
    chance of a similar-looking drop (vacancy, moving out).
    """

    num_customers: int
    num_months: int = 24
    cluster_count: int = 12
    cluster_fraud_probs: tuple[float, ...] | None = None
    fraud_prob_range: tuple[float, float] = (0.02, 0.8)
    drop_factor: float = 0.2
    fraud_visible_fraction: float = 0.3
    benign_drop_prob: float = 0.05
    background_fraction: float = 0.1
    background_fraud_prob: float = 0.05
    cluster_sigma: float = 0.05
    noise_sigma: float = 0.1
    base_daily_range: tuple[float, float] = (4.0, 30.0)
    start_year: int = 2011
    start_month: int = 1
    seed: int = 42

    def validate(self) -> None:
        if self.num_customers < 0:
            raise ConfigError("num_customers must be >= 0")
        if self.num_customers > 0 and self.cluster_count == 0 and self.background_fraction < 1.0:
            raise ConfigError("cluster_count is 0 but num_customers > 0")
        if self.num_months < 1:
            raise ConfigError("num_months must be >= 1")
        if not 0.0 < self.drop_factor <= 1.0:
            raise ConfigError("drop_factor must be in (0, 1]")
        for name in ("fraud_visible_fraction", "benign_drop_prob",
                     "background_fraction", "background_fraud_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.fraud_prob_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"fraud_prob_range must be within [0, 1], got {self.fraud_prob_range}")
        if self.cluster_fraud_probs is not None:
            if len(self.cluster_fraud_probs) != self.cluster_count:
                raise ConfigError("cluster_fraud_probs length must equal cluster_count")
            for p in self.cluster_fraud_probs:
                if not 0.0 <= p <= 1.0:
                    raise ConfigError(f"cluster fraud probability {p} outside [0, 1]")
        if self.cluster_sigma <= 0:
            raise ConfigError("cluster_sigma must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


def _month_date(year: int, month0: int, offset: int, day: int) -> date:
    """Calendar date for month index `offset` from (year, month0), clamped day."""
    m = month0 - 1 + offset
    return date(year + m // 12, m % 12 + 1, day)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Build a dataset with planted geographic NTL clusters.

    Customers sit in Gaussian spatial clusters (plus a uniform background
    share) inside the 5:2 bounding box; each cluster carries its own fraud
    probability, so neighborhoods differ in NTL density. Every customer
    gets num_months monthly readings and exactly one inspection, dated
    just after the last reading, whose label equals the fraud flag.
    """
    config.validate()
    n = config.num_customers
    if n == 0:
        return Dataset([], [], [])

    rng = np.random.default_rng(config.seed)
    n_bg = int(round(config.background_fraction * n))
    n_clustered = n - n_bg
    ncl = config.cluster_count

    # Cluster geometry and per-cluster fraud probability.
    margin = 3.0 * config.cluster_sigma
    centers_lon = rng.uniform(BOX_LON[0] + margin, BOX_LON[1] - margin, ncl) if ncl else np.empty(0)
    centers_lat = rng.uniform(BOX_LAT[0] + margin, BOX_LAT[1] - margin, ncl) if ncl else np.empty(0)
    if config.cluster_fraud_probs is not None:
        cluster_probs = np.asarray(config.cluster_fraud_probs, dtype=float)
    else:
        lo, hi = config.fraud_prob_range
        cluster_probs = rng.uniform(lo, hi, ncl)

    cluster_of = rng.integers(0, ncl, n_clustered) if ncl else np.empty(0, dtype=int)
    lon = np.empty(n)
    lat = np.empty(n)
    fraud_p = np.empty(n)
    if n_clustered:
        lon[:n_clustered] = np.clip(
            centers_lon[cluster_of] + rng.normal(0.0, config.cluster_sigma, n_clustered),
            BOX_LON[0], BOX_LON[1])
        lat[:n_clustered] = np.clip(
            centers_lat[cluster_of] + rng.normal(0.0, config.cluster_sigma, n_clustered),
            BOX_LAT[0], BOX_LAT[1])
        fraud_p[:n_clustered] = cluster_probs[cluster_of]
    if n_bg:
        lon[n_clustered:] = rng.uniform(BOX_LON[0], BOX_LON[1], n_bg)
        lat[n_clustered:] = rng.uniform(BOX_LAT[0], BOX_LAT[1], n_bg)
        fraud_p[n_clustered:] = config.background_fraud_prob

    fraud = rng.random(n) < fraud_p
    visible = fraud & (rng.random(n) < config.fraud_visible_fraction)
    benign_drop = ~fraud & (rng.random(n) < config.benign_drop_prob)

    classes = rng.choice(len(CUSTOMER_CLASSES), n,
                         p=[0.70, 0.12, 0.05, 0.04, 0.05, 0.03, 0.01])
    statuses = rng.choice(3, n, p=[0.85, 0.08, 0.07])
    wires = rng.choice(3, n, p=[0.25, 0.45, 0.30])
    voltages = rng.choice(2, n, p=[0.10, 0.90])  # gt_2_3kv rare

    class_scale = np.ones(n)
    class_scale[classes == 1] = 3.0   # commercial
    class_scale[classes == 2] = 8.0   # industrial
    class_scale[classes == 6] = 8.0   # power_generation
    base_daily = rng.uniform(*config.base_daily_range, n) * class_scale

    months = config.num_months
    onset = rng.integers(1, months, n) if months > 1 else np.ones(n, dtype=int)
    benign_factor = rng.uniform(0.1, 0.5, n)
    reading_day = rng.integers(1, 26, n)
    noise = (np.exp(rng.normal(0.0, config.noise_sigma, (n, months)))
             if config.noise_sigma > 0 else np.ones((n, months)))

    customers = []
    readings = []
    inspections = []
    for i in range(n):
        cid = f"c{i:06d}"
        customers.append(CustomerRecord(
            customer_id=cid,
            longitude=float(lon[i]),
            latitude=float(lat[i]),
            customer_class=CUSTOMER_CLASSES[classes[i]],
            contract_status=CONTRACT_STATUSES[statuses[i]],
            num_wires=WIRE_COUNTS[wires[i]],
            voltage=VOLTAGE_CLASSES[voltages[i]],
        ))
        day = int(reading_day[i])
        prev_date = _month_date(config.start_year, config.start_month, -1, day)
        for m in range(months):
            d = _month_date(config.start_year, config.start_month, m, day)
            level = base_daily[i]
            if visible[i] and m >= onset[i]:
                level *= config.drop_factor
            elif benign_drop[i] and m >= onset[i]:
                level *= benign_factor[i]
            kwh = level * (d - prev_date).days * noise[i, m]
            readings.append(MeterReading(cid, d, float(kwh)))
            prev_date = d
        inspections.append(InspectionResult(
            cid, prev_date + timedelta(days=3), int(fraud[i])))
    return Dataset(customers, readings, inspections)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_proportion(ds: Dataset, target_ntl_fraction: float,
                      sample_size: int, seed: int) -> Dataset:
    """Draw an inspection sample with an exact positive-label count.

    Keeps round(target_ntl_fraction * sample_size) positive and the rest
    negative inspected customers, drawn without replacement per class
    (stratified). Customers and readings are kept in full: customers whose
    inspection was not drawn simply carry no inspection row in the sampled
    dataset, so they still populate the neighborhood-ratio denominators.
    Each sampled customer keeps only its most recent inspection.
    """
    if not 0.0 <= target_ntl_fraction <= 1.0:
        raise ConfigError(f"target NTL fraction must be in [0, 1], got {target_ntl_fraction}")
    if sample_size < 1:
        raise ConfigError("sample_size must be >= 1")

    latest = ds.latest_inspection()
    pos_ids = sorted(cid for cid, ins in latest.items() if ins.ntl_found == 1)
    neg_ids = sorted(cid for cid, ins in latest.items() if ins.ntl_found == 0)

    n_pos = round_half_up(target_ntl_fraction * sample_size)
    n_neg = sample_size - n_pos
    if n_pos > len(pos_ids):
        raise SamplingError(
            f"need {n_pos} positive inspections, dataset has {len(pos_ids)} "
            f"(short by {n_pos - len(pos_ids)})")
    if n_neg > len(neg_ids):
        raise SamplingError(
            f"need {n_neg} negative inspections, dataset has {len(neg_ids)} "
            f"(short by {n_neg - len(neg_ids)})")

    rng = np.random.default_rng(seed)
    chosen = []
    if n_pos:
        chosen.extend(np.array(pos_ids, dtype=object)[
            rng.choice(len(pos_ids), n_pos, replace=False)])
    if n_neg:
        chosen.extend(np.array(neg_ids, dtype=object)[
            rng.choice(len(neg_ids), n_neg, replace=False)])
    sampled = sorted(chosen)
    inspections = [latest[cid] for cid in sampled]
    return Dataset(ds.customers, ds.readings, inspections)
