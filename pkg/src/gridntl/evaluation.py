"""Single-point AUC evaluation, stratified splits with 10-fold model
selection, and the cross-proportion experiment matrix.

The metric is the one-operating-point AUC: recall = TP/(TP+FN),
specificity = TN/(TN+FP), AUC = (recall + specificity) / 2, i.e. the
area under the two straight lines connecting (0,0), (FPR, recall) and
(1,1). Labels come from each model's native decision rule (score > 0.5;
for the SVM that is margin > 0).

Split protocol: a stratified 10% test set is held out per sample; the
remaining pool is cut into 10 stratified folds. Each fold trains on the
other nine tenths (81% of the sample) and validates on its own tenth
(9%), the per-fold reading of an 80/10/10 split with 10-fold
cross-validation. The fold whose validation AUC is highest (ties to the
lowest fold index) supplies the model that is evaluated on the test set.

The experiment matrix draws one sample per NTL proportion, trains every
model kind on both feature sets (time_series_only = the consumption
columns, all_features = everything), reports test AUC per proportion,
then re-tests the best all-features model per kind (highest validation
AUC across proportions) on every proportion's test split and summarizes
those sweeps with max/min/mean/std rows. Normalization parameters are
always fit on the fold training rows only and reused for validation,
test, and cross-proportion matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Dataset, round_half_up, sample_proportion
from .diststats import per_class_feature_moments
from .errors import ConfigError, GridNtlError, MetricUndefinedError, SplitError
from .features import (
    DEFAULT_N_MONTHS,
    DEFAULT_VARIANCE_P,
    FeatureTable,
    NormParams,
    apply_normalization,
    build_feature_table,
    fit_normalization,
)
from .geogrid import DEFAULT_GRID_SIZES
from .learners import (
    FORMAT_HEADER,
    MODEL_KINDS,
    TrainConfig,
    deserialize_model,
    labels_from_scores,
    predict_scores,
    serialize_model,
    train_model,
)
from .rng import STAGE_SAMPLE, STAGE_SPLIT, STAGE_TRAIN, derive_seed

DEFAULT_PROPORTIONS = (0.01, 0.02, 0.03, 0.04, 0.05, 0.10, 0.20,
                       0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90)
FEATURE_SETS = ("time_series_only", "all_features")

REPORTS_CSV_HEADER = ["model", "feature_set", "train_prop", "test_prop",
                      "auc", "recall", "specificity", "fold", "seed"]
SUMMARY_CSV_HEADER = ["model", "max_auc", "min_auc", "mean_auc", "std_auc"]

PIPELINE_HEADER = "gridntl-pipeline v1"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_counts(predicted_labels, targets) -> ConfusionCounts:
    p = np.asarray(predicted_labels)
    y = np.asarray(targets)
    if p.shape != y.shape:
        raise ConfigError(f"label shapes differ: {p.shape} vs {y.shape}")
    return ConfusionCounts(
        tp=int(((p == 1) & (y == 1)).sum()),
        fp=int(((p == 1) & (y == 0)).sum()),
        tn=int(((p == 0) & (y == 0)).sum()),
        fn=int(((p == 0) & (y == 1)).sum()),
    )


def auc_single_point(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(auc, recall, specificity); undefined when a true class is empty."""
    if counts.tp + counts.fn == 0:
        raise MetricUndefinedError("recall undefined: no positive rows")
    if counts.tn + counts.fp == 0:
        raise MetricUndefinedError("specificity undefined: no negative rows")
    recall = counts.tp / (counts.tp + counts.fn)
    specificity = counts.tn / (counts.tn + counts.fp)
    return (recall + specificity) / 2.0, recall, specificity


@dataclass(frozen=True)
class SplitPlan:
    n_rows: int
    test: np.ndarray
    fold_of: np.ndarray   # -1 for test rows, else fold index
    n_folds: int
    seed: int

    def pool(self) -> np.ndarray:
        return np.nonzero(self.fold_of >= 0)[0]

    def fold_validation(self, fold: int) -> np.ndarray:
        return np.nonzero(self.fold_of == fold)[0]

    def fold_train(self, fold: int) -> np.ndarray:
        return np.nonzero((self.fold_of >= 0) & (self.fold_of != fold))[0]


def make_split(targets, seed: int, n_folds: int = 10,
               test_fraction: float = 0.1) -> SplitPlan:
    """Stratified test holdout plus round-robin fold assignment per class."""
    y = np.asarray(targets, dtype=np.int64)
    n = len(y)
    if n < 20:
        raise SplitError(f"need at least 20 rows to split, got {n}")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if n_folds < 2:
        raise ConfigError(f"n_folds must be >= 2, got {n_folds}")
    rng = np.random.default_rng(derive_seed(seed, STAGE_SPLIT))
    fold_of = np.full(n, -1, dtype=np.int64)
    test_rows = []
    for label in (0, 1):
        idx = np.nonzero(y == label)[0]
        n_test = round_half_up(test_fraction * len(idx))
        if n_test < 1:
            raise SplitError(
                f"class {label} has {len(idx)} rows; too few for a "
                f"{test_fraction:.0%} stratified test split")
        perm = rng.permutation(idx)
        test_rows.append(perm[:n_test])
        pool = perm[n_test:]
        for pos, row in enumerate(pool):
            fold_of[row] = pos % n_folds
    test = np.sort(np.concatenate(test_rows))
    return SplitPlan(n, test, fold_of, n_folds, seed)


@dataclass
class EvalReport:
    model: str
    feature_set: str
    train_prop: float
    test_prop: float
    auc: float
    recall: float
    specificity: float
    fold: int
    seed: int
    counts: ConfusionCounts | None = field(default=None, compare=False)


@dataclass
class TrainedBundle:
    """A selected model plus everything needed to score raw feature tables."""

    kind: str
    feature_set: str
    columns: list[str]
    params: NormParams
    model: object
    fold: int
    val_auc: float
    train_prop: float
    seed: int

    def scores_for(self, table: FeatureTable, workers: int = 1) -> np.ndarray:
        X = apply_normalization(table.matrix_for(self.columns), self.params)
        return predict_scores(self.model, X, workers=workers)


def evaluate_scores(scores, targets) -> tuple[float, float, float, ConfusionCounts]:
    counts = confusion_counts(labels_from_scores(scores), targets)
    auc, recall, specificity = auc_single_point(counts)
    return auc, recall, specificity, counts


def cross_validated_train(X_raw, y, plan: SplitPlan, kind: str,
                          train_config: TrainConfig,
                          C: float = 1.0, k: int = 100,
                          distance: str = "euclidean",
                          tree_count: int = 100) -> tuple:
    """Train one model per fold, return (bundle parts, per-fold val AUCs).

    Folds whose validation set is single-class cannot produce an AUC and
    are skipped as selection candidates; if every fold is skipped the
    metric is undefined. Normalization is fit on each fold's training
    rows. Returns (model, params, fold, val_auc, fold_aucs).
    """
    X_raw = np.asarray(X_raw, dtype=np.float64)
    best = None
    fold_aucs: list[float | None] = []
    for fold in range(plan.n_folds):
        tr = plan.fold_train(fold)
        va = plan.fold_validation(fold)
        if len(np.unique(y[va])) < 2 or len(tr) == 0:
            fold_aucs.append(None)
            continue
        params = fit_normalization(X_raw[tr])
        fold_config = replace(train_config,
                              seed=derive_seed(train_config.seed, STAGE_TRAIN, fold))
        try:
            model = train_model(kind, apply_normalization(X_raw[tr], params),
                                y[tr], config=fold_config, C=C, k=k,
                                distance=distance, tree_count=tree_count)
        except GridNtlError as exc:
            exc.fold = fold
            if exc.args:
                exc.args = (f"fold {fold}: {exc.args[0]}",) + exc.args[1:]
            raise
        scores = predict_scores(model, apply_normalization(X_raw[va], params),
                                workers=train_config.workers)
        auc, _, _, _ = evaluate_scores(scores, y[va])
        fold_aucs.append(auc)
        if best is None or auc > best[3]:
            best = (model, params, fold, auc)
    if best is None:
        raise MetricUndefinedError(
            "every fold's validation set is single-class; cannot select a model")
    return best[0], best[1], best[2], best[3], fold_aucs


def evaluate_on_test(bundle: TrainedBundle, table: FeatureTable,
                     test_rows, test_prop: float,
                     workers: int = 1) -> EvalReport:
    scores = bundle.scores_for(table, workers=workers)[test_rows]
    auc, recall, specificity, counts = evaluate_scores(scores, table.y[test_rows])
    return EvalReport(bundle.kind, bundle.feature_set, bundle.train_prop,
                      test_prop, auc, recall, specificity, bundle.fold,
                      bundle.seed, counts)


@dataclass(frozen=True)
class ExperimentConfig:
    proportions: tuple = DEFAULT_PROPORTIONS
    sample_size: int = 2000
    model_kinds: tuple = MODEL_KINDS
    feature_sets: tuple = FEATURE_SETS
    seed: int = 42
    workers: int = 1
    n_months: int = DEFAULT_N_MONTHS
    grid_sizes: tuple = DEFAULT_GRID_SIZES
    variance_p: float = DEFAULT_VARIANCE_P
    include_other_class: bool = False
    outlier_k_sigma: float = 5.0
    outlier_mode: str = "per_axis"
    C: float = 1.0
    k: int = 100
    knn_distance: str = "euclidean"
    tree_count: int = 100
    learning_rate: float = 0.1
    batch_size: int = 64
    epochs: int = 100
    tolerance: float = 1e-6
    n_folds: int = 10
    test_fraction: float = 0.1

    def validate(self) -> None:
        if not self.proportions:
            raise ConfigError("proportions list is empty")
        for q in self.proportions:
            if not 0.0 <= q <= 1.0:
                raise ConfigError(f"proportion {q} outside [0, 1]")
        if self.sample_size < 20:
            raise ConfigError(f"sample_size must be >= 20, got {self.sample_size}")
        for kind in self.model_kinds:
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model kind {kind!r}")
        for fs in self.feature_sets:
            if fs not in FEATURE_SETS:
                raise ConfigError(f"unknown feature set {fs!r}")
        self.train_config().validate()

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate,
                           batch_size=self.batch_size, epochs=self.epochs,
                           tolerance=self.tolerance,
                           seed=self.seed if seed is None else seed,
                           workers=self.workers)


def _prop_key(q: float) -> int:
    return int(round(q * 10000))


def _feature_columns(table: FeatureTable, feature_set: str) -> list[str]:
    if feature_set == "time_series_only":
        return table.columns_for_set("consumption")
    if feature_set == "all_features":
        return table.columns_for_set("all")
    raise ConfigError(f"unknown feature set {feature_set!r}")


@dataclass
class SummaryRow:
    model: str
    max_auc: float
    min_auc: float
    mean_auc: float
    std_auc: float


@dataclass
class ExperimentResult:
    reports: list
    summaries: list
    moments: list
    failures: list = field(default_factory=list)


def draw_sample(ds: Dataset, q: float, sample_size: int, seed: int) -> Dataset:
    """The matrix's sampling call: one derived stream per proportion."""
    return sample_proportion(ds, q, sample_size,
                             seed=derive_seed(seed, STAGE_SAMPLE, _prop_key(q)))


def split_for(table: FeatureTable, q: float, config: ExperimentConfig) -> SplitPlan:
    return make_split(table.y,
                      seed=derive_seed(config.seed, STAGE_SPLIT, _prop_key(q)),
                      n_folds=config.n_folds, test_fraction=config.test_fraction)


def build_sample_table(ds: Dataset, q: float, config: ExperimentConfig) -> FeatureTable:
    sample = draw_sample(ds, q, config.sample_size, config.seed)
    return build_feature_table(
        sample, n_months=config.n_months, grid_sizes=config.grid_sizes,
        variance_p=config.variance_p,
        include_other_class=config.include_other_class,
        outlier_k_sigma=config.outlier_k_sigma,
        outlier_mode=config.outlier_mode, workers=config.workers)


def train_on_table(table: FeatureTable, plan: SplitPlan, kind: str,
                   feature_set: str, q: float,
                   config: ExperimentConfig) -> TrainedBundle:
    columns = _feature_columns(table, feature_set)
    X_raw = table.matrix_for(columns)
    base_seed = derive_seed(config.seed, STAGE_TRAIN, _prop_key(q),
                            FEATURE_SETS.index(feature_set),
                            MODEL_KINDS.index(kind))
    model, params, fold, val_auc, _ = cross_validated_train(
        X_raw, table.y, plan, kind, config.train_config(seed=base_seed),
        C=config.C, k=config.k, distance=config.knn_distance,
        tree_count=config.tree_count)
    return TrainedBundle(kind, feature_set, columns, params, model, fold,
                         val_auc, q, config.seed)


def run_experiment_matrix(ds: Dataset, config: ExperimentConfig,
                          collect_errors: bool = False) -> ExperimentResult:
    """Full sweep: per-proportion reports, cross-proportion sweep, moments.

    Work is ordered deterministically (proportions, then feature sets,
    then model kinds); parallelism lives inside training and prediction,
    so the report list and the CSV files derived from it are byte-stable
    for a fixed seed. With collect_errors, a failing task is recorded as
    (context, message) in the result's failure list and the sweep
    continues; otherwise the first failure propagates.
    """
    config.validate()
    reports: list[EvalReport] = []
    moments = []
    failures: list[tuple[str, str]] = []
    tables: dict[float, FeatureTable] = {}
    plans: dict[float, SplitPlan] = {}
    best_by_kind: dict[str, TrainedBundle] = {}

    def failed(context: str, exc: GridNtlError) -> None:
        if not collect_errors:
            raise exc
        failures.append((context, f"{type(exc).__name__}: {exc}"))

    for q in config.proportions:
        try:
            table = build_sample_table(ds, q, config)
            plan = split_for(table, q, config)
        except GridNtlError as exc:
            failed(f"proportion {q:g}", exc)
            continue
        tables[q] = table
        plans[q] = plan
        moments.extend(per_class_feature_moments(table, config.grid_sizes, q))
        for feature_set in config.feature_sets:
            for kind in config.model_kinds:
                try:
                    bundle = train_on_table(table, plan, kind, feature_set,
                                            q, config)
                    reports.append(evaluate_on_test(
                        bundle, table, plan.test, q, workers=config.workers))
                except GridNtlError as exc:
                    failed(f"proportion {q:g} {feature_set} {kind}", exc)
                    continue
                if feature_set == "all_features":
                    cur = best_by_kind.get(kind)
                    if cur is None or bundle.val_auc > cur.val_auc:
                        best_by_kind[kind] = bundle

    summaries = []
    for kind in config.model_kinds:
        if kind not in best_by_kind:
            continue
        bundle = best_by_kind[kind]
        aucs = []
        for q in config.proportions:
            if q not in tables:
                continue
            try:
                report = evaluate_on_test(bundle, tables[q], plans[q].test, q,
                                          workers=config.workers)
            except GridNtlError as exc:
                failed(f"cross-proportion {kind} test {q:g}", exc)
                continue
            reports.append(report)
            aucs.append(report.auc)
        if aucs:
            arr = np.array(aucs)
            summaries.append(SummaryRow(kind, float(arr.max()), float(arr.min()),
                                        float(arr.mean()), float(arr.std())))
    return ExperimentResult(reports, summaries, moments, failures)


def write_reports_csv(path, reports) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORTS_CSV_HEADER)
        for r in reports:
            w.writerow([r.model, r.feature_set, repr(r.train_prop),
                        repr(r.test_prop), repr(r.auc), repr(r.recall),
                        repr(r.specificity), r.fold, r.seed])


def write_summary_csv(path, summaries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_CSV_HEADER)
        for s in summaries:
            w.writerow([s.model, repr(s.max_auc), repr(s.min_auc),
                        repr(s.mean_auc), repr(s.std_auc)])


# --- bundle persistence (pipeline file: manifest + embedded model) ---

def serialize_bundle(bundle: TrainedBundle) -> str:
    lines = [
        PIPELINE_HEADER,
        f"kind {bundle.kind}",
        f"feature_set {bundle.feature_set}",
        f"train_prop {bundle.train_prop!r}",
        f"fold {bundle.fold}",
        f"val_auc {bundle.val_auc!r}",
        f"seed {bundle.seed}",
        "columns " + ",".join(bundle.columns),
        "mean " + " ".join(repr(float(v)) for v in bundle.params.mean),
        "std " + " ".join(repr(float(v)) for v in bundle.params.std),
    ]
    return "\n".join(lines) + "\n" + serialize_model(bundle.model)


def deserialize_bundle(text: str, source: str = "<pipeline>") -> TrainedBundle:
    from .errors import ParseError

    lines = text.splitlines()
    if not lines or lines[0] != PIPELINE_HEADER:
        raise ParseError(source, 1, f"not a {PIPELINE_HEADER!r} file")

    def take(pos, key):
        if pos >= len(lines):
            raise ParseError(source, pos + 1, "unexpected end of pipeline file")
        k, _, rest = lines[pos].partition(" ")
        if k != key:
            raise ParseError(source, pos + 1, f"expected {key!r} line")
        return rest

    kind = take(1, "kind")
    feature_set = take(2, "feature_set")
    train_prop = float(take(3, "train_prop"))
    fold = int(take(4, "fold"))
    val_auc = float(take(5, "val_auc"))
    seed = int(take(6, "seed"))
    columns = take(7, "columns").split(",")
    mean = np.array([float(v) for v in take(8, "mean").split()])
    std = np.array([float(v) for v in take(9, "std").split()])
    if len(mean) != len(columns) or len(std) != len(columns):
        raise ParseError(source, 9, "normalization length does not match columns")
    model_text = "\n".join(lines[10:]) + "\n"
    if not model_text.startswith(FORMAT_HEADER):
        raise ParseError(source, 11, "missing embedded model section")
    model = deserialize_model(model_text, source=source)
    if getattr(model, "kind", None) != kind:
        raise ParseError(source, 11, "pipeline kind does not match embedded model")
    return TrainedBundle(kind, feature_set, columns, NormParams(mean, std),
                         model, fold, val_auc, train_prop, seed)


def write_bundle(path, bundle: TrainedBundle) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_bundle(bundle))


def read_bundle(path) -> TrainedBundle:
    with open(path, encoding="utf-8") as fh:
        return deserialize_bundle(fh.read(), source=str(path))
