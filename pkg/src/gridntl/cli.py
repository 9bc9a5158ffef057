"""Command-line driver for the fraud-detection pipeline.

One executable with subcommands covering the full flow: generate a
synthetic dataset, draw a fixed-proportion sample, build feature
matrices, export distribution statistics, train a single model, evaluate
a saved model, or run the whole experiment matrix.

Configuration comes from three layers with fixed precedence: built-in
defaults < flat key=value config file (--config) < command-line flags.
The worker count additionally falls back to the GRIDNTL_WORKERS
environment variable when neither a flag nor the file sets it. Every run
echoes the resolved configuration to <out-dir>/effective_config.txt so
results stay reproducible from their artifacts alone.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .dataset import SyntheticConfig, generate_synthetic, load_dataset, write_dataset
from .diststats import write_moments_csv, write_moments_gnuplot
from .errors import ConfigError, GridNtlError, InternalCheckError
from .evaluation import (
    DEFAULT_PROPORTIONS,
    FEATURE_SETS,
    ExperimentConfig,
    build_sample_table,
    draw_sample,
    evaluate_on_test,
    read_bundle,
    run_experiment_matrix,
    split_for,
    train_on_table,
    write_bundle,
    write_reports_csv,
    write_summary_csv,
)
from .features import write_feature_csv, write_feature_manifest
from .geogrid import DEFAULT_GRID_SIZES
from .learners import MODEL_KINDS

log = logging.getLogger("gridntl")

DATASET_FILES = ("customers.csv", "readings.csv", "inspections.csv")
WORKERS_ENV = "GRIDNTL_WORKERS"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}")


def _parse_float_list(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _parse_str_list(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


# key -> (parser for config-file values, default)
OPTIONS = {
    "data_dir": (str, None),
    "out_dir": (str, "out"),
    "seed": (int, 42),
    "workers": (int, None),
    "grid_sizes": (_parse_int_list, DEFAULT_GRID_SIZES),
    "n_months": (int, 12),
    "variance_p": (float, 0.9),
    "k_sigma": (float, 5.0),
    "outlier_mode": (str, "per_axis"),
    "include_other_class": (_parse_bool, False),
    "C": (float, 1.0),
    "k": (int, 100),
    "knn_distance": (str, "euclidean"),
    "tree_count": (int, 100),
    "learning_rate": (float, 0.1),
    "batch_size": (int, 64),
    "epochs": (int, 100),
    "tolerance": (float, 1e-6),
    "proportions": (_parse_float_list, DEFAULT_PROPORTIONS),
    "proportion": (float, 0.3),
    "sample_size": (int, 2000),
    "models": (_parse_str_list, MODEL_KINDS),
    "model": (str, "logistic"),
    "feature_set": (str, "all_features"),
    "model_file": (str, None),
    "num_customers": (int, 5000),
    "num_months": (int, 24),
    "cluster_count": (int, 12),
}


def read_config_file(path) -> dict:
    """Flat key=value lines; blank lines and # comments are ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            if key not in OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
            parse, _ = OPTIONS[key]
            try:
                values[key] = parse(value.strip())
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}")
    return values


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < config file < flags; GRIDNTL_WORKERS fills workers last."""
    effective = {key: default for key, (_, default) in OPTIONS.items()}
    from_file = {}
    if getattr(args, "config", None):
        from_file = read_config_file(args.config)
        effective.update(from_file)
    flagged = set()
    for key in OPTIONS:
        value = getattr(args, key, None)
        if value is not None:
            effective[key] = value
            flagged.add(key)
    if effective["workers"] is None:
        env = os.environ.get(WORKERS_ENV)
        if env is not None:
            try:
                effective["workers"] = int(env)
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    if effective["workers"] is None:
        effective["workers"] = 1
    if effective["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {effective['workers']}")
    return effective


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_effective_config(out_dir: Path, command: str, effective: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command={command}"]
    lines += [f"{key}={_format_value(effective[key])}" for key in sorted(effective)]
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n",
                                                  encoding="utf-8")


def experiment_config(cfg: dict) -> ExperimentConfig:
    config = ExperimentConfig(
        proportions=tuple(cfg["proportions"]),
        sample_size=cfg["sample_size"],
        model_kinds=tuple(cfg["models"]),
        seed=cfg["seed"],
        workers=cfg["workers"],
        n_months=cfg["n_months"],
        grid_sizes=tuple(cfg["grid_sizes"]),
        variance_p=cfg["variance_p"],
        include_other_class=cfg["include_other_class"],
        outlier_k_sigma=cfg["k_sigma"],
        outlier_mode=cfg["outlier_mode"],
        C=cfg["C"],
        k=cfg["k"],
        knn_distance=cfg["knn_distance"],
        tree_count=cfg["tree_count"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        tolerance=cfg["tolerance"],
    )
    config.validate()
    return config


def _load(cfg: dict):
    if not cfg["data_dir"]:
        raise ConfigError("--data-dir is required for this command")
    base = Path(cfg["data_dir"])
    return load_dataset(*(base / name for name in DATASET_FILES))


def _prop_label(q: float) -> str:
    return f"{q * 100:g}".replace(".", "_")


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    out = Path(cfg["out_dir"])
    ds = generate_synthetic(SyntheticConfig(
        num_customers=cfg["num_customers"], num_months=cfg["num_months"],
        cluster_count=cfg["cluster_count"], seed=cfg["seed"]))
    write_effective_config(out, "generate", cfg)
    write_dataset(ds, *(out / name for name in DATASET_FILES))
    positives = sum(r.ntl_found for r in ds.inspections)
    rate = positives / len(ds.inspections) if ds.inspections else 0.0
    print(f"customers {len(ds.customers)} readings {len(ds.readings)} "
          f"inspections {len(ds.inspections)} ntl_base_rate {rate:.4f}")
    print(f"wrote {', '.join(DATASET_FILES)} to {out}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    q = cfg["proportion"]
    sample = draw_sample(ds, q, cfg["sample_size"], cfg["seed"])
    write_effective_config(out, "sample", cfg)
    write_dataset(sample, *(out / name for name in DATASET_FILES))
    positives = sum(r.ntl_found for r in sample.inspections)
    print(f"proportion {q:g} sampled {len(sample.inspections)} inspections "
          f"({positives} positive) to {out}")
    return 0


def cmd_featurize(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    config = experiment_config(cfg)
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    write_effective_config(out, "featurize", cfg)
    for q in config.proportions:
        table = build_sample_table(ds, q, config)
        label = _prop_label(q)
        write_feature_csv(out / f"features_p{label}.csv", table)
        write_feature_manifest(out / f"manifest_p{label}.json", table)
        print(f"proportion {q:g} rows {len(table.ids)} "
              f"retained_binary {len(table.retained_binary)} "
              f"columns {len(table.names)}")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    config = experiment_config(cfg)
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    write_effective_config(out, "stats", cfg)
    from .diststats import per_class_feature_moments

    rows = []
    for q in config.proportions:
        table = build_sample_table(ds, q, config)
        rows.extend(per_class_feature_moments(table, config.grid_sizes, q))
    write_moments_csv(out / "moments.csv", rows)
    write_moments_gnuplot(out / "moments.dat", rows)
    print(f"wrote {len(rows)} moment rows to {out / 'moments.csv'} "
          f"and {out / 'moments.dat'}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    config = experiment_config(cfg)
    if cfg["model"] not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {cfg['model']!r}")
    if cfg["feature_set"] not in FEATURE_SETS:
        raise ConfigError(f"unknown feature set {cfg['feature_set']!r}")
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    write_effective_config(out, "train", cfg)
    q = cfg["proportion"]
    table = build_sample_table(ds, q, config)
    plan = split_for(table, q, config)
    bundle = train_on_table(table, plan, cfg["model"], cfg["feature_set"],
                            q, config)
    path = out / f"model_{cfg['model']}_{cfg['feature_set']}_p{_prop_label(q)}.txt"
    write_bundle(path, bundle)
    print(f"model {bundle.kind} feature_set {bundle.feature_set} "
          f"proportion {q:g} fold {bundle.fold} val_auc {bundle.val_auc:.4f}")
    print(f"wrote {path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if not cfg["model_file"]:
        raise ConfigError("--model-file is required for evaluate")
    bundle = read_bundle(cfg["model_file"])
    # reuse the training run's root seed so the sample and the test
    # split are the ones the model never saw
    cfg["seed"] = bundle.seed
    config = experiment_config(cfg)
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    write_effective_config(out, "evaluate", cfg)
    q = cfg["proportion"] if args.proportion is not None else bundle.train_prop
    table = build_sample_table(ds, q, config)
    plan = split_for(table, q, config)
    report = evaluate_on_test(bundle, table, plan.test, q,
                              workers=config.workers)
    write_reports_csv(out / "report.csv", [report])
    print(f"model {report.model} feature_set {report.feature_set} "
          f"train_prop {report.train_prop:g} test_prop {report.test_prop:g} "
          f"auc {report.auc:.4f} recall {report.recall:.4f} "
          f"specificity {report.specificity:.4f}")
    return 0


def cmd_matrix(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    config = experiment_config(cfg)
    ds = _load(cfg)
    out = Path(cfg["out_dir"])
    write_effective_config(out, "matrix", cfg)
    result = run_experiment_matrix(ds, config, collect_errors=True)
    write_reports_csv(out / "reports.csv", result.reports)
    write_summary_csv(out / "summary.csv", result.summaries)
    write_moments_csv(out / "moments.csv", result.moments)
    for report in result.reports:
        if report.auc != (report.recall + report.specificity) / 2.0:
            raise InternalCheckError(
                f"AUC identity violated in report {report}")
        if not (0.0 <= report.auc <= 1.0 and 0.0 <= report.recall <= 1.0
                and 0.0 <= report.specificity <= 1.0):
            raise InternalCheckError(f"metric out of bounds in report {report}")
    for s in result.summaries:
        print(f"model {s.model} max_auc {s.max_auc:.4f} min_auc {s.min_auc:.4f} "
              f"mean_auc {s.mean_auc:.4f} std_auc {s.std_auc:.4f}")
    print(f"wrote {len(result.reports)} reports to {out / 'reports.csv'}")
    if result.failures:
        manifest = out / "failure_manifest.txt"
        manifest.write_text(
            "".join(f"{ctx}: {msg}\n" for ctx, msg in result.failures),
            encoding="utf-8")
        print(f"error: {len(result.failures)} task(s) failed; "
              f"see {manifest}", file=sys.stderr)
        return 2
    return 0


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--data-dir", dest="data_dir",
                        help="directory holding customers/readings/inspections CSVs")
    common.add_argument("--out-dir", dest="out_dir", help="output directory")
    common.add_argument("--seed", type=int, help="root seed (default 42)")
    common.add_argument("--workers", type=int,
                        help=f"worker count (fallback: ${WORKERS_ENV}, then 1)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    pipe = _Parser(add_help=False)
    pipe.add_argument("--grid-sizes", dest="grid_sizes", type=_parse_int_list,
                      help="comma-separated cells-per-axis list (default 50,100,200,400)")
    pipe.add_argument("--n-months", dest="n_months", type=int,
                      help="consumption window length (default 12)")
    pipe.add_argument("--variance-p", dest="variance_p", type=float,
                      help="binary retention threshold p (default 0.9)")
    pipe.add_argument("--k-sigma", dest="k_sigma", type=float,
                      help="coordinate outlier cutoff in std devs (default 5)")
    pipe.add_argument("--outlier-mode", dest="outlier_mode",
                      choices=("per_axis", "radial"))
    pipe.add_argument("--include-other-class", dest="include_other_class",
                      action=argparse.BooleanOptionalAction, default=None,
                      help="add the catch-all customer class column")
    pipe.add_argument("--C", dest="C", type=float,
                      help="inverse regularization for linear models (default 1)")
    pipe.add_argument("--k", dest="k", type=int,
                      help="nearest neighbor count (default 100)")
    pipe.add_argument("--knn-distance", dest="knn_distance",
                      choices=("euclidean", "manhattan", "cosine"))
    pipe.add_argument("--tree-count", dest="tree_count", type=int,
                      help="forest size (default 100; reference setting 1000)")
    pipe.add_argument("--learning-rate", dest="learning_rate", type=float)
    pipe.add_argument("--batch-size", dest="batch_size", type=int)
    pipe.add_argument("--epochs", dest="epochs", type=int)
    pipe.add_argument("--tolerance", dest="tolerance", type=float)
    pipe.add_argument("--proportions", dest="proportions", type=_parse_float_list,
                      help="comma-separated NTL proportions")
    pipe.add_argument("--sample-size", dest="sample_size", type=int,
                      help="inspections per proportion sample (default 2000)")
    pipe.add_argument("--models", dest="models", type=_parse_str_list,
                      help="comma-separated model kinds (default all four)")

    parser = _Parser(prog="gridntl",
                     description="grid-feature electricity fraud detection pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("generate", parents=[common],
                       help="write a synthetic dataset")
    p.add_argument("--num-customers", dest="num_customers", type=int)
    p.add_argument("--num-months", dest="num_months", type=int)
    p.add_argument("--cluster-count", dest="cluster_count", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sample", parents=[common],
                       help="draw a fixed-proportion inspection sample")
    p.add_argument("--proportion", type=float, help="target NTL proportion")
    p.add_argument("--sample-size", dest="sample_size", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("featurize", parents=[common, pipe],
                       help="build feature matrices per proportion")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("stats", parents=[common, pipe],
                       help="export per-class feature moments")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common, pipe],
                       help="train one model at one proportion")
    p.add_argument("--proportion", type=float)
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--feature-set", dest="feature_set", choices=FEATURE_SETS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, pipe],
                       help="evaluate a saved model on a test split")
    p.add_argument("--model-file", dest="model_file")
    p.add_argument("--proportion", type=float,
                   help="test proportion (default: the model's train proportion)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", parents=[common, pipe],
                       help="run the full experiment matrix")
    p.set_defaults(func=cmd_matrix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(message)s", stream=sys.stderr)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InternalCheckError as exc:
        print(f"internal check failed: {exc}", file=sys.stderr)
        return 3
    except GridNtlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
