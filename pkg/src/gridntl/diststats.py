"""Distribution moments of the neighborhood features, split by outcome class.

For each (feature, grid size, class label) the raw ratio values are
summarized by mean, variance, skewness and excess kurtosis, the numbers
behind per-proportion distribution plots. All four statistics use
population moments (divide by n); skewness is the third standardized
moment mu3 / sigma^3 and kurtosis the fourth, mu4 / sigma^4 - 3, so a
normal distribution scores 0. Zero-variance or empty inputs report
undefined markers (None, "NA" in CSV) rather than failing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .features import FeatureTable

MOMENTS_CSV_HEADER = ["feature", "grid_size", "ntl_proportion", "class", "mean",
                      "variance_pop", "variance_sample", "skewness",
                      "kurtosis_excess"]


@dataclass(frozen=True)
class ClassMoments:
    feature: str
    grid_size: int
    ntl_proportion: float
    class_label: int
    count: int
    mean: float | None
    variance_pop: float | None
    variance_sample: float | None
    skewness: float | None
    kurtosis_excess: float | None


def moments(values) -> tuple[float, float, float | None, float | None]:
    """(mean, population variance, skewness, excess kurtosis).

    Skewness and kurtosis are None when the variance is zero (constant
    input), where the standardized moments are undefined.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DegenerateInputError("moments of an empty value set are undefined")
    mean = float(v.mean())
    if np.all(v == v[0]):
        return mean, 0.0, None, None
    d = v - mean
    var = float(np.mean(d * d))
    if var == 0.0:
        return mean, 0.0, None, None
    sigma = var ** 0.5
    skew = float(np.mean(d ** 3)) / sigma ** 3
    kurt = float(np.mean(d ** 4)) / sigma ** 4 - 3.0
    return mean, var, skew, kurt


def _sample_variance(v: np.ndarray) -> float | None:
    if v.size < 2:
        return None
    return float(v.var(ddof=1))


def per_class_feature_moments(table: FeatureTable, grid_sizes,
                              ntl_proportion: float) -> list[ClassMoments]:
    """One ClassMoments row per neighborhood feature x grid size x class.

    Operates on the raw (unnormalized) ratio columns of the table; a
    class with no rows in the sample yields undefined markers, one with a
    single row yields a mean but no higher moments.
    """
    out = []
    for gsz in grid_sizes:
        for feat in ("inspected_ratio", "ntl_ratio"):
            col = table.matrix_for([f"{feat}_{gsz}"])[:, 0]
            for label in (0, 1):
                v = col[table.y == label]
                if v.size == 0:
                    out.append(ClassMoments(feat, gsz, ntl_proportion, label,
                                            0, None, None, None, None, None))
                    continue
                mean, var, skew, kurt = moments(v)
                out.append(ClassMoments(feat, gsz, ntl_proportion, label,
                                        int(v.size), mean, var,
                                        _sample_variance(v), skew, kurt))
    return out


def _na(x) -> str:
    return "NA" if x is None else repr(x)


def write_moments_csv(path, rows) -> None:
    """Long-format CSV, one line per ClassMoments row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOMENTS_CSV_HEADER)
        for r in rows:
            w.writerow([r.feature, r.grid_size, repr(r.ntl_proportion),
                        r.class_label, _na(r.mean), _na(r.variance_pop),
                        _na(r.variance_sample), _na(r.skewness),
                        _na(r.kurtosis_excess)])


def write_moments_gnuplot(path, rows) -> None:
    """Whitespace-delimited companion file for gnuplot `using` clauses.

    Columns: ntl_proportion grid_size class mean variance skewness
    kurtosis, grouped in blocks per feature separated by blank lines,
    each block preceded by a comment naming the feature.
    """
    by_feature: dict[str, list] = {}
    for r in rows:
        by_feature.setdefault(r.feature, []).append(r)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# feature blocks: ntl_proportion grid_size class mean "
                 "variance_pop skewness kurtosis_excess\n")
        for feat in sorted(by_feature):
            fh.write(f"\n# feature: {feat}\n")
            block = sorted(by_feature[feat],
                           key=lambda r: (r.ntl_proportion, r.grid_size, r.class_label))
            for r in block:
                fh.write(" ".join([repr(r.ntl_proportion), str(r.grid_size),
                                   str(r.class_label), _na(r.mean),
                                   _na(r.variance_pop), _na(r.skewness),
                                   _na(r.kurtosis_excess)]) + "\n")
