"""Datasets: CSV ingestion, synthetic Gaussian benchmarks, and splits.

The synthetic benchmark draws two equal-prior spherical unit-variance
Gaussians, one centered at the origin and one at distance d along a random
direction; d is solved so the problem's Bayes error hits a requested level,
and the posterior is available in closed form for calibration scoring.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit


class DataError(Exception):
    """Base class for dataset ingestion failures."""


class MalformedRow(DataError):
    pass


class NonNumericFeature(DataError):
    pass


class MissingValue(DataError):
    pass


@dataclass
class Dataset:
    X: np.ndarray                 # (N, F) float features
    y: np.ndarray                 # (N,) int labels in 1..K
    class_count: int
    label_names: list = field(default_factory=list)  # original label tokens

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y must have matching first dimensions")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("features contain non-finite values")
        if self.y.size and (self.y.min() < 1 or self.y.max() > self.class_count):
            raise ValueError("labels must lie in 1..class_count")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def feature_count(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.X[idx], self.y[idx], self.class_count,
                       self.label_names)


def load_csv(path, label_column: int = -1, delimiter: str = ",",
             header: str = "auto", impute_missing: bool = False) -> Dataset:
    """Read a delimited file of numeric features plus one label column.

    Labels (categorical or integer tokens) map to 1..K in order of first
    appearance; the original tokens are kept on the dataset.  Empty cells
    and "?" are missing values: a hard error naming the row and column, or
    column-mean imputation when `impute_missing` is set.  `header="auto"`
    drops a first row whose feature cells do not parse as numbers.
    """
    rows = []
    with open(path, newline="") as fh:
        if delimiter == "whitespace":
            raw = [line.split() for line in fh if line.strip()]
        else:
            raw = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    if not raw:
        raise MalformedRow(f"{path}: file is empty")
    width = len(raw[0])
    label_idx = label_column if label_column >= 0 else width + label_column
    if not 0 <= label_idx < width:
        raise MalformedRow(f"{path}: label column {label_column} out of range")

    def feature_cells(row):
        return [cell for j, cell in enumerate(row) if j != label_idx]

    start = 0
    if header == "auto":
        probe = feature_cells(raw[0])
        try:
            [float(cell) for cell in probe if cell not in ("", "?")]
        except ValueError:
            start = 1
    elif header is True or header == "yes":
        start = 1
    if start >= len(raw):
        raise MalformedRow(f"{path}: no data rows")

    labels_raw = []
    missing = []  # (row_number, column) of missing feature cells
    for lineno, row in enumerate(raw[start:], start=start + 1):
        if len(row) != width:
            raise MalformedRow(
                f"{path}:{lineno}: expected {width} columns, got {len(row)}"
            )
        vals = []
        for j, cell in enumerate(row):
            if j == label_idx:
                continue
            cell = cell.strip()
            if cell in ("", "?"):
                missing.append((lineno, j))
                vals.append(np.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise NonNumericFeature(
                    f"{path}:{lineno}: column {j} value {cell!r} is not numeric"
                ) from None
        label = row[label_idx].strip()
        if label in ("", "?"):
            raise MissingValue(f"{path}:{lineno}: label column {label_idx} is empty")
        labels_raw.append(label)
        rows.append(vals)

    X = np.asarray(rows, dtype=float)
    if missing and not impute_missing:
        lineno, col = missing[0]
        raise MissingValue(
            f"{path}:{lineno}: column {col} is missing "
            f"({len(missing)} missing cells total; pass impute_missing=True "
            f"to fill with column means)"
        )
    if missing:
        means = np.nanmean(X, axis=0)
        holes = np.isnan(X)
        X[holes] = np.take(means, np.nonzero(holes)[1])

    names: list = []
    order: dict = {}
    y = np.empty(len(labels_raw), dtype=np.int64)
    for i, token in enumerate(labels_raw):
        if token not in order:
            order[token] = len(order) + 1
            names.append(token)
        y[i] = order[token]
    return Dataset(X, y, class_count=len(names), label_names=names)


@dataclass
class GaussianPairSpec:
    """Two spherical unit-variance Gaussians with equal priors.

    Class 1 sits at the origin, class 2 at `mu1`; the Bayes error of the
    pair is Phi(-||mu1|| / 2).
    """

    dim: int
    mu1: np.ndarray
    sigma: float = 1.0
    priors: tuple = (0.5, 0.5)

    def __post_init__(self):
        self.mu1 = np.asarray(self.mu1, dtype=float)
        if self.mu1.shape != (self.dim,):
            raise ValueError("mu1 must have length dim")


def _std_normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def bayes_error_of_distance(d: float) -> float:
    """Bayes error of the equal-prior unit-variance pair at mean distance d."""
    return _std_normal_cdf(-0.5 * d)


def find_mean_distance(target_bayes_error: float, tol: float = 1e-9) -> float:
    """Mean separation whose Bayes error hits the target, by bisection.

    The error curve Phi(-d/2) is strictly decreasing from 0.5 at d = 0, so
    a plain bisection on it converges for any target in (0, 0.5].
    """
    if not 0 < target_bayes_error <= 0.5:
        raise ValueError("target Bayes error must lie in (0, 0.5]")
    if target_bayes_error == 0.5:
        return 0.0
    lo, hi = 0.0, 1.0
    while bayes_error_of_distance(hi) > target_bayes_error:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("target Bayes error too small to bracket")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if bayes_error_of_distance(mid) > target_bayes_error:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def synth_gaussian_pair(dim: int, bayes_error: float, n: int, seed=0):
    """Sample a balanced two-class Gaussian dataset at a target difficulty.

    mu1 = d * (random unit direction); ceil(n/2) class-1 rows and floor(n/2)
    class-2 rows, shuffled.  Returns (Dataset, GaussianPairSpec).
    """
    if dim < 1 or n < 2:
        raise ValueError("need dim >= 1 and n >= 2")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    d = find_mean_distance(bayes_error) if bayes_error < 0.5 else 0.0
    mu1 = d * direction
    n1 = (n + 1) // 2
    n2 = n // 2
    X = rng.standard_normal((n, dim))
    X[n1:] += mu1
    y = np.concatenate([np.ones(n1, dtype=np.int64),
                        np.full(n2, 2, dtype=np.int64)])
    perm = rng.permutation(n)
    spec = GaussianPairSpec(dim=dim, mu1=mu1)
    return Dataset(X[perm], y[perm], class_count=2), spec


def bayes_posterior(spec: GaussianPairSpec, x) -> float:
    """P(class 2 | x) in closed form: a logistic of the log-density ratio."""
    x = np.asarray(x, dtype=float)
    t = spec.mu1 @ x - 0.5 * spec.mu1 @ spec.mu1
    return float(expit(t))


def sample_mixture(spec: GaussianPairSpec, n: int, rng) -> np.ndarray:
    """Draw n points from the equal-mixture marginal p(x) of the pair."""
    X = rng.standard_normal((n, spec.dim))
    from_mu1 = rng.random(n) < 0.5
    X[from_mu1] += spec.mu1
    return X


def kfold_split(data: Dataset, k: int, seed=0):
    """Seeded permutation cut into k contiguous folds of near-equal size.

    Yields (train_indices, test_indices) with every index in exactly one
    test fold.
    """
    n = len(data)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test = folds[i]
        train = np.concatenate([folds[j] for j in range(k) if j != i])
        out.append((train, test))
    return out
