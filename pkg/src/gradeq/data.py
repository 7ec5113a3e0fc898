"""Synthetic long-tail datasets and CSV persistence.

Category sizes follow a truncated exponential profile: category j gets
round(base_count * exp(-decay * j)) instances, floored at 1 so every
category exists. decay = ln(R)/(C-1) yields a head:tail ratio of R.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, IngestionError, ParameterError
from .gradstats import count_pos_neg
from .numerics import make_rng


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_categories: int
    per_category_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise DimensionError("features must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.features.shape[0]:
            raise DimensionError("labels must be 1-D with one entry per feature row")
        if self.num_categories < 1:
            raise ParameterError("num_categories must be >= 1")
        self.labels = self.labels.astype(np.int64)
        self.per_category_counts, _ = count_pos_neg(self.labels, self.num_categories)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def category_counts(num_categories: int, base_count: int, decay: float) -> np.ndarray:
    """Per-category instance counts: max(1, round(base_count * e^(-decay*j)))."""
    if num_categories < 1:
        raise ParameterError("num_categories must be >= 1")
    if base_count < 1:
        raise ParameterError("base_count must be >= 1")
    if decay < 0:
        raise ParameterError("decay must be >= 0")
    j = np.arange(num_categories, dtype=np.float64)
    raw = base_count * np.exp(-decay * j)
    return np.maximum(1, np.floor(raw + 0.5)).astype(np.int64)


def synth_longtail(num_categories: int, dim: int, base_count: int, decay: float,
                   cluster_spread: float, seed: int) -> Dataset:
    """Gaussian cluster per category, exponentially decaying sizes.

    Centers are drawn uniformly from [-1, 1]^dim, re-drawn (up to 1000
    times each) until all pairwise center distances exceed
    2*cluster_spread; after that the last draw is kept, so generation
    never fails outright in crowded configurations. Features are
    N(center, cluster_spread^2 * I). Centers and features come from
    separate named substreams of the seed, so the geometry is stable
    if sampling code changes.
    """
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    if cluster_spread <= 0:
        raise ParameterError("cluster_spread must be positive")
    counts = category_counts(num_categories, base_count, decay)

    center_rng = make_rng(seed, "centers")
    min_sep = 2.0 * cluster_spread
    centers = np.empty((num_categories, dim), dtype=np.float64)
    for c in range(num_categories):
        for _ in range(1000):
            cand = center_rng.uniform(-1.0, 1.0, size=dim)
            if c == 0 or np.linalg.norm(centers[:c] - cand[None, :], axis=1).min() >= min_sep:
                break
        centers[c] = cand

    feat_rng = make_rng(seed, "features")
    features = np.empty((int(counts.sum()), dim), dtype=np.float64)
    labels = np.empty(int(counts.sum()), dtype=np.int64)
    row = 0
    for c in range(num_categories):
        n = int(counts[c])
        features[row:row + n] = centers[c] + cluster_spread * feat_rng.standard_normal((n, dim))
        labels[row:row + n] = c
        row += n
    return Dataset(features, labels, num_categories)


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split.

    Per category: n_test = min(count - 1, round(count * test_fraction)),
    so a singleton category stays entirely in train. Membership is
    decided by a seeded permutation per category; deterministic for a
    fixed (dataset, fraction, seed).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError("test_fraction must lie in (0, 1)")
    rng = make_rng(seed, "split")
    train_idx, test_idx = [], []
    for c in range(ds.num_categories):
        idx = np.flatnonzero(ds.labels == c)
        n = idx.shape[0]
        if n == 0:
            continue
        n_test = min(n - 1, int(np.floor(n * test_fraction + 0.5)))
        perm = rng.permutation(n)
        test_idx.append(idx[perm[:n_test]])
        train_idx.append(idx[perm[n_test:]])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.empty(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.empty(0, dtype=np.int64)
    return (
        Dataset(ds.features[train], ds.labels[train], ds.num_categories),
        Dataset(ds.features[test], ds.labels[test], ds.num_categories),
    )


def save_csv(ds: Dataset, path: str) -> None:
    """Write `f0,...,f{D-1},label` rows; floats at 17 significant digits
    so a round-trip is bit-exact."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([f"f{i}" for i in range(ds.dim)] + ["label"]) + "\n")
        for row, lab in zip(ds.features, ds.labels):
            fh.write(",".join("%.17g" % v for v in row) + f",{lab}\n")


def load_csv(path: str, num_categories: int | None = None) -> Dataset:
    """Read a dataset written by save_csv.

    The header must be f0..f{D-1},label. Malformed rows raise
    IngestionError naming the 1-based line number. num_categories
    defaults to max(label) + 1.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise IngestionError(f"{path}: empty file")
        cols = header.split(",")
        if cols[-1] != "label" or any(c != f"f{i}" for i, c in enumerate(cols[:-1])):
            raise IngestionError(f"{path}: line 1: bad header {header!r}")
        dim = len(cols) - 1
        if dim < 1:
            raise IngestionError(f"{path}: line 1: no feature columns")
        feats, labs = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim + 1:
                raise IngestionError(f"{path}: line {lineno}: expected {dim + 1} fields, got {len(parts)}")
            try:
                feats.append([float(v) for v in parts[:-1]])
                labs.append(int(parts[-1]))
            except ValueError as exc:
                raise IngestionError(f"{path}: line {lineno}: {exc}") from exc
            if labs[-1] < 0:
                raise IngestionError(f"{path}: line {lineno}: negative label {labs[-1]}")
    if not labs:
        raise ParameterError(f"{path}: no data rows")
    features = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labs, dtype=np.int64)
    if num_categories is None:
        num_categories = int(labels.max()) + 1
    if labels.max() >= num_categories:
        raise IngestionError(f"{path}: label {labels.max()} exceeds num_categories {num_categories}")
    return Dataset(features, labels, num_categories)
