"""Per-category gradient accumulators and ratio re-mapping.

A category's training status is summarized by two running sums over
iterations: the magnitude of gradient received from its own (positive)
samples and from all other (negative) samples. Their ratio is ~1 for a
category trained in balance and ~0 for one drowned in negatives. The
ratio is re-mapped into a down-weight in [0, 1] by one of four monotone
mapping functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError
from .numerics import sigmoid

MAPPING_KINDS = ("linear", "sqrt", "exp", "sigmoid_like")

# Default steepness / inflection of the sigmoid-like map.
DEFAULT_MAP_GAMMA = 12.0
DEFAULT_MAP_MU = 0.8


@dataclass(frozen=True)
class MappingFn:
    """Monotone remap of a gradient ratio in [0, 1] to a weight in [0, 1].

    kinds:
      linear       f(x) = x
      sqrt         f(x) = sqrt(x)
      exp          f(x) = x**2   (strongest suppression at low ratios)
      sigmoid_like f(x) = 1/(1 + e^(-gamma*(x - mu)))

    gamma and mu only apply to the sigmoid_like kind. Output is always
    clipped to [0, 1].
    """

    kind: str = "sigmoid_like"
    gamma: float = DEFAULT_MAP_GAMMA
    mu: float = DEFAULT_MAP_MU

    def __post_init__(self):
        if self.kind not in MAPPING_KINDS:
            raise ParameterError(
                f"unknown mapping kind {self.kind!r}; expected one of {MAPPING_KINDS}"
            )

    def __call__(self, x):
        return map_ratio(self, x)


def map_ratio(fn: MappingFn, x):
    """Apply a mapping function; accepts a scalar or array in [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if fn.kind == "linear":
        y = arr
    elif fn.kind == "sqrt":
        y = np.sqrt(arr)
    elif fn.kind == "exp":
        y = arr * arr
    else:
        y = sigmoid(fn.gamma * (arr - fn.mu))
    y = np.clip(y, 0.0, 1.0)
    if np.isscalar(x) or arr.ndim == 0:
        return float(y)
    return y


class GradStats:
    """Accumulated positive/negative gradient magnitudes per category.

    Single-writer: exactly one training loop may call accumulate_batch;
    reads (ratio, ratios, snapshot) are only valid between updates.
    Both accumulators are non-negative and non-decreasing.
    """

    def __init__(self, num_categories: int, eps: float = 1e-12, initial_ratio: float = 1.0):
        if num_categories < 1:
            raise ParameterError("num_categories must be >= 1")
        if eps <= 0:
            raise ParameterError("eps must be positive")
        self.num_categories = int(num_categories)
        self.eps = float(eps)
        self.initial_ratio = float(initial_ratio)
        self.g_pos = np.zeros(self.num_categories, dtype=np.float64)
        self.g_neg = np.zeros(self.num_categories, dtype=np.float64)
        self.iteration = 0

    def accumulate_batch(self, grad, labels) -> "GradStats":
        """Fold one batch gradient (B, C) into the accumulators.

        Row i contributes |grad[i, j]| to g_pos[j] when labels[i] == j
        and to g_neg[j] otherwise. Refuses non-finite gradients so a
        single bad batch cannot poison the running sums.
        """
        g = np.asarray(grad, dtype=np.float64)
        if g.ndim != 2 or g.shape[1] != self.num_categories:
            raise DimensionError(
                f"gradient shape {g.shape} incompatible with {self.num_categories} categories"
            )
        lab = _check_labels(labels, g.shape[0], self.num_categories)
        if not np.all(np.isfinite(g)):
            raise NumericError("gradient batch contains non-finite entries")
        mag = np.abs(g)
        pos_mask = lab[:, None] == np.arange(self.num_categories)[None, :]
        self.g_pos += np.where(pos_mask, mag, 0.0).sum(axis=0)
        self.g_neg += np.where(pos_mask, 0.0, mag).sum(axis=0)
        self.iteration += 1
        return self

    def ratio(self, j: int) -> float:
        """Accumulated positive/negative ratio of category j, in [0, 1].

        min(1, g_pos / (g_neg + eps)); categories that have received no
        gradient at all report the configured initial ratio (balanced
        start, default 1.0).
        """
        if not 0 <= j < self.num_categories:
            raise ParameterError(f"category index {j} out of range [0, {self.num_categories})")
        gp = self.g_pos[j]
        gn = self.g_neg[j]
        if gp == 0.0 and gn == 0.0:
            return min(1.0, max(0.0, self.initial_ratio))
        return min(1.0, gp / (gn + self.eps))

    def ratios(self) -> np.ndarray:
        """Vector of ratio(j) for all categories (fresh copy)."""
        raw = self.g_pos / (self.g_neg + self.eps)
        out = np.minimum(1.0, raw)
        untouched = (self.g_pos == 0.0) & (self.g_neg == 0.0)
        out[untouched] = min(1.0, max(0.0, self.initial_ratio))
        return out

    def snapshot(self) -> "GradStats":
        """Immutable-by-convention copy for concurrent loss evaluation."""
        s = GradStats(self.num_categories, eps=self.eps, initial_ratio=self.initial_ratio)
        s.g_pos = self.g_pos.copy()
        s.g_neg = self.g_neg.copy()
        s.iteration = self.iteration
        return s


def count_pos_neg(labels, num_categories: int) -> tuple[np.ndarray, np.ndarray]:
    """Dataset-level positive/negative sample counts per category.

    Returns (m_pos, m_neg) with m_pos[j] the number of instances labeled
    j and m_neg[j] = N - m_pos[j].
    """
    lab = _check_labels(labels, None, num_categories)
    m_pos = np.bincount(lab, minlength=num_categories).astype(np.int64)
    m_neg = lab.shape[0] - m_pos
    return m_pos, m_neg


def _check_labels(labels, expected_len, num_categories: int) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got ndim={lab.ndim}")
    if expected_len is not None and lab.shape[0] != expected_len:
        raise DimensionError(f"labels length {lab.shape[0]} != batch size {expected_len}")
    if not np.issubdtype(lab.dtype, np.integer):
        if np.issubdtype(lab.dtype, np.floating) and np.all(lab == np.floor(lab)):
            lab = lab.astype(np.int64)
        else:
            raise ParameterError("labels must be integers")
    lab = lab.astype(np.int64)
    if lab.size and (lab.min() < 0 or lab.max() >= num_categories):
        raise ParameterError(f"labels must lie in [0, {num_categories})")
    return lab
