"""Loss functions with exact analytic gradients w.r.t. the logits.

Eight variants over a (B, C) logit matrix:

  bce          per-category binary cross-entropy (independent sigmoids)
  sigmoid_eql  BCE with per-category weights q_j (positives) and r_j
               (negatives) derived from accumulated gradient ratios:
               r_j = f(ratio_j), q_j = 1 + alpha*(1 - r_j)
  ce           softmax cross-entropy
  softmax_eql  CE over a calibrated softmax: logits shifted by
               pi * log(accumulated positive gradient) per category
  focal        -alpha_t * (1-p_t)^gamma_b * log(p_t), sigmoid-based
  efl          focal with per-category focusing factor
               gamma^j = gamma_b + s*(1 - ratio_j) and weighting factor
               w^j = gamma^j / gamma_b
  qfl          soft-target focal form -(|y'-p|)^gamma_b * [y' log p +
               (1-y') log(1-p)]
  eqfl         qfl with the per-category w^j * (|y'-p|)^gamma^j factor

Every statistics-derived quantity (r_j, q_j, gamma^j, w^j, calibration
offsets) is a constant under differentiation: the gradients returned
here are with respect to logits only, with the accumulators frozen.

Reductions: 'mean' averages over B*C elements for the sigmoid family
and over B rows for the softmax family; 'sum' divides by nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError
from .gradstats import GradStats, MappingFn, map_ratio, _check_labels
from .numerics import PROB_FLOOR, as_matrix, sigmoid, softmax_rows

VARIANTS = ("bce", "ce", "focal", "qfl", "sigmoid_eql", "softmax_eql", "efl", "eqfl")

# Variants whose weights/margins depend on a GradStats snapshot.
STATS_VARIANTS = frozenset({"sigmoid_eql", "softmax_eql", "efl", "eqfl"})
# Variants that take soft quality targets instead of hard labels.
QUALITY_VARIANTS = frozenset({"qfl", "eqfl"})
# Variants reduced per-row (softmax) rather than per-element (sigmoid).
SOFTMAX_FAMILY = frozenset({"ce", "softmax_eql"})

# Equalized variant -> the plain loss it reduces to when balanced.
BASE_VARIANT = {
    "sigmoid_eql": "bce",
    "softmax_eql": "ce",
    "efl": "focal",
    "eqfl": "qfl",
}


@dataclass(frozen=True)
class LossConfig:
    """Hyper-parameters shared by all loss variants.

    alpha      positive up-weight strength in q_j = 1 + alpha*(1 - r_j)
    mapping    ratio remap used by sigmoid_eql
    pi         calibration degree of softmax_eql (0 disables it)
    alpha_t    focal balance factor: alpha_t for positives,
               (1 - alpha_t) for negatives
    alpha_weighting  False turns the alpha_t factor off entirely
    gamma_b    base focusing exponent of the focal family
    s          focusing scale: gamma^j ranges over [gamma_b, gamma_b+s]
    """

    variant: str = "bce"
    alpha: float = 4.0
    mapping: MappingFn = field(default_factory=MappingFn)
    pi: float = 1.5
    alpha_t: float = 0.25
    alpha_weighting: bool = True
    gamma_b: float = 2.0
    s: float = 8.0
    reduction: str = "mean"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown loss variant {self.variant!r}; expected one of {VARIANTS}")
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if self.pi < 0:
            raise ParameterError("pi must be >= 0")
        if not 0.0 < self.alpha_t <= 1.0:
            raise ParameterError("alpha_t must be in (0, 1]")
        if self.gamma_b < 0:
            raise ParameterError("gamma_b must be >= 0")
        if self.s < 0:
            raise ParameterError("s must be >= 0")
        if self.reduction not in ("mean", "sum"):
            raise ParameterError("reduction must be 'mean' or 'sum'")


@dataclass
class LossOutput:
    """Reduced scalar loss and its (B, C) gradient w.r.t. the logits."""

    value: float
    grad: np.ndarray


@dataclass
class QualityTargets:
    """Soft targets for qfl/eqfl: per-instance quality score in [0, 1].

    labels[i] names the category the score attaches to; every other
    category of instance i is a plain negative (target 0). Hard
    positives correspond to y_prime == 1.
    """

    labels: np.ndarray
    y_prime: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.y_prime = np.asarray(self.y_prime, dtype=np.float64)
        if self.labels.ndim != 1 or self.y_prime.ndim != 1:
            raise DimensionError("labels and y_prime must be 1-D")
        if self.labels.shape[0] != self.y_prime.shape[0]:
            raise DimensionError("labels and y_prime lengths differ")
        if self.y_prime.size and (self.y_prime.min() < 0.0 or self.y_prime.max() > 1.0):
            raise ParameterError("quality targets must lie in [0, 1]")

    @classmethod
    def hard(cls, labels) -> "QualityTargets":
        labels = np.asarray(labels)
        return cls(labels, np.ones(labels.shape[0]))


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _prepare(logits, labels, num_categories=None):
    z = as_matrix(logits, "logits")
    b, c = z.shape
    if c < 1:
        raise DimensionError("logits must have at least one category column")
    lab = _check_labels(labels, b, c)
    if num_categories is not None and num_categories != c:
        raise DimensionError(f"stats cover {num_categories} categories but logits have {c}")
    onehot = np.zeros((b, c), dtype=np.float64)
    onehot[np.arange(b), lab] = 1.0
    return z, lab, onehot


def _factor(cfg: LossConfig, b: int, c: int) -> float:
    if cfg.reduction == "sum":
        return 1.0
    if cfg.variant in SOFTMAX_FAMILY:
        return 1.0 / b
    return 1.0 / (b * c)


def _require_stats(stats, c: int) -> GradStats:
    if stats is None:
        raise ParameterError("this loss variant requires gradient statistics")
    if stats.num_categories != c:
        raise DimensionError(f"stats cover {stats.num_categories} categories but logits have {c}")
    return stats


def _alpha_weights(cfg: LossConfig, onehot: np.ndarray):
    if not cfg.alpha_weighting:
        return 1.0
    return np.where(onehot == 1.0, cfg.alpha_t, 1.0 - cfg.alpha_t)


def reweight_terms(cfg: LossConfig, stats: GradStats) -> tuple[np.ndarray, np.ndarray]:
    """Per-category (r_j, q_j) used by sigmoid_eql: r_j = f(ratio_j),
    q_j = 1 + alpha*(1 - r_j)."""
    r = map_ratio(cfg.mapping, stats.ratios())
    q = 1.0 + cfg.alpha * (1.0 - r)
    return r, q


def focusing_terms(cfg: LossConfig, stats: GradStats) -> tuple[np.ndarray, np.ndarray]:
    """Per-category (gamma^j, w^j) used by efl/eqfl:
    gamma^j = gamma_b + s*(1 - ratio_j), w^j = gamma^j / gamma_b."""
    if cfg.gamma_b <= 0:
        raise ParameterError("efl/eqfl require gamma_b > 0 (the weighting factor divides by it)")
    gamma_v = cfg.s * (1.0 - stats.ratios())
    gamma_j = cfg.gamma_b + gamma_v
    w = gamma_j / cfg.gamma_b
    return gamma_j, w


def calibration_offsets(g_pos, pi: float, eps: float = 1e-12) -> np.ndarray:
    """Additive logit offsets pi * log(g_pos) for the calibrated softmax.

    g_pos is normalized by its maximum before the log; the uniform
    shift this removes cancels inside the softmax, so the probabilities
    are unchanged while the offsets stay invariant (to rounding) under
    rescaling of the accumulators. All-zero accumulators yield zero
    offsets, i.e. the plain softmax.
    """
    g = np.asarray(g_pos, dtype=np.float64)
    m = g.max() if g.size else 0.0
    if pi == 0.0 or m <= 0.0:
        return np.zeros(g.shape[0], dtype=np.float64)
    return pi * np.log(g / m + eps)


# ---------------------------------------------------------------------------
# sigmoid family
# ---------------------------------------------------------------------------


def bce(logits, labels, cfg: LossConfig) -> LossOutput:
    """Binary cross-entropy over all (instance, category) pairs.

    value: reduce of -[y log p + (1-y) log(1-p)], p = sigmoid(z);
    gradient entry: (p - y) times the reduction factor. Probabilities
    are clamped to [PROB_FLOOR, 1-PROB_FLOOR] before the log.
    """
    z, _, y = _prepare(logits, labels)
    f = _factor(cfg, *z.shape)
    p = sigmoid(z)
    terms = _bce_terms(p, y)
    return LossOutput(float(terms.sum() * f), (p - y) * f)


def _bce_terms(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))


def sigmoid_eql(logits, labels, stats: GradStats, cfg: LossConfig) -> LossOutput:
    """BCE re-weighted per category by the accumulated gradient ratio.

    Entry (i, j) is weighted q_j for a positive and r_j for a negative;
    both weights are constants w.r.t. the logits, so the gradient is
    the weighted (p - y).
    """
    z, _, y = _prepare(logits, labels)
    stats = _require_stats(stats, z.shape[1])
    f = _factor(cfg, *z.shape)
    r, q = reweight_terms(cfg, stats)
    weight = y * q[None, :] + (1.0 - y) * r[None, :]
    p = sigmoid(z)
    terms = _bce_terms(p, y)
    return LossOutput(float((weight * terms).sum() * f), weight * (p - y) * f)


def focal(logits, labels, cfg: LossConfig) -> LossOutput:
    """Focal loss: -alpha_t * (1 - p_t)^gamma_b * log(p_t).

    p_t is p for positives and 1-p for negatives. The analytic gradient
    follows from d p_t/dz = +-p_t(1-p_t) through the sigmoid:
    dL/dz = sign(y) * alpha_t * (1-p_t)^gamma * (gamma*p_t*log(p_t) - (1-p_t)).
    """
    z, _, y = _prepare(logits, labels)
    f = _factor(cfg, *z.shape)
    a = _alpha_weights(cfg, y)
    terms, grad = _focal_core(z, y, a, cfg.gamma_b, 1.0)
    return LossOutput(float(terms.sum() * f), grad * f)


def efl(logits, labels, stats: GradStats, cfg: LossConfig) -> LossOutput:
    """Focal loss with gradient-driven per-category focusing.

    gamma^j = gamma_b + s*(1 - ratio_j) sharpens the focus on badly
    balanced categories; w^j = gamma^j / gamma_b restores the loss
    contribution the larger exponent would suppress. Both are constants
    w.r.t. the logits. Equals focal when s = 0 or all ratios are 1.
    """
    z, _, y = _prepare(logits, labels)
    stats = _require_stats(stats, z.shape[1])
    f = _factor(cfg, *z.shape)
    a = _alpha_weights(cfg, y)
    gamma_j, w = focusing_terms(cfg, stats)
    terms, grad = _focal_core(z, y, a, gamma_j[None, :], w[None, :])
    return LossOutput(float(terms.sum() * f), grad * f)


def _focal_core(z, y, a, gamma, w):
    # a scalar exponent takes a different pow kernel than an array one
    # and can differ by 1 ulp; normalize so focal is bitwise identical
    # to efl with all ratios at 1.
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim == 0:
        gamma = np.full((1, z.shape[1]), float(gamma))
    p = sigmoid(z)
    p_t = y * p + (1.0 - y) * (1.0 - p)
    ptc = np.clip(p_t, PROB_FLOOR, 1.0 - PROB_FLOOR)
    log_pt = np.log(ptc)
    one_minus = 1.0 - p_t
    mod = one_minus**gamma
    terms = w * a * mod * -log_pt
    sign = 2.0 * y - 1.0
    grad = sign * w * a * mod * (gamma * p_t * log_pt - one_minus)
    return terms, grad


def qfl(logits, targets: QualityTargets, cfg: LossConfig) -> LossOutput:
    """Quality focal loss over soft targets y' in [0, 1].

    value: reduce of -(|y'-p|)^gamma_b * [y' log p + (1-y') log(1-p)].
    The gradient is zero at the non-differentiable point y' = p (the
    modulating factor vanishes there).
    """
    z, yq = _prepare_quality(logits, targets)
    f = _factor(cfg, *z.shape)
    terms, grad = _quality_core(z, yq, cfg.gamma_b, 1.0)
    return LossOutput(float(terms.sum() * f), grad * f)


def eqfl(logits, targets: QualityTargets, stats: GradStats, cfg: LossConfig) -> LossOutput:
    """Quality focal loss with the per-category w^j * |y'-p|^gamma^j factor.

    gamma^j and w^j are exactly those of efl. Equals qfl when s = 0 or
    all ratios are 1.
    """
    z, yq = _prepare_quality(logits, targets)
    stats = _require_stats(stats, z.shape[1])
    f = _factor(cfg, *z.shape)
    gamma_j, w = focusing_terms(cfg, stats)
    terms, grad = _quality_core(z, yq, gamma_j[None, :], w[None, :])
    return LossOutput(float(terms.sum() * f), grad * f)


def _prepare_quality(logits, targets: QualityTargets):
    z = as_matrix(logits, "logits")
    b, c = z.shape
    if targets.labels.shape[0] != b:
        raise DimensionError(f"targets cover {targets.labels.shape[0]} instances but logits have {b}")
    lab = _check_labels(targets.labels, b, c)
    yq = np.zeros((b, c), dtype=np.float64)
    yq[np.arange(b), lab] = targets.y_prime
    return z, yq


def _quality_core(z, yq, gamma, w):
    # same exponent normalization as _focal_core, for the same reason
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim == 0:
        gamma = np.full((1, z.shape[1]), float(gamma))
    p = sigmoid(z)
    pc = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    cross = yq * np.log(pc) + (1.0 - yq) * np.log(1.0 - pc)
    err = yq - p
    dist = np.abs(err)
    mod = dist**gamma
    terms = w * mod * -cross
    # d/dz of -w*|e|^g*cross with e = y'-p, dp/dz = p(1-p):
    #   w * (g*sign(e)*|e|^(g-1) * p(1-p) * cross - |e|^g * e)
    # defined as 0 at the kink e = 0.
    safe = np.where(dist > 0.0, dist, 1.0)
    dist_gm1 = safe ** (gamma - 1.0)
    grad = w * (gamma * np.sign(err) * dist_gm1 * p * (1.0 - p) * cross - mod * err)
    grad = np.where(dist == 0.0, 0.0, grad)
    return terms, grad


# ---------------------------------------------------------------------------
# softmax family
# ---------------------------------------------------------------------------


def ce(logits, labels, cfg: LossConfig) -> LossOutput:
    """Softmax cross-entropy: reduce of -log softmax(z)[label].

    Gradient row: softmax(z) - onehot(label), times the reduction
    factor.
    """
    z, lab, onehot = _prepare(logits, labels)
    row_values, probs = _ce_rows(z, lab, None)
    f = _factor(cfg, *z.shape)
    return LossOutput(float(row_values.sum() * f), (probs - onehot) * f)


def softmax_eql(logits, labels, stats: GradStats, cfg: LossConfig) -> LossOutput:
    """CE over the calibrated softmax softmax(z_j + pi*log(g_pos_j)).

    The offsets encode the prior the accumulated positive gradients
    reveal; they are constants w.r.t. the logits, so the gradient has
    the plain CE form with the calibrated probabilities. pi = 0 or
    all-zero accumulators reduce this to ce.
    """
    z, lab, onehot = _prepare(logits, labels)
    stats = _require_stats(stats, z.shape[1])
    offsets = calibration_offsets(stats.g_pos, cfg.pi, stats.eps)
    row_values, probs = _ce_rows(z, lab, offsets)
    f = _factor(cfg, *z.shape)
    return LossOutput(float(row_values.sum() * f), (probs - onehot) * f)


def _ce_rows(z, lab, offsets):
    """Per-row -log softmax(z + offsets)[label] and the row probabilities.

    Computed in log-sum-exp form (dtype-preserving) and capped at
    -log(PROB_FLOOR), which equals taking the log of the clamped
    probability.
    """
    zz = z if offsets is None else z + np.asarray(offsets)[None, :]
    shifted = zz - zz.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    norm = e.sum(axis=1)
    rows = np.arange(z.shape[0])
    row_values = np.log(norm) - shifted[rows, lab]
    row_values = np.minimum(row_values, -np.log(PROB_FLOOR))
    return row_values, e / norm[:, None]


# ---------------------------------------------------------------------------
# composition and dispatch
# ---------------------------------------------------------------------------


def compose_objectness(p, p_obj) -> np.ndarray:
    """Scale each row of category probabilities by the row's objectness.

    out[i, j] = p[i, j] * p_obj[i]. Evaluation-time composition only;
    it never participates in the category-head loss gradients.
    """
    pm = as_matrix(p, "probabilities")
    po = np.asarray(p_obj, dtype=np.float64)
    if po.ndim != 1 or po.shape[0] != pm.shape[0]:
        raise DimensionError(f"objectness length {po.shape} does not match {pm.shape[0]} rows")
    return pm * po[:, None]


def evaluate_loss(logits, labels, cfg: LossConfig, stats: GradStats | None = None,
                  quality: np.ndarray | None = None) -> LossOutput:
    """Dispatch on cfg.variant.

    labels are hard category indices; for qfl/eqfl they are combined
    with `quality` (per-instance y', default all ones) into soft
    targets.
    """
    v = cfg.variant
    if v in QUALITY_VARIANTS:
        if isinstance(quality, QualityTargets):
            targets = quality
        else:
            labels = np.asarray(labels)
            targets = (
                QualityTargets.hard(labels)
                if quality is None
                else QualityTargets(labels, quality)
            )
        if v == "qfl":
            return qfl(logits, targets, cfg)
        return eqfl(logits, targets, stats, cfg)
    if v == "bce":
        return bce(logits, labels, cfg)
    if v == "ce":
        return ce(logits, labels, cfg)
    if v == "focal":
        return focal(logits, labels, cfg)
    if v == "sigmoid_eql":
        return sigmoid_eql(logits, labels, stats, cfg)
    if v == "softmax_eql":
        return softmax_eql(logits, labels, stats, cfg)
    return efl(logits, labels, stats, cfg)


def loss_terms(logits, labels, cfg: LossConfig, stats: GradStats | None = None,
               quality: np.ndarray | None = None) -> np.ndarray:
    """Unreduced loss contributions, for verification harnesses.

    Sigmoid-family variants return the (B, C) per-element terms, the
    softmax family the (B,) per-row terms; in both cases applying the
    configured reduction to these terms yields the loss value. The
    computation follows the dtype of `logits` (float64 or longdouble),
    which lets a finite-difference oracle evaluate the loss in extended
    precision and keep its noise floor below the gradient tolerance.
    """
    z = np.asarray(logits)
    if z.dtype != np.longdouble:
        z = z.astype(np.float64)
    if z.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got ndim={z.ndim}")
    b, c = z.shape
    v = cfg.variant
    if v in QUALITY_VARIANTS:
        if isinstance(quality, QualityTargets):
            labels, quality = quality.labels, quality.y_prime
        if quality is None:
            quality = np.ones(b)
        lab = _check_labels(labels, b, c)
        yq = np.zeros((b, c), dtype=np.float64)
        yq[np.arange(b), lab] = np.asarray(quality, dtype=np.float64)
        if v == "qfl":
            return _quality_core(z, yq, cfg.gamma_b, 1.0)[0]
        gamma_j, w = focusing_terms(cfg, _require_stats(stats, c))
        return _quality_core(z, yq, gamma_j[None, :], w[None, :])[0]
    lab = _check_labels(labels, b, c)
    if v == "ce":
        return _ce_rows(z, lab, None)[0]
    if v == "softmax_eql":
        stats = _require_stats(stats, c)
        return _ce_rows(z, lab, calibration_offsets(stats.g_pos, cfg.pi, stats.eps))[0]
    y = np.zeros((b, c), dtype=np.float64)
    y[np.arange(b), lab] = 1.0
    if v == "bce":
        return _bce_terms(sigmoid(z), y)
    if v == "sigmoid_eql":
        r, q = reweight_terms(cfg, _require_stats(stats, c))
        weight = y * q[None, :] + (1.0 - y) * r[None, :]
        return weight * _bce_terms(sigmoid(z), y)
    a = _alpha_weights(cfg, y)
    if v == "focal":
        return _focal_core(z, y, a, cfg.gamma_b, 1.0)[0]
    gamma_j, w = focusing_terms(cfg, _require_stats(stats, c))
    return _focal_core(z, y, a, gamma_j[None, :], w[None, :])[0]
