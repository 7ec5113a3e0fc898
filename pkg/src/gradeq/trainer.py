"""SGD training loop, grouped evaluation, and the gradient-check oracle.

The model is a linear classifier (optionally preceded by one tanh
hidden layer) trained by mini-batch SGD with momentum. Each iteration
follows a fixed ordering contract: the loss at iteration T is weighted
by the gradient statistics accumulated through iteration T-1, and only
afterwards does T's own batch gradient enter the accumulators.

Determinism: (seed, config, dataset) fully determine every parameter
and telemetry value. Parameter init draws from the "init" substream of
the seed and batch sampling from the "batch" substream, in documented
order (hidden layer if any, then classifier weights, then objectness
head), so runs can be replayed piecewise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import DimensionError, NumericError, ParameterError
from .gradstats import MAPPING_KINDS, GradStats, MappingFn
from .losses import (
    BASE_VARIANT,
    SOFTMAX_FAMILY,
    STATS_VARIANTS,
    LossConfig,
    compose_objectness,
    evaluate_loss,
    focusing_terms,
    loss_terms,
    reweight_terms,
)
from .numerics import make_rng, sigmoid, softmax_rows
from .telemetry import TelemetryRecord

# Bias init for the equalized variants; keeps early positive logits
# slightly above zero so rare categories are not extinguished at start.
EQUALIZED_BIAS_INIT = 1e-3

# |y' - p| band excluded from finite-difference checks around the
# quality-loss kink, where the analytic gradient is defined as 0.
KINK_EXCLUSION = 1e-3


@dataclass
class Model:
    """Classifier parameters: logits = feat @ weights + bias.

    feat is the raw input (linear model) or tanh(x @ hidden) when a
    hidden layer is present (nonlinear=False keeps the hidden layer
    affine). The optional objectness head maps the same feat to one
    logit per instance.
    """

    weights: np.ndarray
    bias: np.ndarray
    hidden: np.ndarray | None = None
    nonlinear: bool = True
    obj_weights: np.ndarray | None = None
    obj_bias: float = 0.0

    @property
    def dim(self) -> int:
        return self.hidden.shape[0] if self.hidden is not None else self.weights.shape[0]

    @property
    def num_categories(self) -> int:
        return self.weights.shape[1]


@dataclass
class TrainConfig:
    """Training-loop settings; loss hyper-parameters live in `loss`.

    bias_init=None selects the default classifier bias: 0.001 for the
    equalized variants, 0 otherwise. freeze_stats makes the loss see a
    permanently balanced accumulator (all ratios 1) while the real
    statistics are still collected, which turns every equalized variant
    into its base loss exactly. accumulate_base_gradients feeds the
    statistics from the un-equalized base loss instead of the loss
    being optimized.
    """

    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 0.5
    momentum: float = 0.9
    iterations: int = 2000
    batch_size: int = 64
    seed: int = 0
    telemetry_every: int = 50
    objectness_head: bool = False
    hidden_dim: int = 0
    nonlinear: bool = True
    bias_init: float | None = None
    freeze_stats: bool = False
    accumulate_base_gradients: bool = False

    def __post_init__(self):
        # learning_rate 0 is allowed: the update is a documented no-op
        # (parameters stay bit-identical while statistics accumulate).
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError("momentum must lie in [0, 1)")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.telemetry_every < 1:
            raise ParameterError("telemetry_every must be >= 1")
        if self.hidden_dim < 0:
            raise ParameterError("hidden_dim must be >= 0")


@dataclass
class TrainResult:
    model: Model
    telemetry: list[TelemetryRecord]
    stats: GradStats


def init_model(dim: int, num_categories: int, cfg: TrainConfig) -> Model:
    """Seeded parameter init: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Classifier bias starts at 0.001 for the equalized loss variants
    (cfg.bias_init overrides).
    """
    if dim < 1 or num_categories < 1:
        raise ParameterError("dim and num_categories must be >= 1")
    rng = make_rng(cfg.seed, "init")
    hidden = None
    fan_in = dim
    if cfg.hidden_dim > 0:
        bound = 1.0 / np.sqrt(dim)
        hidden = rng.uniform(-bound, bound, size=(dim, cfg.hidden_dim))
        fan_in = cfg.hidden_dim
    bound = 1.0 / np.sqrt(fan_in)
    weights = rng.uniform(-bound, bound, size=(fan_in, num_categories))
    if cfg.bias_init is not None:
        b0 = cfg.bias_init
    elif cfg.loss.variant in STATS_VARIANTS and not cfg.freeze_stats:
        b0 = EQUALIZED_BIAS_INIT
    else:
        # freeze_stats turns an equalized variant into its base loss,
        # so it inherits the base initialization too.
        b0 = 0.0
    bias = np.full(num_categories, b0, dtype=np.float64)
    obj_w = None
    obj_b = 0.0
    if cfg.objectness_head:
        obj_w = rng.uniform(-bound, bound, size=fan_in)
    return Model(weights, bias, hidden, cfg.nonlinear, obj_w, obj_b)


def _forward(model: Model, x: np.ndarray):
    if x.shape[1] != model.dim:
        raise DimensionError(f"features have dim {x.shape[1]}, model expects {model.dim}")
    feat = x
    if model.hidden is not None:
        feat = x @ model.hidden
        if model.nonlinear:
            feat = np.tanh(feat)
    logits = feat @ model.weights + model.bias
    obj_logits = feat @ model.obj_weights + model.obj_bias if model.obj_weights is not None else None
    return feat, logits, obj_logits


def train(data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Run the SGD loop; returns the final model, telemetry, and stats.

    Per iteration: sample a batch (uniform with replacement), forward,
    evaluate the loss against the stats snapshot from the previous
    iteration, update parameters with momentum SGD, accumulate the
    batch gradient into the stats, and emit telemetry every
    cfg.telemetry_every iterations plus at the final one. Telemetry
    rows report the post-accumulation state of that iteration.

    The objectness head (when enabled) is trained with plain BCE in
    which every instance is a positive; its gradients stay inside the
    head and never receive equalized weighting.
    """
    if len(data) == 0:
        raise ParameterError("dataset is empty")
    model = init_model(data.dim, data.num_categories, cfg)
    stats = GradStats(data.num_categories)
    balanced = GradStats(data.num_categories)
    lcfg = cfg.loss
    base_cfg = None
    if cfg.accumulate_base_gradients and lcfg.variant in BASE_VARIANT:
        base_cfg = replace(lcfg, variant=BASE_VARIANT[lcfg.variant])

    rng = make_rng(cfg.seed, "batch")
    lr = cfg.learning_rate
    mu = cfg.momentum
    vw = np.zeros_like(model.weights)
    vb = np.zeros_like(model.bias)
    vh = np.zeros_like(model.hidden) if model.hidden is not None else None
    vow = np.zeros_like(model.obj_weights) if model.obj_weights is not None else None
    vob = 0.0

    telemetry: list[TelemetryRecord] = []
    n = len(data)
    for t in range(1, cfg.iterations + 1):
        idx = rng.integers(0, n, size=cfg.batch_size)
        x = data.features[idx]
        lab = data.labels[idx]
        feat, logits, obj_logits = _forward(model, x)

        loss_stats = balanced if cfg.freeze_stats else stats
        try:
            out = evaluate_loss(logits, lab, lcfg, stats=loss_stats)
        except NumericError as exc:
            # keep the iteration number in every numeric abort
            raise NumericError(f"{exc} at iteration {t}") from exc
        if not np.isfinite(out.value):
            raise NumericError(f"non-finite loss value at iteration {t}")
        if not np.all(np.isfinite(out.grad)):
            raise NumericError(f"non-finite loss gradient at iteration {t}")

        g = out.grad
        gw = feat.T @ g
        gb = g.sum(axis=0)
        if model.hidden is not None:
            dfeat = g @ model.weights.T
            if model.nonlinear:
                dfeat = dfeat * (1.0 - feat * feat)
            gh = x.T @ dfeat
        if model.obj_weights is not None:
            p_obj = sigmoid(obj_logits)
            g_obj = (p_obj - 1.0) / x.shape[0]
            gow = feat.T @ g_obj
            gob = g_obj.sum()

        vw = mu * vw + gw
        model.weights -= lr * vw
        vb = mu * vb + gb
        model.bias -= lr * vb
        if model.hidden is not None:
            vh = mu * vh + gh
            model.hidden -= lr * vh
        if model.obj_weights is not None:
            vow = mu * vow + gow
            model.obj_weights -= lr * vow
            vob = mu * vob + gob
            model.obj_bias -= lr * vob
        _check_parameters(model, t)

        acc = g if base_cfg is None else evaluate_loss(logits, lab, base_cfg, stats=loss_stats).grad
        stats.accumulate_batch(acc, lab)

        if t % cfg.telemetry_every == 0 or t == cfg.iterations:
            telemetry.extend(_telemetry_rows(t, stats, loss_stats, lcfg, out.value))
    return TrainResult(model, telemetry, stats)


def _check_parameters(model: Model, t: int) -> None:
    ok = np.all(np.isfinite(model.weights)) and np.all(np.isfinite(model.bias))
    if ok and model.hidden is not None:
        ok = np.all(np.isfinite(model.hidden))
    if ok and model.obj_weights is not None:
        ok = np.all(np.isfinite(model.obj_weights)) and np.isfinite(model.obj_bias)
    if not ok:
        raise NumericError(f"non-finite parameters at iteration {t}")


def _telemetry_rows(t, stats, loss_stats, lcfg, loss_value):
    c = stats.num_categories
    ratios = stats.ratios()
    v = lcfg.variant
    if v == "sigmoid_eql":
        r, q = reweight_terms(lcfg, loss_stats)
        wp, wn, ge = q, r, np.zeros(c)
    elif v in ("efl", "eqfl"):
        gamma_j, w = focusing_terms(lcfg, loss_stats)
        wp, wn, ge = w, np.ones(c), gamma_j
    elif v in ("focal", "qfl"):
        wp, wn, ge = np.ones(c), np.ones(c), np.full(c, lcfg.gamma_b)
    else:
        wp, wn, ge = np.ones(c), np.ones(c), np.zeros(c)
    return [
        TelemetryRecord(t, j, float(stats.g_pos[j]), float(stats.g_neg[j]), float(ratios[j]),
                        float(wp[j]), float(wn[j]), float(ge[j]), float(loss_value))
        for j in range(c)
    ]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    """Overall and per-group accuracy; a group with no test instances
    reports None rather than 0."""

    overall: float
    group_ranges: list[tuple[int, int]]
    group_counts: list[int]
    group_accuracy: list[float | None]


def quartile_bounds(num_categories: int) -> tuple[int, ...]:
    """Category-index cuts splitting [0, C) into four equal-ish groups."""
    cuts = []
    for k in (1, 2, 3):
        cut = int(round(num_categories * k / 4.0))
        if 0 < cut < num_categories and cut not in cuts:
            cuts.append(cut)
    return tuple(cuts)


def evaluate(model: Model, data: Dataset, group_bounds=(), variant: str = "bce",
             use_objectness: bool = False) -> EvalReport:
    """Argmax accuracy, overall and per category group.

    Predictions argmax per-category probabilities: row-wise softmax for
    the softmax-family variants, elementwise sigmoid otherwise,
    optionally composed with the objectness probability. Ties break to
    the lowest category index. group_bounds are strictly increasing
    cuts in (0, C); instances are grouped by their true label.
    """
    if len(data) == 0:
        raise ParameterError("dataset is empty")
    c = model.num_categories
    bounds = tuple(int(b) for b in group_bounds)
    if any(not 0 < b < c for b in bounds) or list(bounds) != sorted(set(bounds)):
        raise ParameterError(f"group bounds {bounds} must be strictly increasing cuts in (0, {c})")
    _, logits, obj_logits = _forward(model, data.features)
    probs = softmax_rows(logits) if variant in SOFTMAX_FAMILY else sigmoid(logits)
    if use_objectness:
        if obj_logits is None:
            raise ParameterError("model has no objectness head")
        probs = compose_objectness(probs, sigmoid(obj_logits))
    pred = np.argmax(probs, axis=1)
    correct = pred == data.labels
    edges = (0,) + bounds + (c,)
    ranges, counts, accs = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (data.labels >= lo) & (data.labels < hi)
        cnt = int(mask.sum())
        ranges.append((lo, hi))
        counts.append(cnt)
        accs.append(float(correct[mask].mean()) if cnt else None)
    return EvalReport(float(correct.mean()), ranges, counts, accs)


# ---------------------------------------------------------------------------
# finite-difference gradient oracle
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference sweep for one loss variant.

    max_rel_error covers entries with |analytic| >= 1e-8; smaller
    entries are compared absolutely (max_abs_error vs abs_tolerance).
    worst describes the single worst entry seen, whichever mode it was
    checked under.
    """

    variant: str
    trials: int
    tolerance: float
    abs_tolerance: float
    max_rel_error: float
    max_abs_error: float
    checked: int
    excluded: int
    passed: bool
    worst: dict | None


def grad_check(variant: str, trials: int = 100, tolerance: float = 1e-5, seed: int = 0,
               abs_tolerance: float = 1e-9, inject=None) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Each trial draws a random batch (B in [1,8], C in [2,10], logits
    uniform in [-5,5]), random labels, random accumulator snapshots,
    and for the quality losses random y' in [0,1]; the mapping kind
    rotates across trials. Differences use h=1e-6 with the loss terms
    evaluated in longdouble, keeping the oracle's noise floor orders of
    magnitude below the tolerance. Entries within 1e-3 of the quality
    kink |y'-p| = 0 are excluded (gradient defined as 0 there). For the
    calibrated softmax, accumulators are drawn in [1,10] so offset
    magnitudes stay moderate; degenerate accumulators are unit-test
    territory, not oracle territory.

    Failure is a report, not an exception. inject=(row, col, delta) is
    a fault-injection hook that corrupts one analytic entry per trial,
    used to prove the checker catches real errors.
    """
    if variant not in _GRADCHECK_VARIANTS:
        raise ParameterError(f"unknown loss variant {variant!r}; expected one of {_GRADCHECK_VARIANTS}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    h = np.longdouble(1e-6)
    max_rel = 0.0
    max_abs = 0.0
    checked = 0
    excluded = 0
    worst = None

    for trial in range(trials):
        rng = make_rng(seed, "gradcheck", trial)
        b = int(rng.integers(1, 9))
        c = int(rng.integers(2, 11))
        z = rng.uniform(-5.0, 5.0, size=(b, c))
        lab = rng.integers(0, c, size=b)
        cfg = LossConfig(variant=variant, mapping=MappingFn(kind=MAPPING_KINDS[trial % 4]))
        stats = None
        if variant in STATS_VARIANTS:
            stats = GradStats(c)
            if variant == "softmax_eql":
                stats.g_pos = rng.uniform(1.0, 10.0, size=c)
                stats.g_neg = rng.uniform(1.0, 10.0, size=c)
            else:
                stats.g_pos = rng.uniform(0.0, 10.0, size=c)
                stats.g_neg = rng.uniform(0.0, 10.0, size=c)
                dead = rng.random(c) < 0.2
                stats.g_pos[dead] = 0.0
                stats.g_neg[dead] = 0.0
        quality = rng.uniform(0.0, 1.0, size=b) if variant in ("qfl", "eqfl") else None

        analytic = evaluate_loss(z, lab, cfg, stats=stats, quality=quality).grad
        if inject is not None:
            row, col, delta = inject
            analytic = analytic.copy()
            analytic[row % b, col % c] += delta

        fd = _fd_matrix(z, lab, cfg, stats, quality, h)

        skip = np.zeros((b, c), dtype=bool)
        if variant in ("qfl", "eqfl"):
            yq = np.zeros((b, c))
            yq[np.arange(b), lab] = quality
            skip = np.abs(yq - sigmoid(z)) < KINK_EXCLUSION
        for i in range(b):
            for j in range(c):
                if skip[i, j]:
                    excluded += 1
                    continue
                checked += 1
                a = analytic[i, j]
                err = float(abs(np.longdouble(a) - fd[i, j]))
                if abs(a) < 1e-8:
                    mode, score, bad = "abs", err, err > abs_tolerance
                    max_abs = max(max_abs, err)
                else:
                    rel = err / abs(a)
                    mode, score, bad = "rel", rel, rel > tolerance
                    max_rel = max(max_rel, rel)
                if worst is None or (bad and not worst.get("failed")) or (
                    bad == worst.get("failed", False) and score > worst["error"]
                ):
                    worst = {
                        "trial": trial, "row": i, "col": j, "mode": mode,
                        "analytic": float(a), "fd": float(fd[i, j]),
                        "error": score, "failed": bad,
                    }
    passed = max_rel <= tolerance and max_abs <= abs_tolerance
    return GradCheckReport(variant, trials, tolerance, abs_tolerance,
                           max_rel, max_abs, checked, excluded, passed, worst)


_GRADCHECK_VARIANTS = ("bce", "ce", "focal", "qfl", "sigmoid_eql", "softmax_eql", "efl", "eqfl")


def _fd_matrix(z, lab, cfg, stats, quality, h):
    """Central finite differences of the reduced loss w.r.t. every logit.

    Sigmoid-family losses are elementwise in the logits, so one
    longdouble evaluation of the term matrix at z+h and one at z-h
    differentiates every entry at once. Softmax-family losses couple a
    row, so each entry perturbs its own copy of the row.
    """
    b, c = z.shape
    zl = z.astype(np.longdouble)
    if cfg.variant in SOFTMAX_FAMILY:
        fd = np.zeros((b, c), dtype=np.longdouble)
        for i in range(b):
            row = zl[i : i + 1]
            row_lab = lab[i : i + 1]
            for j in range(c):
                zp = row.copy()
                zp[0, j] += h
                zm = row.copy()
                zm[0, j] -= h
                vp = loss_terms(zp, row_lab, cfg, stats=stats)[0]
                vm = loss_terms(zm, row_lab, cfg, stats=stats)[0]
                fd[i, j] = (vp - vm) / (2 * h)
        return fd / b
    tp = loss_terms(zl + h, lab, cfg, stats=stats, quality=quality)
    tm = loss_terms(zl - h, lab, cfg, stats=stats, quality=quality)
    return (tp - tm) / (2 * h) / (b * c)
