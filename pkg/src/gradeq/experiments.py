"""Benchmark presets: matched-seed A/B arms and mapping sweeps.

The standard benchmark is a 20-category, 16-dimensional Gaussian
cluster problem with a 100:1 head:tail count ratio, trained with a
linear classifier for 2000 iterations. Arms sharing a seed share the
dataset, the split, and the batch sequence, so any metric difference
comes from the loss alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, split, synth_longtail
from .errors import ParameterError
from .gradstats import MAPPING_KINDS, MappingFn
from .losses import VARIANTS, LossConfig
from .trainer import EvalReport, TrainConfig, evaluate, quartile_bounds, train


@dataclass(frozen=True)
class BenchmarkSpec:
    """Dataset and optimizer settings shared by every arm of a run."""

    num_categories: int = 20
    dim: int = 16
    base_count: int = 2000
    imbalance: float = 100.0
    cluster_spread: float = 1.6
    learning_rate: float = 1.0
    momentum: float = 0.9
    batch_size: int = 64
    iterations: int = 2000
    telemetry_every: int = 50
    test_fraction: float = 0.3

    def __post_init__(self):
        if self.imbalance < 1.0:
            raise ParameterError("imbalance must be >= 1 (head:tail count ratio)")

    @property
    def decay(self) -> float:
        return imbalance_decay(self.imbalance, self.num_categories)


def imbalance_decay(imbalance: float, num_categories: int) -> float:
    """Exponent giving a head:tail count ratio of `imbalance`:
    decay = ln(R)/(C-1); R=1 (or C=1) means balanced."""
    if imbalance < 1.0:
        raise ParameterError("imbalance must be >= 1")
    if num_categories < 2 or imbalance == 1.0:
        return 0.0
    return float(np.log(imbalance) / (num_categories - 1))


def arm_config(variant: str, mapping: MappingFn | None = None, **loss_kwargs) -> LossConfig:
    """LossConfig for a named benchmark arm, package defaults elsewhere."""
    if variant not in VARIANTS:
        raise ParameterError(f"unknown loss variant {variant!r}; expected one of {VARIANTS}")
    if mapping is not None:
        loss_kwargs["mapping"] = mapping
    return LossConfig(variant=variant, **loss_kwargs)


@dataclass
class ArmResult:
    """One (variant, seed) training run on the benchmark."""

    variant: str
    seed: int
    report: EvalReport
    ratios: np.ndarray
    tail_ratio: float
    tail_accuracy: float | None
    overall_accuracy: float


def benchmark_dataset(spec: BenchmarkSpec, seed: int) -> tuple[Dataset, Dataset]:
    ds = synth_longtail(spec.num_categories, spec.dim, spec.base_count,
                        spec.decay, spec.cluster_spread, seed)
    return split(ds, spec.test_fraction, seed)


def run_arm(spec: BenchmarkSpec, loss_cfg: LossConfig, seed: int, **train_overrides) -> ArmResult:
    """Train one arm and evaluate it with quartile category groups.

    tail_ratio is the mean final accumulated gradient ratio over the
    rarest quartile; tail_accuracy the accuracy on test instances whose
    true category falls in that quartile.
    """
    train_ds, test_ds = benchmark_dataset(spec, seed)
    cfg = TrainConfig(
        loss=loss_cfg,
        learning_rate=spec.learning_rate,
        momentum=spec.momentum,
        iterations=spec.iterations,
        batch_size=spec.batch_size,
        seed=seed,
        telemetry_every=spec.telemetry_every,
        **train_overrides,
    )
    result = train(train_ds, cfg)
    bounds = quartile_bounds(spec.num_categories)
    report = evaluate(result.model, test_ds, bounds, variant=loss_cfg.variant,
                      use_objectness=cfg.objectness_head)
    ratios = result.stats.ratios()
    tail_lo = report.group_ranges[-1][0]
    return ArmResult(
        variant=loss_cfg.variant,
        seed=seed,
        report=report,
        ratios=ratios,
        tail_ratio=float(ratios[tail_lo:].mean()),
        tail_accuracy=report.group_accuracy[-1],
        overall_accuracy=report.overall,
    )


def compare_arms(spec: BenchmarkSpec, arms: dict[str, LossConfig],
                 seeds) -> dict[str, list[ArmResult]]:
    """Run every arm at every seed; arms at equal seed are fully matched."""
    out: dict[str, list[ArmResult]] = {}
    for name, cfg in arms.items():
        out[name] = [run_arm(spec, cfg, int(s)) for s in seeds]
    return out


def sweep_mappings(spec: BenchmarkSpec, seeds, kinds=MAPPING_KINDS,
                   mapping_gamma: float | None = None,
                   mapping_mu: float | None = None) -> dict[str, list[ArmResult]]:
    """Ratio-weighted BCE with each mapping kind, matched seeds."""
    out: dict[str, list[ArmResult]] = {}
    for kind in kinds:
        kwargs = {}
        if mapping_gamma is not None:
            kwargs["gamma"] = mapping_gamma
        if mapping_mu is not None:
            kwargs["mu"] = mapping_mu
        cfg = arm_config("sigmoid_eql", mapping=MappingFn(kind=kind, **kwargs))
        out[kind] = [run_arm(spec, cfg, int(s)) for s in seeds]
    return out


def mean_tail_accuracy(results: list[ArmResult]) -> float:
    vals = [r.tail_accuracy for r in results if r.tail_accuracy is not None]
    if not vals:
        raise ParameterError("no arm produced a tail-group accuracy")
    return float(np.mean(vals))


def mean_tail_ratio(results: list[ArmResult]) -> float:
    return float(np.mean([r.tail_ratio for r in results]))
