"""Command-line front end: train, gradcheck, compare, sweep-mapping.

Exit codes are a stable scripting contract: 0 success, 1 usage error
(bad flags, bad config keys, invalid parameter values), 2 runtime or
numeric error (non-finite abort, unreadable files, failed gradient
check).

Every flag doubles as a key in the flat key=value file passed via
--config; flags override file values. Underscores in config keys are
accepted as spelling of the hyphenated flag names. The environment
variable EQL_SEED supplies the seed when neither a flag nor a config
entry does.
"""

from __future__ import annotations

import argparse
import os
import sys

from .data import split, synth_longtail
from .errors import DimensionError, IngestionError, NumericError, ParameterError
from .experiments import (
    BenchmarkSpec,
    arm_config,
    imbalance_decay,
    run_arm,
    sweep_mappings,
)
from .gradstats import DEFAULT_MAP_GAMMA, DEFAULT_MAP_MU, MAPPING_KINDS, MappingFn
from .losses import VARIANTS, LossConfig
from .telemetry import write_summary, write_telemetry
from .trainer import TrainConfig, evaluate, grad_check, quartile_bounds, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

# Loss names are spelled with hyphens on the command line.
CLI_VARIANTS = tuple(v.replace("_", "-") for v in VARIANTS)


class UsageError(Exception):
    """Bad invocation; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 1.
    def error(self, message):
        raise UsageError(f"{self.format_usage().rstrip()}\n{self.prog}: error: {message}")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


class _Opt:
    """One option: flag name, converter, default, and help text."""

    def __init__(self, name, conv, default, help, choices=None):
        self.name = name
        self.dest = name.replace("-", "_")
        self.conv = conv
        self.default = default
        self.help = help
        self.choices = choices

    def convert(self, raw: str, origin: str):
        try:
            val = self.conv(raw)
        except ValueError as exc:
            raise UsageError(f"{origin}: invalid value for {self.name!r}: {exc}")
        if self.choices is not None and val not in self.choices:
            raise UsageError(
                f"{origin}: invalid value for {self.name!r}: {raw!r} "
                f"(choose from {', '.join(map(str, self.choices))})"
            )
        return val


_DATASET_OPTS = [
    _Opt("classes", int, 20, "number of categories"),
    _Opt("dim", int, 16, "feature dimension"),
    _Opt("imbalance", float, 100.0, "head:tail instance-count ratio, >= 1"),
    _Opt("base-count", int, 2000, "instance count of the most frequent category"),
    _Opt("spread", float, 1.6, "cluster standard deviation"),
    _Opt("test-fraction", float, 0.3, "held-out fraction per category"),
]

_OPTIM_OPTS = [
    _Opt("lr", float, 1.0, "learning rate; 0 freezes the parameters"),
    _Opt("momentum", float, 0.9, "momentum coefficient in [0, 1)"),
    _Opt("iters", int, 2000, "training iterations"),
    _Opt("batch-size", int, 64, "instances per batch"),
]

_LOSS_OPTS = [
    _Opt("loss", str, "bce", "loss variant", choices=CLI_VARIANTS),
    _Opt("alpha", float, 4.0, "positive up-weight strength of sigmoid-eql"),
    _Opt("map", str, "sigmoid_like", "ratio mapping kind", choices=MAPPING_KINDS),
    _Opt("gamma", float, DEFAULT_MAP_GAMMA, "mapping steepness (sigmoid_like)"),
    _Opt("mu", float, DEFAULT_MAP_MU, "mapping inflection point (sigmoid_like)"),
    _Opt("pi", float, 1.5, "calibration degree of softmax-eql"),
    _Opt("alpha-t", float, 0.25, "focal balance factor"),
    _Opt("alpha-weighting", _bool, True, "apply the focal balance factor"),
    _Opt("gamma-b", float, 2.0, "base focusing exponent of the focal family"),
    _Opt("s", float, 8.0, "focusing scale of efl/eqfl"),
]

_SEED_OPT = _Opt("seed", int, 0, "RNG seed; EQL_SEED overrides this default")
_SEEDS_OPT = _Opt("seeds", str, "1,2,3,4,5", "comma-separated seed list")

_TRAIN_OPTS = (
    _LOSS_OPTS
    + _DATASET_OPTS
    + _OPTIM_OPTS
    + [
        _SEED_OPT,
        _Opt("telemetry-every", int, 50, "iterations between telemetry rows"),
        _Opt("objectness", _bool, False, "train an objectness head and use it at eval"),
        _Opt("hidden-dim", int, 0, "tanh hidden width; 0 keeps the model linear"),
        _Opt("freeze-stats", _bool, False, "loss sees permanently balanced statistics"),
        _Opt("out", str, None, "output prefix for PREFIX.telemetry.csv and PREFIX.summary"),
    ]
)

_GRADCHECK_OPTS = [
    _Opt("loss", str, None, "variant to check", choices=CLI_VARIANTS),
    _Opt("all", _bool, False, "check every variant"),
    _Opt("trials", int, 100, "randomized trials per variant"),
    _Opt("tol", float, 1e-5, "relative-error tolerance"),
    _SEED_OPT,
]

_COMPARE_OPTS = (
    [
        _Opt("arms", str, "bce,sigmoid-eql", "comma-separated loss variants"),
        _SEEDS_OPT,
    ]
    + _DATASET_OPTS
    + _OPTIM_OPTS
    + [_Opt("freeze-stats", _bool, False, "all arms see permanently balanced statistics")]
)

_SWEEP_OPTS = (
    [
        _Opt("maps", str, ",".join(MAPPING_KINDS), "comma-separated mapping kinds"),
        _Opt("gamma", float, DEFAULT_MAP_GAMMA, "mapping steepness (sigmoid_like)"),
        _Opt("mu", float, DEFAULT_MAP_MU, "mapping inflection point (sigmoid_like)"),
        _SEEDS_OPT,
    ]
    + _DATASET_OPTS
    + _OPTIM_OPTS
)

_COMMAND_OPTS = {
    "train": _TRAIN_OPTS,
    "gradcheck": _GRADCHECK_OPTS,
    "compare": _COMPARE_OPTS,
    "sweep-mapping": _SWEEP_OPTS,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gradeq", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", metavar="command")
    descriptions = {
        "train": "train one model and write telemetry plus a run summary",
        "gradcheck": "finite-difference check of the analytic gradients",
        "compare": "matched-seed A/B comparison of loss variants",
        "sweep-mapping": "ratio-weighted BCE with each mapping kind",
    }
    for cmd, opts in _COMMAND_OPTS.items():
        sub = subs.add_parser(cmd, help=descriptions[cmd], description=descriptions[cmd])
        for o in opts:
            extra = {}
            if o.conv is _bool:
                # bare flag means true; an explicit true/false still works
                extra = {"nargs": "?", "const": True, "metavar": "BOOL"}
            sub.add_argument(
                "--" + o.name,
                dest=o.dest,
                type=o.conv,
                choices=o.choices,
                default=None,
                help=f"{o.help} (default: {o.default})",
                **extra,
            )
        sub.add_argument("--config", default=None, metavar="PATH",
                         help="flat key=value file; flags override its entries")
    return parser


def _load_config(path: str, opts: list[_Opt]) -> dict:
    """Read key=value lines; '#' starts a comment; unknown keys error."""
    by_name = {o.name: o for o in opts}
    out = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            key = key.strip().replace("_", "-")
            if key not in by_name:
                raise UsageError(f"{path}: line {lineno}: unknown key {key!r}")
            out[key] = by_name[key].convert(val.strip(), f"{path}: line {lineno}")
    return out


def _resolve(args, opts: list[_Opt]) -> argparse.Namespace:
    """Merge flag > config file > EQL_SEED (seed only) > default."""
    cfg = _load_config(args.config, opts) if args.config else {}
    ns = argparse.Namespace()
    for o in opts:
        flag = getattr(args, o.dest)
        if flag is not None:
            val = flag
        elif o.name in cfg:
            val = cfg[o.name]
        elif o.name == "seed" and os.environ.get("EQL_SEED") is not None:
            val = o.convert(os.environ["EQL_SEED"], "EQL_SEED")
        else:
            val = o.default
        setattr(ns, o.dest, val)
    return ns


def _parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {text!r}")
    if not seeds:
        raise UsageError("--seeds must name at least one seed")
    return seeds


def _benchmark_spec(ns) -> BenchmarkSpec:
    return BenchmarkSpec(
        num_categories=ns.classes,
        dim=ns.dim,
        base_count=ns.base_count,
        imbalance=ns.imbalance,
        cluster_spread=ns.spread,
        learning_rate=ns.lr,
        momentum=ns.momentum,
        batch_size=ns.batch_size,
        iterations=ns.iters,
        test_fraction=ns.test_fraction,
    )


def _fmt_acc(acc) -> str:
    return "-" if acc is None else f"{acc:.4f}"


def cmd_train(ns) -> int:
    if ns.out is None:
        raise UsageError("--out is required")
    decay = imbalance_decay(ns.imbalance, ns.classes)
    full = synth_longtail(ns.classes, ns.dim, ns.base_count, decay,
                          ns.spread, ns.seed)
    train_ds, test_ds = split(full, ns.test_fraction, ns.seed)
    loss_cfg = LossConfig(
        variant=ns.loss.replace("-", "_"),
        alpha=ns.alpha,
        mapping=MappingFn(kind=ns.map, gamma=ns.gamma, mu=ns.mu),
        pi=ns.pi,
        alpha_t=ns.alpha_t,
        alpha_weighting=ns.alpha_weighting,
        gamma_b=ns.gamma_b,
        s=ns.s,
    )
    train_cfg = TrainConfig(
        loss=loss_cfg,
        learning_rate=ns.lr,
        momentum=ns.momentum,
        iterations=ns.iters,
        batch_size=ns.batch_size,
        seed=ns.seed,
        telemetry_every=ns.telemetry_every,
        objectness_head=ns.objectness,
        hidden_dim=ns.hidden_dim,
        freeze_stats=ns.freeze_stats,
    )
    result = train(train_ds, train_cfg)
    report = evaluate(result.model, test_ds, quartile_bounds(ns.classes),
                      variant=loss_cfg.variant, use_objectness=ns.objectness)

    write_telemetry(result.telemetry, ns.out + ".telemetry.csv")
    # Complete effective config, so the run is reproducible from the
    # summary alone; result keys sit alongside under distinct names.
    entries = {o.name: getattr(ns, o.dest) for o in _TRAIN_OPTS}
    entries["overall_accuracy"] = report.overall
    for k, (rng, acc) in enumerate(zip(report.group_ranges, report.group_accuracy)):
        entries[f"group{k}_categories"] = f"{rng[0]}:{rng[1]}"
        entries[f"group{k}_accuracy"] = "none" if acc is None else acc
    ratios = result.stats.ratios()
    width = len(str(ns.classes - 1))
    for j, r in enumerate(ratios):
        entries[f"ratio_{j:0{width}d}"] = float(r)
    write_summary(entries, ns.out + ".summary")

    print(f"wrote {ns.out}.telemetry.csv and {ns.out}.summary")
    print(f"overall accuracy {report.overall:.4f}")
    return EXIT_OK


def cmd_gradcheck(ns) -> int:
    if not ns.all and ns.loss is None:
        raise UsageError("one of --loss or --all is required")
    variants = list(VARIANTS) if ns.all else [ns.loss.replace("-", "_")]
    print(f"{'variant':<12} {'trials':>6} {'checked':>8} {'max_rel_err':>12} {'max_abs_err':>12}  result")
    all_passed = True
    for variant in variants:
        rep = grad_check(variant, trials=ns.trials, tolerance=ns.tol, seed=ns.seed)
        all_passed = all_passed and rep.passed
        print(f"{variant:<12} {rep.trials:>6d} {rep.checked:>8d} "
              f"{rep.max_rel_error:>12.3e} {rep.max_abs_error:>12.3e}  "
              f"{'pass' if rep.passed else 'FAIL'}")
    if not all_passed:
        print(f"gradient check failed at tolerance {ns.tol:g}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(ns) -> int:
    arm_names = [a.strip() for a in ns.arms.split(",") if a.strip()]
    if not arm_names:
        raise UsageError("--arms must name at least one loss variant")
    for name in arm_names:
        if name.replace("-", "_") not in VARIANTS:
            raise UsageError(f"unknown arm {name!r} (choose from {', '.join(CLI_VARIANTS)})")
    seeds = _parse_seeds(ns.seeds)
    spec = _benchmark_spec(ns)

    results = {}
    for name in arm_names:
        cfg = arm_config(name.replace("-", "_"))
        results[name] = [run_arm(spec, cfg, s, freeze_stats=ns.freeze_stats)
                         for s in seeds]

    groups = quartile_bounds(ns.classes)
    n_groups = len(groups) + 1
    head = f"{'arm':<12} {'seed':>5} {'overall':>8}"
    head += "".join(f" {'g' + str(k):>7}" for k in range(n_groups))
    head += f" {'tail_ratio':>11}"
    print(head)
    for name, runs in results.items():
        for r in runs:
            row = f"{name:<12} {r.seed:>5d} {r.overall_accuracy:>8.4f}"
            row += "".join(f" {_fmt_acc(a):>7}" for a in r.report.group_accuracy)
            row += f" {r.tail_ratio:>11.4f}"
            print(row)
        mean_overall = sum(r.overall_accuracy for r in runs) / len(runs)
        mean_ratio = sum(r.tail_ratio for r in runs) / len(runs)
        row = f"{name:<12} {'mean':>5} {mean_overall:>8.4f}"
        for k in range(n_groups):
            accs = [r.report.group_accuracy[k] for r in runs
                    if r.report.group_accuracy[k] is not None]
            row += f" {_fmt_acc(sum(accs) / len(accs) if accs else None):>7}"
        row += f" {mean_ratio:>11.4f}"
        print(row)
    return EXIT_OK


def cmd_sweep_mapping(ns) -> int:
    kinds = [k.strip() for k in ns.maps.split(",") if k.strip()]
    if not kinds:
        raise UsageError("--maps must name at least one mapping kind")
    for kind in kinds:
        if kind not in MAPPING_KINDS:
            raise UsageError(f"unknown mapping {kind!r} (choose from {', '.join(MAPPING_KINDS)})")
    seeds = _parse_seeds(ns.seeds)
    spec = _benchmark_spec(ns)
    results = sweep_mappings(spec, seeds, kinds,
                             mapping_gamma=ns.gamma, mapping_mu=ns.mu)

    print(f"{'map':<14} {'overall':>8} {'tail_acc':>9}")
    for kind, runs in results.items():
        mean_overall = sum(r.overall_accuracy for r in runs) / len(runs)
        tails = [r.tail_accuracy for r in runs if r.tail_accuracy is not None]
        mean_tail = sum(tails) / len(tails) if tails else None
        print(f"{kind:<14} {mean_overall:>8.4f} {_fmt_acc(mean_tail):>9}")
    return EXIT_OK


_DISPATCH = {
    "train": cmd_train,
    "gradcheck": cmd_gradcheck,
    "compare": cmd_compare,
    "sweep-mapping": cmd_sweep_mapping,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.error("a command is required")
        ns = _resolve(args, _COMMAND_OPTS[args.command])
        return _DISPATCH[args.command](ns)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, DimensionError, IngestionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
