"""Telemetry records and their on-disk formats.

A training run emits one TelemetryRecord per (cadence iteration,
category). Serialization is deliberately boring: a fixed-header CSV
with floats written by repr (shortest round-trip form), so identical
runs produce byte-identical files, plus a flat key=value summary.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import IngestionError

TELEMETRY_HEADER = "iteration,category,g_pos,g_neg,ratio,weight_pos,weight_neg,gamma_eff,loss_value"


@dataclass
class TelemetryRecord:
    """Training-status snapshot of one category at one iteration.

    g_pos/g_neg are the accumulated gradient magnitudes after the
    iteration's update; ratio is their clipped quotient. weight_pos and
    weight_neg are the per-category loss weights the current
    accumulators induce (q_j and r_j for ratio-weighted BCE, w^j and 1
    for the focusing variants, 1 and 1 otherwise); gamma_eff is the
    effective focusing exponent (0 for non-focusing variants).
    loss_value is the batch loss of that iteration.
    """

    iteration: int
    category: int
    g_pos: float
    g_neg: float
    ratio: float
    weight_pos: float
    weight_neg: float
    gamma_eff: float
    loss_value: float


def write_telemetry(records, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(TELEMETRY_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.iteration},{r.category},{r.g_pos!r},{r.g_neg!r},{r.ratio!r},"
                f"{r.weight_pos!r},{r.weight_neg!r},{r.gamma_eff!r},{r.loss_value!r}\n"
            )


def read_telemetry(path: str) -> list[TelemetryRecord]:
    """Parse and schema-validate a telemetry CSV.

    Checks the exact header, per-field types, and the documented ranges
    (ratio in [0, 1], weights and gamma_eff non-negative). Failures
    raise IngestionError naming the 1-based line.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != TELEMETRY_HEADER:
            raise IngestionError(f"{path}: line 1: bad header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(fields(TelemetryRecord)):
                raise IngestionError(
                    f"{path}: line {lineno}: expected {len(fields(TelemetryRecord))} fields, got {len(parts)}"
                )
            try:
                rec = TelemetryRecord(
                    iteration=int(parts[0]),
                    category=int(parts[1]),
                    g_pos=float(parts[2]),
                    g_neg=float(parts[3]),
                    ratio=float(parts[4]),
                    weight_pos=float(parts[5]),
                    weight_neg=float(parts[6]),
                    gamma_eff=float(parts[7]),
                    loss_value=float(parts[8]),
                )
            except ValueError as exc:
                raise IngestionError(f"{path}: line {lineno}: {exc}") from exc
            if rec.iteration < 0 or rec.category < 0:
                raise IngestionError(f"{path}: line {lineno}: negative iteration or category")
            if not 0.0 <= rec.ratio <= 1.0:
                raise IngestionError(f"{path}: line {lineno}: ratio {rec.ratio} outside [0, 1]")
            if rec.g_pos < 0 or rec.g_neg < 0:
                raise IngestionError(f"{path}: line {lineno}: negative accumulator")
            if rec.weight_pos < 0 or rec.weight_neg < 0 or rec.gamma_eff < 0:
                raise IngestionError(f"{path}: line {lineno}: negative weight column")
            records.append(rec)
    return records


def format_value(v) -> str:
    """Canonical key=value serialization of one scalar."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary(entries: dict, path: str) -> None:
    """Write a flat key=value file, keys sorted for determinism."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k in sorted(entries):
            fh.write(f"{k}={format_value(entries[k])}\n")


def read_summary(path: str) -> dict[str, str]:
    """Read a key=value file back as raw strings; '#' starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise IngestionError(f"{path}: line {lineno}: expected key=value, got {stripped!r}")
            k, v = stripped.split("=", 1)
            out[k.strip()] = v.strip()
    return out
