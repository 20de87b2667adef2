"""Benchmark runner and grouped error statistics.

Scoring convention, also stamped into every report header: the location
error is |clamp(d_hat, 0, 1) - d_true| x 100 percent of the monitored line
length, and an estimate whose iteration did not converge scores the full
100 percent.  Group statistics use linearly interpolated quartiles and
Tukey whiskers (1.5 x IQR, clipped to observed samples).
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError, RangeError, SingularLoopError
from .feeder import FeederSpec
from .locators import (
    CLASSICAL_METHODS,
    LocatorConfig,
    _classical_applicable,
    locate_classical,
    locate_compensated,
)
logger = logging.getLogger(__name__)

ERROR_DEFINITION = (
    "error_pct = |clamp(d_hat, 0, 1) - d_true| * 100 (percent of line length); "
    "unconverged estimates score 100"
)

METHOD_NAMES = tuple(m.lower() for m in CLASSICAL_METHODS) + ("proposed",)
GROUP_KEYS = ("method", "fault_type", "penetration_bin", "segment_class")


@dataclass(frozen=True)
class ErrorSample:
    scenario_id: int
    method: str
    fault_type: str
    error_pct: float
    penetration_total: float
    segment_class: str
    converged: bool


@dataclass(frozen=True)
class ErrorTable:
    """Statistics of one group of error samples."""

    method: str | None
    fault_type: str | None
    penetration_bin: int | None
    segment_class: str | None
    count: int
    mean: float
    minimum: float
    maximum: float
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float


def error_pct(d_hat: float, d_true: float, converged: bool = True) -> float:
    """Location error as percent of line length; unconverged scores 100."""
    if not 0.0 <= d_true <= 1.0:
        raise RangeError(f"true distance {d_true} outside [0, 1]")
    if not converged:
        return 100.0
    clamped = min(1.0, max(0.0, d_hat))
    return abs(clamped - d_true) * 100.0


def run_benchmark(records, methods, spec: FeederSpec,
                  cfg: LocatorConfig | None = None,
                  current_source: str = "practical_proxy"):
    """Score every applicable (record, method) pair.

    Inapplicable pairings (a residual-polarized method on a line-to-line
    fault, the compensated method on a record lacking what its current
    source needs) are skipped and logged; output order is records outer,
    methods inner.
    """
    records = list(records)
    if not records:
        raise ConfigError("no records to benchmark")
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in METHOD_NAMES:
            raise ConfigError(f"unknown method {m!r}; known: {', '.join(METHOD_NAMES)}")
    cfg = cfg or LocatorConfig()

    samples = []
    for record in records:
        for method in methods:
            try:
                if method == "proposed":
                    if current_source == "practical_proxy" and record.prefault_i is None:
                        logger.debug("record %s: no pre-fault phasors; proposed skipped",
                                     record.scenario_id)
                        continue
                    if current_source == "ground_truth" and record.tap_solutions is None:
                        logger.debug("record %s: no tap solutions; proposed skipped",
                                     record.scenario_id)
                        continue
                    estimate = locate_compensated(record, spec, cfg, current_source)
                else:
                    if not _classical_applicable(method.upper(), record.fault.fault_type):
                        continue
                    estimate = locate_classical(method, record, spec, cfg)
            except SingularLoopError as exc:
                logger.debug("record %s: %s skipped (%s)", record.scenario_id, method, exc)
                continue
            samples.append(ErrorSample(
                scenario_id=record.scenario_id,
                method=method,
                fault_type=record.fault.fault_type,
                error_pct=error_pct(estimate.d_hat, record.fault.distance,
                                    estimate.converged),
                penetration_total=record.penetration.total,
                segment_class=record.segment_class,
                converged=estimate.converged,
            ))
    return samples


def _penetration_bin_edges(samples) -> list[float]:
    totals = [s.penetration_total for s in samples]
    return [float(np.percentile(totals, q)) for q in range(10, 100, 10)]


def penetration_bin(total: float, edges) -> int:
    """Decile bin index (1..10) of a penetration total given bin edges."""
    bin_index = 1
    for edge in edges:
        if total > edge:
            bin_index += 1
        else:
            break
    return bin_index


def aggregate(samples, group_by=("method", "fault_type")):
    """Grouped error statistics as a list of ErrorTable rows.

    ``group_by`` is any non-empty subset of method, fault_type,
    penetration_bin and segment_class; penetration bins are deciles of the
    sample's total-penetration distribution.
    """
    samples = list(samples)
    if not samples:
        raise ConfigError("no samples to aggregate")
    group_by = tuple(group_by)
    if not group_by:
        raise ConfigError("group_by must not be empty")
    for key in group_by:
        if key not in GROUP_KEYS:
            raise ConfigError(f"unknown group key {key!r}; known: {', '.join(GROUP_KEYS)}")

    edges = _penetration_bin_edges(samples) if "penetration_bin" in group_by else None

    def key_of(sample: ErrorSample):
        parts = []
        for key in group_by:
            if key == "method":
                parts.append(sample.method)
            elif key == "fault_type":
                parts.append(sample.fault_type)
            elif key == "segment_class":
                parts.append(sample.segment_class)
            else:
                parts.append(penetration_bin(sample.penetration_total, edges))
        return tuple(parts)

    grouped: dict[tuple, list[float]] = {}
    for sample in samples:
        grouped.setdefault(key_of(sample), []).append(sample.error_pct)

    tables = []
    for key in sorted(grouped):
        # sorting the samples makes every statistic independent of input order
        values = np.sort(np.array(grouped[key], dtype=float))
        q1, median, q3 = (float(q) for q in np.percentile(values, [25.0, 50.0, 75.0]))
        iqr = q3 - q1
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        inside = values[(values >= lo_fence) & (values <= hi_fence)]
        whisker_low = float(inside.min()) if inside.size else q1
        whisker_high = float(inside.max()) if inside.size else q3
        fields = dict(zip(group_by, key))
        tables.append(ErrorTable(
            method=fields.get("method"),
            fault_type=fields.get("fault_type"),
            penetration_bin=fields.get("penetration_bin"),
            segment_class=fields.get("segment_class"),
            count=int(values.size),
            mean=float(values.mean()),
            minimum=float(values.min()),
            maximum=float(values.max()),
            q1=q1,
            median=median,
            q3=q3,
            whisker_low=whisker_low,
            whisker_high=whisker_high,
        ))
    return tables


# ---------------------------------------------------------------------------
# Sample CSV and report JSON files
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("scenario_id", "method", "fault_type", "error_pct",
                "penetration_total", "segment_class", "converged")


def save_samples_csv(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(_CSV_COLUMNS)
        for s in samples:
            writer.writerow([
                s.scenario_id, s.method, s.fault_type, repr(s.error_pct),
                repr(s.penetration_total), s.segment_class, int(s.converged),
            ])


def load_samples_csv(path):
    samples = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != _CSV_COLUMNS:
            raise ParseError(
                f"sample file {path}: expected columns {','.join(_CSV_COLUMNS)}", line=1
            )
        for number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(_CSV_COLUMNS):
                raise ParseError(f"line {number}: expected {len(_CSV_COLUMNS)} columns",
                                 line=number)
            try:
                samples.append(ErrorSample(
                    scenario_id=int(row[0]),
                    method=row[1],
                    fault_type=row[2],
                    error_pct=float(row[3]),
                    penetration_total=float(row[4]),
                    segment_class=row[5],
                    converged=bool(int(row[6])),
                ))
            except ValueError as exc:
                raise ParseError(f"line {number}: {exc}", line=number) from exc
    return samples


def tables_to_report(tables, group_by, source: str = "") -> dict:
    """Machine-readable report with the scoring rules in its header."""
    return {
        "header": {
            "error_definition": ERROR_DEFINITION,
            "quartiles": "linear interpolation between closest ranks",
            "whiskers": "Tukey, 1.5 x IQR clipped to observed samples",
            "group_by": list(group_by),
            "source": source,
        },
        "groups": [
            {
                "method": t.method,
                "fault_type": t.fault_type,
                "penetration_bin": t.penetration_bin,
                "segment_class": t.segment_class,
                "count": t.count,
                "mean": t.mean,
                "min": t.minimum,
                "max": t.maximum,
                "q1": t.q1,
                "median": t.median,
                "q3": t.q3,
                "whisker_low": t.whisker_low,
                "whisker_high": t.whisker_high,
            }
            for t in tables
        ],
    }


def save_report_json(tables, group_by, path, source: str = "") -> None:
    import json

    with open(path, "w", encoding="utf-8") as handle:
        json.dump(tables_to_report(tables, group_by, source), handle, indent=2)
        handle.write("\n")
