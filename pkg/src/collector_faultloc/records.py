"""Scenario record persistence: JSON Lines with a header line.

Line 1 is a header object declaring the format tag, the per-unit bases and
the feeder name; every following line is one scenario record.  Complex
numbers are always two-element [re, im] arrays.  Export then ingest is
lossless and reproduces the file byte for byte, which the benchmark relies
on for reproducibility.
"""

import json
import math
from dataclasses import dataclass

from .errors import ParseError, UnitError
from .oracle import FaultSpec, PenetrationVector, ScenarioRecord, TapSolution
from .phasors import ThreePhaseSet

FORMAT_TAG = "collector-faultloc/1"


@dataclass(frozen=True)
class RecordHeader:
    base_mva: float
    base_kv: float
    feeder: str

    @property
    def z_base_ohm(self) -> float:
        return self.base_kv ** 2 / self.base_mva


def _c(value: complex) -> list[float]:
    return [value.real, value.imag]


def _abc(abc: ThreePhaseSet) -> list[list[float]]:
    return [_c(abc.a), _c(abc.b), _c(abc.c)]


def _parse_complex(value, line: int, field: str) -> complex:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value)
    ):
        raise ParseError(
            f"line {line}: field {field!r} must be a [re, im] pair, got {value!r}",
            line=line, field=field,
        )
    return complex(value[0], value[1])


def _parse_abc(value, line: int, field: str) -> ThreePhaseSet:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ParseError(
            f"line {line}: field {field!r} must hold three [re, im] pairs",
            line=line, field=field,
        )
    return ThreePhaseSet(
        _parse_complex(value[0], line, f"{field}[0]"),
        _parse_complex(value[1], line, f"{field}[1]"),
        _parse_complex(value[2], line, f"{field}[2]"),
    )


def record_to_dict(record: ScenarioRecord, header: RecordHeader) -> dict:
    fault = record.fault
    ohm = fault.resistance_ohm
    if ohm is None:
        ohm = fault.resistance * header.z_base_ohm
    payload = {
        "scenario_id": record.scenario_id,
        "fault": {
            "type": fault.fault_type,
            "distance": fault.distance,
            "resistance_pu": fault.resistance,
            "resistance_ohm": ohm,
            "inception_deg": fault.inception_angle,
        },
        "penetration": list(record.penetration.values),
        "prefault_v": None if record.prefault_v is None else _abc(record.prefault_v),
        "prefault_i": None if record.prefault_i is None else _abc(record.prefault_i),
        "fault_v": _abc(record.fault_v),
        "fault_i": _abc(record.fault_i),
        "tap_solutions": None if record.tap_solutions is None else [
            {
                "injected": _c(t.injected),
                "toward_grid": _c(t.toward_grid),
                "toward_fault": _c(t.toward_fault),
                "pcc_voltage": _c(t.pcc_voltage),
            }
            for t in record.tap_solutions
        ],
        "i_cc": record.short_circuit_current,
        "segment_class": record.segment_class,
    }
    return payload


def _require(raw: dict, key: str, line: int):
    if key not in raw:
        raise ParseError(f"line {line}: missing field {key!r}", line=line, field=key)
    return raw[key]


def record_from_dict(raw: dict, line: int) -> ScenarioRecord:
    fault_raw = _require(raw, "fault", line)
    for key in ("type", "distance", "resistance_pu", "resistance_ohm", "inception_deg"):
        _require(fault_raw, key, line)
    try:
        fault = FaultSpec(
            fault_type=str(fault_raw["type"]),
            distance=float(fault_raw["distance"]),
            resistance=float(fault_raw["resistance_pu"]),
            inception_angle=float(fault_raw["inception_deg"]),
            resistance_ohm=float(fault_raw["resistance_ohm"]),
        )
        penetration = PenetrationVector(tuple(float(v) for v in _require(raw, "penetration", line)))
    except (ValueError, TypeError) as exc:
        raise ParseError(f"line {line}: {exc}", line=line, field="fault") from exc

    prefault_v = raw.get("prefault_v")
    prefault_i = raw.get("prefault_i")
    taps_raw = raw.get("tap_solutions")
    taps = None
    if taps_raw is not None:
        taps = tuple(
            TapSolution(
                injected=_parse_complex(_require(t, "injected", line), line, "injected"),
                toward_grid=_parse_complex(_require(t, "toward_grid", line), line, "toward_grid"),
                toward_fault=_parse_complex(_require(t, "toward_fault", line), line, "toward_fault"),
                pcc_voltage=_parse_complex(_require(t, "pcc_voltage", line), line, "pcc_voltage"),
            )
            for t in taps_raw
        )
    segment_class = str(_require(raw, "segment_class", line))
    if segment_class not in ("primary", "secondary"):
        raise ParseError(
            f"line {line}: segment_class must be primary or secondary, got {segment_class!r}",
            line=line, field="segment_class",
        )
    return ScenarioRecord(
        scenario_id=int(_require(raw, "scenario_id", line)),
        fault=fault,
        penetration=penetration,
        prefault_v=None if prefault_v is None else _parse_abc(prefault_v, line, "prefault_v"),
        prefault_i=None if prefault_i is None else _parse_abc(prefault_i, line, "prefault_i"),
        fault_v=_parse_abc(_require(raw, "fault_v", line), line, "fault_v"),
        fault_i=_parse_abc(_require(raw, "fault_i", line), line, "fault_i"),
        tap_solutions=taps,
        short_circuit_current=float(_require(raw, "i_cc", line)),
        segment_class=segment_class,
    )


def _dumps(payload) -> str:
    return json.dumps(payload, separators=(",", ":"), allow_nan=False)


def export_records(records, header: RecordHeader, path) -> None:
    """Write a record file: header line, then one record per line."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(_dumps({
            "format": FORMAT_TAG,
            "base_mva": header.base_mva,
            "base_kv": header.base_kv,
            "feeder": header.feeder,
        }))
        handle.write("\n")
        for record in records:
            handle.write(_dumps(record_to_dict(record, header)))
            handle.write("\n")


def ingest_records(path, expect_base: tuple[float, float] | None = None):
    """Read a record file; returns (header, records).

    ``expect_base`` (mva, kv) cross-checks the file's declared bases, e.g.
    against the feeder file a benchmark will pair the records with.
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines:
        raise ParseError("record file is empty", line=1)

    try:
        header_raw = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"line 1: invalid JSON ({exc})", line=1) from exc
    if not isinstance(header_raw, dict) or header_raw.get("format") != FORMAT_TAG:
        raise ParseError(
            f"line 1: expected header with format {FORMAT_TAG!r}", line=1, field="format"
        )
    for key in ("base_mva", "base_kv", "feeder"):
        if key not in header_raw:
            raise ParseError(f"line 1: header missing {key!r}", line=1, field=key)
    header = RecordHeader(
        base_mva=float(header_raw["base_mva"]),
        base_kv=float(header_raw["base_kv"]),
        feeder=str(header_raw["feeder"]),
    )
    if expect_base is not None:
        mva, kv = expect_base
        if not (math.isclose(header.base_mva, mva, rel_tol=1e-9)
                and math.isclose(header.base_kv, kv, rel_tol=1e-9)):
            raise UnitError(
                f"record bases ({header.base_mva} MVA, {header.base_kv} kV) do not match "
                f"expected ({mva} MVA, {kv} kV)"
            )

    records = []
    for number, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {number}: invalid JSON ({exc})", line=number) from exc
        records.append(record_from_dict(raw, number))
    return header, records
