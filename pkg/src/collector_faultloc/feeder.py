"""Radial feeder description: line impedances, infeed taps, grid source.

The monitored feeder is a single series line of unit per-unit length with
the measuring relay (IED) at position 0 and the open remote end at 1.
Inverter-based taps sit at strictly increasing interior positions.  Lateral
branches of a physical collector are collapsed onto their main-line
connection points; the series path is all the loop algebra ever sees.
"""

import json
from dataclasses import dataclass, field

from .errors import InvalidInputError, ParseError, RangeError
from .phasors import Phasor, SequenceImpedances, is_finite


@dataclass(frozen=True)
class IbrTap:
    """One inverter-based infeed tapped onto the main line."""

    id: str
    position: float  # per-unit distance from the IED, in (0, 1)
    rated_power: float  # per-unit MW on the system base


@dataclass(frozen=True)
class GridSource:
    """Thevenin equivalent of the upstream grid at the feeder head."""

    emf: Phasor
    z1: Phasor
    z0: Phasor
    z2: Phasor | None = None

    def __post_init__(self):
        if self.z2 is None:
            object.__setattr__(self, "z2", self.z1)

    def z_of(self, sequence: str) -> Phasor:
        return {"pos": self.z1, "neg": self.z2, "zero": self.z0}[sequence]


@dataclass(frozen=True)
class FeederSpec:
    """Complete electrical description of one monitored feeder."""

    line: SequenceImpedances
    source: GridSource
    taps: tuple[IbrTap, ...] = ()
    name: str = "feeder"

    def __post_init__(self):
        object.__setattr__(self, "taps", tuple(self.taps))

    @property
    def tap_positions(self) -> tuple[float, ...]:
        return tuple(t.position for t in self.taps)


@dataclass(frozen=True)
class Segment:
    """A contiguous stretch of line, 0 <= start <= end <= 1."""

    start: float
    end: float


@dataclass
class ValidationReport:
    """Findings collected by :func:`validate`; empty means well-formed."""

    findings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, message: str) -> None:
        self.findings.append(message)


def validate(spec: FeederSpec) -> ValidationReport:
    """Check every structural invariant of a feeder description.

    Returns a report listing each violation; it never raises.
    """
    report = ValidationReport()
    if abs(spec.line.z1) == 0.0:
        report.add("line.z1 must be nonzero")
    for name, z in (("z1", spec.line.z1), ("z2", spec.line.z2), ("z0", spec.line.z0)):
        if not is_finite(z):
            report.add(f"line.{name} is not finite")
    if abs(spec.source.emf) == 0.0:
        report.add("source.emf must be nonzero")
    for name, z in (
        ("emf", spec.source.emf),
        ("z1", spec.source.z1),
        ("z2", spec.source.z2),
        ("z0", spec.source.z0),
    ):
        if not is_finite(z):
            report.add(f"source.{name} is not finite")

    seen_positions: set[float] = set()
    previous = None
    for tap in spec.taps:
        if not 0.0 < tap.position < 1.0:
            report.add(f"tap {tap.id!r}: position {tap.position} outside (0, 1)")
        if tap.rated_power <= 0.0:
            report.add(f"tap {tap.id!r}: rated_power {tap.rated_power} must be > 0")
        if tap.position in seen_positions:
            report.add(f"tap {tap.id!r}: duplicate position {tap.position}")
        elif previous is not None and tap.position < previous:
            report.add(f"tap {tap.id!r}: positions not ascending")
        seen_positions.add(tap.position)
        previous = tap.position
    return report


def segment_impedance(spec: FeederSpec, seg: Segment, sequence: str) -> Phasor:
    """Impedance of a line stretch: (end - start) times the sequence total."""
    if not (0.0 <= seg.start <= seg.end <= 1.0):
        raise RangeError(f"segment ({seg.start}, {seg.end}) must satisfy 0 <= start <= end <= 1")
    return (seg.end - seg.start) * spec.line.of(sequence)


def taps_upstream_of(spec: FeederSpec, d: float) -> list[IbrTap]:
    """Taps strictly between the IED and a point at distance ``d``.

    A tap sitting exactly at ``d`` is excluded: its injection traverses none
    of the segment under study, so it contributes no unseen voltage drop.
    """
    if not 0.0 <= d <= 1.0:
        raise RangeError(f"distance {d} outside [0, 1]")
    return [t for t in spec.taps if t.position < d]


# ---------------------------------------------------------------------------
# Feeder file I/O.  Complex numbers are always two-element [re, im] arrays.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeederFile:
    """A feeder spec plus the per-unit bases declared alongside it."""

    spec: FeederSpec
    base_mva: float
    base_kv: float

    @property
    def z_base_ohm(self) -> float:
        return self.base_kv ** 2 / self.base_mva


def _complex_from(value, field_name: str) -> complex:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(x, (int, float)) for x in value)
    ):
        raise ParseError(f"field {field_name!r} must be a [re, im] pair, got {value!r}", field=field_name)
    return complex(value[0], value[1])


def _complex_to(value: complex) -> list[float]:
    return [value.real, value.imag]


def load_feeder(path) -> FeederFile:
    """Read a feeder description file (JSON)."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"feeder file {path}: invalid JSON ({exc})") from exc
    return feeder_from_dict(raw)


def feeder_from_dict(raw: dict) -> FeederFile:
    for key in ("name", "base_mva", "base_kv", "line", "source", "taps"):
        if key not in raw:
            raise ParseError(f"feeder file missing field {key!r}", field=key)
    line_raw = raw["line"]
    line = SequenceImpedances(
        z1=_complex_from(line_raw["z1"], "line.z1"),
        z0=_complex_from(line_raw["z0"], "line.z0"),
        z2=_complex_from(line_raw["z2"], "line.z2") if "z2" in line_raw else None,
    )
    source_raw = raw["source"]
    source = GridSource(
        emf=_complex_from(source_raw["emf"], "source.emf"),
        z1=_complex_from(source_raw["z1"], "source.z1"),
        z0=_complex_from(source_raw["z0"], "source.z0"),
        z2=_complex_from(source_raw["z2"], "source.z2") if "z2" in source_raw else None,
    )
    taps = []
    for index, tap_raw in enumerate(raw["taps"]):
        for key in ("id", "position", "rated_power"):
            if key not in tap_raw:
                raise ParseError(f"tap #{index} missing field {key!r}", field=f"taps[{index}].{key}")
        taps.append(
            IbrTap(
                id=str(tap_raw["id"]),
                position=float(tap_raw["position"]),
                rated_power=float(tap_raw["rated_power"]),
            )
        )
    taps.sort(key=lambda t: t.position)
    spec = FeederSpec(line=line, source=source, taps=tuple(taps), name=str(raw["name"]))
    report = validate(spec)
    if not report.ok:
        raise InvalidInputError("feeder file invalid: " + "; ".join(report.findings))
    return FeederFile(spec=spec, base_mva=float(raw["base_mva"]), base_kv=float(raw["base_kv"]))


def feeder_to_dict(feeder: FeederFile) -> dict:
    spec = feeder.spec
    return {
        "name": spec.name,
        "base_mva": feeder.base_mva,
        "base_kv": feeder.base_kv,
        "line": {
            "z1": _complex_to(spec.line.z1),
            "z2": _complex_to(spec.line.z2),
            "z0": _complex_to(spec.line.z0),
        },
        "source": {
            "emf": _complex_to(spec.source.emf),
            "z1": _complex_to(spec.source.z1),
            "z2": _complex_to(spec.source.z2),
            "z0": _complex_to(spec.source.z0),
        },
        "taps": [
            {"id": t.id, "position": t.position, "rated_power": t.rated_power}
            for t in spec.taps
        ],
    }


def save_feeder(feeder: FeederFile, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(feeder_to_dict(feeder), handle, indent=2)
        handle.write("\n")
