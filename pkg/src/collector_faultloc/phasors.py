"""Complex phasor arithmetic and the symmetrical-component transform.

All quantities are per-unit complex phasors (``complex`` with the real part
as the in-phase component).  Angles are radians internally; degrees appear
only in the I/O helpers.  The rotation operator is computed once, exactly,
from its rectangular form so repeated transforms do not accumulate
degree-to-radian conversion drift.
"""

import cmath
import math
from dataclasses import dataclass

from .errors import DegenerateImpedanceError, InvalidInputError

Phasor = complex

#: Unit rotation operator at +120 degrees, exact rectangular form.
ALPHA: Phasor = complex(-0.5, math.sqrt(3.0) / 2.0)
ALPHA2: Phasor = ALPHA * ALPHA


def phasor(magnitude: float, angle_deg: float = 0.0) -> Phasor:
    """Build a phasor from polar inputs (degrees, I/O convenience only)."""
    return cmath.rect(magnitude, math.radians(angle_deg))


def angle_deg(value: Phasor) -> float:
    """Phase angle in degrees (I/O convenience only)."""
    return math.degrees(cmath.phase(value))


def is_finite(value: Phasor) -> bool:
    return math.isfinite(value.real) and math.isfinite(value.imag)


def require_finite(value: Phasor, name: str = "phasor") -> Phasor:
    if not is_finite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ThreePhaseSet:
    """Phase-domain triple (a, b, c) of one electrical quantity."""

    a: Phasor
    b: Phasor
    c: Phasor

    def require_finite(self, name: str = "three-phase set") -> "ThreePhaseSet":
        for label, value in (("a", self.a), ("b", self.b), ("c", self.c)):
            require_finite(value, f"{name}.{label}")
        return self

    def scaled(self, factor: Phasor) -> "ThreePhaseSet":
        return ThreePhaseSet(self.a * factor, self.b * factor, self.c * factor)

    def __add__(self, other: "ThreePhaseSet") -> "ThreePhaseSet":
        return ThreePhaseSet(self.a + other.a, self.b + other.b, self.c + other.c)


@dataclass(frozen=True)
class SequenceSet:
    """Positive-, negative- and zero-sequence components of a quantity."""

    pos: Phasor
    neg: Phasor
    zero: Phasor

    def require_finite(self, name: str = "sequence set") -> "SequenceSet":
        for label, value in (("pos", self.pos), ("neg", self.neg), ("zero", self.zero)):
            require_finite(value, f"{name}.{label}")
        return self

    def scaled(self, factor: Phasor) -> "SequenceSet":
        return SequenceSet(self.pos * factor, self.neg * factor, self.zero * factor)


@dataclass(frozen=True)
class SequenceImpedances:
    """Total per-unit line impedance per sequence.

    ``z2`` defaults to ``z1``: negative-sequence impedance of a line equals
    the positive-sequence one unless explicitly overridden.
    """

    z1: Phasor
    z0: Phasor
    z2: Phasor | None = None

    def __post_init__(self):
        if self.z2 is None:
            object.__setattr__(self, "z2", self.z1)
        if abs(self.z1) == 0.0:
            raise DegenerateImpedanceError("positive-sequence impedance must be nonzero")

    def of(self, sequence: str) -> Phasor:
        try:
            return {"pos": self.z1, "neg": self.z2, "zero": self.z0}[sequence]
        except KeyError:
            raise InvalidInputError(f"unknown sequence {sequence!r}") from None


def to_sequence(abc: ThreePhaseSet) -> SequenceSet:
    """Fortescue decomposition of a phase-domain triple.

    pos = (a + alpha*b + alpha^2*c) / 3
    neg = (a + alpha^2*b + alpha*c) / 3
    zero = (a + b + c) / 3
    """
    abc.require_finite("to_sequence input")
    pos = (abc.a + ALPHA * abc.b + ALPHA2 * abc.c) / 3.0
    neg = (abc.a + ALPHA2 * abc.b + ALPHA * abc.c) / 3.0
    zero = (abc.a + abc.b + abc.c) / 3.0
    return SequenceSet(pos, neg, zero)


def from_sequence(seq: SequenceSet) -> ThreePhaseSet:
    """Exact algebraic inverse of :func:`to_sequence`."""
    seq.require_finite("from_sequence input")
    a = seq.pos + seq.neg + seq.zero
    b = ALPHA2 * seq.pos + ALPHA * seq.neg + seq.zero
    c = ALPHA * seq.pos + ALPHA2 * seq.neg + seq.zero
    return ThreePhaseSet(a, b, c)


def zero_seq_factor(z: SequenceImpedances) -> Phasor:
    """Zero- to positive-sequence impedance ratio z0/z1.

    Raises DegenerateImpedanceError when z1 is zero.
    """
    if abs(z.z1) == 0.0:
        raise DegenerateImpedanceError("zero-sequence factor undefined for z1 = 0")
    return z.z0 / z.z1


def ground_loop_factor(z: SequenceImpedances) -> Phasor:
    """Residual weighting applied to I0 in ground-fault loop currents.

    The measured ground loop satisfies V = d*z1*(I_phase + k*I0) with
    k = (z0 - z1)/z1, i.e. ``zero_seq_factor(z) - 1``.  Using the plain
    impedance ratio here would double-count the positive-sequence drop of
    the earth-return path.
    """
    return zero_seq_factor(z) - 1.0
