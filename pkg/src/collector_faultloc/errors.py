"""Exception hierarchy shared across the toolkit.

Every error raised by the library derives from FaultLocError so callers
(notably the CLI) can map failures onto exit codes without inspecting
messages.
"""


class FaultLocError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(FaultLocError, ValueError):
    """A phasor or argument is non-finite or structurally malformed."""


class DegenerateImpedanceError(FaultLocError, ValueError):
    """An impedance that must be nonzero is zero."""


class RangeError(FaultLocError, ValueError):
    """A per-unit distance or segment lies outside its admissible range."""


class UnsupportedTypeError(FaultLocError, ValueError):
    """A locator method was asked to handle a fault type it cannot."""


class SingularLoopError(FaultLocError, ArithmeticError):
    """The polarized loop denominator is numerically zero."""


class NoConvergenceError(FaultLocError, RuntimeError):
    """A fixed-point iteration exceeded its iteration cap."""


class InsufficientDataError(FaultLocError, ValueError):
    """Too few samples to evaluate a statistic."""


class ConfigError(FaultLocError, ValueError):
    """A configuration file or option set is unusable."""


class ParseError(FaultLocError, ValueError):
    """A record or config file failed schema validation.

    Carries the offending line number and field name when known.
    """

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class UnitError(FaultLocError, ValueError):
    """Declared per-unit bases of two inputs disagree."""
