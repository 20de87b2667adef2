"""One-terminal fault-distance estimators.

Implements the classical single-ended family (impedance, reactance and the
Takagi-style polarized variants) and the infeed-compensated estimator that
corrects the loop voltage for inverter injections tapped between the relay
and the fault.

Every estimator reduces to the same polarized quotient

    d = Im{(V_loop + V_comp) * conj(I_pol)} / Im{z1 * I_loop * conj(I_pol)}

differing only in the loop row, the polarizing current and whether V_comp
is supplied.  The loop rows live in ``LOOP_ROWS``: phase weights plus a
zero-sequence multiplier applied to the residual ground factor.  Ground
loops use the residual factor (z0 - z1)/z1 so that the quotient is exact
on an ideal feeder; see :func:`collector_faultloc.phasors.ground_loop_factor`.

The compensation term depends on the unknown distance, so the compensated
estimator iterates.  Within a fixed set of upstream taps the quotient is
affine in d; each pass solves that affine relation exactly and only the
upstream-tap set is re-evaluated, which bounds the iteration count by the
number of taps plus two on well-posed records.
"""

from dataclasses import dataclass

from .errors import InvalidInputError, SingularLoopError, UnsupportedTypeError
from .feeder import FeederSpec
from .oracle import ScenarioRecord, fault_class
from .phasors import ALPHA, ALPHA2, Phasor, ThreePhaseSet, ground_loop_factor, to_sequence

#: phase weights (wa, wb, wc) and zero-sequence multiplier per loop row
LOOP_ROWS: dict[str, tuple[tuple[float, float, float], float]] = {
    "AG": ((1.0, 0.0, 0.0), 1.0),
    "BG": ((0.0, 1.0, 0.0), 1.0),
    "CG": ((0.0, 0.0, 1.0), 1.0),
    "AB": ((1.0, -1.0, 0.0), 0.0),
    "BC": ((0.0, 1.0, -1.0), 0.0),
    "CA": ((-1.0, 0.0, 1.0), 0.0),
    "ABG": ((1.0, 1.0, 0.0), 2.0),
    "BCG": ((0.0, 1.0, 1.0), 2.0),
    "CAG": ((1.0, 0.0, 1.0), 2.0),
}

#: negative-sequence rotation mapping I2 onto the faulted-pair current
_PAIR_ROTATION = {
    "AB": 1.0 - ALPHA2,
    "BC": ALPHA2 - ALPHA,
    "CA": ALPHA - 1.0,
}

CLASSICAL_METHODS = ("IMPEDANCE", "REACTANCE", "TAKS", "TAKN", "TAKZ", "TAKZ_NEW")
POLARIZATIONS = ("zero_seq", "neg_seq", "superposition", "loop")

_DENOMINATOR_FLOOR = 1e-12


@dataclass(frozen=True)
class LoopQuantities:
    """Measured quantities assembled for one loop row."""

    v_loop: Phasor
    i_loop: Phasor
    i_polarizing: Phasor
    i_w_proxy: Phasor | None
    fault_type: str
    loop_row: str
    polarization: str
    superposition_fallback: bool = False


@dataclass(frozen=True)
class CompensationInput:
    """Per-tap positions and loop-referred currents for the correction term."""

    tap_positions: tuple[float, ...]
    tap_currents: tuple[Phasor, ...]
    z1: Phasor

    def __post_init__(self):
        if len(self.tap_positions) != len(self.tap_currents):
            raise InvalidInputError(
                f"{len(self.tap_positions)} tap positions vs "
                f"{len(self.tap_currents)} currents"
            )


@dataclass(frozen=True)
class DistanceEstimate:
    method: str
    d_hat: float
    iterations: int
    converged: bool
    clamped: bool
    warning: str | None = None


@dataclass(frozen=True)
class LocatorConfig:
    tolerance: float = 1e-6
    max_iterations: int = 50
    clamp_range: tuple[float, float] = (0.0, 1.0)
    three_phase_pair: str = "AB"  # loop row borrowed for symmetric faults

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise InvalidInputError("tolerance must be > 0")
        if self.three_phase_pair not in ("AB", "BC", "CA"):
            raise InvalidInputError("three_phase_pair must be one of AB, BC, CA")


def loop_row_for(fault_type: str, three_phase_pair: str = "AB") -> str:
    """Loop row used for a fault type (symmetric faults borrow a pair row)."""
    if fault_type == "ABC":
        return three_phase_pair
    if fault_type not in LOOP_ROWS:
        raise UnsupportedTypeError(f"unknown fault type {fault_type!r}")
    return fault_type


def _combine(weights, abc: ThreePhaseSet) -> Phasor:
    wa, wb, wc = weights
    return wa * abc.a + wb * abc.b + wc * abc.c


def default_polarization(fault_type: str) -> str:
    """Polarizing current family used by the compensated estimator.

    Ground-involved faults polarize with the residual (3 I0) current: the
    zero-sequence path is untouched by inverter injections, so the measured
    residual equals the fault-point residual exactly.  Line-to-line faults
    use the negative-sequence current reflected into the faulted pair.
    Symmetric faults polarize with the loop current itself (the reactance
    form of the quotient): a pure-fault polarization is badly contaminated
    by converter current changes when only the positive sequence is
    available, and loses to the plain reactance form on resistive faults.
    """
    cls = fault_class(fault_type)
    if cls in ("slg", "dlg"):
        return "zero_seq"
    if cls == "ll":
        return "neg_seq"
    return "loop"


def select_loop(fault_type: str,
                fault_v: ThreePhaseSet,
                fault_i: ThreePhaseSet,
                prefault_i: ThreePhaseSet | None,
                k0: Phasor,
                polarization: str = "auto",
                loop_row: str | None = None,
                three_phase_pair: str = "AB") -> LoopQuantities:
    """Assemble the loop voltage/current pair and its companions.

    ``k0`` is the residual ground factor multiplying I0 in ground loops.
    ``loop_row`` overrides the row (used by baselines that intentionally
    misapply a single-phase row to a double-ground fault).

    Pre-fault phasors share the into-line sign convention of the fault
    phasors.  On a pure-generation radial feeder the pre-fault IED current
    is therefore the negated aggregate inverter infeed, and the infeed
    proxy is built from its negation.
    """
    row = loop_row if loop_row is not None else loop_row_for(fault_type, three_phase_pair)
    if row not in LOOP_ROWS:
        raise UnsupportedTypeError(f"unknown loop row {row!r}")
    weights, zero_mult = LOOP_ROWS[row]

    seq = to_sequence(fault_i)
    v_loop = _combine(weights, fault_v)
    i_loop = _combine(weights, fault_i) + zero_mult * k0 * seq.zero

    proxy = None
    if prefault_i is not None:
        proxy = _combine(weights, prefault_i.scaled(-1.0))

    if polarization == "auto":
        polarization = default_polarization(fault_type)
    if polarization not in POLARIZATIONS:
        raise InvalidInputError(f"unknown polarization {polarization!r}")

    fallback = False
    if polarization == "zero_seq":
        i_pol = 3.0 * seq.zero
    elif polarization == "neg_seq":
        rotation = _PAIR_ROTATION.get(row, 1.0 + 0.0j)
        i_pol = 3.0 * seq.neg / rotation
    elif polarization == "superposition":
        if prefault_i is None:
            i_pol = i_loop
            fallback = True
        else:
            pre_seq = to_sequence(prefault_i)
            i_loop_pre = _combine(weights, prefault_i) + zero_mult * k0 * pre_seq.zero
            i_pol = i_loop - i_loop_pre
    else:
        i_pol = i_loop

    return LoopQuantities(
        v_loop=v_loop,
        i_loop=i_loop,
        i_polarizing=i_pol,
        i_w_proxy=proxy,
        fault_type=fault_type,
        loop_row=row,
        polarization=polarization,
        superposition_fallback=fallback,
    )


def compensation_voltage(d: float, comp: CompensationInput) -> Phasor:
    """Unseen voltage drop caused by taps between the relay and distance d.

    Each tap strictly upstream of ``d`` contributes -(d - d_k) * z1 * I_k;
    taps at or beyond ``d`` contribute nothing.
    """
    total = 0j
    for position, current in zip(comp.tap_positions, comp.tap_currents):
        if position < d:
            total -= (d - position) * comp.z1 * current
    return total


def practical_proxy_currents(loop: LoopQuantities, n_taps: int) -> tuple[Phasor, ...]:
    """Uniform per-tap currents from the aggregate pre-fault infeed proxy."""
    if n_taps <= 0:
        return ()
    if loop.i_w_proxy is None:
        raise InvalidInputError("record carries no pre-fault phasors; proxy unavailable")
    share = loop.i_w_proxy / n_taps
    return (share,) * n_taps


def estimate_distance_once(loop: LoopQuantities, v_comp: Phasor, z1: Phasor) -> float:
    """Single evaluation of the polarized distance quotient (unclamped)."""
    p_conj = loop.i_polarizing.conjugate()
    denominator = (z1 * loop.i_loop * p_conj).imag
    if abs(denominator) < _DENOMINATOR_FLOOR:
        raise SingularLoopError(
            f"loop denominator {denominator!r} below {_DENOMINATOR_FLOOR}; "
            "polarizing current unusable"
        )
    return ((loop.v_loop + v_comp) * p_conj).imag / denominator


def _clamp(d: float, clamp_range: tuple[float, float]) -> tuple[float, bool]:
    lo, hi = clamp_range
    if d < lo:
        return lo, True
    if d > hi:
        return hi, True
    return d, False


def _loop_weight_on_pos(row: str) -> Phasor:
    """Loop combination applied to a pure positive-sequence tap injection."""
    (wa, wb, wc), _ = LOOP_ROWS[row]
    return wa + wb * ALPHA2 + wc * ALPHA


def ground_truth_tap_currents(record: ScenarioRecord, row: str) -> tuple[Phasor, ...]:
    """Loop-referred per-tap currents from the solved tap injections."""
    if record.tap_solutions is None:
        raise InvalidInputError(
            f"record {record.scenario_id} carries no tap solutions; "
            "ground-truth compensation unavailable"
        )
    weight = _loop_weight_on_pos(row)
    return tuple(weight * t.injected for t in record.tap_solutions)


def _build_loop(record: ScenarioRecord, spec: FeederSpec, cfg: LocatorConfig,
                polarization: str, loop_row: str | None = None) -> LoopQuantities:
    k0 = ground_loop_factor(spec.line)
    return select_loop(
        record.fault.fault_type,
        record.fault_v,
        record.fault_i,
        record.prefault_i,
        k0,
        polarization=polarization,
        loop_row=loop_row,
        three_phase_pair=cfg.three_phase_pair,
    )


def locate_compensated(record: ScenarioRecord, spec: FeederSpec,
                       cfg: LocatorConfig | None = None,
                       current_source: str = "practical_proxy") -> DistanceEstimate:
    """Infeed-compensated distance estimate.

    ``current_source`` selects the per-tap currents feeding the correction:
    ``ground_truth`` uses the solved tap injections stored on the record,
    ``practical_proxy`` spreads the aggregate pre-fault infeed uniformly
    across taps.

    The estimate starts from the uncompensated quotient, then alternates
    between fixing the set of taps upstream of the current estimate and
    solving the (affine) compensated quotient for that set.  With no
    upstream taps the result is bit-identical to the uncompensated
    estimator of the same loop and polarization.
    """
    cfg = cfg or LocatorConfig()
    if record.tap_solutions is not None and len(record.tap_solutions) != len(spec.taps):
        raise InvalidInputError(
            f"record has {len(record.tap_solutions)} tap solutions, "
            f"feeder has {len(spec.taps)} taps"
        )
    loop = _build_loop(record, spec, cfg, "auto")

    if current_source == "ground_truth":
        currents = ground_truth_tap_currents(record, loop.loop_row)
    elif current_source == "practical_proxy":
        currents = practical_proxy_currents(loop, len(spec.taps))
    else:
        raise InvalidInputError(f"unknown current source {current_source!r}")

    positions = spec.tap_positions
    comp = CompensationInput(positions, currents, spec.line.z1)

    z1 = spec.line.z1
    p_conj = loop.i_polarizing.conjugate()
    denominator = (z1 * loop.i_loop * p_conj).imag
    # same expression the uncompensated baselines evaluate, so records with
    # no upstream taps reproduce their estimate exactly
    d_raw = estimate_distance_once(loop, 0j, z1)

    warning = (
        "pre-fault phasors missing; superposition polarization fell back to loop current"
        if loop.superposition_fallback
        else None
    )

    d_current = d_raw
    iterations = 1
    converged = False
    while iterations < cfg.max_iterations:
        upstream = tuple(k for k, pos in enumerate(positions) if pos < d_current)
        c_slope = -sum((z1 * currents[k] for k in upstream), 0j)
        c_const = sum((positions[k] * z1 * currents[k] for k in upstream), 0j)
        slope = (c_slope * p_conj).imag / denominator
        intercept = d_raw + (c_const * p_conj).imag / denominator
        if abs(1.0 - slope) < 1e-12:
            break  # affine relation has no fixed point in this region
        d_next = intercept / (1.0 - slope)
        iterations += 1
        same_region = tuple(k for k, pos in enumerate(positions) if pos < d_next) == upstream
        if abs(d_next - d_current) <= cfg.tolerance or same_region:
            d_current = d_next
            converged = True
            break
        d_current = d_next

    d_hat, clamped = _clamp(d_current, cfg.clamp_range)
    return DistanceEstimate(
        method="proposed",
        d_hat=d_hat,
        iterations=iterations,
        converged=converged,
        clamped=clamped,
        warning=warning,
    )


#: loop-row override for the plain residual-polarized baseline on
#: double-ground faults: it misapplies the leading-phase single-ground row,
#: which is exactly why the dedicated double-ground variant exists.
_TAKZ_DLG_ROW = {"ABG": "AG", "BCG": "BG", "CAG": "CG"}


def _classical_applicable(method: str, fault_type: str) -> bool:
    cls = fault_class(fault_type)
    if method in ("IMPEDANCE", "REACTANCE", "TAKS"):
        return True
    if method == "TAKN":
        return cls != "3p"
    if method == "TAKZ":
        return cls in ("slg", "dlg")
    if method == "TAKZ_NEW":
        return cls == "dlg"
    raise UnsupportedTypeError(f"unknown classical method {method!r}")


def locate_classical(method: str, record: ScenarioRecord, spec: FeederSpec,
                     cfg: LocatorConfig | None = None) -> DistanceEstimate:
    """Uncompensated baseline estimate for one record.

    Raises UnsupportedTypeError when the method cannot polarize the
    record's fault type (e.g. residual polarization on a line-to-line
    fault, which carries no zero-sequence current).
    """
    cfg = cfg or LocatorConfig()
    method = method.upper()
    if method not in CLASSICAL_METHODS:
        raise UnsupportedTypeError(f"unknown classical method {method!r}")
    fault_type = record.fault.fault_type
    if not _classical_applicable(method, fault_type):
        raise UnsupportedTypeError(f"method {method} not applicable to {fault_type} faults")

    z1 = spec.line.z1
    name = method.lower()
    warning = None

    if method == "IMPEDANCE":
        loop = _build_loop(record, spec, cfg, "loop")
        if abs(loop.i_loop) < _DENOMINATOR_FLOOR:
            raise SingularLoopError("loop current too small for impedance estimate")
        d = abs(loop.v_loop / loop.i_loop) / abs(z1)
    elif method == "REACTANCE":
        # loop-current polarization makes the quotient collapse to
        # Im(v/i)/Im(z1); evaluating it through the shared path keeps the
        # compensated symmetric-fault estimator bit-compatible with it
        loop = _build_loop(record, spec, cfg, "loop")
        d = estimate_distance_once(loop, 0j, z1)
    else:
        if method == "TAKS":
            loop = _build_loop(record, spec, cfg, "superposition")
            if loop.superposition_fallback:
                warning = ("pre-fault phasors missing; superposition polarization "
                           "fell back to loop current")
        elif method == "TAKN":
            loop = _build_loop(record, spec, cfg, "neg_seq")
        elif method == "TAKZ":
            loop = _build_loop(record, spec, cfg, "zero_seq",
                               loop_row=_TAKZ_DLG_ROW.get(fault_type))
        else:  # TAKZ_NEW
            loop = _build_loop(record, spec, cfg, "zero_seq")
        d = estimate_distance_once(loop, 0j, z1)

    d_hat, clamped = _clamp(d, cfg.clamp_range)
    return DistanceEstimate(
        method=name,
        d_hat=d_hat,
        iterations=1,
        converged=True,
        clamped=clamped,
        warning=warning,
    )
