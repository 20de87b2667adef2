"""Quasi-static short-circuit solver for a radial feeder with inverter taps.

Ground truth for the locator benchmarks comes from here.  The feeder is
solved per sequence as a ladder of series line segments carrying the grid
Thevenin source at the head and the inverter taps as positive-sequence
current sources (their step-up transformers block zero sequence entirely;
negative-sequence injection is off unless explicitly enabled).  A fault is
applied by computing the per-sequence Thevenin equivalent at the fault
node, interconnecting the three networks according to the fault type, and
back-substituting the fault sequence currents into the ladders.

Inverter behaviour follows a simple voltage-dependent control law: unity
power factor while the local positive-sequence voltage is above the
ride-through threshold, reactive-priority current injection below it,
magnitude always clipped to the converter limit.  Because the injections
depend on the network voltages, the solve iterates injections and network
state to a damped fixed point.

Sign conventions, used consistently everywhere:

* IED currents (pre-fault and during-fault) are measured INTO the line,
  from the head bus toward the remote end.  A feeder exporting power
  therefore shows a pre-fault IED current opposing its fault current.
* Tap currents are injections into the network.
* Fault sequence currents flow from the network into the fault.
"""

import math
from dataclasses import dataclass, field

from .errors import InvalidInputError, NoConvergenceError
from .feeder import FeederSpec
from .phasors import (
    ALPHA,
    ALPHA2,
    Phasor,
    SequenceSet,
    ThreePhaseSet,
    from_sequence,
)

FAULT_TYPES = ("AG", "BG", "CG", "AB", "BC", "CA", "ABG", "BCG", "CAG", "ABC")

#: phases shorted to ground (directly or via the arc resistance), per type
_GROUND_PHASES = {
    "AG": "a", "BG": "b", "CG": "c",
    "ABG": "ab", "BCG": "bc", "CAG": "ca",
    "ABC": "abc",
}
_PAIR_PHASES = {"AB": ("a", "b"), "BC": ("b", "c"), "CA": ("c", "a")}

#: phase synthesis rows (coefficients of I1, I2, I0) for phases a, b, c
_SYNTH = {
    "a": (1.0 + 0.0j, 1.0 + 0.0j, 1.0 + 0.0j),
    "b": (ALPHA2, ALPHA, 1.0 + 0.0j),
    "c": (ALPHA, ALPHA2, 1.0 + 0.0j),
}

MAX_FIXED_POINT_ITERATIONS = 100
FIXED_POINT_TOL = 1e-9
INJECTION_DAMPING = 0.5


def fault_class(fault_type: str) -> str:
    """Coarse family of a fault type: slg, ll, dlg or 3p."""
    if fault_type in ("AG", "BG", "CG"):
        return "slg"
    if fault_type in ("AB", "BC", "CA"):
        return "ll"
    if fault_type in ("ABG", "BCG", "CAG"):
        return "dlg"
    if fault_type == "ABC":
        return "3p"
    raise InvalidInputError(f"unknown fault type {fault_type!r}")


@dataclass(frozen=True)
class FaultSpec:
    """One fault: type, per-unit distance, arc resistance, inception angle.

    The inception angle is carried as metadata only; the quasi-static
    solution is angle-independent but externally ingested records keep the
    field so their schema matches.
    """

    fault_type: str
    distance: float
    resistance: float = 0.0
    inception_angle: float = 0.0
    resistance_ohm: float | None = None

    def __post_init__(self):
        if self.fault_type not in FAULT_TYPES:
            raise InvalidInputError(f"unknown fault type {self.fault_type!r}")
        if not 0.0 <= self.distance <= 1.0:
            raise InvalidInputError(f"fault distance {self.distance} outside [0, 1]")
        if self.resistance < 0.0:
            raise InvalidInputError(f"fault resistance {self.resistance} must be >= 0")


@dataclass(frozen=True)
class PenetrationVector:
    """Per-tap operating point, one value in [0, 1] per tap."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for v in self.values:
            if not 0.0 <= v <= 1.0 or not math.isfinite(v):
                raise InvalidInputError(f"penetration value {v} outside [0, 1]")

    @property
    def total(self) -> float:
        return sum(self.values)


@dataclass(frozen=True)
class IbrControlConfig:
    """Converter fault-response parameters shared by all taps."""

    current_limit: float = 1.1
    ride_through_threshold: float = 0.85
    reactive_gain: float = 2.0
    negative_seq_injection: bool = False

    def __post_init__(self):
        if self.current_limit <= 0.0:
            raise InvalidInputError("current_limit must be > 0")
        if not 0.0 < self.ride_through_threshold < 1.0:
            raise InvalidInputError("ride_through_threshold must be in (0, 1)")


@dataclass(frozen=True)
class TapSolution:
    """Ground-truth positive-sequence state of one tap."""

    injected: Phasor
    toward_grid: Phasor
    toward_fault: Phasor
    pcc_voltage: Phasor


@dataclass(frozen=True)
class ScenarioRecord:
    """One solved fault case as consumed by the locator benchmarks."""

    scenario_id: int
    fault: FaultSpec
    penetration: PenetrationVector
    prefault_v: ThreePhaseSet | None
    prefault_i: ThreePhaseSet | None
    fault_v: ThreePhaseSet
    fault_i: ThreePhaseSet
    tap_solutions: tuple[TapSolution, ...] | None
    short_circuit_current: float
    segment_class: str

    def scaled(self, factor: Phasor) -> "ScenarioRecord":
        """Copy with every stored phasor multiplied by a common factor."""
        taps = None
        if self.tap_solutions is not None:
            taps = tuple(
                TapSolution(
                    injected=t.injected * factor,
                    toward_grid=t.toward_grid * factor,
                    toward_fault=t.toward_fault * factor,
                    pcc_voltage=t.pcc_voltage * factor,
                )
                for t in self.tap_solutions
            )
        return ScenarioRecord(
            scenario_id=self.scenario_id,
            fault=self.fault,
            penetration=self.penetration,
            prefault_v=None if self.prefault_v is None else self.prefault_v.scaled(factor),
            prefault_i=None if self.prefault_i is None else self.prefault_i.scaled(factor),
            fault_v=self.fault_v.scaled(factor),
            fault_i=self.fault_i.scaled(factor),
            tap_solutions=taps,
            short_circuit_current=self.short_circuit_current * abs(factor),
            segment_class=self.segment_class,
        )


@dataclass
class FaultDetail:
    """Internal solve diagnostics used by tests and the tap splits.

    ``node_positions`` lists every ladder node; the per-sequence voltage
    lists align with it.  All quantities are taken at the converged control
    fixed point.
    """

    node_positions: list[float]
    fault_node: int
    tap_nodes: list[int]
    v1: list[Phasor] = field(default_factory=list)
    v2: list[Phasor] = field(default_factory=list)
    v0: list[Phasor] = field(default_factory=list)
    i1_fault: Phasor = 0j
    i2_fault: Phasor = 0j
    i0_fault: Phasor = 0j
    i1_ied: Phasor = 0j
    i2_ied: Phasor = 0j
    i0_ied: Phasor = 0j
    v1_oc: Phasor = 0j
    v2_oc: Phasor = 0j
    z_term: Phasor = 0j
    i1_grid: Phasor = 0j
    injections_pos: list[Phasor] = field(default_factory=list)
    injections_neg: list[Phasor] = field(default_factory=list)
    iterations: int = 0


# ---------------------------------------------------------------------------
# Ladder primitives
# ---------------------------------------------------------------------------

def _build_nodes(spec: FeederSpec, fault_distance: float | None):
    """Sorted unique node positions plus tap/fault index maps."""
    positions = {0.0, 1.0}
    positions.update(t.position for t in spec.taps)
    if fault_distance is not None:
        positions.add(fault_distance)
    ordered = sorted(positions)
    index = {p: i for i, p in enumerate(ordered)}
    tap_nodes = [index[t.position] for t in spec.taps]
    fault_node = index[fault_distance] if fault_distance is not None else -1
    return ordered, tap_nodes, fault_node


def _walk(positions, z_line, z_grid, emf, node_injections, extraction_node, extraction):
    """Solve one sequence ladder for given injections and fault extraction.

    Returns (node voltages, segment currents); segment j runs from node j
    to node j+1 with current measured downstream-positive.  The remote end
    is open, so branch currents are pure suffix sums of the nodal balance.
    """
    n = len(positions)
    net = [0j] * n  # extraction minus injection per node
    for node, current in node_injections:
        net[node] -= current
    if extraction_node >= 0:
        net[extraction_node] += extraction
    segments = [0j] * (n - 1)
    running = 0j
    for j in range(n - 2, -1, -1):
        running += net[j + 1]
        segments[j] = running
    voltages = [0j] * n
    # KCL at the head bus: the source branch also feeds anything extracted
    # or injected at the bus itself (a fault at d = 0).
    voltages[0] = emf - z_grid * (segments[0] + net[0])
    for j in range(n - 1):
        voltages[j + 1] = voltages[j] - (positions[j + 1] - positions[j]) * z_line * segments[j]
    return voltages, segments


def _solve3(matrix, rhs):
    """Gaussian elimination with partial pivoting for a 3x3 complex system."""
    m = [row[:] + [b] for row, b in zip(matrix, rhs)]
    for col in range(3):
        pivot = max(range(col, 3), key=lambda r: abs(m[r][col]))
        if abs(m[pivot][col]) < 1e-300:
            raise InvalidInputError("singular fault boundary system")
        m[col], m[pivot] = m[pivot], m[col]
        for row in range(col + 1, 3):
            factor = m[row][col] / m[col][col]
            for k in range(col, 4):
                m[row][k] -= factor * m[col][k]
    x = [0j, 0j, 0j]
    for row in range(2, -1, -1):
        acc = m[row][3]
        for k in range(row + 1, 3):
            acc -= m[row][k] * x[k]
        x[row] = acc / m[row][row]
    return x


def _fault_boundary_system(fault_type, rf, z_thev, v_oc):
    """Boundary equations of the fault interconnection.

    Unknowns are the sequence fault currents (I1, I2, I0) with the phase-a
    symmetrical-component reference.  Grounded phases connect through one
    arc resistance each to a common ground node; line-to-line faults carry
    the arc resistance between the two phases.
    """
    rows, rhs = [], []

    def phase_current_zero(p):
        rows.append(list(_SYNTH[p]))
        rhs.append(0j)

    def phase_grounded(p):
        u = _SYNTH[p]
        rows.append([u[s] * (z_thev[s] + rf) for s in range(3)])
        rhs.append(sum(u[s] * v_oc[s] for s in range(3)))

    if fault_type in _PAIR_PHASES:
        p, q = _PAIR_PHASES[fault_type]
        healthy = ({"a", "b", "c"} - {p, q}).pop()
        phase_current_zero(healthy)
        up, uq = _SYNTH[p], _SYNTH[q]
        rows.append([up[s] + uq[s] for s in range(3)])
        rhs.append(0j)
        rows.append([(up[s] - uq[s]) * z_thev[s] + rf * up[s] for s in range(3)])
        rhs.append(sum((up[s] - uq[s]) * v_oc[s] for s in range(3)))
    else:
        grounded = _GROUND_PHASES[fault_type]
        for p in "abc":
            if p in grounded:
                phase_grounded(p)
            else:
                phase_current_zero(p)
    return rows, rhs


def _termination_impedance(fault_type, rf, z2, z0):
    """Passive impedance the fault presents to the positive-sequence network."""
    cls = fault_class(fault_type)
    if cls == "slg":
        return z2 + z0 + 3.0 * rf
    if cls == "ll":
        return z2 + rf
    if cls == "dlg":
        a, b = z2 + rf, z0 + rf
        return rf + a * b / (a + b)
    return complex(rf)


# ---------------------------------------------------------------------------
# Converter control law
# ---------------------------------------------------------------------------

def _tap_current_target(penetration, rated, v1, cfg: IbrControlConfig,
                        v1_ref: Phasor | None = None) -> Phasor:
    """Positive-sequence injection commanded for one tap, system per-unit.

    Unity power factor above the ride-through threshold; below it reactive
    current proportional to the voltage depression takes priority and the
    active component fills the remaining converter headroom.

    During ride-through the injection is phase-referenced to ``v1_ref``
    (the pre-fault terminal voltage) when given: a synchronizing loop
    cannot track a collapsed bus, and without the frozen reference a tap
    whose terminal voltage is dominated by its own injection has no
    stationary phase to converge to.
    """
    v_mag = abs(v1)
    limit = cfg.current_limit
    active_demand = penetration / max(v_mag, 1e-6)
    if v_mag >= cfg.ride_through_threshold:
        unit = v1 / v_mag
        i_d = min(active_demand, limit)
        i_q = 0.0
    else:
        anchor = v1_ref if v1_ref is not None and abs(v1_ref) > 0.0 else v1
        unit = anchor / abs(anchor) if abs(anchor) > 0.0 else 1.0 + 0.0j
        i_q = min(limit, cfg.reactive_gain * (cfg.ride_through_threshold - v_mag))
        i_d = min(active_demand, math.sqrt(max(limit * limit - i_q * i_q, 0.0)))
    return (i_d - 1j * i_q) * unit * rated


def _tap_neg_seq_target(v1_mag, v2, rated, cfg: IbrControlConfig) -> Phasor:
    """Negative-sequence injection when the optional control mode is on."""
    if not cfg.negative_seq_injection or v1_mag >= cfg.ride_through_threshold:
        return 0j
    i2 = -1j * cfg.reactive_gain * v2
    mag = abs(i2)
    if mag > cfg.current_limit:
        i2 *= cfg.current_limit / mag
    return i2 * rated


# ---------------------------------------------------------------------------
# Fixed-point solvers
# ---------------------------------------------------------------------------

def _check_inputs(spec: FeederSpec, pen: PenetrationVector):
    if len(pen.values) != len(spec.taps):
        raise InvalidInputError(
            f"penetration vector has {len(pen.values)} entries for {len(spec.taps)} taps"
        )


def _iterate_network(spec, pen, cfg, fault, max_iterations, tol, damping,
                     initial_pos=None, initial_neg=None, reference_v1=None):
    """Damped fixed point over tap injections and ladder state.

    ``fault`` is None for the pre-fault solve.  ``reference_v1`` carries the
    pre-fault tap voltages anchoring ride-through injection phases.  Returns
    a FaultDetail at the converged state (fault fields zeroed when solving
    pre-fault).
    """
    d = fault.distance if fault is not None else None
    positions, tap_nodes, fault_node = _build_nodes(spec, d)
    n_taps = len(spec.taps)
    line = spec.line
    src = spec.source

    inj_pos = list(initial_pos) if initial_pos is not None else [0j] * n_taps
    inj_neg = list(initial_neg) if initial_neg is not None else [0j] * n_taps

    if fault is not None:
        rf = fault.resistance
        z_thev = (
            src.z1 + d * line.z1,
            src.z2 + d * line.z2,
            src.z0 + d * line.z0,
        )
        z_term = _termination_impedance(fault.fault_type, rf, z_thev[1], z_thev[2])

    prev_v1 = None
    detail = FaultDetail(node_positions=positions, fault_node=fault_node, tap_nodes=tap_nodes)

    for iteration in range(1, max_iterations + 1):
        pos_sources = list(zip(tap_nodes, inj_pos))
        neg_sources = list(zip(tap_nodes, inj_neg))

        if fault is None:
            i1f = i2f = i0f = 0j
        else:
            v1_oc, _ = _walk(positions, line.z1, src.z1, src.emf, pos_sources, -1, 0j)
            v2_oc, _ = _walk(positions, line.z2, src.z2, 0j, neg_sources, -1, 0j)
            v_oc = (v1_oc[fault_node], v2_oc[fault_node], 0j)
            rows, rhs = _fault_boundary_system(fault.fault_type, rf, z_thev, v_oc)
            i1f, i2f, i0f = _solve3(rows, rhs)
            detail.v1_oc, detail.v2_oc = v_oc[0], v_oc[1]

        v1, seg1 = _walk(positions, line.z1, src.z1, src.emf, pos_sources, fault_node, i1f)
        v2, seg2 = _walk(positions, line.z2, src.z2, 0j, neg_sources, fault_node, i2f)
        v0, seg0 = _walk(positions, line.z0, src.z0, 0j, [], fault_node, i0f)

        targets_pos = []
        targets_neg = []
        for k, tap in enumerate(spec.taps):
            v_tap = v1[tap_nodes[k]]
            v_ref = reference_v1[k] if reference_v1 is not None else None
            targets_pos.append(
                _tap_current_target(pen.values[k], tap.rated_power, v_tap, cfg, v_ref)
            )
            targets_neg.append(_tap_neg_seq_target(abs(v_tap), v2[tap_nodes[k]], tap.rated_power, cfg))

        # fixed-point residual of the control law at the state just solved
        residual = 0.0
        for k in range(n_taps):
            residual = max(residual, abs(targets_pos[k] - inj_pos[k]),
                           abs(targets_neg[k] - inj_neg[k]))
        delta_v = 0.0
        if prev_v1 is not None:
            delta_v = max(abs(a - b) for a, b in zip(v1, prev_v1))
        prev_v1 = v1

        scale = max(1.0, max(abs(v) for v in v1))
        if iteration > 1 and residual <= tol * scale and delta_v <= tol * scale:
            # state above was computed from inj_*, so it is self-consistent
            detail.v1, detail.v2, detail.v0 = v1, v2, v0
            detail.i1_fault, detail.i2_fault, detail.i0_fault = i1f, i2f, i0f
            detail.i1_ied, detail.i2_ied, detail.i0_ied = seg1[0], seg2[0], seg0[0]
            detail.injections_pos = list(inj_pos)
            detail.injections_neg = list(inj_neg)
            detail.iterations = iteration
            if fault is not None:
                detail.z_term = z_term
                detail.i1_grid = src.emf / (z_thev[0] + z_term)
            return detail

        for k in range(n_taps):
            inj_pos[k] += damping * (targets_pos[k] - inj_pos[k])
            inj_neg[k] += damping * (targets_neg[k] - inj_neg[k])

    raise NoConvergenceError(
        f"control fixed point did not converge within {max_iterations} iterations "
        f"(fault={fault.fault_type if fault else 'prefault'})"
    )


def _tap_splits(spec, detail: FaultDetail, fault: FaultSpec | None):
    """Superposition split of each tap injection between grid and fault."""
    solutions = []
    for k, tap in enumerate(spec.taps):
        injected = detail.injections_pos[k]
        pcc = detail.v1[detail.tap_nodes[k]]
        if fault is None:
            solutions.append(TapSolution(injected, injected, 0j, pcc))
            continue
        d = fault.distance
        dk = tap.position
        if dk <= d:
            z_up = spec.source.z1 + dk * spec.line.z1
            z_down = (d - dk) * spec.line.z1 + detail.z_term
            toward_fault = injected * z_up / (z_up + z_down)
        else:
            z_grid_path = spec.source.z1 + d * spec.line.z1
            toward_fault = injected * z_grid_path / (detail.z_term + z_grid_path)
        solutions.append(TapSolution(injected, injected - toward_fault, toward_fault, pcc))
    return tuple(solutions)


def _phase_sets(detail: FaultDetail):
    v = from_sequence(SequenceSet(detail.v1[0], detail.v2[0], detail.v0[0]))
    i = from_sequence(SequenceSet(detail.i1_ied, detail.i2_ied, detail.i0_ied))
    return v, i


def solve_prefault(spec: FeederSpec, pen: PenetrationVector, cfg: IbrControlConfig,
                   max_iterations: int = MAX_FIXED_POINT_ITERATIONS,
                   tol: float = FIXED_POINT_TOL,
                   damping: float = INJECTION_DAMPING):
    """Balanced steady state before the fault.

    Returns (IED voltage, IED current, tap solutions); the IED current is
    measured into the line, so an exporting feeder yields a negative-real
    phasor.
    """
    _check_inputs(spec, pen)
    detail = _iterate_network(spec, pen, cfg, None, max_iterations, tol, damping)
    v, i = _phase_sets(detail)
    return v, i, _tap_splits(spec, detail, None)


def solve_fault_detailed(spec: FeederSpec, fault: FaultSpec, pen: PenetrationVector,
                         cfg: IbrControlConfig,
                         max_iterations: int = MAX_FIXED_POINT_ITERATIONS,
                         tol: float = FIXED_POINT_TOL,
                         damping: float = INJECTION_DAMPING):
    """Run the fault fixed point and return (prefault triple, FaultDetail)."""
    _check_inputs(spec, pen)
    pre_detail = _iterate_network(spec, pen, cfg, None, max_iterations, tol, damping)
    detail = _iterate_network(
        spec, pen, cfg, fault, max_iterations, tol, damping,
        initial_pos=pre_detail.injections_pos,
        initial_neg=pre_detail.injections_neg,
        reference_v1=[pre_detail.v1[n] for n in pre_detail.tap_nodes],
    )
    pre_v, pre_i = _phase_sets(pre_detail)
    pre_taps = _tap_splits(spec, pre_detail, None)
    return (pre_v, pre_i, pre_taps), detail


def solve_fault(spec: FeederSpec, fault: FaultSpec, pen: PenetrationVector,
                cfg: IbrControlConfig, scenario_id: int = 0,
                sc_reference_distance: float = 1.0,
                max_iterations: int = MAX_FIXED_POINT_ITERATIONS,
                tol: float = FIXED_POINT_TOL,
                damping: float = INJECTION_DAMPING) -> ScenarioRecord:
    """Solve one fault case end to end and assemble its scenario record."""
    _check_inputs(spec, pen)
    pre_detail = _iterate_network(spec, pen, cfg, None, max_iterations, tol, damping)
    reference_v1 = [pre_detail.v1[n] for n in pre_detail.tap_nodes]
    detail = _iterate_network(
        spec, pen, cfg, fault, max_iterations, tol, damping,
        initial_pos=pre_detail.injections_pos,
        initial_neg=pre_detail.injections_neg,
        reference_v1=reference_v1,
    )
    fault_v, fault_i = _phase_sets(detail)

    is_reference = (
        fault.fault_type == "ABC"
        and fault.resistance == 0.0
        and fault.distance == sc_reference_distance
    )
    if is_reference:
        i_cc = abs(fault_i.a)
    else:
        reference = FaultSpec("ABC", sc_reference_distance, 0.0)
        ref_detail = _iterate_network(
            spec, pen, cfg, reference, max_iterations, tol, damping,
            initial_pos=pre_detail.injections_pos,
            initial_neg=pre_detail.injections_neg,
            reference_v1=reference_v1,
        )
        _, ref_i = _phase_sets(ref_detail)
        i_cc = abs(ref_i.a)

    pre_v, pre_i = _phase_sets(pre_detail)
    upstream = any(t.position < fault.distance for t in spec.taps)
    return ScenarioRecord(
        scenario_id=scenario_id,
        fault=fault,
        penetration=pen,
        prefault_v=pre_v,
        prefault_i=pre_i,
        fault_v=fault_v,
        fault_i=fault_i,
        tap_solutions=_tap_splits(spec, detail, fault),
        short_circuit_current=i_cc,
        segment_class="secondary" if upstream else "primary",
    )


def short_circuit_magnitude(spec: FeederSpec, pen: PenetrationVector, cfg: IbrControlConfig,
                            reference_distance: float = 1.0,
                            max_iterations: int = MAX_FIXED_POINT_ITERATIONS,
                            tol: float = FIXED_POINT_TOL,
                            damping: float = INJECTION_DAMPING) -> float:
    """|I_a| at the IED for a bolted three-phase fault at the reference point."""
    reference = FaultSpec("ABC", reference_distance, 0.0)
    _, detail = solve_fault_detailed(
        spec, reference, pen, cfg, max_iterations, tol, damping
    )
    _, fault_i = _phase_sets(detail)
    return abs(fault_i.a)
