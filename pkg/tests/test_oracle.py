"""Short-circuit oracle tests.

The ladder walk is cross-checked against an independent dense
nodal-admittance solve (numpy linear solver) of the same network, and the
fault interconnection against hand-derived sequence relations.
"""

import numpy as np
import pytest

from collector_faultloc.errors import InvalidInputError, NoConvergenceError
from collector_faultloc.feeder import FeederSpec, GridSource, IbrTap
from collector_faultloc.oracle import (
    FaultSpec,
    IbrControlConfig,
    PenetrationVector,
    _fault_boundary_system,
    _solve3,
    _termination_impedance,
    _walk,
    short_circuit_magnitude,
    solve_fault,
    solve_fault_detailed,
    solve_prefault,
)
from collector_faultloc.phasors import (
    SequenceImpedances,
    ground_loop_factor,
    to_sequence,
)


def dense_node_voltages(spec, positions, injections, extraction_node, extraction,
                        sequence, emf):
    """Independent nodal-admittance solve of the ladder network."""
    z_line = spec.line.of(sequence)
    z_grid = spec.source.z_of(sequence)
    n = len(positions)
    y = np.zeros((n, n), dtype=complex)
    for j in range(n - 1):
        y_seg = 1.0 / ((positions[j + 1] - positions[j]) * z_line)
        y[j, j] += y_seg
        y[j + 1, j + 1] += y_seg
        y[j, j + 1] -= y_seg
        y[j + 1, j] -= y_seg
    y[0, 0] += 1.0 / z_grid
    current = np.zeros(n, dtype=complex)
    current[0] += emf / z_grid
    for node, value in injections:
        current[node] += value
    if extraction_node >= 0:
        current[extraction_node] -= extraction
    return np.linalg.solve(y, current)


def test_prefault_zero_penetration(feeder, control):
    v, i, sols = solve_prefault(feeder, PenetrationVector((0.0,) * 5), control)
    assert abs(i.a) < 1e-12 and abs(i.b) < 1e-12 and abs(i.c) < 1e-12
    assert abs(v.a - feeder.source.emf) < 1e-9
    for s in sols:
        assert abs(s.injected) < 1e-12


def test_prefault_stiff_lossless_limit_full_output(control):
    # z -> 0 limit: every bus stays at 1 pu, so the head current equals the
    # tap's full rated output
    spec = FeederSpec(
        line=SequenceImpedances(z1=1e-8 * (1 + 2j), z0=3e-8 * (1 + 2j)),
        source=GridSource(emf=1.0 + 0j, z1=0j, z0=0j),
        taps=(IbrTap("t1", 0.5, 0.21),),
    )
    v, i, sols = solve_prefault(spec, PenetrationVector((1.0,)), control)
    assert abs(v.a - 1.0) < 1e-6
    assert abs(abs(i.a) - 0.21) < 1e-6


def test_prefault_matches_dense_solver(feeder, control):
    spec = FeederSpec(
        line=feeder.line, source=feeder.source,
        taps=(IbrTap("t1", 0.3, 0.25), IbrTap("t2", 0.7, 0.1)),
    )
    pen = PenetrationVector((0.8, 0.4))
    from collector_faultloc.oracle import _iterate_network

    detail = _iterate_network(spec, pen, control, None, 100, 1e-12, 0.5)
    dense = dense_node_voltages(
        spec, detail.node_positions,
        list(zip(detail.tap_nodes, detail.injections_pos)), -1, 0j, "pos",
        spec.source.emf,
    )
    for computed, reference in zip(detail.v1, dense):
        assert abs(computed - reference) < 1e-9


def test_fault_state_matches_dense_solver(feeder, control):
    fault = FaultSpec("ABG", 0.62, 0.2)
    pen = PenetrationVector((0.9, 0.7, 0.5, 0.8, 0.6))
    _, detail = solve_fault_detailed(feeder, fault, pen, control)
    for sequence, voltages, fault_current in (
        ("pos", detail.v1, detail.i1_fault),
        ("neg", detail.v2, detail.i2_fault),
        ("zero", detail.v0, detail.i0_fault),
    ):
        injections = (
            list(zip(detail.tap_nodes, detail.injections_pos)) if sequence == "pos"
            else (list(zip(detail.tap_nodes, detail.injections_neg)) if sequence == "neg" else [])
        )
        emf = feeder.source.emf if sequence == "pos" else 0j
        dense = dense_node_voltages(
            feeder, detail.node_positions, injections,
            detail.fault_node, fault_current, sequence, emf,
        )
        for computed, reference in zip(voltages, dense):
            assert abs(computed - reference) < 1e-9


def test_no_tap_bolted_slg_classical_loop_exact(no_tap_feeder, control):
    d = 0.63
    rec = solve_fault(no_tap_feeder, FaultSpec("AG", d, 0.0), PenetrationVector(()), control)
    k0 = ground_loop_factor(no_tap_feeder.line)
    i0 = to_sequence(rec.fault_i).zero
    z_loop = rec.fault_v.a / (rec.fault_i.a + k0 * i0)
    assert abs(z_loop - d * no_tap_feeder.line.z1) < 1e-9


def test_all_taps_downstream_keeps_classical_loop_exact(feeder, control):
    # fault upstream of every tap: the conventional loop sees the whole drop
    d = 0.09
    pen = PenetrationVector((1.0,) * 5)
    rec = solve_fault(feeder, FaultSpec("AG", d, 0.0), pen, control)
    assert rec.segment_class == "primary"
    k0 = ground_loop_factor(feeder.line)
    i0 = to_sequence(rec.fault_i).zero
    z_loop = rec.fault_v.a / (rec.fault_i.a + k0 * i0)
    assert abs(z_loop - d * feeder.line.z1) < 1e-9


def test_upstream_taps_ground_truth_residual_is_zero(feeder, control):
    # compensated loop relation with solved tap currents closes exactly
    d, rf = 0.68, 0.42
    pen = PenetrationVector((0.9, 0.8, 0.85, 0.7, 0.75))
    rec = solve_fault(feeder, FaultSpec("AG", d, rf), pen, control)
    assert rec.segment_class == "secondary"
    k0 = ground_loop_factor(feeder.line)
    seq_i = to_sequence(rec.fault_i)
    v_comp = 0j
    for tap, sol in zip(feeder.taps, rec.tap_solutions):
        if tap.position < d:
            v_comp -= (d - tap.position) * feeder.line.z1 * sol.injected
    i_fault = 3.0 * seq_i.zero  # residual path is untouched by the taps
    residual = (
        rec.fault_v.a + v_comp
        - d * feeder.line.z1 * (rec.fault_i.a + k0 * seq_i.zero)
        - rf * i_fault
    )
    assert abs(residual) < 1e-9


def test_tap_current_conservation_and_ied_balance(feeder, control):
    fault = FaultSpec("AG", 0.6, 0.1)
    pen = PenetrationVector((0.8, 0.6, 0.9, 0.5, 0.7))
    _, detail = solve_fault_detailed(feeder, fault, pen, control)
    from collector_faultloc.oracle import _tap_splits

    splits = _tap_splits(feeder, detail, fault)
    for sol in splits:
        assert abs(sol.injected - (sol.toward_grid + sol.toward_fault)) < 1e-9
    # the relay current is the grid contribution minus tap backflow
    backflow = sum(s.toward_grid for s in splits)
    assert abs(detail.i1_ied - (detail.i1_grid - backflow)) < 1e-9
    # and the fault current collects the grid share plus tap shares
    toward_fault = sum(s.toward_fault for s in splits)
    assert abs(detail.i1_fault - (detail.i1_grid + toward_fault)) < 1e-9


def test_kvl_reconstruction_of_fault_voltage(feeder, control):
    d = 0.72
    fault = FaultSpec("AG", d, 0.3)
    pen = PenetrationVector((1.0, 0.9, 0.95, 0.85, 0.9))
    _, detail = solve_fault_detailed(feeder, fault, pen, control)
    v1_ied = detail.v1[0]
    drop = d * feeder.line.z1 * detail.i1_ied
    comp = 0j
    for k, tap in enumerate(feeder.taps):
        if tap.position < d:
            comp += (d - tap.position) * feeder.line.z1 * detail.injections_pos[k]
    v1_fault_reconstructed = v1_ied - drop - comp
    assert abs(v1_fault_reconstructed - detail.v1[detail.fault_node]) < 1e-9


def test_zero_sequence_untouched_by_taps(feeder, no_tap_feeder, control):
    # the residual current measured at the relay equals the fault residual
    fault = FaultSpec("BG", 0.55, 0.2)
    _, detail = solve_fault_detailed(feeder, fault, PenetrationVector((1.0,) * 5), control)
    assert abs(detail.i0_ied - detail.i0_fault) < 1e-12
    # and equals the no-tap network's only path: same Thevenin, same current
    _, bare = solve_fault_detailed(no_tap_feeder, fault, PenetrationVector(()), control)
    assert abs(bare.i0_ied - bare.i0_fault) < 1e-12


def test_superposition_doubling_with_frozen_injections(feeder, control):
    fault = FaultSpec("AG", 0.47, 0.084)
    pen = PenetrationVector((0.7, 0.6, 0.8, 0.5, 0.9))
    _, detail = solve_fault_detailed(feeder, fault, pen, control)
    d = fault.distance
    z_thev = (
        feeder.source.z1 + d * feeder.line.z1,
        feeder.source.z2 + d * feeder.line.z2,
        feeder.source.z0 + d * feeder.line.z0,
    )
    positions, tap_nodes = detail.node_positions, detail.tap_nodes

    def solve_frozen(scale):
        injections = [(n, scale * i) for n, i in zip(tap_nodes, detail.injections_pos)]
        v_oc, _ = _walk(positions, feeder.line.z1, feeder.source.z1,
                        scale * feeder.source.emf, injections, -1, 0j)
        rows, rhs = _fault_boundary_system(
            fault.fault_type, fault.resistance, z_thev,
            (v_oc[detail.fault_node], 0j, 0j),
        )
        i1f, i2f, i0f = _solve3(rows, rhs)
        _, segments = _walk(positions, feeder.line.z1, feeder.source.z1,
                            scale * feeder.source.emf, injections,
                            detail.fault_node, i1f)
        return i1f, segments[0]

    i1f_base, ied_base = solve_frozen(1.0)
    i1f_double, ied_double = solve_frozen(2.0)
    assert abs(i1f_double - 2 * i1f_base) < 1e-9
    assert abs(ied_double - 2 * ied_base) < 1e-9


def test_fault_at_tap_position_node_coincidence(feeder, control):
    pen = PenetrationVector((0.5,) * 5)
    rec = solve_fault(feeder, FaultSpec("AG", 0.55, 0.1), pen, control)
    assert rec.segment_class == "secondary"  # taps at 0.15/0.35 are upstream
    assert len(rec.tap_solutions) == 5


def test_fault_at_line_ends(feeder, control):
    pen = PenetrationVector((0.5,) * 5)
    head = solve_fault(feeder, FaultSpec("ABC", 0.0, 0.0), pen, control)
    assert head.segment_class == "primary"
    remote = solve_fault(feeder, FaultSpec("AG", 1.0, 0.0), pen, control)
    assert remote.segment_class == "secondary"


def test_short_circuit_magnitude_stiff_reference(control):
    spec = FeederSpec(
        line=SequenceImpedances(z1=0.5j, z0=1.5j),
        source=GridSource(emf=1.0 + 0j, z1=0j, z0=0j),
    )
    level = short_circuit_magnitude(spec, PenetrationVector(()), control)
    assert level == pytest.approx(2.0, abs=1e-9)


def test_short_circuit_magnitude_definitional(feeder, control):
    pen = PenetrationVector((0.6,) * 5)
    rec = solve_fault(feeder, FaultSpec("ABC", 1.0, 0.0), pen, control)
    direct = short_circuit_magnitude(feeder, pen, control)
    assert rec.short_circuit_current == pytest.approx(abs(rec.fault_i.a), abs=0.0)
    assert direct == pytest.approx(rec.short_circuit_current, abs=1e-9)


def test_short_circuit_level_changes_with_penetration(feeder, control):
    low = short_circuit_magnitude(feeder, PenetrationVector((0.0,) * 5), control)
    high = short_circuit_magnitude(feeder, PenetrationVector((1.0,) * 5), control)
    # converter infeed reshapes the relay-side current (back-flow included)
    assert abs(high - low) > 1e-4


def test_termination_impedance_consistent_with_boundary_solve(feeder):
    # passive positive-sequence termination must reproduce the solved I1
    z_thev = (0.05 + 0.2j, 0.05 + 0.21j, 0.1 + 0.5j)
    v_oc = (0.97 + 0.05j, 0j, 0j)
    for fault_type, rf in (("AG", 0.3), ("BC", 0.2), ("CAG", 0.15), ("ABC", 0.1)):
        rows, rhs = _fault_boundary_system(fault_type, rf, z_thev, v_oc)
        i1f, _, _ = _solve3(rows, rhs)
        z_term = _termination_impedance(fault_type, rf, z_thev[1], z_thev[2])
        assert abs(i1f - v_oc[0] / (z_thev[0] + z_term)) < 1e-12


def test_negative_sequence_injection_mode(feeder):
    control = IbrControlConfig(negative_seq_injection=True)
    fault = FaultSpec("BC", 0.6, 0.0)
    pen = PenetrationVector((1.0,) * 5)
    _, detail = solve_fault_detailed(feeder, fault, pen, control)
    assert any(abs(i2) > 1e-6 for i2 in detail.injections_neg)
    # with converter negative-sequence current, the relay no longer sees the
    # fault-point negative-sequence current exactly
    assert abs(detail.i2_ied - detail.i2_fault) > 1e-6
    # the zero-sequence path stays clean regardless
    assert abs(detail.i0_ied - detail.i0_fault) < 1e-12


def test_solver_input_validation(feeder, control):
    with pytest.raises(InvalidInputError):
        solve_prefault(feeder, PenetrationVector((0.5,)), control)
    with pytest.raises(InvalidInputError):
        FaultSpec("XX", 0.5)
    with pytest.raises(InvalidInputError):
        FaultSpec("AG", 1.5)
    with pytest.raises(InvalidInputError):
        FaultSpec("AG", 0.5, -1.0)
    with pytest.raises(InvalidInputError):
        PenetrationVector((1.2,))
    with pytest.raises(InvalidInputError):
        IbrControlConfig(ride_through_threshold=1.2)


def test_no_convergence_raises(feeder, control):
    pen = PenetrationVector((1.0,) * 5)
    with pytest.raises(NoConvergenceError):
        solve_fault(feeder, FaultSpec("AG", 0.6, 0.0), pen, control, max_iterations=2)


def test_inception_angle_is_metadata_only(feeder, control):
    pen = PenetrationVector((0.5,) * 5)
    rec_a = solve_fault(feeder, FaultSpec("AG", 0.4, 0.1, inception_angle=0.0), pen, control)
    rec_b = solve_fault(feeder, FaultSpec("AG", 0.4, 0.1, inception_angle=135.0), pen, control)
    assert rec_a.fault_v == rec_b.fault_v
    assert rec_a.fault_i == rec_b.fault_i
    assert rec_b.fault.inception_angle == 135.0
