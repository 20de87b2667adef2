"""Scenario factory tests: calibration, sampling, stopping rule."""

import math
import random

import numpy as np
import pytest

from collector_faultloc.errors import ConfigError, InsufficientDataError, RangeError
from collector_faultloc.montecarlo import (
    McConfig,
    analytic_correlation,
    base_current_amps,
    calibrate_delta,
    default_fault_locations,
    mc_config_from_dict,
    nn_resolution,
    run_until_converged,
    sample_penetration,
    sample_scenario,
    save_trace_csv,
    with_seed,
)
from collector_faultloc.oracle import FaultSpec, PenetrationVector, ScenarioRecord
from collector_faultloc.phasors import ThreePhaseSet

ZERO_SET = ThreePhaseSet(0j, 0j, 0j)


def make_cfg(**overrides) -> McConfig:
    kwargs = dict(n_taps=5, seed=3, max_scenarios=64, base_mva=20.0, base_kv=34.5)
    kwargs.update(overrides)
    return McConfig(**kwargs)


def stub_oracle(fault: FaultSpec, pen: PenetrationVector, scenario_id: int) -> ScenarioRecord:
    """Cheap record factory: the short-circuit level varies with the draw."""
    level = 4.0 + pen.total / 10.0 + fault.distance / 50.0
    return ScenarioRecord(
        scenario_id=scenario_id, fault=fault, penetration=pen,
        prefault_v=None, prefault_i=None, fault_v=ZERO_SET, fault_i=ZERO_SET,
        tap_solutions=None, short_circuit_current=level, segment_class="primary",
    )


# ---------------------------------------------------------------------------
# Delta calibration
# ---------------------------------------------------------------------------

def test_calibrate_delta_closed_form():
    assert calibrate_delta(0.97) == pytest.approx(0.125312, abs=1e-6)
    assert calibrate_delta(0.97) == pytest.approx(0.12531181217673437, abs=1e-15)
    assert calibrate_delta(1 / math.sqrt(2)) == pytest.approx(0.5, abs=1e-12)
    assert calibrate_delta(1 - 1e-12) < 1e-5


def test_calibrate_delta_range_errors():
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(RangeError):
            calibrate_delta(bad)


def test_calibration_round_trips_through_analytic_correlation():
    for r in (0.5, 0.8, 0.97, 0.999):
        assert analytic_correlation(calibrate_delta(r)) == pytest.approx(r, abs=1e-12)


# ---------------------------------------------------------------------------
# Penetration sampling
# ---------------------------------------------------------------------------

def test_zero_delta_gives_identical_taps():
    rng = random.Random(1)
    draw = sample_penetration(rng, 0.0, 5)
    assert all(v == draw.p_farm for v in draw.clipped.values)


class ScriptedRng:
    """Feeds predetermined values to random()/uniform()."""

    def __init__(self, randoms, uniforms):
        self._randoms = list(randoms)
        self._uniforms = list(uniforms)

    def random(self):
        return self._randoms.pop(0)

    def uniform(self, lo, hi):
        return self._uniforms.pop(0)


def test_clipping_at_upper_bound():
    rng = ScriptedRng([0.99], [0.05, -0.02, 0.05])
    draw = sample_penetration(rng, 0.125, 3)
    assert draw.clipped.values == (1.0, 0.97, 1.0)


def test_epsilons_bounded_by_delta():
    rng = random.Random(7)
    delta = calibrate_delta(0.97)
    for _ in range(200):
        draw = sample_penetration(rng, delta, 5)
        assert all(abs(e) <= delta for e in draw.epsilons)
        assert all(0.0 <= v <= 1.0 for v in draw.clipped.values)


def test_empirical_correlation_matches_bound():
    rng = random.Random(123)
    delta = calibrate_delta(0.97)
    farm, tap = [], []
    for _ in range(30000):
        draw = sample_penetration(rng, delta, 1)
        farm.append(draw.p_farm)
        tap.append(draw.p_farm + draw.epsilons[0])  # pre-clip
    corr = float(np.corrcoef(farm, tap)[0, 1])
    assert corr == pytest.approx(0.97, abs=0.015)


# ---------------------------------------------------------------------------
# Scenario tuples
# ---------------------------------------------------------------------------

def test_singleton_lists_pin_fault_parameters():
    cfg = make_cfg(fault_locations=(0.4,), fault_types=("AB",),
                   resistances_ohm=(10.0,), inception_angles=(45.0,))
    rng = random.Random(5)
    draw = sample_scenario(rng, cfg, 0.1)
    assert draw.fault.fault_type == "AB"
    assert draw.fault.distance == 0.4
    assert draw.fault.resistance_ohm == 10.0
    assert draw.fault.inception_angle == 45.0


def test_draws_stay_inside_configured_sets():
    cfg = make_cfg()
    rng = random.Random(11)
    ohm_set = set(cfg.resistances_ohm)
    for _ in range(300):
        draw = sample_scenario(rng, cfg, 0.12)
        assert draw.fault.fault_type in ("AG", "AB", "ABG", "ABC")
        assert draw.fault.distance in cfg.fault_locations
        assert draw.fault.resistance_ohm in ohm_set
        assert draw.fault.inception_angle in cfg.inception_angles


def test_default_locations_span_the_line():
    locations = default_fault_locations()
    assert len(locations) == 17
    assert locations[0] == pytest.approx(1 / 17)
    assert locations[-1] == 1.0


def test_scenario_stream_is_seed_deterministic():
    cfg = make_cfg(seed=99)
    delta = calibrate_delta(cfg.r_max)
    stream_a = [sample_scenario(random.Random(cfg.seed ^ i), cfg, delta) for i in range(50)]
    stream_b = [sample_scenario(random.Random(cfg.seed ^ i), cfg, delta) for i in range(50)]
    assert stream_a == stream_b
    other = [sample_scenario(random.Random(101 ^ i), cfg, delta) for i in range(50)]
    assert other != stream_a


# ---------------------------------------------------------------------------
# Nearest-neighbor resolution
# ---------------------------------------------------------------------------

def brute_force_nn(values, p):
    nearest = []
    for i, x in enumerate(values):
        nearest.append(min(abs(x - y) for j, y in enumerate(values) if j != i))
    return float(np.percentile(nearest, p))


def test_nn_resolution_two_points():
    assert nn_resolution([0.0, 10.0], 99) == pytest.approx(10.0)


def test_nn_resolution_hand_case():
    # gaps {1, 1, 2}: the maximum nearest-neighbor distance is 2
    assert nn_resolution([0.0, 1.0, 3.0], 100) == pytest.approx(2.0)


def test_nn_resolution_duplicates_allow_zero_gaps():
    assert nn_resolution([5.0, 5.0, 5.0], 50) == 0.0


def test_nn_resolution_matches_brute_force(rng):
    for _ in range(40):
        n = rng.randint(2, 400)
        values = [rng.uniform(0, 100) for _ in range(n)]
        p = rng.choice([50, 90, 99, 100])
        assert nn_resolution(values, p) == brute_force_nn(values, p)


def test_nn_resolution_permutation_invariant(rng):
    values = [rng.uniform(0, 10) for _ in range(200)]
    shuffled = values[:]
    rng.shuffle(shuffled)
    assert nn_resolution(values, 99) == nn_resolution(shuffled, 99)


def test_nn_resolution_needs_two_values():
    with pytest.raises(InsufficientDataError):
        nn_resolution([1.0], 99)


# ---------------------------------------------------------------------------
# Convergence loop
# ---------------------------------------------------------------------------

def test_huge_tolerance_converges_at_first_check(feeder):
    cfg = make_cfg(tol_amps=1e9)
    records, trace = run_until_converged(feeder, cfg, stub_oracle, batch=16)
    assert trace.converged_at == 16
    assert len(records) == 16
    assert len(trace.entries) == 1
    assert not trace.hit_cap


def test_zero_tolerance_hits_cap_unconverged(feeder):
    cfg = make_cfg(tol_amps=0.0, max_scenarios=40)
    records, trace = run_until_converged(feeder, cfg, stub_oracle, batch=16)
    assert len(records) == 40
    assert trace.converged_at is None
    assert trace.hit_cap
    # checks at 16, 32 and the cap
    assert [n for n, _ in trace.entries] == [16, 32, 40]


def test_batch_of_one_checks_every_scenario(feeder):
    cfg = make_cfg(tol_amps=0.0, max_scenarios=10)
    _, trace = run_until_converged(feeder, cfg, stub_oracle, batch=1)
    assert [n for n, _ in trace.entries] == list(range(2, 11))


def test_stream_independent_of_batch_size(feeder):
    cfg = make_cfg(tol_amps=0.0, max_scenarios=24)
    rec_a, _ = run_until_converged(feeder, cfg, stub_oracle, batch=4)
    rec_b, _ = run_until_converged(feeder, cfg, stub_oracle, batch=24)
    assert [r.fault for r in rec_a] == [r.fault for r in rec_b]
    assert [r.penetration for r in rec_a] == [r.penetration for r in rec_b]


def test_tap_count_mismatch_rejected(feeder):
    cfg = make_cfg(n_taps=3)
    with pytest.raises(ConfigError):
        run_until_converged(feeder, cfg, stub_oracle)


def test_default_oracle_trace_decreases_to_tolerance(feeder):
    # end-to-end with the real short-circuit solver: the resolution metric
    # falls roughly monotonically until it crosses the stopping threshold
    cfg = make_cfg(tol_amps=0.25, max_scenarios=2500, seed=21)
    records, trace = run_until_converged(feeder, cfg, batch=64)
    assert trace.converged_at is not None
    assert not trace.hit_cap
    assert len(records) == trace.converged_at
    epsilons = [e for _, e in trace.entries]
    assert len(epsilons) >= 3
    assert epsilons[-1] <= trace.tol_pu
    assert epsilons[-1] <= epsilons[0]
    increases = sum(1 for a, b in zip(epsilons, epsilons[1:]) if b > a)
    assert increases <= len(epsilons) / 2  # shape check only


def test_trace_csv_round_trip(tmp_path, feeder):
    cfg = make_cfg(tol_amps=0.0, max_scenarios=20)
    _, trace = run_until_converged(feeder, cfg, stub_oracle, batch=5)
    path = tmp_path / "trace.csv"
    save_trace_csv(trace, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,epsilon_p"
    assert len(lines) == 1 + len(trace.entries)


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        make_cfg(r_max=1.0)
    with pytest.raises(ConfigError):
        make_cfg(percentile=0.0)
    with pytest.raises(ConfigError):
        make_cfg(fault_types=("AG", "XX"))
    with pytest.raises(ConfigError):
        make_cfg(fault_locations=())


def test_ohm_to_pu_conversion_uses_declared_base():
    raw = {"n_taps": 5, "resistances_ohm": [0.0, 5.0, 50.0]}
    cfg = mc_config_from_dict(raw, base_mva=20.0, base_kv=34.5)
    z_base = 34.5 ** 2 / 20.0
    assert cfg.resistances_pu == pytest.approx((0.0, 5.0 / z_base, 50.0 / z_base))
    assert cfg.resistances_ohm == (0.0, 5.0, 50.0)


def test_pu_resistances_accepted_and_ohms_derived():
    raw = {"n_taps": 2, "resistances_pu": [0.1], "base_mva": 20.0, "base_kv": 34.5}
    cfg = mc_config_from_dict(raw)
    assert cfg.resistances_ohm == pytest.approx((0.1 * 34.5 ** 2 / 20.0,))
    with pytest.raises(Exception):
        mc_config_from_dict({"n_taps": 2, "resistances_pu": [0.1], "resistances_ohm": [5.0]})


def test_tolerance_conversion_to_per_unit():
    cfg = make_cfg(tol_amps=10.0)
    assert cfg.tol_pu == pytest.approx(10.0 / base_current_amps(20.0, 34.5))
    assert base_current_amps(20.0, 34.5) == pytest.approx(20e6 / (math.sqrt(3) * 34.5e3))


def test_with_seed_replaces_only_seed():
    cfg = make_cfg(seed=1)
    other = with_seed(cfg, 42)
    assert other.seed == 42
    assert other.fault_locations == cfg.fault_locations
