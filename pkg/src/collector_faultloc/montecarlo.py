"""Monte Carlo scenario factory with a nearest-neighbor stopping rule.

Penetration sampling uses a common farm-level factor plus independent
per-tap deviations, both uniform.  The deviation half-width is calibrated
in closed form so that the pre-clip correlation between any tap and the
farm factor equals a prescribed bound:

    corr = sqrt(Var(P_farm) / (Var(P_farm) + Var(eps)))
    Var(P_farm) = 1/12,  Var(eps) = delta^2 / 3

Scenario generation stops once the short-circuit current axis is sampled
densely enough: after each batch the p-th percentile of nearest-neighbor
gaps among all |I_cc| values is compared against a tolerance expressed in
amperes on the declared base.
"""

import csv
import json
import math
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InsufficientDataError, ParseError, RangeError
from .feeder import FeederSpec
from .oracle import (
    FAULT_TYPES,
    FaultSpec,
    IbrControlConfig,
    PenetrationVector,
    ScenarioRecord,
    solve_fault,
)

#: arc resistance ladder in ohms applied to every study unless overridden
STANDARD_RESISTANCES_OHM = (0.0, 5.0, 10.0, 25.0, 40.0, 50.0)

DEFAULT_FAULT_TYPES = ("AG", "AB", "ABG", "ABC")
DEFAULT_LOCATION_COUNT = 17


def default_fault_locations(count: int = DEFAULT_LOCATION_COUNT) -> tuple[float, ...]:
    """Evenly spaced study locations over (0, 1], remote end included."""
    return tuple((k + 1) / count for k in range(count))


def base_current_amps(base_mva: float, base_kv: float) -> float:
    """Base current in amperes for a three-phase MVA/kV base pair."""
    return base_mva * 1e6 / (math.sqrt(3.0) * base_kv * 1e3)


@dataclass(frozen=True)
class McConfig:
    """Everything the scenario factory needs, bases included."""

    n_taps: int
    r_max: float = 0.97
    fault_locations: tuple[float, ...] = default_fault_locations()
    fault_types: tuple[str, ...] = DEFAULT_FAULT_TYPES
    resistances_pu: tuple[float, ...] = ()
    resistances_ohm: tuple[float, ...] = STANDARD_RESISTANCES_OHM
    inception_angles: tuple[float, ...] = (0.0, 45.0, 90.0, 135.0)
    tol_amps: float = 10.0
    percentile: float = 99.0
    seed: int = 0
    max_scenarios: int = 20000
    base_mva: float = 100.0
    base_kv: float = 34.5

    def __post_init__(self):
        if not 0.0 < self.r_max < 1.0:
            raise ConfigError(f"r_max {self.r_max} outside (0, 1)")
        if self.tol_amps < 0.0:
            raise ConfigError("tol_amps must be >= 0 (0 disables early stopping)")
        if not 0.0 < self.percentile <= 100.0:
            raise ConfigError(f"percentile {self.percentile} outside (0, 100]")
        if self.n_taps < 0:
            raise ConfigError("n_taps must be >= 0")
        for name in ("fault_locations", "fault_types", "inception_angles"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        for t in self.fault_types:
            if t not in FAULT_TYPES:
                raise ConfigError(f"unknown fault type {t!r}")
        if not self.resistances_pu:
            z_base = self.base_kv ** 2 / self.base_mva
            object.__setattr__(
                self, "resistances_pu", tuple(r / z_base for r in self.resistances_ohm)
            )
        if len(self.resistances_pu) != len(self.resistances_ohm):
            raise ConfigError("resistances_pu and resistances_ohm must align")

    @property
    def tol_pu(self) -> float:
        return self.tol_amps / base_current_amps(self.base_mva, self.base_kv)


@dataclass(frozen=True)
class PenetrationDraw:
    """One correlated penetration sample, pre- and post-clip."""

    p_farm: float
    epsilons: tuple[float, ...]
    clipped: PenetrationVector


@dataclass(frozen=True)
class ScenarioDraw:
    """One sampled scenario tuple: fault parameters plus penetrations."""

    fault: FaultSpec
    penetration: PenetrationDraw


@dataclass
class ConvergenceTrace:
    """Resolution metric after each convergence check.

    ``entries`` holds (scenario count, epsilon_p in per-unit) pairs, one per
    check; with a batch size of one that is one entry per scenario.
    """

    entries: list[tuple[int, float]] = field(default_factory=list)
    converged_at: int | None = None
    hit_cap: bool = False
    tol_pu: float = 0.0
    percentile: float = 99.0


def calibrate_delta(r_max: float) -> float:
    """Deviation half-width enforcing the tap-to-farm correlation bound."""
    if not 0.0 < r_max < 1.0:
        raise RangeError(f"r_max {r_max} outside (0, 1)")
    var_farm = 1.0 / 12.0
    return math.sqrt(3.0 * var_farm * (1.0 / (r_max * r_max) - 1.0))


def analytic_correlation(delta: float) -> float:
    """Pre-clip correlation implied by a deviation half-width."""
    var_farm = 1.0 / 12.0
    var_eps = delta * delta / 3.0
    return math.sqrt(var_farm / (var_farm + var_eps))


def sample_penetration(rng: random.Random, delta: float, n_taps: int) -> PenetrationDraw:
    """Draw one correlated penetration vector.

    Clipping to [0, 1] happens after the correlated sum; no re-normalization
    is applied afterwards.
    """
    if delta < 0.0:
        raise RangeError("delta must be >= 0")
    p_farm = rng.random()
    epsilons = tuple(rng.uniform(-delta, delta) for _ in range(n_taps))
    clipped = PenetrationVector(
        tuple(min(1.0, max(0.0, p_farm + e)) for e in epsilons)
    )
    return PenetrationDraw(p_farm=p_farm, epsilons=epsilons, clipped=clipped)


def sample_scenario(rng: random.Random, cfg: McConfig, delta: float) -> ScenarioDraw:
    """Draw one scenario tuple.

    Draw order is fixed (penetration, fault type, location, resistance,
    inception angle) so a seeded stream is reproducible bit for bit.
    """
    penetration = sample_penetration(rng, delta, cfg.n_taps)
    fault_type = cfg.fault_types[rng.randrange(len(cfg.fault_types))]
    distance = cfg.fault_locations[rng.randrange(len(cfg.fault_locations))]
    r_index = rng.randrange(len(cfg.resistances_pu))
    inception = cfg.inception_angles[rng.randrange(len(cfg.inception_angles))]
    fault = FaultSpec(
        fault_type=fault_type,
        distance=distance,
        resistance=cfg.resistances_pu[r_index],
        inception_angle=inception,
        resistance_ohm=cfg.resistances_ohm[r_index],
    )
    return ScenarioDraw(fault=fault, penetration=penetration)


def nn_resolution(values, p: float) -> float:
    """p-th percentile of each sample's distance to its nearest neighbor.

    Interior points take the smaller of their two adjacent sorted gaps;
    the extremes have only one.  Duplicates legitimately yield zero gaps.
    """
    if len(values) < 2:
        raise InsufficientDataError("nearest-neighbor resolution needs at least 2 values")
    ordered = sorted(values)
    n = len(ordered)
    gaps = [ordered[i + 1] - ordered[i] for i in range(n - 1)]
    nearest = [0.0] * n
    nearest[0] = gaps[0]
    nearest[-1] = gaps[-1]
    for i in range(1, n - 1):
        nearest[i] = min(gaps[i - 1], gaps[i])
    return float(np.percentile(nearest, p))


def make_oracle(spec: FeederSpec, control: IbrControlConfig | None = None):
    """Bind the short-circuit solver into the callable the factory expects."""
    control = control or IbrControlConfig()

    def oracle(fault: FaultSpec, pen: PenetrationVector, scenario_id: int) -> ScenarioRecord:
        return solve_fault(spec, fault, pen, control, scenario_id=scenario_id)

    return oracle


def run_until_converged(spec: FeederSpec, cfg: McConfig, oracle=None, batch: int = 256):
    """Generate scenarios until the resolution criterion is met.

    Returns (records, trace).  Scenario ``i`` draws from its own RNG
    substream seeded with ``cfg.seed ^ i``, so the stream is identical
    regardless of batch size.  When the cap is reached unconverged the
    trace carries ``converged_at = None`` and ``hit_cap = True``.
    """
    if len(spec.taps) != cfg.n_taps:
        raise ConfigError(
            f"config expects {cfg.n_taps} taps, feeder {spec.name!r} has {len(spec.taps)}"
        )
    if batch < 1:
        raise ConfigError("batch must be >= 1")
    if oracle is None:
        oracle = make_oracle(spec)

    delta = calibrate_delta(cfg.r_max)
    tol_pu = cfg.tol_pu
    trace = ConvergenceTrace(tol_pu=tol_pu, percentile=cfg.percentile)
    records: list[ScenarioRecord] = []
    levels: list[float] = []

    for index in range(cfg.max_scenarios):
        rng = random.Random(cfg.seed ^ index)
        draw = sample_scenario(rng, cfg, delta)
        record = oracle(draw.fault, draw.penetration.clipped, index)
        records.append(record)
        levels.append(record.short_circuit_current)

        n = len(records)
        at_batch_boundary = n % batch == 0 or n == cfg.max_scenarios
        if at_batch_boundary and n >= 2:
            epsilon = nn_resolution(levels, cfg.percentile)
            trace.entries.append((n, epsilon))
            if tol_pu > 0.0 and epsilon <= tol_pu:
                trace.converged_at = n
                return records, trace

    trace.hit_cap = True
    return records, trace


# ---------------------------------------------------------------------------
# Config and trace files
# ---------------------------------------------------------------------------

def mc_config_from_dict(raw: dict, base_mva: float | None = None,
                        base_kv: float | None = None) -> McConfig:
    """Build a config from its JSON form.

    Resistances may be given in ohms (``resistances_ohm``, converted on the
    declared base) or directly per-unit (``resistances_pu``).  Bases in the
    file win over the ones passed in (normally the feeder file's).
    """
    if "n_taps" not in raw:
        raise ParseError("mc config missing field 'n_taps'", field="n_taps")
    base_mva = float(raw.get("base_mva", base_mva if base_mva is not None else 100.0))
    base_kv = float(raw.get("base_kv", base_kv if base_kv is not None else 34.5))
    z_base = base_kv ** 2 / base_mva

    kwargs = dict(
        n_taps=int(raw["n_taps"]),
        base_mva=base_mva,
        base_kv=base_kv,
    )
    if "resistances_pu" in raw and "resistances_ohm" in raw:
        raise ParseError("give resistances_pu or resistances_ohm, not both")
    if "resistances_pu" in raw:
        pu = tuple(float(r) for r in raw["resistances_pu"])
        kwargs["resistances_pu"] = pu
        kwargs["resistances_ohm"] = tuple(r * z_base for r in pu)
    elif "resistances_ohm" in raw:
        ohm = tuple(float(r) for r in raw["resistances_ohm"])
        kwargs["resistances_ohm"] = ohm
        kwargs["resistances_pu"] = tuple(r / z_base for r in ohm)

    for key, cast in (
        ("r_max", float), ("tol_amps", float), ("percentile", float),
        ("seed", int), ("max_scenarios", int),
    ):
        if key in raw:
            kwargs[key] = cast(raw[key])
    for key in ("fault_locations", "fault_types", "inception_angles"):
        if key in raw:
            kwargs[key] = tuple(raw[key])
    return McConfig(**kwargs)


def load_mc_config(path, base_mva: float | None = None,
                   base_kv: float | None = None) -> McConfig:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"mc config {path}: invalid JSON ({exc})") from exc
    return mc_config_from_dict(raw, base_mva, base_kv)


def with_seed(cfg: McConfig, seed: int) -> McConfig:
    return replace(cfg, seed=seed)


def save_trace_csv(trace: ConvergenceTrace, path) -> None:
    """Write the convergence trace: one (n, epsilon_p) row per check."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["n", "epsilon_p"])
        for n, epsilon in trace.entries:
            writer.writerow([n, repr(epsilon)])
