"""One-terminal fault location for radial collector feeders with IBRs.

The package splits into a unit-free math core (phasors, feeder model,
short-circuit oracle, locators, Monte Carlo factory) and a thin I/O layer
(record files, benchmark harness, figures, CLI) where all base conversion
lives.
"""

from .errors import (
    ConfigError,
    DegenerateImpedanceError,
    FaultLocError,
    InsufficientDataError,
    InvalidInputError,
    NoConvergenceError,
    ParseError,
    RangeError,
    SingularLoopError,
    UnitError,
    UnsupportedTypeError,
)
from .feeder import (
    FeederFile,
    FeederSpec,
    GridSource,
    IbrTap,
    Segment,
    ValidationReport,
    load_feeder,
    save_feeder,
    segment_impedance,
    taps_upstream_of,
    validate,
)
from .harness import (
    ErrorSample,
    ErrorTable,
    aggregate,
    error_pct,
    run_benchmark,
)
from .locators import (
    CompensationInput,
    DistanceEstimate,
    LocatorConfig,
    LoopQuantities,
    compensation_voltage,
    estimate_distance_once,
    locate_classical,
    locate_compensated,
    practical_proxy_currents,
    select_loop,
)
from .montecarlo import (
    ConvergenceTrace,
    McConfig,
    PenetrationDraw,
    calibrate_delta,
    nn_resolution,
    run_until_converged,
    sample_penetration,
    sample_scenario,
)
from .oracle import (
    FAULT_TYPES,
    FaultSpec,
    IbrControlConfig,
    PenetrationVector,
    ScenarioRecord,
    TapSolution,
    short_circuit_magnitude,
    solve_fault,
    solve_prefault,
)
from .phasors import (
    ALPHA,
    Phasor,
    SequenceImpedances,
    SequenceSet,
    ThreePhaseSet,
    from_sequence,
    ground_loop_factor,
    phasor,
    to_sequence,
    zero_seq_factor,
)
from .records import RecordHeader, export_records, ingest_records

__version__ = "0.1.0"
