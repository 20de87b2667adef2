import random

import pytest

from collector_faultloc import (
    FeederSpec,
    GridSource,
    IbrControlConfig,
    IbrTap,
    SequenceImpedances,
)

TAP_POSITIONS = (0.15, 0.35, 0.55, 0.75, 0.9)

#: standard arc-resistance ladder of the study, per-unit on 20 MVA / 34.5 kV
RESISTANCES_PU = tuple(r / (34.5 ** 2 / 20.0) for r in (0.0, 5.0, 10.0, 25.0, 40.0, 50.0))


def build_reference_feeder() -> FeederSpec:
    """Five-tap 34.5 kV collector feeder on its own 20 MVA base."""
    return FeederSpec(
        line=SequenceImpedances(z1=0.06 + 0.12j, z0=0.18 + 0.36j),
        source=GridSource(emf=1.0 + 0.0j, z1=0.016 + 0.08j, z0=0.03 + 0.12j),
        taps=tuple(
            IbrTap(f"wt{k + 1}", pos, 0.21) for k, pos in enumerate(TAP_POSITIONS)
        ),
        name="collector-demo",
    )


@pytest.fixture(scope="session")
def feeder() -> FeederSpec:
    return build_reference_feeder()


@pytest.fixture(scope="session")
def no_tap_feeder() -> FeederSpec:
    ref = build_reference_feeder()
    return FeederSpec(line=ref.line, source=ref.source, taps=(), name="no-taps")


@pytest.fixture(scope="session")
def control() -> IbrControlConfig:
    return IbrControlConfig()


@pytest.fixture()
def rng() -> random.Random:
    return random.Random(20240817)
