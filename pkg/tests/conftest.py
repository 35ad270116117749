from pathlib import Path

import pytest

from airbridge.exposure import SubstrateCalibration
from airbridge.layout import BridgeSpec, MaterialMap

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "demo"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture
def al_cal():
    return SubstrateCalibration("Al", z0=4.0, alpha=0.5, p0=10.0, p_clear=5.0)


@pytest.fixture
def si_cal():
    return SubstrateCalibration("Si", z0=4.0, alpha=0.55, p0=9.0, p_clear=6.2)


@pytest.fixture
def reference_bridge():
    return BridgeSpec("B1", (0.0, 0.0), 0.0, length=30.0, width=12.0, height=3.0, n_steps=18)


@pytest.fixture
def al_map():
    return MaterialMap(default_material="Al")


@pytest.fixture
def gap_map():
    """|x| < 5 is Si, everything else Al."""
    return MaterialMap(
        regions=[(((-5.0, -100.0), (5.0, -100.0), (5.0, 100.0), (-5.0, 100.0)), "Si")],
        default_material="Al",
    )
