"""Design compiler for gradient-exposure airbridges."""

from .exposure import (
    DoseSample,
    FitReport,
    SubstrateCalibration,
    fit_calibration,
    forward_thickness,
    inverse_power,
)
from .profile import ArcProfile, StepPlan, build_arc, check_step_constraint, discretize
from .layout import (
    BridgeSpec,
    CompileOptions,
    ExposurePlan,
    MaterialMap,
    clip_band,
    compile_plan,
)
from .gds import GdsCell, GdsLibrary, plan_to_library, read_gds, write_gds
from .develop import DrcOptions, DrcReport, ResistField, run_drc, simulate
from .analysis import (
    QiSweep,
    SeriesResistanceData,
    fit_series,
    junction_delta,
    per_bridge_loss,
)

__version__ = "0.1.0"
