"""Project configuration: one JSON file drives both compile and verify.

Example::

    {
      "name": "demo",
      "calibrations": {"Al": "cal_Al.json",
                       "Si": {"dose_csv": "dose_Si.csv", "z0_um": 4.0}},
      "material_map": "map.json",
      "bridges": [{"id": "B1", "origin": [0, 0], "angle_deg": 0,
                   "length_um": 30, "width_um": 12, "height_um": 3,
                   "n_steps": 18}],
      "options": {"pier_margin": 1.1, "apex_clearance_um": 1.0,
                  "metal_thickness_um": 0.5, "pier_extension_um": 4.0,
                  "grid_pitch_um": 0.05, "timestamp": "1970-01-01T00:00:00"},
      "output_dir": "out"
    }

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Mapping

from .errors import AirbridgeError, ConfigError
from .exposure import (
    SubstrateCalibration,
    fit_calibration,
    load_calibration,
    read_dose_csv,
)
from .gds import FIXED_TIMESTAMP
from .layout import BridgeSpec, CompileOptions, MaterialMap, load_material_map

_OPTION_KEYS = {
    "pier_margin",
    "apex_clearance_um",
    "metal_thickness_um",
    "pier_extension_um",
    "grid_pitch_um",
    "timestamp",
}


@dataclass
class ProjectConfig:
    path: Path
    name: str
    calibrations: dict[str, SubstrateCalibration]
    material_map: MaterialMap
    bridges: list[BridgeSpec]
    compile_options: CompileOptions = field(default_factory=CompileOptions)
    grid_pitch: float = 0.05
    timestamp: datetime = FIXED_TIMESTAMP
    output_dir: Path = Path("out")


def _read_json(path: Path) -> Any:
    if not path.exists():
        raise ConfigError(f"{path}: file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None


def _resolve(base: Path, value: str, what: str, source: Path) -> Path:
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"{source}: {what} {value!r} not found")
    return p


def parse_timestamp(value: str) -> datetime:
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        raise ConfigError(f"bad timestamp {value!r}; expected ISO 8601") from None


def _load_calibration_entry(material: str, entry, base: Path, source: Path) -> SubstrateCalibration:
    if isinstance(entry, str):
        path = _resolve(base, entry, f"calibration for {material}", source)
        if path.suffix.lower() != ".csv":
            cal = load_calibration(path)
            if cal.material != material:
                raise ConfigError(
                    f"{source}: calibration file {entry!r} is for {cal.material!r}, not {material!r}"
                )
            return cal
        raise ConfigError(f"{source}: dose table for {material} needs {{'dose_csv', 'z0_um'}}")
    if isinstance(entry, Mapping) and "dose_csv" in entry:
        path = _resolve(base, entry["dose_csv"], f"dose table for {material}", source)
        if "z0_um" not in entry:
            raise ConfigError(f"{source}: dose table for {material} needs z0_um")
        report = fit_calibration(read_dose_csv(path), material, float(entry["z0_um"]))
        if not report.converged:
            raise ConfigError(f"{source}: calibration fit for {material} did not converge")
        return report.calibration
    raise ConfigError(f"{source}: malformed calibration entry for {material}")


def load_project(path, overrides: Mapping[str, Any] | None = None) -> ProjectConfig:
    """Load and validate a project file; ``overrides`` replace option values."""
    path = Path(path)
    doc = _read_json(path)
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: top level must be an object")
    base = path.parent
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    try:
        cals = {
            str(m): _load_calibration_entry(str(m), e, base, path)
            for m, e in sorted(doc.get("calibrations", {}).items())
        }
        if "material_map" in doc:
            mmap = load_material_map(_resolve(base, doc["material_map"], "material map", path))
        else:
            raise ConfigError(f"{path}: missing 'material_map'")

        bridges_doc = doc.get("bridges")
        if bridges_doc is None and "design" in doc:
            design_path = _resolve(base, doc["design"], "design file", path)
            bridges_doc = _read_json(design_path).get("bridges", [])
        bridges = [
            BridgeSpec.from_dict(b, source=f"{path}: bridges[{i}]")
            for i, b in enumerate(bridges_doc or [])
        ]
        n_steps = overrides.pop("n_steps", None)
        if n_steps is not None:
            bridges = [replace(b, n_steps=int(n_steps)) for b in bridges]

        opts = dict(doc.get("options", {}))
        unknown = set(opts) - _OPTION_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown option(s) {sorted(unknown)}")
        opts.update(overrides)
        compile_options = CompileOptions(
            pier_margin=float(opts.get("pier_margin", 1.10)),
            apex_clearance=float(opts.get("apex_clearance_um", 1.0)),
            pier_extension=float(opts.get("pier_extension_um", 4.0)),
            metal_thickness=float(opts.get("metal_thickness_um", 0.5)),
        )
        pitch = float(opts.get("grid_pitch_um", 0.05))
        if not pitch > 0:
            raise ConfigError(f"{path}: grid_pitch_um must be > 0")
        ts = opts.get("timestamp")
        timestamp = parse_timestamp(ts) if isinstance(ts, str) else FIXED_TIMESTAMP
    except ConfigError:
        raise
    except AirbridgeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    return ProjectConfig(
        path=path,
        name=str(doc.get("name", path.stem)),
        calibrations=cals,
        material_map=mmap,
        bridges=bridges,
        compile_options=compile_options,
        grid_pitch=pitch,
        timestamp=timestamp,
        output_dir=base / doc.get("output_dir", "out"),
    )
