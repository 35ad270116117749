"""Forward check of a compiled plan: simulate development, then apply the design rules."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import geometry as geo
from .errors import InvalidInputError, MissingCalibrationError
from .exposure import SubstrateCalibration, forward_thickness
from .layout import BridgeSpec, ExposurePlan, MaterialMap, shared_z0
from .profile import build_arc, discretize

DEFAULT_PITCH = 0.05
# Comparison slack for the design rules (µm); far below any physical step.
DRC_TOL = 1e-6
# Footprint masks are shrunk by this much (µm) so cells within snapping
# distance of an outline are never judged.
EDGE_GUARD = 0.002


@dataclass(frozen=True)
class Grid:
    """Cell-centred raster: cell (i, j) sits at (x0 + j·pitch, y0 + i·pitch)."""

    x0: float
    y0: float
    pitch: float
    nx: int
    ny: int

    @classmethod
    def covering(cls, bounds, pitch: float = DEFAULT_PITCH, margin: float = 1.0) -> "Grid":
        if not pitch > 0:
            raise InvalidInputError("grid pitch must be > 0")
        xmin, ymin, xmax, ymax = bounds
        xmin, ymin = xmin - margin, ymin - margin
        xmax, ymax = xmax + margin, ymax + margin
        x0 = math.floor(xmin / pitch) * pitch + pitch / 2
        y0 = math.floor(ymin / pitch) * pitch + pitch / 2
        nx = max(1, int(math.ceil((xmax - x0) / pitch)) + 1)
        ny = max(1, int(math.ceil((ymax - y0) / pitch)) + 1)
        return cls(x0, y0, pitch, nx, ny)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.pitch * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.pitch * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.xs, self.ys)

    def extent(self):
        return (self.x0, self.y0, self.x0 + (self.nx - 1) * self.pitch, self.y0 + (self.ny - 1) * self.pitch)

    def index_of(self, x: float, y: float) -> tuple[int, int]:
        return int(round((y - self.y0) / self.pitch)), int(round((x - self.x0) / self.pitch))

    def index_range(self, lo: float, hi: float, axis_origin: float, n: int) -> tuple[int, int]:
        a = max(0, int(math.floor((lo - axis_origin) / self.pitch)))
        b = min(n, int(math.ceil((hi - axis_origin) / self.pitch)) + 1)
        return a, b


@dataclass
class ResistField:
    grid: Grid
    heights: np.ndarray  # (ny, nx) residual thickness, µm
    material_index: np.ndarray  # (ny, nx) index into ``materials``
    materials: tuple[str, ...]
    power: np.ndarray  # applied power per cell, 0 where unexposed
    z0: float

    def material_at(self, i: int, j: int) -> str:
        return self.materials[self.material_index[i, j]]

    def to_csv(self) -> str:
        xs, ys = self.grid.mesh()
        lines = ["x_um,y_um,height_um"]
        for x, y, h in zip(xs.ravel(), ys.ravel(), self.heights.ravel()):
            lines.append(f"{x:.4f},{y:.4f},{h:.6f}")
        return "\n".join(lines) + "\n"

    def to_pgm(self) -> bytes:
        """Binary 8-bit graymap; white is full resist, top row is max y."""
        scaled = np.clip(np.rint(self.heights / self.z0 * 255), 0, 255).astype(np.uint8)
        body = scaled[::-1].tobytes()
        head = f"P5\n{self.grid.nx} {self.grid.ny}\n255\n".encode("ascii")
        return head + body


def plan_bounds(plan: ExposurePlan):
    pts = [v for _, poly in plan.polygons() for v in poly.vertices]
    if not pts:
        return None
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    k = geo.NM_PER_UM
    return min(xs) / k, min(ys) / k, max(xs) / k, max(ys) / k


def resolve_materials(grid: Grid, material_map: MaterialMap):
    materials = sorted(material_map.materials)
    index = {m: i for i, m in enumerate(materials)}
    out = np.full((grid.ny, grid.nx), index[material_map.default_material], dtype=np.int32)
    xs, ys = grid.mesh()
    for region in material_map.regions:
        inside = geo.points_in_polygon(xs, ys, geo.to_um(region.nm))
        out[inside] = index[region.material]
    return out, tuple(materials)


def simulate(
    plan: ExposurePlan,
    material_map: MaterialMap,
    cals: Mapping[str, SubstrateCalibration],
    grid: Grid | None = None,
    pitch: float = DEFAULT_PITCH,
) -> ResistField:
    """Develop the resist under ``plan`` cell by cell.

    Each cell takes the power of the plan polygon covering its centre (the
    highest one where layers overlap) and the material the map puts there.
    """
    z0 = plan.z0 if plan.z0 is not None else shared_z0(cals)
    if z0 is None:
        raise InvalidInputError("no resist thickness: empty plan and no calibrations")
    if grid is None:
        bounds = plan_bounds(plan)
        if bounds is None:
            bounds = (-pitch, -pitch, pitch, pitch)
        grid = Grid.covering(bounds, pitch)

    power = np.zeros((grid.ny, grid.nx))
    xs_all, ys_all = grid.xs, grid.ys
    for layer, poly in plan.polygons():
        if not layer.power > 0:
            raise InvalidInputError(f"layer {layer.number} has non-positive power")
        x0, y0, x1, y1 = (c / geo.NM_PER_UM for c in geo.bbox(poly.vertices))
        ja, jb = grid.index_range(x0, x1, grid.x0, grid.nx)
        ia, ib = grid.index_range(y0, y1, grid.y0, grid.ny)
        if ja >= jb or ia >= ib:
            continue
        xs, ys = np.meshgrid(xs_all[ja:jb], ys_all[ia:ib])
        inside = geo.points_in_polygon(xs, ys, geo.to_um(poly.vertices))
        window = power[ia:ib, ja:jb]
        np.maximum(window, np.where(inside, layer.power, 0.0), out=window)

    mat_index, materials = resolve_materials(grid, material_map)
    heights = np.full((grid.ny, grid.nx), float(z0))
    exposed = power > 0
    for k, mat in enumerate(materials):
        cells = exposed & (mat_index == k)
        if not cells.any():
            continue
        cal = cals.get(mat)
        if cal is None:
            raise MissingCalibrationError(mat, "exposed cells in the simulated field")
        heights[cells] = forward_thickness(cal, power[cells])
    return ResistField(grid, heights, mat_index, materials, power, float(z0))


@dataclass(frozen=True)
class DrcOptions:
    metal_thickness: float = 0.5
    clearance_min: float = 1.0
    deviation_max: float | None = None  # None: half the bridge's step height
    pier_extension: float = 4.0


@dataclass
class BridgeDrc:
    bridge_id: str
    pier_cleared: bool
    pier_worst_residual: float
    max_step: float
    max_step_at: tuple[float, float] | None
    apex_clearance: float
    profile_deviation: float
    deviation_max: float
    step_ok: bool
    clearance_ok: bool
    deviation_ok: bool

    @property
    def passed(self) -> bool:
        return self.pier_cleared and self.step_ok and self.clearance_ok and self.deviation_ok


@dataclass
class DrcReport:
    pier_cleared: bool
    pier_worst_residual: float
    max_step: float
    max_step_at: tuple[float, float] | None
    apex_clearance: float
    profile_deviation: float
    passed: bool
    bridges: list[BridgeDrc] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    metal_thickness: float = 0.5
    clearance_min: float = 1.0

    def to_dict(self) -> dict:
        def b(d: BridgeDrc) -> dict:
            return {
                "id": d.bridge_id,
                "pass": d.passed,
                "pier_cleared": d.pier_cleared,
                "pier_worst_residual_um": d.pier_worst_residual,
                "max_step_um": d.max_step,
                "max_step_at_um": list(d.max_step_at) if d.max_step_at else None,
                "apex_clearance_um": d.apex_clearance,
                "profile_deviation_um": d.profile_deviation,
                "deviation_max_um": d.deviation_max,
            }

        return {
            "pass": self.passed,
            "pier_cleared": self.pier_cleared,
            "pier_worst_residual_um": self.pier_worst_residual,
            "max_step_um": self.max_step,
            "max_step_at_um": list(self.max_step_at) if self.max_step_at else None,
            "apex_clearance_um": self.apex_clearance,
            "profile_deviation_um": self.profile_deviation,
            "metal_thickness_um": self.metal_thickness,
            "clearance_min_um": self.clearance_min,
            "bridges": [b(d) for d in self.bridges],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _max_adjacent_jump(heights: np.ndarray, mask: np.ndarray, grid: Grid):
    best, where = 0.0, None
    for axis in (0, 1):
        if heights.shape[axis] < 2:
            continue
        a = [slice(None)] * 2
        b = [slice(None)] * 2
        a[axis] = slice(None, -1)
        b[axis] = slice(1, None)
        both = mask[tuple(a)] & mask[tuple(b)]
        if not both.any():
            continue
        jump = np.where(both, np.abs(heights[tuple(b)] - heights[tuple(a)]), 0.0)
        k = np.unravel_index(np.argmax(jump), jump.shape)
        if jump[k] > best:
            best = float(jump[k])
            i, j = k
            x = grid.x0 + (j + (0.5 if axis == 1 else 0.0)) * grid.pitch
            y = grid.y0 + (i + (0.5 if axis == 0 else 0.0)) * grid.pitch
            where = (float(x), float(y))
    return best, where


def check_bridge(field_: ResistField, bridge: BridgeSpec, options: DrcOptions) -> BridgeDrc:
    grid = field_.grid
    ext = options.pier_extension
    half_u = bridge.length / 2
    half_v = bridge.width / 2
    gx0, gy0, gx1, gy1 = grid.extent()
    for x, y in bridge.corners(ext):
        if not (gx0 <= x <= gx1 and gy0 <= y <= gy1):
            raise InvalidInputError(f"bridge {bridge.id}: footprint extends outside the field")

    steps = discretize(build_arc(bridge.length, bridge.height), bridge.n_steps)
    if grid.pitch > steps.min_band_width() / 4:
        raise InvalidInputError(
            f"bridge {bridge.id}: grid pitch {grid.pitch} µm is coarser than a quarter of "
            f"the narrowest band ({steps.min_band_width():.4f} µm)"
        )

    xs, ys = grid.mesh()
    u, v = bridge.to_local(xs, ys)
    in_width = np.abs(v) <= half_v - EDGE_GUARD
    footprint = in_width & (np.abs(u) <= half_u + ext - EDGE_GUARD)
    deck = in_width & (np.abs(u) <= half_u - EDGE_GUARD)
    pier = footprint & (np.abs(u) >= half_u + EDGE_GUARD) if ext > 0 else np.zeros_like(footprint)

    h = field_.heights
    pier_worst = float(h[pier].max()) if pier.any() else 0.0
    max_step, max_at = _max_adjacent_jump(h, footprint, grid)
    top = float(h[deck].max()) if deck.any() else field_.z0
    apex_clearance = field_.z0 - top

    deviation = 0.0
    for band in steps.bands:
        for mid in band.midpoints:
            x, y = bridge.to_world([(mid, 0.0)])[0]
            i, j = grid.index_of(x, y)
            deviation = max(deviation, abs(float(h[i, j]) - steps.profile.height_at(mid)))

    dev_max = options.deviation_max if options.deviation_max is not None else steps.step_height / 2
    return BridgeDrc(
        bridge_id=bridge.id,
        pier_cleared=pier_worst <= DRC_TOL,
        pier_worst_residual=pier_worst,
        max_step=max_step,
        max_step_at=max_at,
        apex_clearance=apex_clearance,
        profile_deviation=deviation,
        deviation_max=dev_max,
        step_ok=max_step < options.metal_thickness,
        clearance_ok=apex_clearance >= options.clearance_min - DRC_TOL,
        deviation_ok=deviation <= dev_max + DRC_TOL,
    )


def run_drc(
    field_: ResistField,
    bridges: Sequence[BridgeSpec],
    options: DrcOptions | None = None,
) -> DrcReport:
    """Check every bridge footprint and fold the results into one verdict.

    Profile deviation is sampled at the axial midpoint of every band on the
    bridge centreline and compared against the analytic arc.
    """
    options = options or DrcOptions()
    per = [check_bridge(field_, b, options) for b in bridges]
    warnings = [] if per else ["no bridges to check; passing vacuously"]
    if not per:
        return DrcReport(
            pier_cleared=True,
            pier_worst_residual=0.0,
            max_step=0.0,
            max_step_at=None,
            apex_clearance=field_.z0,
            profile_deviation=0.0,
            passed=True,
            warnings=warnings,
            metal_thickness=options.metal_thickness,
            clearance_min=options.clearance_min,
        )
    worst_step = max(per, key=lambda d: d.max_step)
    return DrcReport(
        pier_cleared=all(d.pier_cleared for d in per),
        pier_worst_residual=max(d.pier_worst_residual for d in per),
        max_step=worst_step.max_step,
        max_step_at=worst_step.max_step_at,
        apex_clearance=min(d.apex_clearance for d in per),
        profile_deviation=max(d.profile_deviation for d in per),
        passed=all(d.passed for d in per),
        bridges=per,
        warnings=warnings,
        metal_thickness=options.metal_thickness,
        clearance_min=options.clearance_min,
    )
