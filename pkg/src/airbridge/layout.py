"""Compile airbridge specifications into a per-power exposure plan.

Every bridge is cut into step bands (plus the two pier pads), each band is
clipped against the material map, and every fragment gets the laser power
that develops its underlying material down to the band's target height.
Fragments sharing a band and a material share one layer and one power.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import geometry as geo
from .errors import (
    CompileError,
    InvalidInputError,
    MissingCalibrationError,
    UnsupportedGeometryError,
)
from .exposure import SubstrateCalibration, inverse_power
from .profile import StepPlan, build_arc, discretize

log = logging.getLogger(__name__)

# Size range of bridges demonstrated in fabrication; outside it we only warn.
LENGTH_ENVELOPE_UM = (20.0, 200.0)
WIDTH_ENVELOPE_UM = (6.0, 30.0)

PIER_BAND = 0
MAX_GDS_LAYER = 32767


@dataclass(frozen=True)
class BridgeSpec:
    """Geometry of one airbridge; lengths in µm, ``axis_angle`` in degrees.

    ``origin`` is the chord midpoint.  The bridge axis runs along local u,
    the width along local v.
    """

    id: str
    origin: tuple[float, float]
    axis_angle: float
    length: float
    width: float
    height: float
    n_steps: int

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if not self.width > 0:
            raise InvalidInputError(f"bridge {self.id}: width must be > 0")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidInputError(f"bridge {self.id}: n_steps must be a positive integer")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    def envelope_warnings(self) -> list[str]:
        out = []
        lo, hi = LENGTH_ENVELOPE_UM
        if not lo <= self.length <= hi:
            out.append(f"bridge {self.id}: length {self.length} µm outside demonstrated {lo}-{hi} µm")
        lo, hi = WIDTH_ENVELOPE_UM
        if not lo <= self.width <= hi:
            out.append(f"bridge {self.id}: width {self.width} µm outside demonstrated {lo}-{hi} µm")
        return out

    def to_local(self, x, y):
        """World coordinates to (u, v) in the bridge frame; accepts arrays."""
        t = math.radians(self.axis_angle)
        c, s = math.cos(t), math.sin(t)
        if self.axis_angle % 90 == 0:
            c, s = round(c), round(s)
        dx, dy = x - self.origin[0], y - self.origin[1]
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, points):
        return geo.rotate_translate(points, self.axis_angle, self.origin)

    def corners(self, pier_extension: float = 0.0):
        half_u = self.length / 2 + pier_extension
        half_v = self.width / 2
        return self.to_world(
            [(-half_u, -half_v), (half_u, -half_v), (half_u, half_v), (-half_u, half_v)]
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "origin": list(self.origin),
            "angle_deg": self.axis_angle,
            "length_um": self.length,
            "width_um": self.width,
            "height_um": self.height,
            "n_steps": self.n_steps,
        }

    @classmethod
    def from_dict(cls, doc: Mapping, source: str = "<dict>") -> "BridgeSpec":
        try:
            return cls(
                id=str(doc["id"]),
                origin=tuple(doc.get("origin", (0.0, 0.0))),
                axis_angle=float(doc.get("angle_deg", 0.0)),
                length=float(doc["length_um"]),
                width=float(doc["width_um"]),
                height=float(doc["height_um"]),
                n_steps=doc.get("n_steps", 18),
            )
        except KeyError as exc:
            raise InvalidInputError(f"{source}: bridge missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise InvalidInputError(f"{source}: {exc}") from None
            raise InvalidInputError(f"{source}: bad bridge entry: {exc}") from None


@dataclass(frozen=True)
class Region:
    polygon: tuple[tuple[float, float], ...]
    material: str

    @cached_property
    def nm(self) -> geo.Polygon:
        return geo.snap(self.polygon)


@dataclass(frozen=True)
class MaterialMap:
    """Material under every point of the chip plane.

    Regions are painted in order, so later regions win where they overlap;
    everything left uncovered is ``default_material``.  ``bounds`` optionally
    gives the chip extent (xmin, ymin, xmax, ymax) in µm.
    """

    regions: tuple[Region, ...] = ()
    default_material: str = "Si"
    bounds: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        regions = tuple(
            r if isinstance(r, Region) else Region(tuple(map(tuple, r[0])), r[1])
            for r in self.regions
        )
        object.__setattr__(self, "regions", regions)
        for i, r in enumerate(regions):
            if len(r.polygon) < 3 or geo.signed_area2(r.nm) == 0:
                raise InvalidInputError(f"region {i} ({r.material}) has no area")
            if not geo.is_simple(r.nm):
                raise InvalidInputError(f"region {i} ({r.material}) is self-intersecting")

    @property
    def materials(self) -> set[str]:
        return {self.default_material} | {r.material for r in self.regions}

    def material_at(self, x: float, y: float) -> str:
        mat = self.default_material
        px, py = np.array([x]), np.array([y])
        for r in self.regions:
            if geo.points_in_polygon(px, py, geo.to_um(r.nm))[0]:
                mat = r.material
        return mat

    def contains(self, points) -> bool:
        if self.bounds is None:
            return True
        x0, y0, x1, y1 = self.bounds
        return all(x0 <= x <= x1 and y0 <= y <= y1 for x, y in points)

    def to_dict(self) -> dict:
        doc = {
            "default_material": self.default_material,
            "regions": [
                {"material": r.material, "polygon": [list(p) for p in r.polygon]}
                for r in self.regions
            ],
        }
        if self.bounds is not None:
            doc["bounds"] = list(self.bounds)
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping, source: str = "<dict>") -> "MaterialMap":
        try:
            regions = tuple(
                Region(tuple((float(x), float(y)) for x, y in r["polygon"]), str(r["material"]))
                for r in doc.get("regions", [])
            )
            bounds = doc.get("bounds")
            return cls(
                regions=regions,
                default_material=str(doc["default_material"]),
                bounds=tuple(float(b) for b in bounds) if bounds is not None else None,
            )
        except KeyError as exc:
            raise InvalidInputError(f"{source}: missing field {exc.args[0]!r}") from None
        except InvalidInputError as exc:
            raise InvalidInputError(f"{source}: {exc}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"{source}: malformed material map: {exc}") from None


def load_material_map(path) -> MaterialMap:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return MaterialMap.from_dict(doc, source=str(path))


@dataclass(frozen=True)
class Fragment:
    polygon: geo.Polygon  # integer nm
    material: str

    @property
    def area_um2(self) -> float:
        return geo.area_um2(self.polygon)


def _clip_nm(band: geo.Polygon, material_map: MaterialMap) -> list[Fragment]:
    band_area = geo.area_nm2(band)
    if band_area == 0:
        return []
    bx0, by0, bx1, by1 = geo.bbox(band)
    remaining: list[geo.Polygon] = [band]
    frags: list[Fragment] = []
    for region in reversed(material_map.regions):
        rx0, ry0, rx1, ry1 = geo.bbox(region.nm)
        if rx1 <= bx0 or rx0 >= bx1 or ry1 <= by0 or ry0 >= by1:
            continue
        pieces = geo.intersection(remaining, region.nm)
        if not pieces:
            continue
        frags.extend(Fragment(p, region.material) for p in pieces)
        remaining = geo.difference(remaining, region.nm)
        if not remaining:
            break
    if remaining == [band]:
        return [Fragment(band, material_map.default_material)]
    frags.extend(Fragment(p, material_map.default_material) for p in geo.flatten(remaining))
    if len(frags) == 1 and geo.area_nm2(frags[0].polygon) == band_area:
        return [Fragment(band, frags[0].material)]
    return frags


def clip_band(band_rect, material_map: MaterialMap) -> list[Fragment]:
    """Partition a band polygon (µm vertices) by underlying material.

    Fragment polygons come back on the integer nanometre grid.
    """
    band = geo.snap(band_rect)
    if len(band) < 3 or geo.area_nm2(band) == 0:
        return []
    return _clip_nm(geo.normalize(band), material_map)


@dataclass(frozen=True)
class CompileOptions:
    pier_margin: float = 1.10
    apex_clearance: float = 1.0
    pier_extension: float = 4.0
    metal_thickness: float = 0.5

    def __post_init__(self):
        if not 1.0 <= self.pier_margin <= 2.0:
            raise InvalidInputError(f"pier_margin {self.pier_margin} outside [1.0, 2.0]")
        if self.apex_clearance < 0:
            raise InvalidInputError("apex_clearance must be >= 0")
        if self.pier_extension < 0:
            raise InvalidInputError("pier_extension must be >= 0")
        if not self.metal_thickness > 0:
            raise InvalidInputError("metal_thickness must be > 0")


@dataclass(frozen=True)
class PlanPolygon:
    vertices: geo.Polygon  # integer nm, counter-clockwise
    bridge_id: str
    band_index: int
    material: str

    @property
    def area_um2(self) -> float:
        return geo.area_um2(self.vertices)


@dataclass(frozen=True)
class Layer:
    number: int
    power: float  # mW
    material: str
    band_index: int
    target: float  # µm of resist left after development
    polygons: tuple[PlanPolygon, ...]


@dataclass(frozen=True)
class ExposurePlan:
    layers: tuple[Layer, ...]
    z0: float | None
    bridges: tuple[BridgeSpec, ...] = ()
    options: CompileOptions = field(default_factory=CompileOptions)
    warnings: tuple[str, ...] = ()

    @property
    def sidecar(self) -> dict[int, float]:
        return {layer.number: layer.power for layer in self.layers}

    def sidecar_csv(self) -> str:
        lines = ["layer,power_mw"]
        lines += [f"{layer.number},{layer.power!r}" for layer in self.layers]
        return "\n".join(lines) + "\n"

    def polygons(self):
        for layer in self.layers:
            for poly in layer.polygons:
                yield layer, poly

    def to_dict(self) -> dict:
        return {
            "z0_um": self.z0,
            "layers": [
                {
                    "layer": layer.number,
                    "power_mw": layer.power,
                    "material": layer.material,
                    "band": layer.band_index,
                    "target_um": layer.target,
                    "polygons": [
                        {
                            "bridge": p.bridge_id,
                            "band": p.band_index,
                            "material": p.material,
                            "vertices_nm": [list(v) for v in p.vertices],
                        }
                        for p in layer.polygons
                    ],
                }
                for layer in self.layers
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def bridge_bands(bridge: BridgeSpec, steps: StepPlan, pier_extension: float):
    """(band_index, target, axial span) triples including both pier pads."""
    half = bridge.length / 2
    out = []
    if pier_extension > 0:
        out.append((PIER_BAND, 0.0, (-half - pier_extension, -half)))
        out.append((PIER_BAND, 0.0, (half, half + pier_extension)))
    for band in steps.bands:
        for span in band.spans:
            out.append((band.index, band.target, span))
    return out


def shared_z0(cals: Mapping[str, SubstrateCalibration]) -> float | None:
    if not cals:
        return None
    values = sorted({c.z0 for c in cals.values()})
    if not math.isclose(values[0], values[-1], rel_tol=1e-12, abs_tol=0.0):
        raise CompileError(
            "calibrations disagree on resist thickness z0: "
            + ", ".join(f"{m}={c.z0}" for m, c in sorted(cals.items()))
        )
    return values[0]


def compile_plan(
    bridges: Sequence[BridgeSpec],
    material_map: MaterialMap,
    cals: Mapping[str, SubstrateCalibration],
    options: CompileOptions | None = None,
) -> ExposurePlan:
    """Build the exposure plan for ``bridges`` over ``material_map``.

    Layer numbers are ``band_index * M + material_ordinal`` where M is the
    number of calibrated materials (ordinals by sorted tag).  When bridges use
    different (height, n_steps) pairs, each pair gets its own block of layer
    numbers so a layer never needs two powers.
    """
    options = options or CompileOptions()
    bridges = list(bridges)
    for mat, cal in cals.items():
        if cal.material != mat:
            raise CompileError(f"calibration keyed {mat!r} is for material {cal.material!r}")
    z0 = shared_z0(cals)
    ids = [b.id for b in bridges]
    if len(set(ids)) != len(ids):
        raise CompileError("bridge ids must be unique")
    if not bridges:
        return ExposurePlan(layers=(), z0=z0, bridges=(), options=options)
    if z0 is None:
        raise MissingCalibrationError(material_map.default_material, "no calibrations loaded")

    materials = sorted(cals)
    ordinal = {m: i for i, m in enumerate(materials)}
    n_mat = len(materials)
    groups = sorted({(b.height, b.n_steps) for b in bridges})
    group_of = {g: i for i, g in enumerate(groups)}
    block = (max(b.n_steps for b in bridges) + 1) * n_mat
    ceiling = z0 - options.apex_clearance
    if ceiling <= 0:
        raise CompileError(
            f"apex clearance {options.apex_clearance} µm leaves no resist below z0 = {z0} µm"
        )

    warnings: list[str] = []
    collected: list[tuple[int, float, float, PlanPolygon]] = []
    for bridge in bridges:
        for msg in bridge.envelope_warnings():
            log.warning(msg)
            warnings.append(msg)
        if not bridge.height < z0:
            raise UnsupportedGeometryError(
                f"bridge {bridge.id}: height {bridge.height} µm not below resist z0 = {z0} µm"
            )
        if not material_map.contains(bridge.corners(options.pier_extension)):
            raise CompileError(f"bridge {bridge.id}: footprint leaves the material map bounds")
        steps = discretize(build_arc(bridge.length, bridge.height), bridge.n_steps)
        base = group_of[(bridge.height, bridge.n_steps)] * block
        half_w = bridge.width / 2
        for band_index, target, (u0, u1) in bridge_bands(bridge, steps, options.pier_extension):
            rect = bridge.to_world([(u0, -half_w), (u1, -half_w), (u1, half_w), (u0, half_w)])
            band_nm = geo.snap(rect)
            if geo.area_nm2(band_nm) == 0:
                log.info("bridge %s band %d: zero-area span dropped", bridge.id, band_index)
                continue
            for frag in _clip_nm(geo.normalize(band_nm), material_map):
                if geo.area_nm2(frag.polygon) == 0:
                    log.info("bridge %s band %d: zero-area fragment dropped", bridge.id, band_index)
                    continue
                cal = cals.get(frag.material)
                if cal is None:
                    raise MissingCalibrationError(frag.material, f"under bridge {bridge.id}")
                goal = min(target, ceiling)
                power = inverse_power(cal, goal)
                if band_index == PIER_BAND:
                    power *= options.pier_margin
                number = base + band_index * n_mat + ordinal[frag.material]
                if number > MAX_GDS_LAYER:
                    raise CompileError(f"layer number {number} exceeds the GDSII layer range")
                collected.append(
                    (number, power, goal, PlanPolygon(frag.polygon, bridge.id, band_index, frag.material))
                )

    by_layer: dict[int, list] = {}
    for number, power, goal, poly in collected:
        by_layer.setdefault(number, []).append((power, goal, poly))
    layers = []
    for number in sorted(by_layer):
        entries = by_layer[number]
        powers = {p for p, _, _ in entries}
        if len(powers) != 1:
            raise CompileError(f"layer {number} would need {len(powers)} different powers")
        polys = sorted(
            (e[2] for e in entries),
            key=lambda p: (p.bridge_id, p.band_index, p.material, p.vertices),
        )
        first = polys[0]
        layers.append(
            Layer(
                number=number,
                power=entries[0][0],
                material=first.material,
                band_index=first.band_index,
                target=entries[0][1],
                polygons=tuple(polys),
            )
        )
    return ExposurePlan(
        layers=tuple(layers),
        z0=z0,
        bridges=tuple(bridges),
        options=options,
        warnings=tuple(warnings),
    )
