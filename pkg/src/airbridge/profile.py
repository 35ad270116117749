"""Target arch profile of an airbridge deck and its equal-height staircase."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UnsupportedGeometryError


@dataclass(frozen=True)
class ArcProfile:
    """Circular arc through (±length/2, 0) with its apex at (0, height).

    All lengths in µm.  Heights are measured from the substrate plane.
    """

    length: float
    height: float
    radius: float

    def height_at(self, x):
        """Arc height at axial position ``x`` (scalar or array); 0 outside the chord."""
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= self.length / 2
        xi = np.where(inside, x, 0.0)
        y = np.sqrt(self.radius**2 - xi**2) - (self.radius - self.height)
        y = np.where(inside, np.maximum(y, 0.0), 0.0)
        return float(y) if y.ndim == 0 else y

    def crossing(self, level: float) -> float:
        """Positive x where the arc passes through height ``level``."""
        if level <= 0:
            return self.length / 2
        if level >= self.height:
            return 0.0
        d = self.radius - self.height + level
        return math.sqrt(max(self.radius**2 - d**2, 0.0))

    def max_slope(self) -> float:
        half = self.length / 2
        return half / math.sqrt(self.radius**2 - half**2)


def build_arc(length: float, height: float) -> ArcProfile:
    if not (math.isfinite(length) and length > 0):
        raise InvalidInputError(f"arc length must be > 0, got {length!r}")
    if not (math.isfinite(height) and height > 0):
        raise InvalidInputError(f"arc height must be > 0, got {height!r}")
    if height >= length / 2:
        raise UnsupportedGeometryError(
            f"arc height {height} must be below half the length ({length / 2})"
        )
    radius = length**2 / (8 * height) + height / 2
    return ArcProfile(length=float(length), height=float(height), radius=radius)


@dataclass(frozen=True)
class Band:
    """One constant-height step.

    ``index`` counts from 1 at the piers to ``n_steps`` at the apex.  The band
    covers ``x_inner <= |x| <= x_outer``; the apex band has ``x_inner == 0``
    and is a single span through the middle.
    """

    index: int
    x_inner: float
    x_outer: float
    target: float

    @property
    def spans(self) -> tuple[tuple[float, float], ...]:
        if self.x_inner == 0.0:
            return ((-self.x_outer, self.x_outer),)
        return ((-self.x_outer, -self.x_inner), (self.x_inner, self.x_outer))

    @property
    def width(self) -> float:
        """Axial width of one span."""
        if self.x_inner == 0.0:
            return 2 * self.x_outer
        return self.x_outer - self.x_inner

    @property
    def midpoints(self) -> tuple[float, ...]:
        return tuple((a + b) / 2 for a, b in self.spans)


@dataclass(frozen=True)
class StepPlan:
    profile: ArcProfile
    bands: tuple[Band, ...]
    step_height: float

    @property
    def n_steps(self) -> int:
        return len(self.bands)

    @property
    def steps(self):
        """(band_index, (x_start, x_end) spans, target) tuples, pier to apex."""
        return [(b.index, b.spans, b.target) for b in self.bands]

    def staircase_at(self, x):
        """Target resist height of the staircase at ``x``; 0 outside the chord."""
        x = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        # Outer-to-inner assignment leaves each boundary point in the higher band.
        for band in self.bands:
            out = np.where(x <= band.x_outer, band.target, out)
        out = np.where(x <= self.profile.length / 2, out, 0.0)
        return float(out) if out.ndim == 0 else out

    def min_band_width(self) -> float:
        return min(b.width for b in self.bands)


def discretize(profile: ArcProfile, n_steps: int) -> StepPlan:
    """Split the arc height into ``n_steps`` equal rises.

    Band k spans the arc between heights (k-1)·h and k·h and is assigned the
    height k·h of its upper edge, so the staircase meets the arc at every
    inner band boundary and at the apex.
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidInputError(f"n_steps must be a positive integer, got {n_steps!r}")
    n_steps = int(n_steps)
    h = profile.height / n_steps
    edges = [profile.crossing(k * h) for k in range(n_steps)] + [0.0]
    edges[0] = profile.length / 2
    bands = tuple(
        Band(
            index=k,
            x_inner=edges[k],
            x_outer=edges[k - 1],
            target=profile.height if k == n_steps else k * h,
        )
        for k in range(1, n_steps + 1)
    )
    return StepPlan(profile=profile, bands=bands, step_height=h)


@dataclass(frozen=True)
class StepCheck:
    passed: bool
    margin: float
    step_height: float
    metal_thickness: float


def check_step_constraint(plan: StepPlan | float, metal_thickness: float) -> StepCheck:
    """Metal film must be strictly thicker than one resist step."""
    if not metal_thickness > 0:
        raise InvalidInputError("metal thickness must be > 0")
    step = plan.step_height if isinstance(plan, StepPlan) else float(plan)
    margin = metal_thickness - step
    return StepCheck(
        passed=step < metal_thickness,
        margin=margin,
        step_height=step,
        metal_thickness=metal_thickness,
    )


def sample_staircase(plan: StepPlan, pitch: float = 0.05):
    """Sample (x, target) pairs across the chord at ``pitch`` µm."""
    if not pitch > 0:
        raise InvalidInputError("pitch must be > 0")
    half = plan.profile.length / 2
    n = int(math.floor(2 * half / pitch + 1e-9))
    xs = -half + pitch * np.arange(n + 1)
    if xs[-1] < half - 1e-12:
        xs = np.append(xs, half)
    return xs, plan.staircase_at(xs)


def preview_csv(plan: StepPlan, pitch: float = 0.05) -> str:
    xs, zs = sample_staircase(plan, pitch)
    lines = ["x_um,target_resist_um"]
    lines += [f"{x:.6f},{z:.6f}" for x, z in zip(xs, zs)]
    return "\n".join(lines) + "\n"


def preview_svg(plan: StepPlan, pitch: float = 0.05, scale: float = 20.0) -> str:
    """Staircase (and the arc it approximates) as a standalone SVG.

    The vertical axis is exaggerated 5x so the steps stay visible.
    """
    xs, zs = sample_staircase(plan, pitch)
    arc = plan.profile.height_at(xs)
    half = plan.profile.length / 2
    vx = 5.0
    width = 2 * half * scale + 20
    height = plan.profile.height * scale * vx + 20

    def pts(values: np.ndarray) -> str:
        return " ".join(
            f"{(x + half) * scale + 10:.2f},{height - 10 - z * scale * vx:.2f}"
            for x, z in zip(xs, values)
        )

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.2f} {height:.2f}">\n'
        f'  <polyline fill="none" stroke="#999" stroke-width="1" points="{pts(arc)}"/>\n'
        f'  <polyline fill="none" stroke="#c40" stroke-width="1.5" points="{pts(zs)}"/>\n'
        "</svg>\n"
    )

