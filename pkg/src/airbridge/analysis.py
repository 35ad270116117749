"""Regressions on measured airbridge data.

Series resistance is fitted against bridge count and junction resistance is
compared before and after a bake.  The loss each bridge adds to a resonator
comes from a line fit of 1/Qi at low power.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError

DEFAULT_N_MIN = 5
# Relative changes are reported to this many decimals; float noise in the
# inputs (e.g. 1.1 * R) sits near 1e-16 and is well below any measurement.
DELTA_DECIMALS = 12


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    zero_variance: bool
    slope_stderr: float
    n: int


def ols_line(x: Sequence[float], y: Sequence[float]) -> LineFit:
    """Ordinary least-squares line through (x, y).

    With zero variance in y the fit is flat and ``r_squared`` is reported
    as 0 with ``zero_variance`` set.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx == 0:
        raise InsufficientDataError("need at least two distinct x values")
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(dy @ dy)
    zero_var = ss_tot == 0
    r2 = 0.0 if zero_var else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    return LineFit(slope, intercept, r2, zero_var, stderr, n)


@dataclass(frozen=True)
class SeriesResistanceData:
    """(bridge count, resistance in Ω) pairs, kept sorted by count."""

    points: tuple[tuple[int, float], ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        pts = tuple(sorted((int(n), float(r)) for n, r in self.points))
        for n, r in pts:
            if n < 0:
                raise InvalidInputError(f"bridge count must be >= 0, got {n}")
            if not (math.isfinite(r) and r >= 0):
                raise InvalidInputError(f"resistance must be >= 0, got {r}")
        counts = [n for n, _ in pts]
        if len(set(counts)) != len(counts):
            raise InvalidInputError("bridge counts must be distinct")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class SeriesFit:
    per_bridge_ohms: float
    intercept_ohms: float
    r_squared: float
    zero_variance: bool
    slope_stderr: float


def fit_series(data: SeriesResistanceData) -> SeriesFit:
    if len(data.points) < 3:
        raise InsufficientDataError(f"series fit needs >= 3 points, got {len(data.points)}")
    n, r = zip(*data.points)
    line = ols_line(n, r)
    return SeriesFit(line.slope, line.intercept, line.r_squared, line.zero_variance, line.slope_stderr)


@dataclass(frozen=True)
class JunctionDelta:
    mean_relative_change: float
    dispersion: float
    n: int


def junction_delta(before: Sequence[float], after: Sequence[float]) -> JunctionDelta:
    """Mean and population standard deviation of (after - before) / before.

    Pairs are matched by position.  The sums are carried out in exact
    rational arithmetic and both results are rounded to ``DELTA_DECIMALS``
    decimal places, so a uniform +10% fixture reports exactly 0.1.
    """
    before, after = list(before), list(after)
    if len(before) != len(after):
        raise InvalidInputError(
            f"paired lists differ in length: {len(before)} before, {len(after)} after"
        )
    if not before:
        raise InsufficientDataError("no junction pairs")
    changes = []
    for i, (b, a) in enumerate(zip(before, after)):
        if not (math.isfinite(b) and b > 0 and math.isfinite(a) and a > 0):
            raise InvalidInputError(f"pair {i}: resistances must be positive")
        changes.append((Fraction(a) - Fraction(b)) / Fraction(b))
    mean = sum(changes, Fraction(0)) / len(changes)
    var = sum(((c - mean) ** 2 for c in changes), Fraction(0)) / len(changes)
    return JunctionDelta(
        float(round(mean, DELTA_DECIMALS)),
        round(math.sqrt(var), DELTA_DECIMALS),
        len(changes),
    )


def junction_delta_table(rows: Sequence[tuple[str, float, float]]) -> JunctionDelta:
    ids = [r[0] for r in rows]
    if len(set(ids)) != len(ids):
        raise InvalidInputError("duplicate junction id")
    return junction_delta([r[1] for r in rows], [r[2] for r in rows])


@dataclass(frozen=True)
class QiSweep:
    """Low-power internal quality factor per resonator, keyed by bridge count."""

    points: tuple[tuple[int, float], ...]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        pts = tuple(sorted((int(n), float(q)) for n, q in self.points))
        for n, q in pts:
            if n < 0:
                raise InvalidInputError(f"bridge count must be >= 0, got {n}")
            if not (math.isfinite(q) and q > 0):
                raise InvalidInputError(f"Qi must be > 0, got {q}")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class LossFit:
    loss_per_bridge: float
    base_loss: float
    n_used: int
    excluded: tuple[int, ...]
    r_squared: float


def per_bridge_loss(sweep: QiSweep, n_min: int = DEFAULT_N_MIN) -> LossFit:
    """Fit 1/Qi = base_loss + loss_per_bridge · N over resonators with N >= n_min.

    Resonators with fewer bridges are dropped: without enough bridges the
    ground planes are poorly tied together and parasitic modes, not bridge
    loss, set their Qi.
    """
    used = [(n, q) for n, q in sweep.points if n >= n_min]
    excluded = tuple(n for n, _ in sweep.points if n < n_min)
    if len({n for n, _ in used}) < 3:
        raise InsufficientDataError(
            f"loss fit needs >= 3 distinct bridge counts with N >= {n_min}"
        )
    n, q = zip(*used)
    line = ols_line(n, [1.0 / v for v in q])
    return LossFit(line.slope, line.intercept, len(used), excluded, line.r_squared)


# -- CSV ingestion ---------------------------------------------------------

def _read_table(text: str, header: tuple[str, ...], source: str):
    rows = []
    seen = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not seen:
            if tuple(fields) != header:
                raise InvalidInputError(f"{source}:{lineno}: expected header {','.join(header)!r}")
            seen = True
            continue
        if len(fields) != len(header):
            raise InvalidInputError(f"{source}:{lineno}: expected {len(header)} columns")
        rows.append((lineno, fields))
    if not seen:
        raise InvalidInputError(f"{source}: empty table")
    return rows


def _num(value: str, kind, source: str, lineno: int):
    try:
        return kind(value)
    except ValueError:
        raise InvalidInputError(f"{source}:{lineno}: bad number {value!r}") from None


def read_series_csv(path, text: str | None = None) -> SeriesResistanceData:
    src = str(path)
    text = Path(path).read_text() if text is None else text
    rows = _read_table(text, ("n_bridges", "resistance_ohm"), src)
    pts = [(_num(f[0], int, src, ln), _num(f[1], float, src, ln)) for ln, f in rows]
    try:
        return SeriesResistanceData(tuple(pts))
    except InvalidInputError as exc:
        raise InvalidInputError(f"{src}: {exc}") from None


def read_junction_csv(path, text: str | None = None) -> list[tuple[str, float, float]]:
    src = str(path)
    text = Path(path).read_text() if text is None else text
    rows = _read_table(text, ("junction_id", "r_before_ohm", "r_after_ohm"), src)
    return [(f[0], _num(f[1], float, src, ln), _num(f[2], float, src, ln)) for ln, f in rows]


def read_qi_csv(path, text: str | None = None) -> QiSweep:
    src = str(path)
    text = Path(path).read_text() if text is None else text
    rows = _read_table(text, ("n_bridges", "qi_low_power"), src)
    pts = [(_num(f[0], int, src, ln), _num(f[1], float, src, ln)) for ln, f in rows]
    try:
        return QiSweep(tuple(pts))
    except InvalidInputError as exc:
        raise InvalidInputError(f"{src}: {exc}") from None
