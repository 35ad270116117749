"""Beer's-law exposure model for a positive photoresist.

Laser light attenuates exponentially with depth, so the depth cleared by
development grows with the logarithm of the power reaching the resist
surface.  The residual thickness after development is

    z = z0 + (1/alpha) * ln(p_clear / (P - p0))

clamped to [0, z0].  ``p0`` is the offset between the applied power and the
power at the resist surface, ``p_clear`` the critical (dose-to-clear) power
at the tool's fixed dwell time.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, InsufficientDataError, InvalidInputError

log = logging.getLogger(__name__)

# Least-squares stopping rules.
MAX_ITERATIONS = 200
COST_RTOL = 1e-10
STEP_RTOL = 1e-8


@dataclass(frozen=True)
class DoseSample:
    """One dose-test point: applied power (mW) and measured residual (µm)."""

    power: float
    residual: float

    def __post_init__(self):
        if not (math.isfinite(self.power) and self.power > 0):
            raise InvalidInputError(f"dose sample power must be > 0, got {self.power!r}")
        if not (math.isfinite(self.residual) and self.residual >= 0):
            raise InvalidInputError(
                f"dose sample residual must be >= 0, got {self.residual!r}"
            )


@dataclass(frozen=True)
class SubstrateCalibration:
    """Fitted exposure parameters for one substrate material.

    Units: ``z0`` in µm, ``alpha`` in 1/µm, ``p0`` and ``p_clear`` in mW.
    """

    material: str
    z0: float
    alpha: float
    p0: float
    p_clear: float

    def __post_init__(self):
        for name in ("z0", "alpha", "p_clear"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInputError(f"{name} must be > 0, got {value!r}")
        if not (math.isfinite(self.p0) and self.p0 >= 0):
            raise InvalidInputError(f"p0 must be >= 0, got {self.p0!r}")

    @property
    def onset_power(self) -> float:
        """Largest power that removes no resist."""
        return self.p0 + self.p_clear

    @property
    def clear_power(self) -> float:
        """Smallest power that clears the full resist thickness."""
        return inverse_power(self, 0.0)

    def forward(self, power):
        return forward_thickness(self, power)

    def inverse(self, target_residual: float) -> float:
        return inverse_power(self, target_residual)


@dataclass(frozen=True)
class FitReport:
    calibration: SubstrateCalibration
    rms_residual: float
    iterations: int
    converged: bool
    n_used: int = 0
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return {
            "material": self.calibration.material,
            "z0_um": self.calibration.z0,
            "alpha_per_um": self.calibration.alpha,
            "p0_mw": self.calibration.p0,
            "p_clear_mw": self.calibration.p_clear,
            "rms_um": self.rms_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "n_used": self.n_used,
            "n_excluded": self.n_excluded,
        }


def forward_thickness(cal: SubstrateCalibration, power):
    """Residual resist thickness (µm) after exposure at ``power`` (mW).

    Accepts a scalar or an array of powers.  Powers at or below the onset
    power leave the full thickness ``z0``; large powers clamp at 0.
    """
    p = np.asarray(power, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("power must be finite")
    if np.any(p <= 0):
        raise InvalidInputError("power must be > 0")
    excess = p - cal.p0
    developing = excess > cal.p_clear
    safe = np.where(developing, excess, cal.p_clear)
    z = cal.z0 + np.log(cal.p_clear / safe) / cal.alpha
    z = np.where(developing, np.clip(z, 0.0, cal.z0), cal.z0)
    if z.ndim == 0:
        return float(z)
    return z


def inverse_power(cal: SubstrateCalibration, target_residual: float) -> float:
    """Applied power (mW) that develops the resist down to ``target_residual`` µm."""
    if not math.isfinite(target_residual) or not 0.0 <= target_residual <= cal.z0:
        raise DomainError(
            f"target residual {target_residual!r} outside [0, {cal.z0}] µm"
        )
    return cal.p0 + cal.p_clear * math.exp(cal.alpha * (cal.z0 - target_residual))


def _model(theta, powers, z0):
    alpha, p0, p_clear = theta
    return z0 + (np.log(p_clear) - np.log(powers - p0)) / alpha


def _jacobian(theta, powers):
    alpha, p0, p_clear = theta
    log_ratio = np.log(p_clear) - np.log(powers - p0)
    return np.column_stack(
        [
            -log_ratio / alpha**2,
            1.0 / (alpha * (powers - p0)),
            np.full_like(powers, 1.0 / (alpha * p_clear)),
        ]
    )


def _feasible(theta, p_min) -> bool:
    alpha, p0, p_clear = theta
    return alpha > 0 and p_clear > 0 and 0 <= p0 < p_min


def fit_calibration(
    samples: Sequence[DoseSample], material: str, z0: float
) -> FitReport:
    """Fit (alpha, p0, p_clear) to dose-test samples by damped Gauss-Newton.

    ``z0`` comes from profilometry and is held fixed.  Samples sitting exactly
    at 0 or ``z0`` only bound the curve from one side and are left out of the
    cost.  A run that hits the iteration cap returns ``converged=False``
    instead of raising.
    """
    if not (math.isfinite(z0) and z0 > 0):
        raise InvalidInputError(f"z0 must be > 0, got {z0!r}")
    samples = list(samples)
    if len(samples) < 3:
        raise InsufficientDataError(
            f"{len(samples)} samples cannot determine 3 free parameters"
        )
    for i, s in enumerate(samples):
        if s.residual > z0:
            raise InvalidInputError(
                f"sample {i} residual {s.residual} exceeds z0 = {z0}"
            )
    used = [s for s in samples if 0.0 < s.residual < z0]
    n_excluded = len(samples) - len(used)
    if n_excluded:
        log.info("excluding %d clamped samples from the fit", n_excluded)
    if len(used) < 4 or len({s.residual for s in used}) < 2:
        raise InsufficientDataError(
            f"need >= 4 unclamped samples with >= 2 distinct residuals, got {len(used)}"
        )

    powers = np.array([s.power for s in used])
    measured = np.array([s.residual for s in used])
    p_min = float(powers.min())

    p0_guess = 0.9 * p_min
    theta = np.array([1.0, p0_guess, 0.5 * (p_min - p0_guess)])
    resid = _model(theta, powers, z0) - measured
    cost = float(resid @ resid)
    damping = 1e-3
    converged = False
    iterations = 0

    while iterations < MAX_ITERATIONS and not converged:
        iterations += 1
        jac = _jacobian(theta, powers)
        normal = jac.T @ jac
        grad = jac.T @ resid
        diag = np.diag(np.diag(normal))
        while True:
            try:
                step = np.linalg.solve(normal + damping * diag, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = theta + step
                if _feasible(trial, p_min):
                    trial_resid = _model(trial, powers, z0) - measured
                    trial_cost = float(trial_resid @ trial_resid)
                    if np.isfinite(trial_cost) and trial_cost <= cost:
                        break
            damping *= 10.0
            if damping > 1e16:
                # No downhill step left at any damping: stationary point.
                converged = True
                break
        if converged:
            break
        rel_step = float(np.linalg.norm(step) / np.linalg.norm(theta))
        rel_drop = (cost - trial_cost) / cost if cost > 0 else 0.0
        theta, resid, cost = trial, trial_resid, trial_cost
        damping = max(damping / 10.0, 1e-12)
        if cost == 0.0 or rel_drop < COST_RTOL or rel_step < STEP_RTOL:
            converged = True

    rms = math.sqrt(cost / len(used))
    converged = converged and math.isfinite(rms)
    cal = SubstrateCalibration(
        material=material,
        z0=float(z0),
        alpha=float(theta[0]),
        p0=float(theta[1]),
        p_clear=float(theta[2]),
    )
    return FitReport(
        calibration=cal,
        rms_residual=rms,
        iterations=iterations,
        converged=converged,
        n_used=len(used),
        n_excluded=n_excluded,
    )


# -- file formats -----------------------------------------------------------

DOSE_HEADER = ("power_mw", "residual_um")


def parse_dose_csv(text: str, source: str = "<string>") -> list[DoseSample]:
    """Parse a ``power_mw,residual_um`` table; ``#`` starts a comment."""
    rows = []
    header_seen = False
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if not header_seen:
            if tuple(fields) != DOSE_HEADER:
                raise InvalidInputError(
                    f"{source}:{lineno}: expected header 'power_mw,residual_um'"
                )
            header_seen = True
            continue
        if len(fields) != 2:
            raise InvalidInputError(f"{source}:{lineno}: expected 2 columns")
        try:
            power, residual = float(fields[0]), float(fields[1])
        except ValueError:
            raise InvalidInputError(f"{source}:{lineno}: non-numeric value") from None
        try:
            rows.append(DoseSample(power, residual))
        except InvalidInputError as exc:
            raise InvalidInputError(f"{source}:{lineno}: {exc}") from None
    if not header_seen:
        raise InvalidInputError(f"{source}: empty dose table")
    return rows


def read_dose_csv(path) -> list[DoseSample]:
    path = Path(path)
    return parse_dose_csv(path.read_text(), source=str(path))


def write_dose_csv(samples: Iterable[DoseSample]) -> str:
    lines = [",".join(DOSE_HEADER)]
    lines += [f"{s.power!r},{s.residual!r}" for s in samples]
    return "\n".join(lines) + "\n"


def calibration_to_json(cal: SubstrateCalibration, rms: float | None = None) -> str:
    doc = {
        "material": cal.material,
        "z0_um": cal.z0,
        "alpha_per_um": cal.alpha,
        "p0_mw": cal.p0,
        "p_clear_mw": cal.p_clear,
        "rms_um": rms,
    }
    return json.dumps(doc, indent=2) + "\n"


def calibration_from_dict(doc: dict, source: str = "<dict>") -> SubstrateCalibration:
    try:
        return SubstrateCalibration(
            material=str(doc["material"]),
            z0=float(doc["z0_um"]),
            alpha=float(doc["alpha_per_um"]),
            p0=float(doc["p0_mw"]),
            p_clear=float(doc["p_clear_mw"]),
        )
    except KeyError as exc:
        raise InvalidInputError(f"{source}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{source}: {exc}") from None


def load_calibration(path) -> SubstrateCalibration:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}:{exc.lineno}: {exc.msg}") from None
    return calibration_from_dict(doc, source=str(path))


def save_calibration(path, cal: SubstrateCalibration, rms: float | None = None) -> None:
    Path(path).write_text(calibration_to_json(cal, rms))


__all__ = [
    "DoseSample",
    "SubstrateCalibration",
    "FitReport",
    "forward_thickness",
    "inverse_power",
    "fit_calibration",
    "parse_dose_csv",
    "read_dose_csv",
    "write_dose_csv",
    "load_calibration",
    "save_calibration",
    "calibration_to_json",
    "calibration_from_dict",
]
