"""Switching times near fold bifurcations and critical-exponent fits.

A quench prepares the atom on one stable branch, steps a control parameter
past the fold where that branch disappears and measures the time to the
first extremum of Z(t) on the way to the other branch. Close to the fold the
time diverges as a power of the distance to the critical value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .bloch_dynamics import BlochState, Trajectory, integrate
from .physics_core import SystemParams
from .qed_coupling import coupling_set
from .steady_state import cubic_coefficients, steady_roots

CONTROLS = {"fermi_energy": "fermi_energy", "intensity": "intensity", "detuning": "detuning0"}
LOWER_TO_UPPER = "lower_to_upper"
UPPER_TO_LOWER = "upper_to_lower"

LADDER_POINTS = 8
LADDER_MIN = 1e-4
LADDER_MAX = 3e-2
MIN_DECADES = 1.5


class BracketError(ValueError):
    pass


class HorizonError(ArithmeticError):
    pass


class FitQualityError(ValueError):
    pass


def params_at(params: SystemParams, control: str, value: float) -> SystemParams:
    try:
        return params.with_(**{CONTROLS[control]: float(value)})
    except KeyError:
        raise ValueError(f"unknown control {control!r}; expected one of {sorted(CONTROLS)}") from None


def discriminant(params: SystemParams, control: str, value: float, lamb: str = "kk") -> float:
    return cubic_coefficients(coupling_set(params_at(params, control, value), lamb=lamb)).disc


def find_critical_value(
    control: str,
    params: SystemParams,
    bracket: tuple[float, float],
    *,
    lamb: str = "kk",
    rel_width: float = 1e-12,
) -> float:
    """Bisect the sign change of the cubic discriminant inside ``bracket``."""
    a, b = map(float, bracket)
    da = discriminant(params, control, a, lamb)
    db = discriminant(params, control, b, lamb)
    if da == 0:
        return a
    if db == 0:
        return b
    if (da > 0) == (db > 0):
        raise BracketError(
            f"discriminant has the same sign at both ends of [{a}, {b}] ({da:.3e}, {db:.3e})"
        )
    scale = max(abs(a), abs(b))
    return bisect(
        lambda v: discriminant(params, control, v, lamb), a, b, xtol=rel_width * scale, maxiter=200
    )


@dataclass(frozen=True)
class QuenchSpec:
    control: str
    start_value: float
    end_value: float
    prepare_dwell: float  # s
    measure_horizon: float  # s
    direction: str

    def __post_init__(self) -> None:
        if self.control not in CONTROLS:
            raise ValueError(f"unknown control {self.control!r}")
        if self.direction not in (LOWER_TO_UPPER, UPPER_TO_LOWER):
            raise ValueError(f"unknown direction {self.direction!r}")
        if not (self.prepare_dwell > 0 and self.measure_horizon > 0):
            raise ValueError("dwell and horizon must be > 0")


@dataclass(frozen=True)
class SwitchingResult:
    tau_s: float
    z_extremum: float
    trajectory: Trajectory = field(repr=False)


def _prepare(q: QuenchSpec, params: SystemParams, tol: float, lamb: str) -> BlochState:
    c0 = coupling_set(params_at(params, q.control, q.start_value), lamb=lamb)
    roots = steady_roots(c0)
    root = roots.lower() if q.direction == LOWER_TO_UPPER else roots.upper()
    s0 = BlochState(root.z_pop, root.coh)
    return integrate(s0, c0, q.prepare_dwell, tol).final


def switching_time(
    q: QuenchSpec, params: SystemParams, *, tol: float = 1e-9, lamb: str = "kk"
) -> SwitchingResult:
    """Time from an instantaneous quench to the first extremum of Z(t).

    The maximum of Z is used for lower-to-upper switching and the minimum for
    upper-to-lower. An extremum only counts if it stands out from the final
    value by more than 1e-6 of the excursion, so a monotone relaxation raises
    :class:`HorizonError`.
    """
    c1 = coupling_set(params_at(params, q.control, q.end_value), lamb=lamb)
    if q.measure_horizon < 1e3 / c1.gamma_total:
        raise ValueError("measure_horizon must be at least 1e3/Gamma")
    s_prep = _prepare(q, params, tol, lamb)
    traj = integrate(s_prep, c1, q.measure_horizon, tol, dense=True)
    sign = 1.0 if q.direction == LOWER_TO_UPPER else -1.0
    z = sign * traj.z_pop
    k = int(np.argmax(z))  # first occurrence: ties go to the earliest time
    excursion = abs(traj.z_pop[-1] - traj.z_pop[0])
    if k == 0 or k >= len(traj) - 2 or z[k] - z[-1] <= 1e-6 * max(excursion, 1e-12):
        raise HorizonError(
            f"no {'maximum' if sign > 0 else 'minimum'} of Z before t = {q.measure_horizon:.3e} s "
            f"(end value {q.end_value}); the relaxation is monotone or needs a longer horizon"
        )
    t_ext, z_ext = _refine_extremum(traj, k, sign)
    return SwitchingResult(t_ext, z_ext, traj)


def _refine_extremum(traj: Trajectory, k: int, sign: float) -> tuple[float, float]:
    sol = traj.meta["sol"]
    t_lo, t_hi = traj.times[k - 1], traj.times[k + 1]
    ts = np.linspace(t_lo, t_hi, 401)
    zs = sign * sol(ts)[0]
    j = int(np.clip(np.argmax(zs), 1, ts.size - 2))
    # vertex of the parabola through the three samples around the discrete maximum
    h = ts[1] - ts[0]
    y0, y1, y2 = zs[j - 1], zs[j], zs[j + 1]
    denom = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
    t_ext = ts[j] + shift * h
    return float(t_ext), float(sol(t_ext)[0])


@dataclass(frozen=True)
class PowerLawFit:
    alpha: float
    critical_value: float
    r_squared: float
    points: tuple[tuple[float, float], ...]
    alpha_stderr: float = float("nan")
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "alpha_stderr": self.alpha_stderr,
            "critical_value": self.critical_value,
            "r_squared": self.r_squared,
            "points": [{"offset": o, "tau_s": t} for o, t in self.points],
            "meta": self.meta,
        }


def fit_power_law(
    points: Sequence[tuple[float, float]], critical_value: float = float("nan")
) -> PowerLawFit:
    """Least-squares line through (log offset, log tau_s); alpha = -slope."""
    pts = sorted((float(o), float(t)) for o, t in points)
    if len(pts) < 5:
        raise FitQualityError(f"need at least 5 points, got {len(pts)}")
    off = np.array([p[0] for p in pts])
    tau = np.array([p[1] for p in pts])
    if np.any(off <= 0) or np.any(tau <= 0):
        raise FitQualityError("offsets and switching times must be > 0")
    if np.log10(off[-1] / off[0]) < MIN_DECADES - 1e-12:
        raise FitQualityError(
            f"offsets span {np.log10(off[-1] / off[0]):.2f} decades; at least {MIN_DECADES} needed"
        )
    x, y = np.log(off), np.log(tau)
    (slope, icpt), cov = np.polyfit(x, y, 1, cov=True)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    stderr = float(math.sqrt(cov[0, 0]))
    return PowerLawFit(float(-slope), critical_value, r2, tuple(pts), stderr)


def default_ladder(max_offset: float | None = None, n: int = LADDER_POINTS) -> np.ndarray:
    """Log-spaced offsets from 1e-4 to 3e-2, clipped to ``max_offset``.

    If clipping leaves less than 1.5 decades, the lower end moves down so that
    the ladder spans 1.75 decades.
    """
    hi = LADDER_MAX if max_offset is None else min(LADDER_MAX, max_offset)
    lo = LADDER_MIN
    if hi / lo < 10**MIN_DECADES:
        lo = hi / 10**1.75
    return np.geomspace(lo, hi, n)


def landing_gap(
    control: str,
    params: SystemParams,
    critical_value: float,
    side: float,
    *,
    lamb: str = "kk",
    reach: float = LADDER_MAX,
    samples: int = 400,
) -> float:
    """Distance beyond the fold over which the control stays monostable.

    Scans the discriminant outward from ``critical_value`` in direction
    ``side`` (+1 or -1) and returns the first distance at which it turns
    positive again, or infinity if that does not happen within ``reach``.
    """
    for d in np.geomspace(1e-6, reach, samples):
        if discriminant(params, control, critical_value + side * d, lamb) > 0:
            return float(d)
    return math.inf


@dataclass(frozen=True)
class LadderSpec:
    control: str
    start_value: float
    bracket: tuple[float, float]
    direction: str = LOWER_TO_UPPER
    offsets: tuple[float, ...] | None = None
    horizon_gamma: float = 1e3  # horizon in units of 1/Gamma at the end value
    prepare_gamma: float = 50.0


def run_ladder(
    spec: LadderSpec, params: SystemParams, *, tol: float = 1e-9, lamb: str = "kk"
) -> PowerLawFit:
    """Critical value, quench ladder and power-law fit for one configuration."""
    crit = find_critical_value(spec.control, params, spec.bracket, lamb=lamb)
    # quench to the far side of the fold from the start value
    side = 1.0 if spec.start_value < crit else -1.0
    if spec.offsets is None:
        gap = landing_gap(spec.control, params, crit, side, lamb=lamb)
        offsets = default_ladder(0.5 * gap)
    else:
        offsets = np.asarray(spec.offsets, dtype=float)
    c_start = coupling_set(params_at(params, spec.control, spec.start_value), lamb=lamb)
    points = []
    for off in offsets:
        end = crit + side * off
        c_end = coupling_set(params_at(params, spec.control, end), lamb=lamb)
        q = QuenchSpec(
            spec.control,
            spec.start_value,
            end,
            prepare_dwell=spec.prepare_gamma / c_start.gamma_total,
            measure_horizon=spec.horizon_gamma / c_end.gamma_total,
            direction=spec.direction,
        )
        points.append((float(off), switching_time(q, params, tol=tol, lamb=lamb).tau_s))
    fit = fit_power_law(points, crit)
    fit.meta.update(
        {
            "control": spec.control,
            "direction": spec.direction,
            "start_value": spec.start_value,
            "quench_side": "above" if side > 0 else "below",
            "offset_convention": "|end_value - critical_value| on the side where switching completes",
            "z_distance_nm": params.z_distance,
        }
    )
    return fit


def write_fit_json(fit: PowerLawFit, path: str | Path, provenance: dict | None = None) -> None:
    doc = fit.to_json()
    if provenance is not None:
        doc["provenance"] = provenance
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
