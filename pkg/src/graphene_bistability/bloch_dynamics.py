"""Time-domain optical Bloch equations with the graphene self-interaction.

State is (Z, rho21) with Z = rho22 - rho11 and rho21 the slowly varying
coherence in the frame of the drive; rho12 = conj(rho21).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .qed_coupling import CouplingSet

TOL_RANGE = (1e-12, 1e-4)


class StiffnessError(ArithmeticError):
    """The adaptive integrator could not make progress."""

    def __init__(self, message: str, t: float, state: "BlochState", step_index: int | None = None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.step_index = step_index


class PositivityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BlochState:
    z_pop: float
    coh: complex

    @classmethod
    def ground(cls) -> "BlochState":
        return cls(-1.0, 0j)

    def positivity_excess(self) -> float:
        """How far |rho21|^2 exceeds (1 - Z^2)/4 (<= 0 for a valid state)."""
        return abs(self.coh) ** 2 - (1.0 - self.z_pop**2) / 4.0

    def is_valid(self, slack: float = 0.0) -> bool:
        return -1.0 - slack <= self.z_pop <= 1.0 + slack and self.positivity_excess() <= slack

    def as_array(self) -> np.ndarray:
        return np.array([self.z_pop, self.coh.real, self.coh.imag])

    @classmethod
    def from_array(cls, y) -> "BlochState":
        return cls(float(y[0]), complex(y[1], y[2]))


@dataclass
class Trajectory:
    times: np.ndarray
    z_pop: np.ndarray
    coh: np.ndarray
    params_trace: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.z_pop = np.asarray(self.z_pop, dtype=float)
        self.coh = np.asarray(self.coh, dtype=complex)
        n = self.times.size
        if self.z_pop.size != n or self.coh.size != n:
            raise ValueError("trajectory arrays must have equal length")
        if self.params_trace is not None:
            self.params_trace = np.asarray(self.params_trace, dtype=float)
            if self.params_trace.size != n:
                raise ValueError("params_trace length mismatch")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size

    @property
    def states(self) -> list[BlochState]:
        return [BlochState(float(z), complex(r)) for z, r in zip(self.z_pop, self.coh)]

    @property
    def final(self) -> BlochState:
        return BlochState(float(self.z_pop[-1]), complex(self.coh[-1]))

    def to_csv(self, path: str | Path, header: Iterable[str] = ()) -> None:
        write_trajectory_csv(self, path, header)


def _rhs_components(z, r21, r12, c: CouplingSet):
    """Bloch right-hand side with rho12 treated as an independent variable.

    Returns (dZ, d rho21, d rho12). With r12 = conj(r21) this is the physical
    flow; the extended form is what the Jacobian differentiates.
    """
    g, om = c.feedback_g, c.rabi
    eff = om + g * r21
    eff_c = om.conjugate() + g.conjugate() * r12
    dz = -c.gamma_total * (z + 1.0) - 2j * eff_c * r21 + 2j * eff * r12
    d21 = (1j * c.detuning_eff - c.dephasing) * r21 - 1j * eff * z
    d12 = (-1j * c.detuning_eff - c.dephasing) * r12 + 1j * eff_c * z
    return dz, d21, d12


def bloch_rhs(s: BlochState, c: CouplingSet) -> BlochState:
    """Time derivative of (Z, rho21). dZ/dt is real by construction."""
    dz, d21, _ = _rhs_components(s.z_pop, s.coh, s.coh.conjugate(), c)
    return BlochState(dz.real, complex(d21))


def _real_rhs(c: CouplingSet):
    gam_t = c.gamma_total
    d, gam = c.detuning_eff, c.dephasing
    gr, gi = c.feedback_g.real, c.feedback_g.imag
    orr, oi = c.rabi.real, c.rabi.imag

    def f(_t, y):
        z, x, w = y
        # effective drive Omega + G rho21
        er = orr + gr * x - gi * w
        ei = oi + gr * w + gi * x
        # dZ = -Gamma(Z+1) + 4 Im(eff* rho21)
        dz = -gam_t * (z + 1.0) + 4.0 * (er * w - ei * x)
        dx = -gam * x - d * w + ei * z
        dw = d * x - gam * w - er * z
        return [dz, dx, dw]

    return f


def _check_tol(tol: float) -> None:
    lo, hi = TOL_RANGE
    if not lo <= tol <= hi:
        raise ValueError(f"tol must lie in [{lo:g}, {hi:g}], got {tol:g}")


def _solve(s0: BlochState, c: CouplingSet, t_end: float, tol: float, dense: bool = False):
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    _check_tol(tol)
    # oversized trial steps can overflow; the solver rejects and shrinks them
    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            _real_rhs(c),
            (0.0, t_end),
            s0.as_array(),
            method="DOP853",
            rtol=tol,
            atol=tol * 1e-3,
            dense_output=dense,
        )
    if sol.status < 0:
        y = sol.y[:, -1]
        raise StiffnessError(
            f"integration stopped at t = {sol.t[-1]:.6e} s: {sol.message}",
            float(sol.t[-1]),
            BlochState.from_array(y),
        )
    return sol


def integrate(
    s0: BlochState, c: CouplingSet, t_end: float, tol: float = 1e-9, *, dense: bool = False
) -> Trajectory:
    """Evolve ``s0`` for ``t_end`` seconds with an adaptive 8(5,3) Runge-Kutta pair.

    Every accepted step is kept. Density-matrix positivity is checked at each
    of them with slack 10 tol. With ``dense`` set the interpolant is stored in
    ``meta["sol"]``.
    """
    if not s0.is_valid(1e-12):
        raise ValueError(f"invalid initial state {s0}")
    sol = _solve(s0, c, t_end, tol, dense)
    z, x, w = sol.y
    excess = x * x + w * w - (1.0 - z * z) / 4.0
    worst = int(np.argmax(excess))
    if excess[worst] > 10.0 * tol:
        raise PositivityError(
            f"positivity violated by {excess[worst]:.3e} at t = {sol.t[worst]:.6e} s"
        )
    traj = Trajectory(sol.t, z, x + 1j * w)
    if dense:
        traj.meta["sol"] = sol.sol
    return traj


def default_dwell(c: CouplingSet) -> float:
    return max(50.0 / c.gamma_total, 50.0 / c.dephasing)


def adiabatic_sweep(
    schedule: Sequence[float],
    c_builder: Callable[[float], CouplingSet],
    dwell: float | Callable[[CouplingSet], float] | None = None,
    s0: BlochState | None = None,
    tol: float = 1e-9,
) -> Trajectory:
    """Step a control parameter through ``schedule``, carrying the state along.

    At each control value the couplings are rebuilt, the state is evolved for
    ``dwell`` seconds and the terminal state is recorded. ``dwell`` defaults
    to max(50/Gamma, 50/gamma) of each step; a callable receives the step's
    couplings. The returned trajectory's times are the cumulative elapsed
    times and ``params_trace`` holds the control values.
    """
    if len(schedule) == 0:
        raise ValueError("empty sweep schedule")
    state = s0 if s0 is not None else BlochState.ground()
    elapsed = 0.0
    times, zs, cohs = [], [], []
    for k, value in enumerate(schedule):
        c = c_builder(float(value))
        if dwell is None:
            step_dwell = default_dwell(c)
        else:
            step_dwell = dwell(c) if callable(dwell) else dwell
        if step_dwell < 20.0 / c.gamma_total:
            raise ValueError(f"dwell {step_dwell:.3e} s is below 20/Gamma at step {k}")
        try:
            state = integrate(state, c, step_dwell, tol).final
        except StiffnessError as exc:
            exc.step_index = k
            raise
        elapsed += step_dwell
        times.append(elapsed)
        zs.append(state.z_pop)
        cohs.append(state.coh)
    return Trajectory(times, zs, cohs, params_trace=np.asarray(schedule, dtype=float))


def write_trajectory_csv(traj: Trajectory, path: str | Path, header: Iterable[str] = ()) -> None:
    control = traj.params_trace if traj.params_trace is not None else [None] * len(traj)
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "Z", "Re_rho21", "Im_rho21", "control_value"])
        for t, z, r, v in zip(traj.times, traj.z_pop, traj.coh, control):
            w.writerow([fmt(t), fmt(z), fmt(r.real), fmt(r.imag), "" if v is None else fmt(v)])


def fmt(x: float) -> str:
    """17 significant digits in scientific notation (round-trips binary64)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.16e}"
