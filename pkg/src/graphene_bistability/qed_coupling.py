"""Emitter-environment coupling constants.

Turns a :class:`SystemParams` into the rates and frequencies that enter the
optical Bloch equations: Purcell-enhanced decay rate, Lamb shift, the complex
self-interaction (feedback) constant and the renormalised Rabi frequency.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .graphene_response import GrapheneParams, local_conductivity, nonlocal_conductivity
from .green_tensor import (
    GreenComponents,
    InterfaceStack,
    NumericalConvergenceError,
    fresnel_retarded_normal,
    green_quasistatic_closed,
    green_quasistatic_quadrature,
)
from .physics_core import CONST, PARALLEL, SystemParams, ev_to_angular_frequency, intensity_to_field_amplitude

LOCAL = "local"
NONLOCAL = "nonlocal"

# below this q v_F / omega the nonlocal sigma equals the local one to O(1e-6)
_SMALL_Q_RATIO = 1e-3


@dataclass(frozen=True)
class CouplingSet:
    """Rates in rad/s (or 1/s) as they enter the Bloch equations."""

    gamma_total: float
    lamb_shift: float
    feedback_g: complex
    rabi: complex
    dephasing: float
    detuning_eff: float

    def scaled(self, factor: float) -> "CouplingSet":
        return CouplingSet(
            self.gamma_total * factor,
            self.lamb_shift * factor,
            self.feedback_g * factor,
            self.rabi * factor,
            self.dephasing * factor,
            self.detuning_eff * factor,
        )


def graphene_of(params: SystemParams) -> GrapheneParams:
    return GrapheneParams(params.fermi_energy, params.scattering_energy)


def stack_of(params: SystemParams) -> InterfaceStack:
    return InterfaceStack(params.eps_above, params.eps_below, params.z_m)


def _nonlocal_sigma(q: float, omega: float, gp: GrapheneParams, sigma_loc: complex) -> complex:
    if q * CONST.v_fermi / omega < _SMALL_Q_RATIO:
        return sigma_loc
    return complex(nonlocal_conductivity(q, omega, gp))


def green_at(params: SystemParams, omega: float, model: str = LOCAL) -> GreenComponents:
    """Reflected Green tensor at the emitter for angular frequency ``omega``."""
    gp = graphene_of(params)
    stack = stack_of(params)
    sigma = complex(local_conductivity(omega, gp))
    if model == LOCAL:
        return green_quasistatic_closed(omega, sigma, stack)
    if model == NONLOCAL:
        cond = partial(_nonlocal_sigma, omega=omega, gp=gp, sigma_loc=sigma)
        return green_quasistatic_quadrature(omega, cond, stack, nonlocal_=True, hint_sigma=sigma)
    raise ValueError(f"unknown conductivity model {model!r}")


def _dgd(params: SystemParams, omega: float, model: str) -> complex:
    """d . G(omega) . d in SI (C^2 m / m^2 ... i.e. |d|^2 G)."""
    g = green_at(params, omega, model).component(params.orientation)
    return params.dipole_si**2 * g


def purcell_rate(params: SystemParams, model: str = LOCAL) -> float:
    """Total spontaneous emission rate (1/s) including the graphene channel."""
    eps = params.epsilon
    extra = 2.0 * CONST.mu0 / CONST.hbar * eps**2 * _dgd(params, eps, model).imag
    return params.gamma0_si + extra


def lamb_shift_kk(params: SystemParams, model: str = LOCAL) -> float:
    """Lamb shift (rad/s) from the real part of the reflected Green tensor at eps."""
    eps = params.epsilon
    return -CONST.mu0 / CONST.hbar * eps**2 * _dgd(params, eps, model).real


def lamb_shift_pv(
    params: SystemParams,
    omega_max: float | None = None,
    *,
    model: str = LOCAL,
    tol: float = 1e-9,
    limit: int = 2000,
) -> float:
    """Lamb shift (rad/s) as a cutoff principal-value integral over frequency.

    The singularity at eps is removed by subtracting f(eps):
    P int_0^W f/(eps-w) = int_0^W [f(w)-f(eps)]/(eps-w) dw + f(eps) ln(eps/(W-eps)).
    ``omega_max`` defaults to 10 eV.
    """
    eps = params.epsilon
    if omega_max is None:
        omega_max = ev_to_angular_frequency(10.0)
    if not omega_max > 2.0 * eps:
        raise ValueError("omega_max must be well above the transition frequency")

    def f(w: float) -> float:
        return w * w * _dgd(params, w, model).imag

    f_eps = f(eps)

    def integrand(w: float) -> float:
        if w == eps:
            return 0.0
        return (f(w) - f_eps) / (eps - w)

    w_f2 = 2.0 * params.fermi_energy
    breaks = sorted(
        {
            eps,
            ev_to_angular_frequency(w_f2),
        }
        | {ev_to_angular_frequency(w_f2 + k * params.scattering_energy) for k in (-5, 5)}
    )
    breaks = [b for b in breaks if 0 < b < omega_max]
    total = 0.0
    err_total = 0.0
    edges = [0.0, *breaks, omega_max]
    for a, b in zip(edges[:-1], edges[1:]):
        # convergence is judged below from the summed error estimate
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val, err = quad(integrand, a, b, epsabs=0.0, epsrel=tol, limit=limit)
        total += val
        err_total += err
    if not math.isfinite(total) or err_total > 1e-6 * max(abs(total), abs(f_eps)):
        raise NumericalConvergenceError(
            f"principal-value integral did not converge (error estimate {err_total:.3e})",
            estimate=err_total,
        )
    total += f_eps * math.log(eps / (omega_max - eps))
    return CONST.mu0 / (math.pi * CONST.hbar) * total


def feedback_parameter(params: SystemParams, model: str = LOCAL) -> complex:
    """Self-interaction constant G (rad/s) at the drive frequency."""
    wl = params.omega_laser
    return wl**2 * CONST.mu0 * _dgd(params, wl, model) / (params.screening * CONST.hbar)


def effective_rabi(params: SystemParams) -> complex:
    """Rabi frequency (rad/s) renormalised by the sheet reflection and screening.

    The drive is a normally incident plane wave, polarised in-plane, so a
    dipole perpendicular to the sheet is not driven.
    """
    if params.orientation != PARALLEL:
        return 0j
    wl = params.omega_laser
    sigma = complex(local_conductivity(wl, graphene_of(params)))
    r_p = fresnel_retarded_normal(wl, sigma, stack_of(params))
    field = intensity_to_field_amplitude(params.intensity, params.eps_above)
    return (1.0 + r_p) * params.dipole_si * field / (params.screening * CONST.hbar)


def coupling_set(params: SystemParams, *, lamb: str = "kk", model: str = LOCAL) -> CouplingSet:
    """Bundle all Bloch-equation constants for one parameter point.

    ``lamb`` selects the Lamb-shift estimator: ``"kk"`` (default), ``"pv"`` or
    ``"none"``.
    """
    gamma = purcell_rate(params, model)
    if lamb == "kk":
        shift = lamb_shift_kk(params, model)
    elif lamb == "pv":
        shift = lamb_shift_pv(params, model=model)
    elif lamb == "none":
        shift = 0.0
    else:
        raise ValueError(f"unknown Lamb-shift estimator {lamb!r}")
    return CouplingSet(
        gamma_total=gamma,
        lamb_shift=shift,
        feedback_g=feedback_parameter(params, model),
        rabi=effective_rabi(params),
        dephasing=0.5 * gamma + params.extra_dephasing_rad,
        detuning_eff=params.detuning0_rad + shift,
    )


def purcell_factor_curve(params: SystemParams, energies_ev, model: str = LOCAL) -> np.ndarray:
    """Gamma/Gamma0 for each transition energy in ``energies_ev``.

    Gamma0 is that of ``params`` and is held fixed along the curve.
    """
    g0 = params.gamma0_si
    return np.array(
        [purcell_rate(params.with_(transition_energy=float(e)), model) / g0 for e in np.atleast_1d(energies_ev)]
    )
