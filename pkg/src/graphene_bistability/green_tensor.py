"""Reflected dyadic Green tensor of a dipole above a conducting 2D sheet.

Only the diagonal elements at the emitter position are needed: ``g_par`` (xx
= yy) and ``g_perp`` (zz). They are available in closed form for a local
conductivity and by quadrature over the in-plane wavevector otherwise; the two
routes are independent and are used to check one another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad_vec

from .expint import ExpintDomainError, expint_e1, scaled_expint_e1
from .physics_core import CONST

__all__ = [
    "InterfaceStack",
    "QsAux",
    "GreenComponents",
    "NumericalConvergenceError",
    "expint_e1",
    "scaled_expint_e1",
    "qs_aux",
    "fresnel_quasistatic",
    "fresnel_retarded_normal",
    "green_quasistatic_closed",
    "green_quasistatic_quadrature",
]

Q_MAX_FACTOR = 30.0
QUAD_TOL = 1e-10


class NumericalConvergenceError(ArithmeticError):
    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class InterfaceStack:
    eps_above: float
    eps_below: float
    z_distance: float  # m

    def __post_init__(self) -> None:
        if not self.z_distance > 0:
            raise ValueError("z_distance must be > 0")
        if self.eps_above < 1 or self.eps_below < 1:
            raise ValueError("permittivities must be >= 1")


@dataclass(frozen=True)
class QsAux:
    zeta: complex  # i mu0 w sigma / 2
    eta: complex  # i (eps_a + eps_b) eps0 w / sigma


@dataclass(frozen=True)
class GreenComponents:
    g_par: complex  # 1/m
    g_perp: complex  # 1/m

    def component(self, orientation: str) -> complex:
        return self.g_perp if orientation == "perpendicular" else self.g_par


def qs_aux(omega: float, sigma: complex, stack: InterfaceStack) -> QsAux:
    if sigma == 0:
        raise ZeroDivisionError("eta is undefined for sigma = 0")
    zeta = 1j * CONST.mu0 * omega * sigma / 2.0
    eta = 1j * (stack.eps_above + stack.eps_below) * CONST.eps0 * omega / sigma
    return QsAux(zeta, eta)


def fresnel_quasistatic(q_par, omega: float, sigma, stack: InterfaceStack):
    """Quasistatic (k_z -> iQ) reflection coefficients ``(r_s, r_p)``."""
    q = np.asarray(q_par, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q_par must be > 0")
    sigma = np.asarray(sigma, dtype=complex)
    ea, eb = stack.eps_above, stack.eps_below
    mws = CONST.mu0 * omega * sigma
    r_s = -mws / (mws + 2j * q)
    e0w = CONST.eps0 * omega
    r_p = ((eb - ea) * e0w + 1j * q * sigma) / ((eb + ea) * e0w + 1j * q * sigma)
    if r_s.ndim == 0:
        return complex(r_s), complex(r_p)
    return r_s, r_p


def fresnel_retarded_normal(omega: float, sigma: complex, stack: InterfaceStack) -> complex:
    """p-polarised reflection coefficient at normal incidence (Q = 0).

    Index ordering (eps_b k_a - eps_a k_b) in the numerator, the ordering
    that reduces to the quasistatic form.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    ea, eb = stack.eps_above, stack.eps_below
    ka = math.sqrt(ea) * omega / CONST.c_light
    kb = math.sqrt(eb) * omega / CONST.c_light
    cond = ka * kb * sigma / (omega * CONST.eps0)
    return (eb * ka - ea * kb + cond) / (eb * ka + ea * kb + cond)


def green_quasistatic_closed(
    omega: float, sigma_local: complex, stack: InterfaceStack
) -> GreenComponents:
    """Closed-form quasistatic reflected Green tensor for a local conductivity."""
    if not omega > 0:
        raise ValueError("omega must be > 0")
    if sigma_local == 0:
        raise ZeroDivisionError(
            "closed form needs sigma != 0; use green_quasistatic_quadrature with "
            "a zero conductivity for the bare dielectric interface"
        )
    aux = qs_aux(omega, sigma_local, stack)
    z = stack.z_distance
    ea = stack.eps_above
    zeta, eta = aux.zeta, aux.eta
    try:
        # exp(-2 eta z) E1(-2 eta z) in one overflow-free evaluation
        pole_eta = scaled_expint_e1(-2.0 * eta * z)
        pole_zeta = scaled_expint_e1(-2.0 * zeta * z)
    except ExpintDomainError as exc:
        raise ExpintDomainError(
            f"lossless conductivity puts the plasmon pole on the real axis: {exc}"
        ) from exc
    bracket = 1.0 / (4.0 * z * z) + eta / (2.0 * z) + eta * eta * pole_eta
    pref = CONST.c_light**2 / (4.0 * math.pi * ea * omega**2)
    g_perp = pref * ((2j * ea * CONST.eps0 * omega / sigma_local) * bracket + 1.0 / (4.0 * z**3))
    g_par = zeta / (8.0 * math.pi) * pole_zeta + 0.5 * g_perp
    return GreenComponents(complex(g_par), complex(g_perp))


def green_quasistatic_quadrature(
    omega: float,
    conductivity: Callable[[float], complex] | complex,
    stack: InterfaceStack,
    nonlocal_: bool = False,
    *,
    q_max_factor: float = Q_MAX_FACTOR,
    tol: float = QUAD_TOL,
    hint_sigma: complex | None = None,
) -> GreenComponents:
    """Quasistatic reflected Green tensor by adaptive quadrature over Q.

    ``conductivity`` is either a constant (local model) or a callable
    ``Q -> sigma(Q, omega)`` (used when ``nonlocal_`` is set). The integral is
    carried out in u = Q z on [0, q_max_factor]; ``hint_sigma`` (a local
    conductivity) is used only to place breakpoints at the sheet plasmon and
    s-wave poles.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    z = stack.z_distance
    ka2 = stack.eps_above * (omega / CONST.c_light) ** 2
    if callable(conductivity):
        if not nonlocal_:
            sig_const = complex(conductivity(1.0 / z))
            sigma_of_q = lambda q: sig_const  # noqa: E731
        else:
            sigma_of_q = conductivity
    else:
        sig_const = complex(conductivity)
        sigma_of_q = lambda q: sig_const  # noqa: E731
        if hint_sigma is None:
            hint_sigma = sig_const

    def integrand(u: float) -> np.ndarray:
        q = u / z
        if q <= 0:
            q = 1e-300
        r_s, r_p = fresnel_quasistatic(q, omega, sigma_of_q(q), stack)
        w = math.exp(-2.0 * u)
        par = (ka2 * r_s + q * q * r_p) * w
        perp = 2.0 * q * q * r_p * w
        return np.array([par.real, par.imag, perp.real, perp.imag])

    points = []
    if hint_sigma is not None and hint_sigma != 0:
        aux = qs_aux(omega, hint_sigma, stack)
        for pole in (aux.eta, aux.zeta):
            u = pole.real * z
            if 0 < u < q_max_factor:
                points.append(u)
    upper = q_max_factor
    res, err = quad_vec(
        integrand,
        0.0,
        upper,
        epsabs=0.0,
        epsrel=tol,
        norm="max",
        limit=2000,
        points=sorted(points) or None,
    )
    scale = np.max(np.abs(res))
    if not np.isfinite(err) or err > 1e3 * tol * max(scale, 1e-300):
        raise NumericalConvergenceError(
            f"Green quadrature error estimate {err:.3e} exceeds tolerance", estimate=err
        )
    pref = 1.0 / (8.0 * math.pi * ka2 * z)  # du = z dQ
    g_par = pref * complex(res[0], res[1])
    g_perp = pref * complex(res[2], res[3])
    return GreenComponents(g_par, g_perp)
