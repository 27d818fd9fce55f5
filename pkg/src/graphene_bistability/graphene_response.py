"""Graphene sheet conductivity in the zero-temperature RPA.

Two models are provided: the local (q -> 0) conductivity with Drude intraband
and logarithmic interband terms, and the nonlocal conductivity built from the
RPA response function with Mermin's number-conserving relaxation.

Branch conventions matter here. ``log`` is the principal branch with imaginary
part in (-pi, pi]. Square roots are taken with non-negative real part; where
the real part vanishes (real arguments inside the particle-hole continuum) the
upper-half-plane limit is used, which is what a retarded response requires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics_core import CONST, ev_to_angular_frequency


@dataclass(frozen=True)
class GrapheneParams:
    fermi_energy: float  # eV
    scattering_energy: float  # eV, hbar / tau

    def __post_init__(self) -> None:
        if not self.fermi_energy > 0:
            raise ValueError("fermi_energy must be > 0")
        if not self.scattering_energy > 0:
            raise ValueError("scattering_energy must be > 0")

    @property
    def omega_f(self) -> float:
        """E_F / hbar in rad/s."""
        return ev_to_angular_frequency(self.fermi_energy)

    @property
    def k_fermi(self) -> float:
        return self.omega_f / CONST.v_fermi

    @property
    def tau_inv(self) -> float:
        return ev_to_angular_frequency(self.scattering_energy)


def universal_conductivity() -> float:
    """e^2 / (4 hbar), the interband plateau value in S."""
    return CONST.e_charge**2 / (4.0 * CONST.hbar)


def local_conductivity(omega, p: GrapheneParams):
    """Local RPA sheet conductivity sigma(omega) in S (broadcasts over omega)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be > 0")
    w = omega + 1j * p.tau_inv
    wf2 = 2.0 * p.omega_f
    e2 = CONST.e_charge**2
    intra = e2 / (np.pi * CONST.hbar) * 1j * p.omega_f / w
    inter = universal_conductivity() * (1.0 + 1j / np.pi * np.log((w - wf2) / (w + wf2)))
    out = intra + inter
    return out.item() if out.ndim == 0 else out


def _upper(z):
    # +0.0 imaginary part selects the upper lip of every cut for real input
    z = np.asarray(z, dtype=complex)
    return z.real + 1j * (z.imag + 0.0)


def _sqrt_pos(z):
    """sqrt with Re >= 0 (upper side when Re == 0)."""
    s = np.sqrt(_upper(z))
    flip = (s.real < 0) | ((s.real == 0) & (s.imag < 0))
    return np.where(flip, -s, s)


def _g_outer(z):
    """G(z) = z sqrt(z^2-1) - log(z + sqrt(z^2-1)) with the Re>=0 square root.

    Used for arguments with Re z > 1 only, where this choice is analytic.
    """
    w = _sqrt_pos(z * z - 1.0)
    return z * w - np.log(z + w)


def _g_cont(z):
    """G(z) continued analytically off the real axis.

    sqrt(z^2-1) is realised as sqrt(z-1) sqrt(z+1), which has its only cut on
    (-inf, 1] and coincides with the Re>=0 choice whenever Re z >= 0 or z is
    real (approached from above). ``log`` stays principal.
    """
    z = _upper(z)
    w = np.sqrt(z - 1.0) * np.sqrt(z + 1.0)
    return z * w - np.log(z + w)


def rpa_chi(q_par, omega_complex, p: GrapheneParams):
    """Zero-temperature RPA response chi(q, omega) in S·s.

    ``omega_complex`` may carry a non-negative imaginary part (the Mermin
    shift omega + i/tau). The step functions select between G(-Delta_-) for
    Re Delta_- < -1 and G(Delta_-) + i pi otherwise (Theta(0) = 1). For complex
    frequency the second branch uses the analytic continuation of
    sqrt(Delta^2 - 1); with the bare Re>=0 rule the result would jump by
    2 pi i across Re Delta_- = -1.
    """
    q = np.asarray(q_par, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q_par must be > 0")
    w = _upper(omega_complex)
    v = CONST.v_fermi
    kf = p.k_fermi
    d_minus = (w / v - 2.0 * kf) / q
    d_plus = (w / v + 2.0 * kf) / q

    below = d_minus.real < -1.0
    # evaluate both branches on safe arguments, then select
    lower_branch = _g_outer(np.where(below, -d_minus, 2.0))
    upper_branch = _g_cont(np.where(below, 2.0, d_minus)) + 1j * np.pi
    bracket = np.where(below, lower_branch, upper_branch) - _g_cont(d_plus)

    root = _sqrt_pos(w * w - (v * q) ** 2)
    pref = CONST.e_charge**2 / (4.0 * np.pi * CONST.hbar)
    out = pref * (8.0 * kf / (v * q * q) + bracket / root)
    return out.item() if out.ndim == 0 else out


def nonlocal_conductivity(q_par, omega, p: GrapheneParams):
    """Nonlocal sheet conductivity sigma(q, omega) in S with Mermin relaxation."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be > 0")
    ti = p.tau_inv
    w = omega + 1j * ti
    chi_w = rpa_chi(q_par, w, p)
    chi_0 = rpa_chi(q_par, 0.0, p)
    ratio = (1j * ti / omega) * chi_w / chi_0
    out = -1j * w * chi_w / (1.0 + ratio)
    out = np.asarray(out)
    return out.item() if out.ndim == 0 else out
