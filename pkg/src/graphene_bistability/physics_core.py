"""Physical constants, unit conversions and the emitter configuration.

Everything downstream works in SI (rad/s, m, s, S). The user-facing
configuration (:class:`SystemParams`) is written in eV / nm / e·nm and is
converted here, once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from scipy import constants as _c


@dataclass(frozen=True)
class PhysConstants:
    hbar: float = _c.hbar
    e_charge: float = _c.e
    eps0: float = 1.0 / (_c.mu_0 * _c.c**2)  # exact closure of mu0 eps0 c^2 = 1
    mu0: float = _c.mu_0
    c_light: float = _c.c
    v_fermi: float = 1.0e6  # graphene Dirac velocity, m/s
    k_boltzmann: float = _c.k


CONST = PhysConstants()

PARALLEL = "parallel"
PERPENDICULAR = "perpendicular"
ORIENTATIONS = (PARALLEL, PERPENDICULAR)


def ev_to_angular_frequency(energy_ev: float) -> float:
    """Convert an energy in eV to an angular frequency in rad/s."""
    return energy_ev * CONST.e_charge / CONST.hbar


def angular_frequency_to_ev(omega: float) -> float:
    return omega * CONST.hbar / CONST.e_charge


def intensity_to_field_amplitude(intensity: float, eps_host: float = 1.0) -> float:
    """Amplitude |E| of the field ``E exp(-i w t) + c.c.`` carrying ``intensity``.

    Uses I = 2 eps0 c sqrt(eps_host) |E|^2.
    """
    if intensity < 0:
        raise ValueError(f"intensity must be non-negative, got {intensity!r}")
    return math.sqrt(intensity / (2.0 * CONST.eps0 * CONST.c_light * math.sqrt(eps_host)))


def vacuum_decay_rate(transition_energy_ev: float, dipole_moment_enm: float) -> float:
    """Free-space spontaneous emission rate (1/s) of a dipole ``|d|`` in e·nm."""
    if transition_energy_ev <= 0 or dipole_moment_enm <= 0:
        raise ValueError("transition energy and dipole moment must be positive")
    eps = ev_to_angular_frequency(transition_energy_ev)
    d = dipole_moment_enm * CONST.e_charge * 1e-9
    return eps**3 * d**2 / (3.0 * math.pi * CONST.eps0 * CONST.hbar * CONST.c_light**3)


@dataclass(frozen=True)
class SystemParams:
    """Full physical configuration of the driven emitter above graphene.

    Units: energies in eV, ``dipole_moment`` in e·nm, ``z_distance`` in nm,
    ``intensity`` in W/m^2, ``gamma0`` in 1/s (``None`` means derive it from
    the transition energy and dipole moment).
    """

    transition_energy: float = 1.0
    dipole_moment: float = 1.0
    orientation: str = PARALLEL
    gamma0: float | None = None
    extra_dephasing: float = 0.0
    z_distance: float = 12.0
    eps_above: float = 1.0
    eps_below: float = 1.6
    fermi_energy: float = 0.51
    scattering_energy: float = 0.01
    intensity: float = 1.0e4
    detuning0: float = 8.0e-6
    screening: float = 1.0
    constants: PhysConstants = field(default=CONST, repr=False, compare=False)

    def __post_init__(self) -> None:
        positive = {
            "transition_energy": self.transition_energy,
            "dipole_moment": self.dipole_moment,
            "z_distance": self.z_distance,
            "fermi_energy": self.fermi_energy,
            "scattering_energy": self.scattering_energy,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.extra_dephasing < 0:
            raise ValueError("extra_dephasing must be >= 0")
        if self.intensity < 0:
            raise ValueError("intensity must be >= 0")
        for name in ("eps_above", "eps_below", "screening"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ValueError("gamma0 must be > 0 when given")

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    # SI views ---------------------------------------------------------------
    @property
    def epsilon(self) -> float:
        """Transition angular frequency (rad/s)."""
        return ev_to_angular_frequency(self.transition_energy)

    @property
    def omega_laser(self) -> float:
        return ev_to_angular_frequency(self.transition_energy + self.detuning0)

    @property
    def detuning0_rad(self) -> float:
        return ev_to_angular_frequency(self.detuning0)

    @property
    def z_m(self) -> float:
        return self.z_distance * 1e-9

    @property
    def dipole_si(self) -> float:
        return self.dipole_moment * CONST.e_charge * 1e-9

    @property
    def gamma0_si(self) -> float:
        if self.gamma0 is not None:
            return self.gamma0
        return vacuum_decay_rate(self.transition_energy, self.dipole_moment)

    @property
    def tau_inv(self) -> float:
        return ev_to_angular_frequency(self.scattering_energy)

    @property
    def extra_dephasing_rad(self) -> float:
        return ev_to_angular_frequency(self.extra_dephasing)

    def as_dict(self) -> dict:
        return {
            "transition_energy": self.transition_energy,
            "dipole_moment": self.dipole_moment,
            "orientation": self.orientation,
            "gamma0": self.gamma0,
            "extra_dephasing": self.extra_dephasing,
            "z_distance": self.z_distance,
            "eps_above": self.eps_above,
            "eps_below": self.eps_below,
            "fermi_energy": self.fermi_energy,
            "scattering_energy": self.scattering_energy,
            "intensity": self.intensity,
            "detuning0": self.detuning0,
            "screening": self.screening,
        }
