"""Resonance fluorescence and photon statistics at a steady state.

Both observables come from the quantum regression theorem with the
self-interaction frozen at its steady-state value, Omega_eff = Omega + G rho21.
The vector ordering throughout is (rho22, rho21, rho12).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import expm
from scipy.signal import find_peaks

from .bloch_dynamics import fmt
from .physics_core import CONST
from .qed_coupling import CouplingSet
from .steady_state import SteadyRoot


class UnstableBranchError(ValueError):
    """Spectra and correlations are only defined on stable steady states."""


@dataclass(frozen=True)
class RegressionSystem:
    m_matrix: np.ndarray
    k_vec: np.ndarray
    f0_vec: np.ndarray
    rho22: float
    coh: complex
    coupling: CouplingSet

    @property
    def rho_ss(self) -> np.ndarray:
        return np.array([self.rho22, self.coh, self.coh.conjugate()], dtype=complex)

    def fixed_point_residual(self) -> float:
        """|M rho_ss + K|_inf relative to the size of the two terms."""
        r = np.max(np.abs(self.m_matrix @ self.rho_ss + self.k_vec))
        scale = np.linalg.norm(self.m_matrix, np.inf) * np.max(np.abs(self.rho_ss)) + np.max(np.abs(self.k_vec))
        return float(r / scale)


@dataclass(frozen=True)
class SpectrumSeries:
    omega_offsets: np.ndarray  # rad/s relative to omega_L
    s_inc: np.ndarray
    coherent_weight: float
    branch: str = ""
    imag_residue: float = 0.0


@dataclass(frozen=True)
class CorrelationSeries:
    taus: np.ndarray  # s
    g2_values: np.ndarray
    branch: str = ""


def build_regression(c: CouplingSet, root: SteadyRoot) -> RegressionSystem:
    if not root.stable:
        raise UnstableBranchError(
            f"root Z = {root.z_pop:.6g} is unstable (max Re eig {root.max_re_eig:.3e}); "
            "spectra are not defined there"
        )
    r21 = complex(root.coh)
    r12 = r21.conjugate()
    rho22 = root.rho22
    eff = c.rabi + c.feedback_g * r21
    eff_c = eff.conjugate()
    d, gam = c.detuning_eff, c.dephasing
    m = np.array(
        [
            [-c.gamma_total, -1j * eff_c, 1j * eff],
            [-2j * eff, 1j * d - gam, 0.0],
            [2j * eff_c, 0.0, -1j * d - gam],
        ],
        dtype=complex,
    )
    k = 1j * np.array([0.0, eff, -eff_c], dtype=complex)
    f0 = np.array([-rho22 * r21, -r21 * r21, rho22 - abs(r21) ** 2], dtype=complex)
    return RegressionSystem(m, k, f0, rho22, r21, c)


def coherent_weight(rs: RegressionSystem) -> float:
    """Weight pi |rho12|^2 of the delta peak at the drive frequency."""
    return math.pi * abs(rs.coh) ** 2


def incoherent_spectrum(rs: RegressionSystem, omega_grid, branch: str = "") -> SpectrumSeries:
    """S_inc(w) = Re sum_j [(i w - M)^-1]_3j f_j(0) on ``omega_grid`` (rad/s from omega_L)."""
    grid = np.asarray(omega_grid, dtype=float)
    if grid.ndim != 1 or not np.all(np.isfinite(grid)):
        raise ValueError("omega_grid must be a finite 1-D array")
    eye = np.eye(3)
    vals = np.empty(grid.size, dtype=complex)
    for n, w in enumerate(grid):
        a = 1j * w * eye - rs.m_matrix
        try:
            sol = np.linalg.solve(a, rs.f0_vec)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular regression matrix at omega = {w:.6e} rad/s") from exc
        vals[n] = sol[2]
    total = np.trapezoid(np.abs(vals.real), grid) if grid.size > 1 else abs(vals.real[0])
    resid = abs(np.trapezoid(vals.imag, grid)) / total if grid.size > 1 and total > 0 else 0.0
    return SpectrumSeries(grid, vals.real, coherent_weight(rs), branch, float(resid))


def g2(c: CouplingSet, root: SteadyRoot, tau_grid, branch: str = "") -> CorrelationSeries:
    """Normalised second-order correlation g2(tau) by the quantum regression theorem.

    The correlations <sigma+(0) X(tau) sigma-(0)> for X = (sigma_z, sigma-,
    sigma+) start at (-rho22, 0, 0) and relax to rho22 (Z, rho21, rho12). The
    linear evolution is solved exactly with a matrix exponential.
    """
    if not root.stable:
        raise UnstableBranchError(f"root Z = {root.z_pop:.6g} is unstable")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or taus[0] < 0 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau_grid must be ascending and start at >= 0")
    rho22 = root.rho22
    r21 = complex(root.coh)
    eff = c.rabi + c.feedback_g * r21
    d, gam = c.detuning_eff, c.dephasing
    b = np.array(
        [
            [-c.gamma_total, -2j * eff.conjugate(), 2j * eff],
            [-1j * eff, 1j * d - gam, 0.0],
            [1j * eff.conjugate(), 0.0, -1j * d - gam],
        ],
        dtype=complex,
    )
    c_inf = rho22 * np.array([root.z_pop, r21, r21.conjugate()], dtype=complex)
    c0 = np.array([-rho22, 0.0, 0.0], dtype=complex)
    dev0 = c0 - c_inf
    out = np.empty(taus.size)
    for n, t in enumerate(taus):
        c1 = (c_inf + expm(b * t) @ dev0)[0].real
        out[n] = (rho22 / 2.0 + c1 / 2.0) / rho22**2
    return CorrelationSeries(taus, out, branch)


def sideband_prominence(spec: SpectrumSeries) -> float:
    """Largest prominence of a non-central peak, relative to the spectrum maximum.

    The central peak is the highest one; zero means a single-peaked spectrum.
    """
    s = np.asarray(spec.s_inc)
    top = float(np.max(s))
    if top <= 0:
        return 0.0
    peaks, props = find_peaks(s, prominence=1e-6 * top)
    if peaks.size < 2:
        return 0.0
    order = np.argsort(s[peaks])[::-1]
    side = props["prominences"][order[1:]]
    return float(np.max(side)) / top


def peak_offsets(spec: SpectrumSeries, rel_prominence: float = 1e-3) -> np.ndarray:
    """Offsets (rad/s) of the spectral peaks with at least ``rel_prominence``.

    Each sampled maximum is refined to the vertex of the parabola through it
    and its two neighbours (uniform grids only; otherwise the samples are
    returned as they are).
    """
    s = np.asarray(spec.s_inc)
    w = np.asarray(spec.omega_offsets)
    peaks, _ = find_peaks(s, prominence=rel_prominence * float(np.max(s)))
    if w.size < 3 or not np.allclose(np.diff(w), w[1] - w[0], rtol=1e-9, atol=0):
        return w[peaks]
    y0, y1, y2 = s[peaks - 1], s[peaks], s[peaks + 1]
    curv = y0 - 2.0 * y1 + y2
    shift = np.where(curv < 0, 0.5 * (y0 - y2) / np.where(curv < 0, curv, 1.0), 0.0)
    return w[peaks] + shift * (w[1] - w[0])


def write_spectrum_csv(spec: SpectrumSeries, path: str | Path, header: Iterable[str] = ()) -> None:
    ev_per_rad = CONST.hbar / CONST.e_charge
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# coherent_weight = {fmt(spec.coherent_weight)}\n")
        fh.write(f"# branch = {spec.branch or 'unlabelled'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["omega_minus_omegaL_eV", "S_inc_arb"])
        for om, s in zip(spec.omega_offsets, spec.s_inc):
            w.writerow([fmt(om * ev_per_rad), fmt(s)])


def write_g2_csv(series: CorrelationSeries, path: str | Path, header: Iterable[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"# branch = {series.branch or 'unlabelled'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau_ns", "g2"])
        for t, g in zip(series.taus, series.g2_values):
            w.writerow([fmt(t * 1e9), fmt(g)])
