"""Steady states of the self-interacting driven two-level atom.

The stationary population difference Z solves a cubic,

    A Z = (Z + 1)(Z^2 + B Z + C),

whose discriminant decides between one and three real roots (all of which
lie in (-1, 0)). Each root is classified by the eigenvalues of the Bloch
Jacobian. Phase maps and the radiated-power series are built on top.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .qed_coupling import CouplingSet

DEGENERATE_SEPARATION = 1e-8


class DegenerateFeedback(Exception):
    """|G| is below the conditioning floor; use the G = 0 closed form."""


class SteadyStateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CubicDiagnostics:
    a_coef: float
    b_coef: float
    c_coef: float

    @property
    def p_dep(self) -> float:
        a, b, c = self.a_coef, self.b_coef, self.c_coef
        return b + c - a - (1.0 + b) ** 2 / 3.0

    @property
    def q_dep(self) -> float:
        a, b, c = self.a_coef, self.b_coef, self.c_coef
        return c + 2.0 * (1.0 + b) ** 3 / 27.0 - (1.0 + b) * (b + c - a) / 3.0

    @property
    def disc(self) -> float:
        return -4.0 * self.p_dep**3 - 27.0 * self.q_dep**2

    @property
    def disc_scale(self) -> float:
        """Magnitude against which ``disc`` is judged to be zero."""
        return max(4.0 * abs(self.p_dep) ** 3, 27.0 * self.q_dep**2, 1e-300)

    def monic(self) -> tuple[float, float, float]:
        """(a2, a1, a0) of Z^3 + a2 Z^2 + a1 Z + a0."""
        a, b, c = self.a_coef, self.b_coef, self.c_coef
        return 1.0 + b, b + c - a, c


@dataclass(frozen=True)
class SteadyRoot:
    z_pop: float
    coh: complex
    max_re_eig: float
    stable: bool
    eigenvalues: tuple[complex, complex, complex] = field(default=(), repr=False)
    rho22: float | None = None  # excited population, accurate to full relative precision

    def __post_init__(self) -> None:
        if self.rho22 is None:
            object.__setattr__(self, "rho22", 0.5 * (1.0 + self.z_pop))


@dataclass(frozen=True)
class SteadyStateSet:
    roots: tuple[SteadyRoot, ...]
    diagnostics: CubicDiagnostics | None
    degenerate: bool = False
    warnings: tuple[str, ...] = ()

    @property
    def count(self) -> int:
        return len(self.roots)

    def stable_roots(self) -> list[SteadyRoot]:
        return [r for r in self.roots if r.stable]

    def lower(self) -> SteadyRoot:
        return min(self.stable_roots() or self.roots, key=lambda r: r.z_pop)

    def upper(self) -> SteadyRoot:
        return max(self.stable_roots() or self.roots, key=lambda r: r.z_pop)


def g_floor(c: CouplingSet) -> float:
    return 1e-12 * max(c.gamma_total, c.dephasing, abs(c.detuning_eff))


def cubic_coefficients(c: CouplingSet) -> CubicDiagnostics:
    g2 = abs(c.feedback_g) ** 2
    if abs(c.feedback_g) <= g_floor(c):
        raise DegenerateFeedback(f"|G| = {abs(c.feedback_g):.3e} below floor")
    d, gam = c.detuning_eff, c.dephasing
    gr, gi = c.feedback_g.real, c.feedback_g.imag
    a = -4.0 * gam * abs(c.rabi) ** 2 / (c.gamma_total * g2)
    b = -2.0 * (d * gr + gam * gi) / g2
    cc = (d * d + gam * gam) / g2
    return CubicDiagnostics(a, b, cc)


def steady_residual(c: CouplingSet, z: float, rho22: float | None = None) -> float:
    """Residual of the stationary population equation, relative to 4 gamma |Omega|^2/Gamma.

    The equation is used in its polynomial form (multiplied through by -Z) so
    that it stays finite at Z = 0. Near Z = -1 the factor Z + 1 is taken as
    2 ``rho22`` when given, since 1 + Z itself has lost its relative precision.
    """
    s = 4.0 * c.dephasing * abs(c.rabi) ** 2 / c.gamma_total
    g = c.feedback_g
    u = z + 1.0 if rho22 is None else 2.0 * rho22
    bracket = (c.detuning_eff - g.real * z) ** 2 + (c.dephasing - g.imag * z) ** 2
    res = s * z + u * bracket
    scale = s if s > 0 else max(bracket, 1e-300)
    return abs(res) / scale


def coherence(c: CouplingSet, z: float) -> complex:
    g = c.feedback_g
    return c.rabi * z / ((c.detuning_eff - g.real * z) + 1j * (c.dephasing - g.imag * z))


def _real_cubic_roots(a2: float, a1: float, a0: float) -> list[float]:
    """Real roots of Z^3 + a2 Z^2 + a1 Z + a0 (trigonometric / Cardano)."""
    shift = a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = a0 + 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0
    disc = -4.0 * p**3 - 27.0 * q**2
    if disc > 0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        ts = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        s = math.sqrt(max(q * q / 4.0 + p**3 / 27.0, 0.0))
        u = np.cbrt(-q / 2.0 + s) if q <= 0 else np.cbrt(-q / 2.0 - s)
        ts = [u - p / (3.0 * u)] if u != 0 else [0.0]
    return sorted(t - shift for t in ts)


def _polish(z: float, a2: float, a1: float, a0: float) -> float:
    for _ in range(3):
        f = ((z + a2) * z + a1) * z + a0
        df = (3.0 * z + 2.0 * a2) * z + a1
        if df == 0:
            break
        step = f / df
        z -= step
        if abs(step) <= 1e-16 * max(1.0, abs(z)):
            break
    return z


def _polish_excited(c: CouplingSet, u: float) -> float:
    """Newton on the cubic written in u = 1 + Z = 2 rho22.

    Weakly driven roots sit within ~1e-8 of Z = -1, where Z itself cannot
    resolve the population; u keeps full relative precision there.
    """
    s = 4.0 * c.dephasing * abs(c.rabi) ** 2 / c.gamma_total
    g = c.feedback_g
    dp, gp = c.detuning_eff + g.real, c.dephasing + g.imag
    b3 = abs(g) ** 2
    b2 = -2.0 * (dp * g.real + gp * g.imag)
    b1 = dp * dp + gp * gp + s
    for _ in range(6):
        f = ((b3 * u + b2) * u + b1) * u - s
        df = (3.0 * b3 * u + 2.0 * b2) * u + b1
        if df == 0:
            break
        step = f / df
        u -= step
        if abs(step) <= 1e-16 * abs(u):
            break
    return u


def jacobian(c: CouplingSet, z: float, coh: complex) -> np.ndarray:
    """Jacobian of the Bloch equations in the (dZ, d rho21, d rho12) basis."""
    g, om = c.feedback_g, c.rabi
    eff = om + g * coh
    r12 = coh.conjugate()
    d, gam = c.detuning_eff, c.dephasing
    return np.array(
        [
            [-c.gamma_total, -2j * (eff.conjugate() - g * r12), 2j * (eff - g.conjugate() * coh)],
            [-1j * eff, 1j * d - gam - 1j * g * z, 0.0],
            [1j * eff.conjugate(), 0.0, -1j * d - gam + 1j * g.conjugate() * z],
        ],
        dtype=complex,
    )


def _complex_cubic_roots(a2: complex, a1: complex, a0: complex) -> list[complex]:
    shift = a2 / 3.0
    p = a1 - a2 * a2 / 3.0
    q = a0 + 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0
    s = cmath.sqrt(q * q / 4.0 + p**3 / 27.0)
    u3 = -q / 2.0 + s
    alt = -q / 2.0 - s
    if abs(alt) > abs(u3):
        u3 = alt
    if u3 == 0:
        return [-shift] * 3
    u = u3 ** (1.0 / 3.0)
    rot = cmath.exp(2j * math.pi / 3.0)
    roots = []
    for k in range(3):
        uk = u * rot**k
        roots.append(uk - p / (3.0 * uk) - shift)
    return roots


def eigenvalues_3x3(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of a 3x3 complex matrix from its characteristic cubic.

    Cardano in complex arithmetic, then Newton polish on the characteristic
    polynomial.
    """
    m = np.asarray(m, dtype=complex)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    minors = (
        m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
        + m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    )
    det = (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
    a2, a1, a0 = -tr, minors, -det
    out = []
    for lam in _complex_cubic_roots(a2, a1, a0):
        for _ in range(2):
            f = ((lam + a2) * lam + a1) * lam + a0
            df = (3.0 * lam + 2.0 * a2) * lam + a1
            if df == 0:
                break
            lam = lam - f / df
        out.append(lam)
    return np.array(out)


def classify(c: CouplingSet, z: float, coh: complex, rho22: float | None = None) -> SteadyRoot:
    eig = eigenvalues_3x3(jacobian(c, z, coh))
    mx = float(np.max(eig.real))
    return SteadyRoot(z, coh, mx, mx < 0.0, tuple(complex(e) for e in eig), rho22)


def _classify_root(c: CouplingSet, z: float) -> SteadyRoot:
    u = _polish_excited(c, z + 1.0)
    if not 0.0 < u <= 2.0 or abs(u - (z + 1.0)) > 1e-6 * max(u, 1e-300) + 1e-12:
        u = z + 1.0  # polish left the basin; keep the Z-space root
    return classify(c, u - 1.0, coherence(c, u - 1.0), 0.5 * u)


def _zero_feedback_root(c: CouplingSet) -> float:
    d2g2 = c.detuning_eff**2 + c.dephasing**2
    return -d2g2 / (d2g2 + 4.0 * c.dephasing * abs(c.rabi) ** 2 / c.gamma_total)


def steady_roots(c: CouplingSet) -> SteadyStateSet:
    """All stationary states, sorted by Z, each with its linear stability."""
    try:
        diag = cubic_coefficients(c)
    except DegenerateFeedback:
        z = _zero_feedback_root(c)
        d2g2 = c.detuning_eff**2 + c.dephasing**2
        s = 4.0 * c.dephasing * abs(c.rabi) ** 2 / c.gamma_total
        return SteadyStateSet((classify(c, z, coherence(c, z), 0.5 * s / (d2g2 + s)),), None)

    a2, a1, a0 = diag.monic()
    raw = [_polish(z, a2, a1, a0) for z in _real_cubic_roots(a2, a1, a0)]
    roots = [z for z in raw if -1.0 <= z < 0.0]
    if not roots:
        raise SteadyStateError(f"no stationary root in [-1, 0): candidates {raw}")
    roots.sort()
    degenerate = any(b - a < DEGENERATE_SEPARATION for a, b in zip(roots[:-1], roots[1:]))
    if degenerate:
        merged = [roots[0]]
        for z in roots[1:]:
            if z - merged[-1] >= DEGENERATE_SEPARATION:
                merged.append(z)
        roots = merged
    classified = tuple(_classify_root(c, z) for z in roots)
    warnings = []
    if len(classified) == 3 and [r.stable for r in classified] != [True, False, True]:
        warnings.append(
            "three roots without the stable/unstable/stable pattern: "
            + ", ".join(f"{r.z_pop:.6g}:{r.max_re_eig:.3e}" for r in classified)
        )
    return SteadyStateSet(classified, diag, degenerate, tuple(warnings))


def bloch_residual(c: CouplingSet, z: float, coh: complex) -> float:
    """Norm of the Bloch right-hand side at (Z, rho21)."""
    from .bloch_dynamics import BlochState, bloch_rhs

    d = bloch_rhs(BlochState(z, coh), c)
    return math.hypot(d.z_pop, abs(d.coh))


# --------------------------------------------------------------------------
# phase maps


@dataclass(frozen=True)
class PhaseCell:
    value1: float
    value2: float
    disc: float | None
    root_count: int
    max_re_eigs: tuple[float, ...]
    error: str | None = None


def phase_cell(c_builder: Callable[[float, float], CouplingSet], v1: float, v2: float) -> PhaseCell:
    try:
        c = c_builder(v1, v2)
        sset = steady_roots(c)
        disc = sset.diagnostics.disc if sset.diagnostics is not None else None
        return PhaseCell(v1, v2, disc, sset.count, tuple(r.max_re_eig for r in sset.roots))
    except Exception as exc:  # recorded per cell, never fatal
        return PhaseCell(v1, v2, None, 0, (), f"{type(exc).__name__}: {exc}")


def phase_map(
    axis1: Sequence[float],
    axis2: Sequence[float],
    c_builder: Callable[[float, float], CouplingSet],
    workers: int = 1,
) -> list[PhaseCell]:
    """Discriminant and root count on the grid axis1 x axis2 (row-major in axis1).

    ``c_builder(v1, v2)`` rebuilds the coupling constants for one cell; it must
    be picklable when ``workers > 1``.
    """
    if len(axis1) < 1 or len(axis2) < 1:
        raise ValueError("each axis needs at least one value")
    pairs = [(float(a), float(b)) for a in axis1 for b in axis2]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_cell_star, [(c_builder, a, b) for a, b in pairs], chunksize=16))
    return [phase_cell(c_builder, a, b) for a, b in pairs]


def _cell_star(args):
    return phase_cell(*args)


# --------------------------------------------------------------------------
# radiated power

POWER_MODELS = ("coherent", "total")


def radiated_power(
    gammas: Iterable[float],
    z_pops: Iterable[float],
    cohs: Iterable[complex],
    reference: float | None = None,
    model: str = "coherent",
) -> np.ndarray:
    """Normalised radiated power along a branch or sweep.

    ``model="coherent"`` (default) is the coherent dipole emission,
    Gamma |rho21|^2. ``model="total"`` counts every emitted photon,
    Gamma rho22 with rho22 = (1 + Z)/2, coherent and incoherent parts together.
    ``reference`` is the un-normalised value to divide by; by default the
    smallest non-zero value in the series is used.
    """
    g = np.asarray(list(gammas), dtype=float)
    if model == "total":
        raw = g * 0.5 * (1.0 + np.asarray(list(z_pops), dtype=float))
    elif model == "coherent":
        raw = g * np.abs(np.asarray(list(cohs), dtype=complex)) ** 2
    else:
        raise ValueError(f"unknown power model {model!r}; expected one of {POWER_MODELS}")
    if reference is None:
        nonzero = raw[raw > 0]
        if nonzero.size == 0:
            return raw
        reference = float(nonzero.min())
    if reference == 0:
        raise ZeroDivisionError("reference radiated power is zero")
    return raw / reference
