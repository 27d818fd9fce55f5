import math

import numpy as np
import pytest
from scipy.integrate import quad

from graphene_bistability import qed_coupling as qc
from graphene_bistability.graphene_response import local_conductivity
from graphene_bistability.green_tensor import fresnel_retarded_normal, green_quasistatic_quadrature
from graphene_bistability.physics_core import CONST, SystemParams, ev_to_angular_frequency
from graphene_bistability.steady_state import cubic_coefficients

P = SystemParams()
HBAR_OMEGA_BARE_EV = 1.3724618636086577e-6  # |d| |E| at 1e4 W/m^2 and 1 e nm


def quad_green(params, omega):
    s = complex(local_conductivity(omega, qc.graphene_of(params)))
    return green_quasistatic_quadrature(omega, s, qc.stack_of(params)).component(params.orientation)


def test_far_field_recovers_vacuum_rate():
    far = P.with_(z_distance=1e4)
    assert qc.purcell_rate(far) == pytest.approx(far.gamma0_si, rel=1e-2)


@pytest.mark.parametrize("orientation", ["parallel", "perpendicular"])
@pytest.mark.parametrize("ef", [0.3, 0.51, 0.8])
def test_purcell_consistent_with_quadrature(orientation, ef):
    p = P.with_(orientation=orientation, fermi_energy=ef)
    g = quad_green(p, p.epsilon)
    extra = 2 * CONST.mu0 / CONST.hbar * p.epsilon**2 * p.dipole_si**2 * g.imag
    assert qc.purcell_rate(p) - p.gamma0_si == pytest.approx(extra, rel=1e-6)


def test_purcell_reference_point():
    # value obtained through the quadrature route
    assert qc.purcell_rate(P) / P.gamma0_si == pytest.approx(15.76378007974216, rel=1e-6)


def test_knee_at_interband_threshold():
    energies = np.linspace(0.8, 1.3, 251)
    for z in (8.0, 12.0, 17.0):
        curve = qc.purcell_factor_curve(P.with_(z_distance=z), energies)
        slope = np.abs(np.gradient(curve, energies))
        assert abs(energies[np.argmax(slope)] - 1.02) <= 2 * 0.01


def test_lamb_shift_bare_interface_scaling(monkeypatch):
    def bare(params, omega, model="local"):
        st = qc.stack_of(params)
        return green_quasistatic_quadrature(omega, 0.0, st)

    monkeypatch.setattr(qc, "green_at", bare)
    zs = np.geomspace(5.0, 50.0, 5)
    shifts = np.array([qc.lamb_shift_kk(P.with_(z_distance=z)) for z in zs])
    assert np.all(np.isreal(shifts))
    slope = np.polyfit(np.log(zs), np.log(np.abs(shifts)), 1)[0]
    assert slope == pytest.approx(-3.0, abs=0.02)


def test_lamb_kk_matches_quadrature():
    g = quad_green(P, P.epsilon)
    ref = -CONST.mu0 / CONST.hbar * P.epsilon**2 * P.dipole_si**2 * g.real
    assert qc.lamb_shift_kk(P) == pytest.approx(ref, rel=1e-6)


def test_lamb_pv_matches_cauchy_weight_quadrature():
    # independent principal value: QUADPACK's Cauchy-weight rule on a window around eps
    eps, top = P.epsilon, ev_to_angular_frequency(10.0)

    def f(w):
        return w * w * qc._dgd(P, w, "local").imag

    tot = 0.0
    for lo, hi in [(0.0, 0.1 * eps), (0.1 * eps, 0.9 * eps)]:
        tot += quad(lambda w: f(w) / (eps - w), lo, hi, limit=4000, epsrel=1e-12, epsabs=0)[0]
    tot -= quad(f, 0.9 * eps, 1.1 * eps, weight="cauchy", wvar=eps, limit=4000, epsrel=1e-12, epsabs=0)[0]
    edges = [1.1 * eps] + [ev_to_angular_frequency(1.02 + k * 0.01) for k in (-5, -2, 0, 2, 5)]
    edges = sorted(x for x in edges if x >= 1.1 * eps) + [top]
    for lo, hi in zip(edges[:-1], edges[1:]):
        tot += quad(lambda w: f(w) / (eps - w), lo, hi, limit=4000, epsrel=1e-12, epsabs=0)[0]
    ref = CONST.mu0 / (math.pi * CONST.hbar) * tot
    assert qc.lamb_shift_pv(P) == pytest.approx(ref, rel=1e-8)


def test_lamb_pv_vanishes_without_loss(monkeypatch):
    monkeypatch.setattr(qc, "_dgd", lambda params, w, model: complex(1e-40, 0.0))
    assert qc.lamb_shift_pv(P) == 0.0


def test_lamb_pv_requires_cutoff_above_transition():
    with pytest.raises(ValueError):
        qc.lamb_shift_pv(P, omega_max=1.5 * P.epsilon)


def test_feedback_matches_quadrature():
    wl = P.omega_laser
    ref = wl**2 * CONST.mu0 * P.dipole_si**2 * quad_green(P, wl) / CONST.hbar
    assert qc.feedback_parameter(P) == pytest.approx(ref, rel=1e-6)
    # value obtained through the quadrature route
    assert abs(qc.feedback_parameter(P)) / P.gamma0_si == pytest.approx(141.57619572579827, rel=1e-6)


def test_feedback_passive_and_dispersive():
    efs = np.linspace(0.3, 0.9, 121)
    gs = np.array([qc.feedback_parameter(P.with_(fermi_energy=e)) for e in efs])
    assert np.all(gs.imag >= 0)
    # strongest variation of G with E_F sits near hbar omega_L / 2
    dg = np.abs(np.gradient(gs, efs))
    assert abs(efs[np.argmax(dg)] - 0.5) < 0.03


def test_effective_rabi():
    om = qc.effective_rabi(P)
    s = complex(local_conductivity(P.omega_laser, qc.graphene_of(P)))
    r_p = fresnel_retarded_normal(P.omega_laser, s, qc.stack_of(P))
    bare = abs(om) / abs(1 + r_p) * CONST.hbar / CONST.e_charge
    assert bare == pytest.approx(HBAR_OMEGA_BARE_EV, rel=1e-12)
    assert qc.effective_rabi(P.with_(intensity=0.0)) == 0
    assert qc.effective_rabi(P.with_(screening=2.0)) == pytest.approx(om / 2, rel=1e-15)
    assert qc.effective_rabi(P.with_(orientation="perpendicular")) == 0


def test_coupling_set_rules():
    c = qc.coupling_set(P)
    assert c.dephasing == pytest.approx(c.gamma_total / 2, rel=1e-15)
    assert c.gamma_total >= P.gamma0_si
    assert c.detuning_eff == pytest.approx(P.detuning0_rad + c.lamb_shift, rel=1e-15)
    bare = qc.coupling_set(P, lamb="none")
    assert bare.detuning_eff == P.detuning0_rad
    extra = qc.coupling_set(P.with_(extra_dephasing=1e-6))
    assert extra.dephasing == pytest.approx(extra.gamma_total / 2 + ev_to_angular_frequency(1e-6), rel=1e-14)
    with pytest.raises(ValueError):
        qc.coupling_set(P, lamb="exact")
    with pytest.raises(ValueError):
        qc.green_at(P, P.epsilon, model="hydrodynamic")


def test_coupling_scaled():
    c = qc.coupling_set(P)
    s = c.scaled(3.0)
    assert s.feedback_g == 3 * c.feedback_g and s.gamma_total == 3 * c.gamma_total


def test_bistable_regime_at_reference_parameters():
    c = qc.coupling_set(P.with_(fermi_energy=0.75))
    assert cubic_coefficients(c).disc > 0
