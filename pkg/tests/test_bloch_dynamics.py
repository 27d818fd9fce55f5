import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphene_bistability.bloch_dynamics import (
    BlochState,
    Trajectory,
    _rhs_components,
    adiabatic_sweep,
    bloch_rhs,
    integrate,
)
from graphene_bistability.cli import CouplingBuilder
from graphene_bistability.config import MODEL_DEFAULTS
from graphene_bistability.physics_core import SystemParams
from graphene_bistability.qed_coupling import CouplingSet
from graphene_bistability.steady_state import cubic_coefficients, steady_roots

BASE = SystemParams(z_distance=12.0)
FERMI = CouplingBuilder(BASE, ["fermi_energy"], MODEL_DEFAULTS)

finite = st.floats(-3.0, 3.0, allow_nan=False)


def test_pure_decay_closed_form():
    c = CouplingSet(1.0, 0.0, 0j, 0j, 0.5, 0.3)
    traj = integrate(BlochState(0.0, 0.2 + 0.1j), c, 8.0, tol=1e-11)
    t = traj.times
    assert np.allclose(traj.z_pop, np.exp(-t) - 1.0, atol=1e-9, rtol=0)
    ref = (0.2 + 0.1j) * np.exp((0.3j - 0.5) * t)
    assert np.allclose(traj.coh, ref, atol=1e-9, rtol=0)


def test_zero_feedback_saturates_to_closed_form():
    c = CouplingSet(1.0, 0.0, 0j, 0.6 - 0.2j, 0.8, 0.4)
    traj = integrate(BlochState.ground(), c, 80.0, tol=1e-11)
    ss = steady_roots(c).roots[0]
    assert traj.final.z_pop == pytest.approx(ss.z_pop, abs=1e-8)
    assert abs(traj.final.coh - ss.coh) < 1e-8


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite, finite, finite, finite)
def test_population_derivative_is_real(z, xr, xi, gr, gi, orr, oi):
    c = CouplingSet(1.0, 0.0, complex(gr, gi), complex(orr, oi), 0.7, 0.2)
    r21 = complex(xr, xi)
    dz, d21, d12 = _rhs_components(z, r21, r21.conjugate(), c)
    assert abs(dz.imag) <= 1e-12 * (1.0 + abs(dz))
    assert abs(d12 - d21.conjugate()) <= 1e-12 * (1.0 + abs(d21))


def test_real_form_matches_complex_form():
    c = CouplingSet(1.0, 0.1, 3.0 + 1.5j, 0.4 + 0.3j, 0.6, -0.7)
    s = BlochState(-0.3, 0.1 - 0.2j)
    d = bloch_rhs(s, c)
    traj = integrate(s, c, 1e-6, tol=1e-12)
    # first-order step from the integrator agrees with the analytic derivative
    slope = (traj.z_pop[-1] - traj.z_pop[0]) / (traj.times[-1] - traj.times[0])
    assert slope == pytest.approx(d.z_pop, rel=1e-5)


def test_ground_state_is_fixed_point_without_drive():
    c = CouplingSet(1.0, 0.0, 5.0 + 2.0j, 0j, 0.5, 0.3)
    d = bloch_rhs(BlochState.ground(), c)
    assert d.z_pop == 0.0 and d.coh == 0.0
    traj = integrate(BlochState.ground(), c, 50.0)
    assert traj.final.z_pop == -1.0 and traj.final.coh == 0.0


@pytest.mark.parametrize("branch", ["lower", "upper"])
def test_stable_roots_persist(branch):
    c = FERMI(0.75)
    root = getattr(steady_roots(c), branch)()
    traj = integrate(BlochState(root.z_pop + 1e-4, root.coh), c, 200.0 / c.gamma_total)
    assert traj.final.z_pop == pytest.approx(root.z_pop, abs=1e-6)
    assert abs(traj.final.coh - root.coh) < 1e-6


def test_positivity_along_trajectory():
    c = FERMI(0.75)
    traj = integrate(BlochState.ground(), c, 100.0 / c.gamma_total)
    assert all(s.is_valid(1e-8) for s in traj.states)


def _sweeps(values):
    up = adiabatic_sweep(values, FERMI)
    down = adiabatic_sweep(values[::-1], FERMI)
    return up.z_pop, down.z_pop[::-1]


def test_sweep_without_bistability_has_no_hysteresis():
    values = np.linspace(0.45, 0.60, 6)
    assert all(cubic_coefficients(FERMI(v)).disc < 0 for v in values)
    up, down = _sweeps(values)
    assert np.allclose(up, down, atol=1e-6)
    for v, z in zip(values, up):
        assert z == pytest.approx(steady_roots(FERMI(v)).roots[0].z_pop, abs=1e-6)


def test_hysteresis_window_matches_discriminant():
    values = np.round(np.linspace(0.60, 0.94, 18), 10)
    up, down = _sweeps(values)
    split = np.abs(up - down) > 0.05
    bistable = np.array([cubic_coefficients(FERMI(v)).disc > 0 for v in values])
    assert split.any()
    assert not np.any(split & ~bistable)
    # the two sets agree except within one sweep step of a window edge
    step = values[1] - values[0]
    edges = values[np.flatnonzero(np.diff(bistable.astype(int)) != 0)] + step / 2
    for v in values[split != bistable]:
        assert np.min(np.abs(edges - v)) <= step


def test_tolerance_range_enforced():
    c = CouplingSet(1.0, 0.0, 0j, 0.1 + 0j, 0.5, 0.0)
    for tol in (1e-13, 1e-3):
        with pytest.raises(ValueError):
            integrate(BlochState.ground(), c, 1.0, tol=tol)
    with pytest.raises(ValueError):
        integrate(BlochState.ground(), c, 0.0)
    with pytest.raises(ValueError):
        integrate(BlochState(0.5, 0.9 + 0j), c, 1.0)


def test_short_dwell_rejected():
    c = CouplingSet(1.0, 0.0, 0j, 0.1 + 0j, 0.5, 0.0)
    with pytest.raises(ValueError, match="20/Gamma"):
        adiabatic_sweep([0.0, 1.0], lambda v: c, dwell=10.0)
    with pytest.raises(ValueError):
        adiabatic_sweep([], lambda v: c)


def test_sweep_records_control_and_elapsed_time():
    c = CouplingSet(1.0, 0.0, 0j, 0.1 + 0j, 0.5, 0.0)
    traj = adiabatic_sweep([0.1, 0.2, 0.3], lambda v: c, dwell=25.0)
    assert np.allclose(traj.times, [25.0, 50.0, 75.0])
    assert np.array_equal(traj.params_trace, [0.1, 0.2, 0.3])


def test_trajectory_csv(tmp_path):
    c = CouplingSet(1.0, 0.0, 0j, 0.1 + 0j, 0.5, 0.0)
    traj = adiabatic_sweep([0.1, 0.2], lambda v: c, dwell=25.0)
    path = tmp_path / "t.csv"
    traj.to_csv(path, ["run = test"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# run = test"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["t_s", "Z", "Re_rho21", "Im_rho21", "control_value"]
    assert float(rows[2][0]) == 50.0 and float(rows[2][4]) == 0.2
    assert float(rows[2][1]) == traj.z_pop[1]


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [0.0], [0j, 0j])
    with pytest.raises(ValueError):
        Trajectory([1.0, 1.0], [0.0, 0.0], [0j, 0j])
    with pytest.raises(ValueError):
        Trajectory([0.0, 1.0], [0.0, 0.0], [0j, 0j], params_trace=[1.0])
