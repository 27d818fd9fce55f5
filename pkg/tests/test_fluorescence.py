import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphene_bistability.bloch_dynamics import BlochState, bloch_rhs
from graphene_bistability.cli import CouplingBuilder
from graphene_bistability.config import MODEL_DEFAULTS
from graphene_bistability.fluorescence import (
    UnstableBranchError,
    build_regression,
    coherent_weight,
    g2,
    incoherent_spectrum,
    peak_offsets,
    sideband_prominence,
    write_g2_csv,
    write_spectrum_csv,
)
from graphene_bistability.physics_core import SystemParams
from graphene_bistability.qed_coupling import CouplingSet
from graphene_bistability.steady_state import SteadyRoot, steady_roots

FERMI = CouplingBuilder(SystemParams(z_distance=12.0), ["fermi_energy"], MODEL_DEFAULTS)
MOLLOW = CouplingSet(1.0, 0.0, 0j, 10.0 + 0j, 0.5, 0.0)


def only_root(c):
    return steady_roots(c).roots[0]


@pytest.mark.parametrize("ef", [0.68, 0.75, 0.865])
def test_fixed_point_identity(ef):
    c = FERMI(ef)
    for r in steady_roots(c).stable_roots():
        assert build_regression(c, r).fixed_point_residual() < 1e-10


def test_no_drive_no_emission():
    c = CouplingSet(1.0, 0.0, 5.0 + 0.4j, 0j, 0.5, 0.2)
    rs = build_regression(c, only_root(c))
    assert np.all(rs.f0_vec == 0)
    spec = incoherent_spectrum(rs, np.linspace(-10, 10, 11))
    assert np.all(spec.s_inc == 0) and coherent_weight(rs) == 0


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.1, 5.0), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0), st.floats(0.5, 3.0),
    st.floats(0.0, 1.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5),
)
def test_zero_feedback_matrix_is_bloch_flow(orr, oi, d, gam, p, xr, xi):
    # with G = 0 the regression matrix is the linear Bloch generator itself
    c = CouplingSet(1.0, 0.0, 0j, complex(orr, oi), gam, d)
    rs = build_regression(c, only_root(c))
    r21 = complex(xr, xi)
    rho = np.array([p, r21, r21.conjugate()])
    lhs = rs.m_matrix @ rho + rs.k_vec
    flow = bloch_rhs(BlochState(2.0 * p - 1.0, r21), c)
    assert lhs[0] == pytest.approx(0.5 * flow.z_pop, abs=1e-12)
    assert lhs[1] == pytest.approx(flow.coh, abs=1e-12)
    assert lhs[2] == pytest.approx(flow.coh.conjugate(), abs=1e-12)


def test_weak_drive_lorentzian():
    gam, d = 20.0, 50.0
    c = CouplingSet(1.0, 0.0, 0j, 0.01 + 0j, gam, d)
    grid = np.linspace(-150.0, 150.0, 60001)
    spec = incoherent_spectrum(build_regression(c, only_root(c)), grid)
    k = int(np.argmax(spec.s_inc))
    assert grid[k] == pytest.approx(-d, abs=grid[1] - grid[0])
    above = np.where(spec.s_inc >= spec.s_inc[k] / 2)[0]
    hwhm = 0.5 * (grid[above[-1]] - grid[above[0]])
    assert hwhm == pytest.approx(gam, rel=0.01)
    assert len(peak_offsets(spec)) == 1


def test_mollow_sidebands():
    # default spectrum grid of the CLI: +-60 Gamma in 2401 points
    grid = np.linspace(-60.0, 60.0, 2401)
    spec = incoherent_spectrum(build_regression(MOLLOW, only_root(MOLLOW)), grid)
    peaks = peak_offsets(spec)
    step = grid[1] - grid[0]
    assert len(peaks) == 3
    assert peaks[1] == pytest.approx(0.0, abs=step)
    assert peaks[0] == pytest.approx(-2 * abs(MOLLOW.rabi), abs=step)
    assert peaks[2] == pytest.approx(2 * abs(MOLLOW.rabi), abs=step)
    assert spec.imag_residue < 1e-9
    assert np.min(spec.s_inc) >= -1e-9 * np.max(spec.s_inc)


def test_mollow_sideband_shift_shrinks_with_drive():
    # damping pulls the sideband maxima slightly inside +-2|Omega|
    rel = []
    for om in (5.0, 20.0):
        c = CouplingSet(1.0, 0.0, 0j, om + 0j, 0.5, 0.0)
        grid = np.linspace(1.5 * om, 2.5 * om, 20001)
        spec = incoherent_spectrum(build_regression(c, only_root(c)), grid)
        rel.append(abs(grid[np.argmax(spec.s_inc)] / (2 * om) - 1))
    assert rel[1] < rel[0] / 4


def test_imaginary_residue_tail_of_off_resonant_peak():
    # Im of 1/(a + i(w - b)) integrates over [-W, W] to ln[(a^2+(W-b)^2)/(a^2+(W+b)^2)]/2
    c = CouplingSet(1.0, 0.0, 0j, 0.01 + 0j, 20.0, 50.0)
    rs = build_regression(c, only_root(c))
    res = [incoherent_spectrum(rs, np.linspace(-w, w, 40001)).imag_residue for w in (1e3, 1e4)]
    assert res[1] < res[0] / 8


def test_g2_limits_on_both_branches():
    c = FERMI(0.75)
    for r in steady_roots(c).stable_roots():
        series = g2(c, r, np.linspace(0.0, 50.0, 201) / c.gamma_total)
        assert abs(series.g2_values[0]) < 1e-6
        assert series.g2_values[-1] == pytest.approx(1.0, abs=1e-3)


def test_g2_oscillates_under_strong_drive_only():
    strong = g2(MOLLOW, only_root(MOLLOW), np.linspace(0.0, 10.0, 2001)).g2_values
    assert strong.max() > 1.5
    weak_c = CouplingSet(1.0, 0.0, 0j, 0.05 + 0j, 0.5, 0.0)
    weak = g2(weak_c, only_root(weak_c), np.linspace(0.0, 10.0, 2001)).g2_values
    assert np.all(np.diff(weak) >= -1e-12)


def test_g2_grid_validation():
    with pytest.raises(ValueError):
        g2(MOLLOW, only_root(MOLLOW), [1.0, 0.5])
    with pytest.raises(ValueError):
        g2(MOLLOW, only_root(MOLLOW), [-1.0, 0.5])


def test_coherent_weight_far_detuned():
    om, d, gam = 0.01, 40.0, 0.7
    c = CouplingSet(1.0, 0.0, 0j, om + 0j, gam, d)
    rs = build_regression(c, only_root(c))
    assert coherent_weight(rs) == pytest.approx(math.pi * om**2 / (d**2 + gam**2), rel=1e-6)


def test_coherent_weight_jumps_across_branches():
    c = FERMI(0.75)
    ss = steady_roots(c)
    lo, hi = (coherent_weight(build_regression(c, r)) for r in (ss.lower(), ss.upper()))
    assert abs(hi - lo) > 0.1 * max(hi, lo)


def test_unstable_root_rejected():
    c = FERMI(0.75)
    ss = steady_roots(c)
    middle = ss.roots[1]
    assert not middle.stable
    with pytest.raises(UnstableBranchError):
        build_regression(c, middle)
    with pytest.raises(UnstableBranchError):
        g2(c, middle, [0.0])


def test_incoherent_power_vanishes_with_drive():
    grid = np.linspace(-60.0, 60.0, 24001)
    totals = []
    for om in (3.0, 1.0, 0.3, 0.1, 0.03):
        c = CouplingSet(1.0, 0.0, 0j, om + 0j, 0.5, 0.0)
        s = incoherent_spectrum(build_regression(c, only_root(c)), grid)
        totals.append(np.trapezoid(s.s_inc, grid))
    assert all(np.isfinite(totals))
    assert all(a > b for a, b in zip(totals, totals[1:]))
    assert totals[-1] < 1e-4 * totals[0]


def test_singular_solve_names_frequency():
    # gamma = 0 puts a pole of (i w - M) on the real axis
    r = SteadyRoot(-1.0, 0j, -1.0, True)
    c = CouplingSet(1.0, 0.0, 0j, 0j, 0.0, 0.0)
    with pytest.raises(np.linalg.LinAlgError, match="omega"):
        incoherent_spectrum(build_regression(c, r), [0.0])


def test_sideband_prominence_contrast_across_upper_fold():
    iii, iv = FERMI(0.865), FERMI(0.88)
    grid = np.linspace(-30.0, 30.0, 2401) * iii.gamma_total
    s3 = incoherent_spectrum(build_regression(iii, steady_roots(iii).upper()), grid)
    s4 = incoherent_spectrum(build_regression(iv, steady_roots(iv).lower()), grid)
    assert sideband_prominence(s3) > 3 * sideband_prominence(s4)


def test_csv_outputs(tmp_path):
    rs = build_regression(MOLLOW, only_root(MOLLOW))
    spec = incoherent_spectrum(rs, np.linspace(-5, 5, 5), branch="upper")
    p = tmp_path / "s.csv"
    write_spectrum_csv(spec, p, ["config = {}"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# config = {}"
    assert lines[1].startswith("# coherent_weight = ")
    assert lines[2] == "# branch = upper"
    assert next(csv.reader([lines[3]])) == ["omega_minus_omegaL_eV", "S_inc_arb"]
    assert len(lines) == 4 + 5

    series = g2(MOLLOW, only_root(MOLLOW), [0.0, 1e-9])
    q = tmp_path / "g.csv"
    write_g2_csv(series, q)
    rows = q.read_text().splitlines()
    assert rows[1] == "tau_ns,g2"
    assert float(rows[3].split(",")[0]) == 1.0
