import cmath

import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphene_bistability.expint import ExpintDomainError, expint_e1, scaled_expint_e1

# principal-branch E1 from an arbitrary-precision library evaluation
E1_REF = [
    (1, 0.21938393439552027368),
    (2 + 3j, -0.024826207944199362925 + 0.020316674911044622667j),
    (-5 + 0.1j, -40.066618026157943556 - 0.17669220132067429863j),
    (10j, 0.045456433004455372635 + 0.0875512674239774301j),
    (-30 + 1j, -209840771895.59932405 + 303224387102.12445933j),
    (0.5 - 0.2j, 0.49276871233198506069 + 0.22342522586908422747j),
    (-3 - 4j, 4.1540916516426898225 - 1.1528259664345642385j),
    (60 + 5j, 5.1674239756783616978e-29 + 1.3345084696729692404e-28j),
]

# exp(z) E1(z) at large or near-cut arguments, same source
SCALED_REF = [
    (-700 + 1j, -0.0014306151729225540492 - 2.0466681748410481143e-6j),
    (700j, 2.0407913379628361975e-6 - 0.0014285655978104273861j),
    (-700 + 10j, -0.001430325358990380451 - 0.000020462535592163132396j),
    (-5 + 1e-10j, -0.2707662554889404071 - 0.02116788479968092228j),
    (-5 - 1e-10j, -0.2707662554889404071 + 0.02116788479968092228j),
    (-39 + 2j, -0.02626207553351139569 - 0.0013843005861458961833j),
    (-41 - 3j, -0.024876096582377379215 + 0.0018682277525950718358j),
]


@pytest.mark.parametrize("z, ref", E1_REF)
def test_e1_reference(z, ref):
    assert expint_e1(z) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("z, ref", SCALED_REF)
def test_scaled_e1_reference(z, ref):
    assert scaled_expint_e1(z) == pytest.approx(ref, rel=1e-12)


@given(
    st.floats(-30, 30).filter(lambda x: abs(x) > 0.2),
    st.floats(-30, 30).filter(lambda y: abs(y) > 0.2),
)
def test_e1_derivative(x, y):
    z = complex(x, y)
    h = 1e-5 * abs(z)
    num = (scaled_expint_e1(z + h) * cmath.exp(-(z + h)) - scaled_expint_e1(z - h) * cmath.exp(-(z - h))) / (2 * h)
    exact = -cmath.exp(-z) / z
    assert abs(num - exact) <= 1e-7 * abs(exact)


def test_large_argument_asymptotics():
    for z in (50, 50j, -50j, 35 + 35j, -30 + 40j):
        z = complex(z)
        series = sum((-1) ** k * [1, 1, 2, 6, 24][k] / z**k for k in range(5))
        assert abs(z * scaled_expint_e1(z) - series) < 1e-6


def test_scaled_no_overflow():
    for r in (100, 300, 700):
        for z in (complex(-r, 1e-3 * r), complex(-0.6 * r, 0.8 * r), complex(0, r)):
            v = scaled_expint_e1(z)
            assert cmath.isfinite(v)
            assert abs(z * v - 1) < 0.05


def test_domain_errors():
    with pytest.raises(ExpintDomainError):
        expint_e1(0)
    with pytest.raises(ExpintDomainError, match="branch cut"):
        scaled_expint_e1(-2.0)


def test_conjugate_symmetry():
    for z in (1 + 2j, -4 + 0.5j, -50 + 3j):
        assert expint_e1(z.conjugate()) == pytest.approx(expint_e1(z).conjugate(), rel=1e-13)
