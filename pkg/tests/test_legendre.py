import math

import numpy as np
import pytest
from numpy.polynomial import polynomial as P
from scipy.special import sph_harm_y

from sphcrit.legendre import (
    DomainError,
    associated_legendre_row,
    legendre_derivatives,
    legendre_jet,
)


def rodrigues(ell):
    """Power-series coefficients of P_ell from the Rodrigues formula."""
    c = np.array([1.0])
    for _ in range(ell):
        c = P.polymul(c, [-1.0, 0.0, 1.0])
    for _ in range(ell):
        c = P.polyder(c)
    return c / (2 ** ell * math.factorial(ell))


def test_jet_examples():
    assert np.allclose(legendre_jet(2, 1.0).values[:3], [1, 3, 3])
    j = legendre_jet(0, 0.3)
    assert j.value == 1.0 and np.all(j.values[1:] == 0)
    assert np.allclose(legendre_jet(2, 0.0).values[:3], [-0.5, 0, 3])


@pytest.mark.parametrize("ell", range(0, 9))
@pytest.mark.parametrize("t", [-0.9, -0.3, 0.0, 0.5, 0.99])
def test_against_rodrigues(ell, t):
    c = rodrigues(ell)
    want = [P.polyval(t, P.polyder(c, k)) if k else P.polyval(t, c) for k in range(5)]
    got = legendre_jet(ell, t).values
    scale = np.maximum(np.abs(want), 1.0)
    assert np.all(np.abs(got - want) / scale < 1e-10)


def test_values_at_one_closed_forms():
    for ell in range(0, 201):
        lam = ell * (ell + 1)
        j = legendre_jet(ell, 1.0)
        assert j.value == pytest.approx(1.0, rel=1e-14)
        assert j[1] == pytest.approx(lam / 2, rel=1e-12, abs=0)
        assert j[2] == pytest.approx(lam * (lam - 2) / 8, rel=1e-12, abs=1e-12)


def test_finite_differences():
    h = 1e-5
    for ell in (3, 10, 25):
        for t in np.linspace(-0.9, 0.9, 7):
            d = legendre_derivatives(ell, np.array([t - h, t, t + h]))
            for k in range(4):
                fd = (d[k][2] - d[k][0]) / (2 * h)
                assert fd == pytest.approx(d[k + 1][1], rel=1e-6, abs=1e-6 * max(1, abs(d[k + 1][1])))


def test_bounded_on_interval():
    t = np.linspace(-1, 1, 2001)
    for ell in (1, 7, 40, 150):
        assert np.all(np.abs(legendre_derivatives(ell, t, 0)[0]) <= 1 + 1e-12)


def test_domain_error():
    with pytest.raises(DomainError):
        legendre_jet(3, 1.0 + 1e-9)
    legendre_jet(3, 1.0 + 1e-13)
    with pytest.raises(DomainError):
        legendre_jet(-1, 0.0)


@pytest.mark.parametrize("ell", [1, 2, 5, 17, 50, 200])
def test_row_against_scipy(ell):
    for theta in (0.05, 0.7, np.pi / 2, 2.9):
        row = associated_legendre_row(ell, theta)
        m = np.arange(ell + 1)
        ref = np.real(sph_harm_y(ell, m, theta, 0.0))
        assert np.allclose(row.values, ref, rtol=0, atol=1e-12 * max(1, np.abs(ref).max()))


def test_row_derivatives_finite_difference():
    ell, theta, h = 12, 1.1, 1e-5
    lo, mid, hi = (associated_legendre_row(ell, theta + s) for s in (-h, 0, h))
    assert np.allclose((hi.values - lo.values) / (2 * h), mid.dtheta, atol=1e-6)
    assert np.allclose((hi.dtheta - lo.dtheta) / (2 * h), mid.d2theta, atol=1e-5)


def test_row_examples():
    r1 = associated_legendre_row(1, np.pi / 2)
    assert r1.values[0] == pytest.approx(0, abs=1e-15) and abs(r1.values[1]) > 0.1
    r3 = associated_legendre_row(3, np.pi / 2)
    assert abs(r3.values[0]) < 1e-15 and abs(r3.values[2]) < 1e-15
    assert abs(r3.values[1]) > 0.1 and abs(r3.values[3]) > 0.1


def test_row_normalization_by_quadrature():
    x, w = np.polynomial.legendre.leggauss(80)
    ell = 9
    rows = np.array([associated_legendre_row(ell, t).values for t in np.arccos(x)])
    assert np.allclose(w @ rows ** 2, 1 / (2 * np.pi), rtol=1e-12)


def test_addition_theorem_closure():
    for ell in (1, 6, 60):
        for theta in (0.3, 1.9):
            v = associated_legendre_row(ell, theta).values
            total = v[0] ** 2 + 2 * np.sum(v[1:] ** 2)
            assert total * 4 * np.pi / (2 * ell + 1) == pytest.approx(1.0, rel=1e-13)


def test_row_pole_error():
    with pytest.raises(DomainError):
        associated_legendre_row(4, 0.0)
    with pytest.raises(DomainError):
        associated_legendre_row(4, np.pi)
