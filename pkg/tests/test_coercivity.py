import math

import numpy as np
import pytest
from scipy import integrate, special

from kraichnan_sqg.coercivity import (
    CoercivityProfile,
    QuadratureBudgetError,
    chi_delta,
    eval_F,
    eval_F_delta,
    fit_kappas,
    scaling_covariance,
    scaling_structure,
    structure_slope,
    tail_slope,
)


def F_radial(R, alpha):
    """Independent radial form -pi int_R^inf <r>^{-2-2alpha} (r^2 - R^2) / r dr."""
    f = lambda r: (1 + r * r) ** (-1 - alpha) * (r * r - R * R) / r
    val, _ = integrate.quad(f, R, np.inf, limit=400, epsabs=0, epsrel=1e-12)
    return -math.pi * val


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.9])
@pytest.mark.parametrize("R", [0.3, 1.0, 10.0, 300.0])
def test_F_matches_radial_oracle(alpha, R):
    scale = R ** (-2 * alpha) + R**-2
    assert abs(eval_F(R, alpha) - F_radial(R, alpha)) <= 1e-6 * scale


def test_F_isotropy():
    tol = 1e-6
    for r in (0.7, 5.0, 80.0):
        a = eval_F(np.array([r, 0.0]), 0.5, tol)
        b = eval_F(np.array([0.0, r]), 0.5, tol)
        c = eval_F(np.array([r, r]) / math.sqrt(2), 0.5, tol)
        scale = r**-1 + r**-2
        assert abs(a - b) <= 2 * tol * scale
        assert abs(a - c) <= 2 * tol * scale


def test_sign_at_large_radius():
    prof = CoercivityProfile.build(0.5, np.geomspace(0.1, 1e3, 13))
    assert prof.n0() is not None
    assert np.all(prof.values[prof.radii >= prof.n0()] < 0)


def test_tail_exponent():
    for alpha in (0.25, 0.5, 2 / 3):
        radii = np.geomspace(1e2, 1e4, 7)
        vals = [eval_F(r, alpha) for r in radii]
        assert tail_slope(radii, vals) == pytest.approx(-2 * alpha, abs=0.1)


def test_fit_has_no_violations_and_shrinks():
    prof = CoercivityProfile.build(0.5, np.geomspace(1, 1e3, 7))
    fit = fit_kappas(prof)
    assert fit.violations == 0 and fit.kappa1 > 0
    bound = -fit.kappa1 * prof.radii**-1.0 + fit.kappa2 * prof.radii**-2.0
    assert np.all(prof.values <= bound + 1e-12 * prof.bound_scale())
    dense = CoercivityProfile.build(0.5, np.geomspace(1, 1e3, 13))
    assert fit_kappas(dense).kappa1 <= fit.kappa1 * (1 + 1e-12)


def test_fit_needs_three_decades():
    with pytest.raises(ValueError):
        fit_kappas(CoercivityProfile.build(0.5, [1.0, 10.0]))


def test_chi_delta_range():
    n = np.geomspace(1e-4, 1e3, 200)
    for d in (0.5, 0.1, 1e-3):
        v = chi_delta(n, d)
        assert np.all((v >= 0) & (v <= 1))


def test_F_delta_against_nested_quadrature():
    # direct polar quadrature about k = 0 of the regularized kernel, moderate radius
    alpha, delta, R = 0.5, 0.1, 1.0
    n = np.array([R, 0.0])

    def inner(s):
        def g(phi):
            k = s * np.array([math.cos(phi), math.sin(phi)])
            j = n - k
            jj = j @ j
            pn2 = (j[0] * n[1] - j[1] * n[0]) ** 2 / jj
            return (1 + jj) ** (-1 - alpha) * pn2 * (chi_delta(s, delta) / s**2 - chi_delta(R, delta) / R**2)
        return s * integrate.quad(g, 0, 2 * math.pi, limit=200, epsabs=1e-13)[0]

    pts = [R, math.sqrt(delta) / (2 * math.pi), 1 / (2 * math.pi * math.sqrt(delta))]
    total = integrate.quad(inner, 0, 20, points=pts, limit=400, epsabs=1e-11)[0]
    total += integrate.quad(inner, 20, np.inf, limit=400, epsabs=1e-11)[0]
    assert eval_F_delta(R, alpha, delta, tol=1e-9) == pytest.approx(total, abs=1e-7)


def test_budget_exhaustion_names_radius():
    with pytest.raises(QuadratureBudgetError) as info:
        eval_F(3.0, 0.5, budget=100)
    assert info.value.radius == pytest.approx(3.0)


@pytest.mark.parametrize("alpha", [0.5, 2 / 3])
def test_scaling_covariance_against_hankel_quadrature(alpha):
    r = 0.8
    w = lambda k: (1 + k * k) ** (-1 - alpha) * k
    edges = np.linspace(0, 4000, 801)

    def hankel(g):
        # panel sum; the remaining tail is below 1e-8 for these alpha
        return sum(integrate.quad(g, a, b, epsabs=1e-14)[0] for a, b in zip(edges[:-1], edges[1:]))

    along = hankel(lambda k: w(k) * special.j1(k * r) / (k * r))
    across = hankel(lambda k: w(k) * (special.j0(k * r) - special.j1(k * r) / (k * r)))
    c = scaling_covariance(alpha, 1.0, np.array([r, 0.0]))
    assert c[0, 0] == pytest.approx(along, rel=1e-5)
    assert c[1, 1] == pytest.approx(across, rel=1e-5)
    assert abs(c[0, 1]) < 1e-15
    c0 = scaling_covariance(alpha, 1.0, np.zeros(2))
    np.testing.assert_allclose(c0, np.eye(2) / (4 * alpha), rtol=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 2 / 3])
def test_scaling_structure_slope_and_anisotropy(alpha):
    z = np.geomspace(1e-3, 1e-1, 9)
    for lam in (1.0, 0.1, 0.01):
        assert structure_slope(alpha, lam, z) == pytest.approx(2 * alpha, abs=0.1)
    _, along, across = scaling_structure(alpha, 0.01, np.array([1e-3]))
    assert across[0] / along[0] == pytest.approx(1 + 2 * alpha, rel=0.05)


def test_structure_consistent_with_covariance():
    alpha, lam, r = 0.5, 0.3, 2.0
    tr, along, across = scaling_structure(alpha, lam, np.array([r]))
    c0 = scaling_covariance(alpha, lam, np.zeros(2))
    c = scaling_covariance(alpha, lam, np.array([0.0, r]))
    q = c0 - c
    assert q[1, 1] == pytest.approx(along[0], rel=1e-10)
    assert q[0, 0] == pytest.approx(across[0], rel=1e-10)
