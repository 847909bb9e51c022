import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kraichnan_sqg.noise import counter_rng
from kraichnan_sqg.spectral import (
    Grid,
    MeanNotZeroError,
    SpectralField,
    fractional_laplacian,
    lebesgue_norm,
    pairing,
    perp_gradient,
    random_field,
    read_checkpoint,
    sobolev_norm,
    velocity_from_scalar,
    write_checkpoint,
)

from conftest import single_mode


def test_fractional_laplacian_single_mode(grid):
    vals, k = single_mode(grid, (2, 1), 0.7)
    f = SpectralField.from_physical(vals, grid)
    out = fractional_laplacian(f, 0.6).to_physical()
    np.testing.assert_allclose(out, np.linalg.norm(k) ** 0.6 * vals, atol=1e-12)


def test_fractional_laplacian_identity_and_inverse(grid, rng):
    f = random_field(grid, rng)
    np.testing.assert_allclose(fractional_laplacian(f, 0.0).coeffs, f.coeffs, atol=1e-15)
    back = fractional_laplacian(fractional_laplacian(f, 1.3), -1.3)
    assert np.max(np.abs(back.coeffs - f.coeffs)) <= 1e-12 * np.max(np.abs(f.coeffs))


def test_negative_power_needs_mean_free(grid):
    f = SpectralField.from_physical(np.ones((grid.N, grid.N)), grid)
    with pytest.raises(MeanNotZeroError):
        fractional_laplacian(f, -1.0)


def test_perp_gradient_of_sine(grid):
    vals, k = single_mode(grid, (1, 0), phase="sin")
    v = perp_gradient(SpectralField.from_physical(vals, grid)).to_physical()
    np.testing.assert_allclose(v[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(v[1], k[0] * np.cos(k[0] * grid.coordinates()[0]), atol=1e-12)


def test_perp_gradient_constant_is_zero(grid):
    f = SpectralField.from_physical(np.full((grid.N, grid.N), 3.0), grid)
    assert np.max(np.abs(perp_gradient(f).to_physical())) == 0.0


def test_velocity_sqg_modulus(grid, rng):
    th = random_field(grid, rng)
    u = velocity_from_scalar(th, 1.0)
    mod = np.sqrt(np.abs(u.u1.coeffs) ** 2 + np.abs(u.u2.coeffs) ** 2)
    np.testing.assert_allclose(mod, np.abs(th.coeffs), atol=1e-14)


def test_velocity_single_mode_euler(grid):
    vals, k = single_mode(grid, (1, 2))
    u = velocity_from_scalar(SpectralField.from_physical(vals, grid), 0.0).to_physical()
    k2 = k @ k
    X, Y = grid.coordinates()
    s = np.sin(k[0] * X + k[1] * Y)
    # u = -grad^perp Lambda^{-2} theta = (d2 psi, -d1 psi) with psi = theta/|k|^2
    np.testing.assert_allclose(u[0], -k[1] * s / k2, atol=1e-12)
    np.testing.assert_allclose(u[1], k[0] * s / k2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), beta=st.floats(0.0, 1.0))
def test_velocity_divergence_free(seed, beta):
    grid = Grid(32, 2 * math.pi)
    th = random_field(grid, counter_rng(seed, 0, 9))
    div = velocity_from_scalar(th, beta).divergence().coeffs
    assert np.max(np.abs(div)) < 1e-12


def test_sobolev_norm_single_mode():
    grid = Grid(32, 3.0)
    vals, k = single_mode(grid, (3, 0), 0.4)
    f = SpectralField.from_physical(vals, grid)
    expected = 0.4 * np.linalg.norm(k) ** -0.7 * math.sqrt(grid.L**2 / 2)
    assert sobolev_norm(f, -0.7) == pytest.approx(expected, rel=1e-12)


def test_parseval_and_lambda_norm(grid, rng):
    f = random_field(grid, rng, slope=-1.0)
    assert sobolev_norm(f, 0.0) == pytest.approx(lebesgue_norm(f, 2.0), rel=1e-10)
    assert sobolev_norm(fractional_laplacian(f, 0.4), 0.0) == pytest.approx(sobolev_norm(f, 0.4), rel=1e-12)


def test_lebesgue_norm_examples():
    grid = Grid(16, 2.5)
    c = SpectralField.from_physical(np.full((16, 16), -2.0), grid)
    assert lebesgue_norm(c, 3.0) == pytest.approx(2.0 * grid.L ** (2 / 3))
    vals, _ = single_mode(grid, (1, 1), 1.7)
    assert lebesgue_norm(SpectralField.from_physical(vals, grid), math.inf) == pytest.approx(1.7)


def test_pairing_matches_quadrature(grid, rng):
    f, g = random_field(grid, rng), random_field(grid, rng)
    quad = np.sum(f.to_physical() * g.to_physical()) * grid.dx**2
    assert pairing(f, g) == pytest.approx(quad, rel=1e-12)


def test_random_field_properties(grid, rng):
    f = random_field(grid, rng, k_max=5.0, amplitude=2.0)
    assert f.is_mean_free()
    assert f.hermitian_defect() < 1e-14
    assert lebesgue_norm(f, 2.0) == pytest.approx(2.0)
    assert np.all(f.coeffs[grid.full.kabs > 5.0] == 0)


def test_half_layout_roundtrip(grid, rng):
    f = random_field(grid, rng)
    g = SpectralField.from_half(f.to_half(), grid)
    np.testing.assert_allclose(g.coeffs, f.coeffs, atol=1e-15)


def test_checkpoint_roundtrip(grid, rng):
    f = random_field(grid, rng)
    buf = io.BytesIO()
    write_checkpoint(buf, f, 0.25)
    buf.seek(0)
    g, t = read_checkpoint(buf)
    assert t == 0.25
    assert np.array_equal(g.coeffs, f.coeffs)
    assert buf.getvalue()[:4] == b"KGSQ"
