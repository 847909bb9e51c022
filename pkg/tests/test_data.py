import math

import numpy as np
import pytest

from kraichnan_sqg.data import (
    PRESETS,
    _mollifier_transform,
    approximate_datum,
    approximation_error,
    cutoff_profile,
    make_datum,
    mollify,
    support_center,
)
from kraichnan_sqg.spectral import Grid, lebesgue_norm, sobolev_norm


@pytest.mark.parametrize("kind", PRESETS)
def test_presets_are_mean_free_and_real(kind):
    grid = Grid(64, 16.0)
    f, norms = make_datum(kind, grid, p=3.0, seed=2)
    assert f.is_mean_free()
    assert f.hermitian_defect() < 1e-12
    assert set(norms) == {"L1", "L2", "L3", "Linf", "H-1"}


def test_band_limited_seed_and_stream():
    grid = Grid(32, 2 * math.pi)
    a, _ = make_datum("band_limited", grid, seed=1)
    b, _ = make_datum("band_limited", grid, seed=1)
    c, _ = make_datum("band_limited", grid, seed=1, stream=1)
    assert np.array_equal(a.coeffs, b.coeffs)
    assert not np.array_equal(a.coeffs, c.coeffs)


def test_unknown_preset_and_options():
    grid = Grid(16, 1.0)
    with pytest.raises(ValueError):
        make_datum("spiral", grid)
    with pytest.raises(ValueError):
        make_datum("band_limited", grid, colour=2)


def test_cutoff_profile():
    r = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    v = cutoff_profile(r)
    assert v[0] == v[1] == v[2] == 1.0
    assert 0 < v[3] < 1
    assert v[4] == v[5] == 0.0


def test_mollifier_transform_mass_and_decay():
    v = _mollifier_transform(np.array([0.0, 5.0, 20.0]))
    assert v[0] == pytest.approx(1.0, abs=1e-10)
    assert abs(v[2]) < abs(v[1]) < 1


def test_support_center_finds_bump():
    grid = Grid(128, 32.0)
    f, _ = make_datum("bump_laplacian", grid, center=(5.0, 27.0))
    cx, cy = support_center(f)
    assert cx == pytest.approx(5.0, abs=grid.dx) and cy == pytest.approx(27.0, abs=grid.dx)


def test_cutoff_inactive_for_laplacian_of_compact_bump():
    # Lambda^{-2} f is the compact bump itself, so the cutoff acts as the identity
    grid = Grid(512, 64.0)
    f, _ = make_datum("bump_laplacian", grid)
    eps = 0.2
    d = approximate_datum(f, eps) - mollify(f, eps)
    assert sobolev_norm(d, 0.0) <= 1e-6 * sobolev_norm(f, 0.0)


def test_epsilon_too_small_rejected():
    grid = Grid(64, 16.0)
    f, _ = make_datum("dipole", grid)
    with pytest.raises(ValueError, match="exceeds"):
        approximate_datum(f, 0.2)


def test_approximation_error_decreases():
    grid = Grid(512, 128.0)
    f, _ = make_datum("dipole", grid)
    errs = [approximation_error(f, approximate_datum(f, e, 3.0), 3.0) for e in (0.2, 0.1, 0.05)]
    assert errs[0] > errs[1] > errs[2]


def test_approximation_keeps_mean_zero():
    grid = Grid(128, 64.0)
    f, _ = make_datum("vortex_patch", grid)
    g = approximate_datum(f, 0.1)
    assert g.is_mean_free(1e-10)
    assert lebesgue_norm(g, 2.0) > 0
