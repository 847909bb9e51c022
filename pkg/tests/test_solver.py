import math

import numpy as np
import pytest

from kraichnan_sqg.noise import BrownianDriver, build_noise
from kraichnan_sqg.params import ModelParams
from kraichnan_sqg.solver import (
    CFLError,
    StepScheme,
    initial_state,
    nonlinearity_momentum,
    nonlinearity_standard,
    run,
    step,
)
from kraichnan_sqg.spectral import Grid, SpectralField, lebesgue_norm, pairing, random_field, sobolev_norm

from conftest import single_mode


def test_single_mode_nonlinearity_vanishes(grid):
    vals, _ = single_mode(grid, (2, 3))
    f = SpectralField.from_physical(vals, grid)
    for beta in (0.0, 0.5):
        assert np.max(np.abs(nonlinearity_standard(f, beta).coeffs)) < 1e-14


@pytest.mark.parametrize("beta", [0.0, 0.4, 1.0])
def test_transport_skew_symmetry_and_mass(grid, rng, beta):
    th = random_field(grid, rng)
    n = nonlinearity_standard(th, beta)
    scale = sobolev_norm(n, 0.0) * sobolev_norm(th, 0.0)
    assert abs(pairing(n, th)) <= 1e-10 * scale
    assert abs(n.coeffs[0, 0]) < 1e-15


def test_momentum_zero_field(grid):
    assert np.all(nonlinearity_momentum(SpectralField.zeros(grid), 0.3).coeffs == 0)


def _params(nu=0.0, N=32):
    return ModelParams(0.5, 0.0, 4.0, nu, 2 * math.pi, N)


def test_zero_datum_stays_zero(grid):
    noise = build_noise(0.5, grid)
    st = initial_state(_params(), SpectralField.zeros(grid), noise, BrownianDriver(0, 1e-3))
    res = run(st, 0.05, StepScheme(1e-3))
    assert np.all(res.state.coeffs == 0)


def test_viscous_single_mode_decay(grid):
    nu = 0.5
    vals, k = single_mode(grid, (3, 1))
    f = SpectralField.from_physical(vals, grid)
    st = initial_state(_params(nu), f)
    res = run(st, 0.2, StepScheme(1e-3))
    expected = math.exp(-nu * (k @ k) * 0.2) * lebesgue_norm(f, 2.0)
    assert res.series["L2"][-1, 0] == pytest.approx(expected, rel=1e-6)


def test_initial_diagnostics_match_datum(grid, rng):
    f = random_field(grid, rng, k_max=6.0)
    res = run(initial_state(_params(), f), 0.0, StepScheme(1e-3))
    assert len(res.series.t) == 1
    assert res.series["L2"][0, 0] == pytest.approx(lebesgue_norm(f, 2.0), rel=1e-12)
    assert res.series["H-1"][0, 0] == pytest.approx(sobolev_norm(f, -1.0), rel=1e-12)


def test_deterministic_euler_conserves_l2():
    grid = Grid(64, 2 * math.pi)
    from kraichnan_sqg.noise import counter_rng

    f = random_field(grid, counter_rng(2, 0, 1), k_max=8.0)
    res = run(initial_state(_params(0.0, 64), f), 1.0, StepScheme(1e-3), every=100)
    e = res.series["L2"][:, 0]
    assert abs(e[-1] - e[0]) / e[0] < 1e-4


def test_cfl_guard(grid, rng):
    f = random_field(grid, rng, amplitude=1e4)
    st = initial_state(_params(), f)
    with pytest.raises(CFLError) as info:
        step(st, StepScheme(1e-2))
    assert info.value.state is st


def test_batch_members_share_noise(grid, rng):
    f = random_field(grid, rng, k_max=6.0)
    noise = build_noise(0.5, grid)
    st = initial_state(_params(), f, noise, BrownianDriver(4, 1e-3), realizations=[0, 1, 0])
    res = run(st, 0.02, StepScheme(1e-3))
    c = res.state.coeffs
    assert np.array_equal(c[0], c[2])
    assert not np.array_equal(c[0], c[1])


def test_batch_matches_single_member(grid, rng):
    f = random_field(grid, rng, k_max=6.0)
    noise = build_noise(0.5, grid)
    drv = BrownianDriver(4, 1e-3)
    both = run(initial_state(_params(), f, noise, drv, realizations=[2, 5]), 0.02, StepScheme(1e-3)).state
    one = run(initial_state(_params(), f, noise, drv, realizations=[5]), 0.02, StepScheme(1e-3)).state
    np.testing.assert_allclose(both.coeffs[1], one.coeffs[0], rtol=0, atol=1e-14)


def test_scheme_validation():
    with pytest.raises(ValueError):
        StepScheme(0.0)
    with pytest.raises(ValueError):
        StepScheme(1e-3, corrector="other")


def test_checkpoints_written(tmp_path, grid, rng):
    f = random_field(grid, rng, k_max=6.0)
    run(initial_state(_params(), f), 0.01, StepScheme(1e-3), checkpoint_dir=tmp_path, checkpoint_every=5)
    assert len(list(tmp_path.glob("*.kgsq"))) == 3
