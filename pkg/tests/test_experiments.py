import json
import math

import numpy as np
import pytest

from kraichnan_sqg.data import make_datum
from kraichnan_sqg.experiments import (
    _perp_grad_phys,
    mean_se,
    record_trajectory,
    residual_weak_form,
    run_norm_decay,
    run_stability,
    run_vanishing_viscosity,
    trilinear_exponents,
    trilinear_forms,
    trilinear_ratios,
)
from kraichnan_sqg.noise import BrownianDriver, build_noise, counter_rng
from kraichnan_sqg.params import ModelParams
from kraichnan_sqg.solver import StepScheme
from kraichnan_sqg.spectral import Grid, SpectralField, random_field

P32 = ModelParams(0.5, 0.0, 4.0, 2**-5, 2 * math.pi, 32)


@pytest.fixture
def datum():
    f, _ = make_datum("band_limited", Grid(32, 2 * math.pi), 4.0, seed=1, k_max=6.0)
    return f


def test_mean_se():
    m, se = mean_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert mean_se([3.0])[1] == 0.0


def test_trilinear_exponents():
    assert trilinear_exponents(2 / 3, 0.0, 3.0) == pytest.approx((0.0, 0.0), abs=1e-12)
    r1, r2 = trilinear_exponents(0.4, 0.4, 5.0)
    assert r1 == pytest.approx(0.5) and r2 == pytest.approx(1 / 6)


def _band_field(grid, seed):
    return random_field(grid, counter_rng(seed, 0, 5), k_max=grid.N / 4 * grid.dk).to_half()


def test_trilinear_forms_zero_xi_and_homogeneity():
    grid = Grid(32, 2 * math.pi)
    phi, th = _band_field(grid, 1), _band_field(grid, 2)
    zero = np.zeros_like(phi)
    assert all(v == 0 for v in trilinear_forms(grid, zero, phi, th, 0.3))
    xi = _band_field(grid, 3)
    one = trilinear_forms(grid, xi, phi, th, 0.3)
    two = trilinear_forms(grid, 2 * xi, phi, th, 0.3)
    assert two[0] == pytest.approx(2 * one[0], rel=1e-12)
    assert two[2] == pytest.approx(4 * one[2], rel=1e-12)


def test_trilinear_third_form_integration_by_parts():
    # <(a.grad) a, c> = -<a a, grad c> for divergence-free a
    grid = Grid(32, 2 * math.pi)
    xi, th = _band_field(grid, 4), _band_field(grid, 5)
    beta = 0.4
    t3 = trilinear_forms(grid, xi, xi, th, beta)[2]
    a, _ = _perp_grad_phys(grid, xi, -2.0)
    _, dc = _perp_grad_phys(grid, th, -2.0 + beta)
    alt = -sum(np.sum(a[i] * a[j] * dc[j][i]) for i in range(2) for j in range(2)) * grid.dx**2
    assert t3 == pytest.approx(alt, rel=1e-10)


def test_trilinear_hypothesis_violation():
    with pytest.raises(ValueError):
        trilinear_ratios(ModelParams(0.7, 0.5, 3.0), 10)


def test_trilinear_report_deterministic():
    a = trilinear_ratios(ModelParams(2 / 3, 0.0, 3.0), 50, seed=3, N=32)
    b = trilinear_ratios(ModelParams(2 / 3, 0.0, 3.0), 50, seed=3, N=32)
    assert a.to_json() == b.to_json()
    doc = json.loads(a.to_json())
    assert doc["schema_version"] == 1 and doc["clauses"]["critical_exponents_zero"] is True


def test_stability_identical_data_exact_zero(datum):
    rep = run_stability(P32, datum, datum, 3, 0.05, 1e-3, seed=2)
    assert rep.clauses["identical_data_exact_zero"] is True
    assert np.all(rep.stats["mean_H-1_sq"] == 0)


def test_stability_dissipation_positive(datum):
    pert, _ = make_datum("band_limited", datum.grid, seed=1, stream=1, amplitude=1e-3, k_max=6.0)
    rep = run_stability(P32, datum, datum + pert, 4, 0.05, 1e-3, seed=2)
    assert rep.clauses["dissipation_positive"] is True
    assert math.isfinite(rep.stats["envelope_C"])
    assert np.all(rep.stats["mean_H-1_sq_se"] >= 0)


def test_vanishing_viscosity_single_member_reproducible(datum):
    ladder = [2**-3, 2**-4, 2**-5]
    a = run_vanishing_viscosity(P32, datum, ladder, 1, 0.05, 1e-3, seed=7)
    b = run_vanishing_viscosity(P32, datum, ladder, 1, 0.05, 1e-3, seed=7)
    assert a.report.to_json() == b.report.to_json()
    assert a.slope is not None and a.slope_se is None


def test_vanishing_viscosity_insufficient_rungs(datum):
    st = run_vanishing_viscosity(P32, datum, [0.1], 2, 0.02, 1e-3)
    assert "insufficient rungs" in st.report.flags and st.slope is None
    with pytest.raises(ValueError):
        run_vanishing_viscosity(P32, datum, [0.1, 0.2], 2, 0.02, 1e-3)


def test_norm_decay_small(datum):
    rep = run_norm_decay(P32, datum, 8, 0.1, 1e-3, seed=3, record_dt=0.02)
    assert rep.clauses["L2_nonincreasing"] and rep.clauses["L4_nonincreasing"]


# weak formulation ------------------------------------------------------------

P64 = ModelParams(0.5, 0.0, 4.0, 0.0, 2 * math.pi, 64)


@pytest.fixture(scope="module")
def setup64():
    grid = Grid(64, 2 * math.pi)
    f, _ = make_datum("band_limited", grid, 4.0, seed=1, k_max=8.0)
    phi, _ = make_datum("band_limited", grid, 2.0, seed=5, k_max=4.0)
    return grid, f, phi


def test_weak_form_constant_test_function(setup64):
    grid, f, _ = setup64
    noise = build_noise(0.5, grid)
    drv = BrownianDriver(7, 1e-3)
    tr = record_trajectory(P64, f, noise, drv, 0.05, StepScheme(1e-3))
    one = SpectralField.from_physical(np.ones((64, 64)), grid)
    assert residual_weak_form(tr, one, P64, noise, drv) < 1e-12


def test_weak_form_deterministic_defect(setup64):
    grid, f, phi = setup64
    tr = record_trajectory(P64, f, None, None, 0.2, StepScheme(1e-3))
    assert residual_weak_form(tr, phi, P64, None, None) < 1e-6
    assert residual_weak_form(tr, phi, P64, None, None, rule="left") < 1e-12


def test_weak_form_missing_increments(setup64):
    grid, f, phi = setup64
    noise = build_noise(0.5, grid)
    tr = record_trajectory(P64, f, noise, BrownianDriver(1, 1e-3), 0.01, StepScheme(1e-3))
    with pytest.raises(ValueError, match="missing increments"):
        residual_weak_form(tr, phi, P64, noise, None)


@pytest.mark.slow
def test_weak_form_dt_refinement(setup64):
    grid, f, phi = setup64
    noise = build_noise(0.5, grid)
    dts = [2e-3, 1e-3, 5e-4]
    res = []
    for dt in dts:
        vals = []
        for r in range(6):
            drv = BrownianDriver(11, dt, int(round(4e-3 / dt)))
            tr = record_trajectory(P64, f, noise, drv, 0.2, StepScheme(dt), realization=r)
            vals.append(residual_weak_form(tr, phi, P64, noise, drv))
        res.append(np.mean(vals))
    order = np.polyfit(np.log(dts), np.log(res), 1)[0]
    assert order >= 0.5, (res, order)
