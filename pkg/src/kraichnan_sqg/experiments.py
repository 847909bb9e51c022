"""
Coupled Monte Carlo studies.

Every study drives all compared configurations with the same Brownian path
per realization (common random numbers): members of one batch that share a
realization index read bit-identical increments from the driver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .noise import PURPOSE_SAMPLES, BrownianDriver, NoiseModel, build_noise, counter_rng, ito_drift_symbol
from .params import ModelParams, critical_exponent, validate
from .solver import BlowUpError, CFLError, StepScheme, _Propagator, initial_state, run, step
from .spectral import Grid, SpectralField, lebesgue_norm_values

SCHEMA_VERSION = 1
RECOMMENDED_ENSEMBLE = 64


def mean_se(samples, axis=0):
    """Sample mean and its standard error (0 for a single sample)."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    m = x.mean(axis)
    if n < 2:
        return m, np.zeros_like(m)
    return m, x.std(axis, ddof=1) / math.sqrt(n)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


@dataclass
class ExperimentReport:
    """Aggregated statistics; every mean is paired with a standard error."""

    study: str
    config: dict
    stats: dict = field(default_factory=dict)
    clauses: dict = field(default_factory=dict)
    fingerprint: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    complete: bool = True

    def to_dict(self) -> dict:
        return _to_jsonable(
            {
                "schema_version": SCHEMA_VERSION,
                "study": self.study,
                "complete": self.complete,
                "config": self.config,
                "fingerprint": self.fingerprint,
                "stats": self.stats,
                "clauses": self.clauses,
                "flags": self.flags,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fingerprint(params: ModelParams, dt, noise: NoiseModel | None, seed, ensemble, scheme=None):
    fp = {
        "N": params.N,
        "L": params.L,
        "dt": dt,
        "k_max": None if noise is None else noise.k_max,
        "n_modes": 0 if noise is None else noise.n_modes,
        "c0": None if noise is None else float(0.5 * np.sum(noise.weight)),
        "seed": seed,
        "ensemble": ensemble,
        "domain": "periodic torus surrogate of the plane",
    }
    if scheme is not None:
        fp["corrector"] = scheme.corrector
        fp["multiplier"] = scheme.multiplier
    return fp


def _hnorm2(coeffs, grid: Grid, s):
    """Squared homogeneous H^s norm of rfft-layout coefficients (batched)."""
    wn = grid.half
    mult = np.full(wn.k2.shape, 2.0)
    mult[:, 0] = 1.0
    mult[:, -1] = 1.0
    w = wn.power(2.0 * s) * mult
    w[0, 0] = 0.0
    return grid.L**2 * np.sum(w * np.abs(coeffs) ** 2, axis=(-2, -1))


def _chunks(n, size):
    for start in range(0, n, size):
        yield list(range(start, min(n, start + size)))


def _setup(params, k_max, seed, dt, substeps=1, noise_on=True):
    grid = Grid(params.N, params.L)
    noise = build_noise(params.alpha, grid, k_max) if noise_on else None
    driver = BrownianDriver(seed, dt, substeps) if noise_on else None
    return grid, noise, driver


# vanishing viscosity -------------------------------------------------------


@dataclass
class RateStudy:
    ladder: list
    sup_h1: np.ndarray  # sup_t E||theta^{nu_j} - theta^{nu_j+1}||^2_{H^-1}, per adjacent pair
    sup_h1_se: np.ndarray
    diss: np.ndarray  # E int ||.||^2_{H^-alpha} dt
    diss_se: np.ndarray
    slope: float | None  # log-log slope of sqrt(sup_h1) against nu
    slope_se: float | None
    report: ExperimentReport


def _fit_slope(nu, err):
    return float(np.polyfit(np.log(nu), np.log(err), 1)[0])


def run_vanishing_viscosity(
    params: ModelParams,
    datum: SpectralField,
    ladder,
    ensemble: int,
    t_end: float,
    dt: float,
    seed: int = 0,
    k_max: float | None = None,
    every: int = 10,
    batch: int = 32,
    scheme: StepScheme | None = None,
    bootstrap: int = 200,
) -> RateStudy:
    """Coupled runs at every rung of a decreasing viscosity ladder.

    All rungs start from ``datum`` and see the same noise per realization.
    For each adjacent pair the sup over recorded times of the mean squared
    H^{-1} distance and the mean time integral of the squared H^{-alpha}
    distance are recorded; the slope of sqrt(sup-H^{-1}) against nu is fitted
    in log-log with a bootstrap standard error over realizations.
    """
    ladder = [float(v) for v in ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("viscosity ladder must be strictly decreasing")
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    scheme = scheme or StepScheme(dt)
    grid, noise, driver = _setup(params, k_max, seed, dt)
    R = len(ladder)
    n_steps = int(round(t_end / dt))
    rec_steps = sorted(set(list(range(0, n_steps + 1, every)) + [n_steps]))
    n_rec = len(rec_steps)
    pairs = max(R - 1, 0)
    h1 = np.zeros((n_rec, pairs, ensemble))
    ha = np.zeros((n_rec, pairs, ensemble))
    flags = []
    complete = True
    done = []
    for members in _chunks(ensemble, max(1, batch // max(R, 1))):
        real = [m for m in members for _ in range(R)]
        nus = [nu for _ in members for nu in ladder]
        state = initial_state(params, datum, noise, driver, realizations=real, nus=nus)
        prop = _Propagator(state, scheme)

        def record(st, idx):
            c = st.coeffs.reshape(len(members), R, *st.coeffs.shape[1:])
            diff = c[:, :-1] - c[:, 1:]
            h1[idx, :, members] = _hnorm2(diff, grid, -1.0)
            ha[idx, :, members] = _hnorm2(diff, grid, -params.alpha)

        record(state, 0)
        ri = 1
        try:
            for i in range(n_steps):
                state = step(state, scheme, prop)
                if ri < n_rec and state.step == rec_steps[ri]:
                    record(state, ri)
                    ri += 1
        except (BlowUpError, CFLError) as exc:
            complete = False
            flags.append(f"realizations {members[0]}-{members[-1]} aborted: {exc}")
            break
        done.extend(members)
    if not done:
        raise RuntimeError("every realization aborted; no data recorded")
    h1, ha = h1[:, :, done], ha[:, :, done]
    ensemble_done = len(done)
    times = np.array(rec_steps) * dt
    m_h1, se_h1 = mean_se(h1, axis=2)  # (n_rec, pairs)
    arg = np.argmax(m_h1, axis=0) if pairs else np.array([], dtype=int)
    sup_h1 = np.array([m_h1[arg[j], j] for j in range(pairs)])
    sup_se = np.array([se_h1[arg[j], j] for j in range(pairs)])
    diss_real = trapezoid(ha, times, axis=0) if n_rec > 1 else np.zeros((pairs, ensemble_done))
    diss, diss_se = mean_se(diss_real, axis=1)

    slope = slope_se = None
    if pairs < 2:
        flags.append("insufficient rungs")
    else:
        nu_pair = np.array(ladder[1:])
        slope = _fit_slope(nu_pair, np.sqrt(sup_h1))
        if ensemble_done > 1 and bootstrap:
            rng = counter_rng(seed, 0, PURPOSE_SAMPLES)
            boots = []
            for _ in range(bootstrap):
                pick = rng.integers(0, ensemble_done, ensemble_done)
                mb = h1[:, :, pick].mean(2).max(0)
                if np.all(mb > 0):
                    boots.append(_fit_slope(nu_pair, np.sqrt(mb)))
            slope_se = float(np.std(boots, ddof=1)) if len(boots) > 1 else None
    if ensemble < RECOMMENDED_ENSEMBLE:
        flags.append(f"ensemble {ensemble} below the recommended {RECOMMENDED_ENSEMBLE}")

    decreasing = bool(pairs >= 2 and np.all(np.diff(sup_h1) < 0))
    within = bool(pairs >= 2 and np.all(np.diff(sup_h1) < 2 * np.hypot(sup_se[1:], sup_se[:-1]) + 0))
    target = 0.5 * (2 - params.alpha) / 2
    report = ExperimentReport(
        study="vanishing_viscosity",
        config={"params": params.to_dict(), "ladder": ladder, "ensemble": ensemble, "t_end": t_end, "dt": dt},
        stats={
            "nu_pairs": ladder[1:],
            "sup_t_mean_H-1_sq": sup_h1,
            "sup_t_mean_H-1_sq_se": sup_se,
            "mean_int_H-alpha_sq": diss,
            "mean_int_H-alpha_sq_se": diss_se,
            "slope": slope,
            "slope_se": slope_se,
            "slope_target": target,
        },
        clauses={
            "errors_strictly_decreasing": decreasing,
            "errors_decreasing_within_2se": within,
            "slope_at_least_target": None if slope is None else bool(slope >= target),
        },
        fingerprint=_fingerprint(params, dt, noise, seed, ensemble, scheme),
        flags=flags,
        complete=complete,
    )
    rows = [[nu, a, b, c, d] for nu, a, b, c, d in zip(ladder[1:], sup_h1, sup_se, diss, diss_se)]
    report.tables["rate"] = (["nu", "sup_H-1_sq", "sup_H-1_sq_se", "int_H-alpha_sq", "int_H-alpha_sq_se"], rows)
    return RateStudy(ladder, sup_h1, sup_se, diss, diss_se, slope, slope_se, report)


# stability -----------------------------------------------------------------


def run_stability(
    params: ModelParams,
    datum1: SpectralField,
    datum2: SpectralField,
    ensemble: int,
    t_end: float,
    dt: float,
    seed: int = 0,
    k_max: float | None = None,
    every: int = 5,
    batch: int = 32,
    scheme: StepScheme | None = None,
) -> ExperimentReport:
    """Coupled runs from two data with identical noise per realization.

    Records E||xi_t||^2_{H^-1} and E int_0^t ||xi_s||^2_{H^-alpha} ds for
    xi = theta^1 - theta^2 and the smallest C with
    e^{Ct} ||xi_0||^2_{H^-1} >= E||xi_t||^2_{H^-1} at every recorded t.
    """
    scheme = scheme or StepScheme(dt)
    grid, noise, driver = _setup(params, k_max, seed, dt)
    n_steps = int(round(t_end / dt))
    rec_steps = sorted(set(list(range(0, n_steps + 1, every)) + [n_steps]))
    n_rec = len(rec_steps)
    h1 = np.zeros((n_rec, ensemble))
    ha = np.zeros((n_rec, ensemble))
    exact_zero = True
    complete = True
    flags = []
    done = []
    for members in _chunks(ensemble, max(1, batch // 2)):
        real = [m for m in members for _ in range(2)]
        data = [d for _ in members for d in (datum1, datum2)]
        state = initial_state(params, data, noise, driver, realizations=real)
        prop = _Propagator(state, scheme)

        def record(st, idx):
            c = st.coeffs.reshape(len(members), 2, *st.coeffs.shape[1:])
            xi = c[:, 0] - c[:, 1]
            h1[idx, members] = _hnorm2(xi, grid, -1.0)
            ha[idx, members] = _hnorm2(xi, grid, -params.alpha)
            return bool(np.all(xi == 0))

        zero = record(state, 0)
        ri = 1
        try:
            for i in range(n_steps):
                state = step(state, scheme, prop)
                if ri < n_rec and state.step == rec_steps[ri]:
                    zero &= record(state, ri)
                    ri += 1
        except (BlowUpError, CFLError) as exc:
            complete = False
            flags.append(f"realizations {members[0]}-{members[-1]} aborted: {exc}")
            break
        exact_zero &= zero
        done.extend(members)
    if not done:
        raise RuntimeError("every realization aborted; no data recorded")
    h1, ha = h1[:, done], ha[:, done]
    ensemble = len(done)
    times = np.array(rec_steps) * dt
    m, se = mean_se(h1, axis=1)
    cum = np.concatenate([np.zeros((1, ensemble)), np.cumsum(0.5 * np.diff(times)[:, None] * (ha[1:] + ha[:-1]), 0)])
    dm, dse = mean_se(cum, axis=1)
    m0 = m[0]
    if m0 > 0:
        with np.errstate(divide="ignore"):
            rates = np.log(np.maximum(m[1:], 1e-300) / m0) / times[1:]
        envelope = float(max(0.0, np.max(rates))) if rates.size else 0.0
    else:
        envelope = 0.0
    report = ExperimentReport(
        study="stability",
        config={"params": params.to_dict(), "ensemble": ensemble, "t_end": t_end, "dt": dt},
        stats={
            "t": times,
            "mean_H-1_sq": m,
            "mean_H-1_sq_se": se,
            "mean_int_H-alpha_sq": dm,
            "mean_int_H-alpha_sq_se": dse,
            "envelope_C": envelope,
            "xi0_H-1_sq": m0,
        },
        clauses={
            "identical_data_exact_zero": bool(exact_zero) if m0 == 0 else None,
            "envelope_finite": bool(np.isfinite(envelope)),
            "dissipation_positive": bool(dm[-1] > 0) if m0 > 0 else None,
        },
        fingerprint=_fingerprint(params, dt, noise, seed, ensemble, scheme),
        flags=flags,
        complete=complete,
    )
    report.tables["stability"] = (
        ["t", "mean_H-1_sq", "se", "mean_int_H-alpha_sq", "se_int"],
        [list(r) for r in zip(times, m, se, dm, dse)],
    )
    return report


# energy balance and L^q decay --------------------------------------------------


def run_energy_balance(
    params: ModelParams,
    datum: SpectralField,
    ensemble: int,
    t_end: float,
    dts,
    seed: int = 0,
    k_max: float | None = None,
    record_dt: float = 0.05,
    batch: int = 64,
    scheme_opts: dict | None = None,
) -> ExperimentReport:
    """Ensemble mean of ||theta_t||^2_{L^2} at several step sizes on one Brownian path.

    The step sizes must be dt_0 / 2^j; the coarse increments are sums of the
    finest ones. The bias at step size h is B_h = max(0, |D_h| - 3 SE_h)
    with D_h the largest deviation of the mean energy from its initial value.
    """
    dts = sorted((float(d) for d in dts), reverse=True)
    fine = dts[-1]
    opts = dict(scheme_opts or {})
    rows = []
    stats = {"dt": dts, "deviation": [], "deviation_se": [], "bias": []}
    grid = Grid(params.N, params.L)
    noise = build_noise(params.alpha, grid, k_max)
    e0 = None
    for dt in dts:
        sub = int(round(dt / fine))
        if not math.isclose(sub * fine, dt, rel_tol=1e-9):
            raise ValueError("step sizes must be integer multiples of the finest one")
        driver = BrownianDriver(seed, dt, sub)
        scheme = StepScheme(dt, **opts)
        every = max(1, int(round(record_dt / dt)))
        energies = []
        for members in _chunks(ensemble, batch):
            st = initial_state(params, datum, noise, driver, realizations=members)
            res = run(st, t_end, scheme, every=every, lq=(2.0,), sobolev=())
            energies.append(res.series["L2"] ** 2)
        e = np.concatenate(energies, axis=1)
        times = res.series.times
        m, se = mean_se(e, axis=1)
        e0 = m[0]
        dev = m - e0
        i = int(np.argmax(np.abs(dev)))
        stats["deviation"].append(float(dev[i]))
        stats["deviation_se"].append(float(se[i]))
        stats["bias"].append(float(max(0.0, abs(dev[i]) - 3 * se[i])))
        for t, mm, ss in zip(times, m, se):
            rows.append([dt, t, mm, ss])
    b = stats["bias"]
    halves = all(b[j + 1] <= 0.5 * b[j] for j in range(len(b) - 1))
    report = ExperimentReport(
        study="energy_balance",
        config={"params": params.to_dict(), "ensemble": ensemble, "t_end": t_end, "dts": dts, "scheme": opts},
        stats=stats,
        clauses={"bias_halves_with_dt": bool(halves)},
        fingerprint=_fingerprint(params, fine, noise, seed, ensemble),
    )
    report.tables["energy"] = (["dt", "t", "mean_L2_sq", "se"], rows)
    return report


def run_norm_decay(
    params: ModelParams,
    datum: SpectralField,
    ensemble: int,
    t_end: float,
    dt: float,
    seed: int = 0,
    k_max: float | None = None,
    record_dt: float = 0.05,
    batch: int = 64,
    lq=(2.0, 4.0),
    linf_tol: float = 1e-2,
) -> ExperimentReport:
    """E||theta_t||_{L^q} along the run and the grid maximum principle.

    L^q clauses ask that every increment of the mean be below 3 standard
    errors of the paired increments; the L^inf clause asks that
    E||theta_t||_inf stay within ``linf_tol`` of ||theta_0||_inf.
    """
    grid = Grid(params.N, params.L)
    noise = build_noise(params.alpha, grid, k_max)
    driver = BrownianDriver(seed, dt)
    scheme = StepScheme(dt)
    every = max(1, int(round(record_dt / dt)))
    cols = {f"L{q:g}": [] for q in lq}
    cols["Linf"] = []
    for members in _chunks(ensemble, batch):
        st = initial_state(params, datum, noise, driver, realizations=members)
        res = run(st, t_end, scheme, every=every, lq=tuple(lq) + (math.inf,), sobolev=())
        for key in cols:
            cols[key].append(res.series[key])
    times = res.series.times
    stats = {"t": times}
    clauses = {}
    for key, parts in cols.items():
        x = np.concatenate(parts, axis=1)
        m, se = mean_se(x, axis=1)
        stats[f"mean_{key}"] = m
        stats[f"se_{key}"] = se
        if key == "Linf":
            # the explicit Ito step matches the second-order transport term
            # only in mean, so the clause is on E||theta_t||_inf
            stats["linf_ratio"] = float(np.max(m) / m[0])
            stats["linf_ratio_pathwise"] = float(np.max(x) / x[0].max())
            clauses["linf_max_principle"] = bool(np.max(m) <= m[0] * (1.0 + linf_tol))
        else:
            inc = np.diff(x, axis=0)
            dm, dse = mean_se(inc, axis=1)
            clauses[f"{key}_nonincreasing"] = bool(np.all(dm <= 3 * dse + 1e-15 * m[0]))
    report = ExperimentReport(
        study="norm_decay",
        config={"params": params.to_dict(), "ensemble": ensemble, "t_end": t_end, "dt": dt},
        stats=stats,
        clauses=clauses,
        fingerprint=_fingerprint(params, dt, noise, seed, ensemble, scheme),
    )
    return report


# trilinear forms ------------------------------------------------------------


def trilinear_exponents(alpha: float, beta: float, p: float):
    """(r1, r2) = (1 - p_star/p, (1-alpha-beta)/(1-alpha) (1 - p_star/p))."""
    ps = critical_exponent(alpha, beta)
    r1 = 1.0 - ps / p
    r2 = (1.0 - alpha - beta) / (1.0 - alpha) * r1
    return r1, r2


def _perp_grad_phys(grid, coeffs, power):
    """Physical components of grad^perp Lambda^power f, and its gradient matrix."""
    wn = grid.half
    psi = coeffs * wn.power(power)
    v1h, v2h = -wn.iky * psi, wn.ikx * psi
    v = (grid.irfft(v1h), grid.irfft(v2h))
    dv = (
        (grid.irfft(wn.ikx * v1h), grid.irfft(wn.iky * v1h)),
        (grid.irfft(wn.ikx * v2h), grid.irfft(wn.iky * v2h)),
    )
    return v, dv  # dv[i][j] = d_j v_i


def trilinear_forms(grid: Grid, xi, phi, theta, beta: float):
    """Left-hand pairings of the three trilinear estimates (rfft-layout inputs)."""
    cell = grid.dx**2
    a, da = _perp_grad_phys(grid, xi, -2.0)
    b, _ = _perp_grad_phys(grid, phi, -2.0 + beta)
    h, dh = _perp_grad_phys(grid, theta, -2.0)
    c, _ = _perp_grad_phys(grid, theta, -2.0 + beta)
    t1 = sum(a[i] * b[j] * dh[i][j] for i in range(2) for j in range(2))
    t2 = sum(a[i] * b[j] * dh[j][i] for i in range(2) for j in range(2))
    t3 = sum(a[i] * c[j] * da[j][i] for i in range(2) for j in range(2))
    return tuple(np.sum(t, axis=(-2, -1)) * cell for t in (t1, t2, t3))


def trilinear_ratios(
    params: ModelParams,
    samples: int,
    seed: int = 0,
    N: int = 64,
    L: float = 2 * math.pi,
    band: float = 0.25,
    batch: int = 100,
) -> ExperimentReport:
    """LHS/RHS ratios of the trilinear estimates over random band-limited fields.

    Fields carry random phases, a spectral slope drawn uniformly from
    [-3, -1] and support |m_i| <= band * N, which keeps triple products
    alias-free so the grid sums are exact.
    """
    a, b, p = params.alpha, params.beta, params.p
    if not (a + b <= 1 + 1e-12 and a + 0.5 * b <= 1 - 1 / p + 1e-12 and b < 1):
        raise ValueError("trilinear estimates need alpha + beta <= 1, alpha + beta/2 <= 1 - 1/p, beta < 1")
    r1, r2 = trilinear_exponents(a, b, p)
    grid = Grid(N, L)
    wn = grid.half
    mmax = int(band * N)
    mx = np.rint(wn.kx / grid.dk)
    my = np.rint(wn.ky / grid.dk)
    keep = (np.abs(mx) <= mmax) & (np.abs(my) <= mmax) & (wn.k2 > 0)
    rng = counter_rng(seed, 0, PURPOSE_SAMPLES)
    lhs = []
    rhs = []
    for members in _chunks(samples, batch):
        n = len(members)

        def draw():
            slope = rng.uniform(-3.0, -1.0, size=(n, 1, 1))
            vals = rng.standard_normal((n, N, N))
            c = grid.rfft(vals) * keep * np.where(wn.k2 > 0, wn.k2, 1.0) ** (0.25 * slope)
            return c

        xi, ph, th = draw(), draw(), draw()
        l1, l2, l3 = trilinear_forms(grid, xi, ph, th, b)
        xa, x1 = np.sqrt(_hnorm2(xi, grid, -a)), np.sqrt(_hnorm2(xi, grid, -1.0))
        pa, p1 = np.sqrt(_hnorm2(ph, grid, -a)), np.sqrt(_hnorm2(ph, grid, -1.0))
        tp = lebesgue_norm_values(grid.irfft(th), grid, p)
        common = xa ** (1 - r1) * x1**r1 * pa ** (1 - r2) * p1**r2 * tp
        r3 = xa ** (2 - r1 - r2) * x1 ** (r1 + r2) * tp
        lhs.append(np.abs(np.stack([l1, l2, l3], 1)))
        rhs.append(np.stack([common, common, r3], 1))
    lhs = np.concatenate(lhs)
    rhs = np.concatenate(rhs)
    ratios = lhs / rhs
    med = np.median(ratios, axis=0)
    mx_ = ratios.max(axis=0)
    report = ExperimentReport(
        study="trilinear",
        config={"params": params.to_dict(), "samples": samples, "N": N, "L": L, "band": band},
        stats={
            "r1": r1,
            "r2": r2,
            "p_star": critical_exponent(a, b),
            "max_ratio": mx_,
            "median_ratio": med,
            "q90_ratio": np.quantile(ratios, 0.9, axis=0),
        },
        clauses={
            "ratios_finite": bool(np.all(np.isfinite(ratios))),
            "max_within_10x_median": bool(np.all(mx_ <= 10 * med)),
            "critical_exponents_zero": (abs(r1) < 1e-12 and abs(r2) < 1e-12) if validate(params).critical else None,
        },
        fingerprint={"N": N, "L": L, "seed": seed, "samples": samples, "deterministic": True},
    )
    report.tables["ratios"] = (["tril1", "tril2", "tril3"], ratios.tolist())
    return report


# weak formulation residual --------------------------------------------------


@dataclass
class Trajectory:
    """Every-step (or every ``stride`` steps) snapshots of one realization."""

    coeffs: np.ndarray  # (n_snap, N, N//2+1)
    dt: float
    stride: int
    realization: int
    scheme: StepScheme
    nu: float


def record_trajectory(params, datum, noise, driver, t_end, scheme, realization=0, stride=1) -> Trajectory:
    st = initial_state(params, datum, noise, driver, realizations=[realization])
    res = run(st, t_end, scheme, every=max(1, int(round(t_end / scheme.dt))), lq=(2.0,), sobolev=(), record_trajectory=True)
    snaps = np.stack(res.trajectory)[:, 0][::stride]
    return Trajectory(snaps, scheme.dt, stride, realization, scheme, float(params.nu))


def residual_weak_form(
    traj: Trajectory,
    test_function: SpectralField,
    params: ModelParams,
    noise: NoiseModel | None,
    driver: BrownianDriver | None,
    rule: str = "trapezoid",
) -> float:
    """Largest relative defect of the Ito weak formulation along the trajectory.

    Deterministic integrals use the trapezoid rule over snapshots (or the
    left-point rule, which the explicit step satisfies exactly without noise); the stochastic integral is the
    left-point sum with the replayed increments over each snapshot interval.
    The defect at each snapshot is divided by the largest term magnitude
    (or ||theta_0|| ||phi|| when that is larger).
    """
    if rule not in ("left", "trapezoid"):
        raise ValueError(f"unknown rule {rule!r}")
    grid = test_function.grid
    wn = grid.half
    phi = test_function.to_half()
    n_snap = traj.coeffs.shape[0]
    h = traj.dt * traj.stride
    mult = np.full(wn.k2.shape, 2.0)
    mult[:, 0] = 1.0
    mult[:, -1] = 1.0

    def pair(f, g):
        return grid.L**2 * np.sum(mult * (f * np.conj(g)).real, axis=(-2, -1))

    if noise is not None:
        if driver is None:
            raise ValueError("missing increments: a noise model needs its driver")
        d = ito_drift_symbol(noise, wn, traj.scheme.corrector)
    else:
        d = np.zeros_like(wn.k2)
    drift_phi = -(d + traj.nu * wn.k2) * phi
    th = traj.coeffs
    # u . grad phi for every snapshot
    psi = th * wn.power(params.beta - 2.0)
    u1 = grid.irfft(wn.iky * psi)
    u2 = grid.irfft(-wn.ikx * psi)
    gphi1 = grid.irfft(wn.ikx * phi)
    gphi2 = grid.irfft(wn.iky * phi)
    adv = grid.rfft(u1 * gphi1 + u2 * gphi2)
    f_nl = pair(th, adv)
    f_diff = pair(th, drift_phi[None])
    f_noise = np.zeros(n_snap)
    if noise is not None:
        if driver.dt != traj.dt:
            raise ValueError("missing increments: driver step differs from the trajectory step")
        for i in range(n_snap - 1):
            inc = 0.0
            for s in range(i * traj.stride, (i + 1) * traj.stride):
                z = driver.standard_normals(s, noise.n_modes, traj.realization)
                inc = inc + noise.half_coefficients(z, driver.dt)
            w_phys1 = grid.irfft(inc[0])
            w_phys2 = grid.irfft(inc[1])
            f_noise[i] = pair(th[i], grid.rfft(w_phys1 * gphi1 + w_phys2 * gphi2))
    if rule == "left":
        I_nl = np.concatenate([[0.0], np.cumsum(h * f_nl[:-1])])
        I_diff = np.concatenate([[0.0], np.cumsum(h * f_diff[:-1])])
    else:
        I_nl = np.concatenate([[0.0], np.cumsum(0.5 * h * (f_nl[1:] + f_nl[:-1]))])
        I_diff = np.concatenate([[0.0], np.cumsum(0.5 * h * (f_diff[1:] + f_diff[:-1]))])
    I_noise = np.concatenate([[0.0], np.cumsum(f_noise[:-1])])
    lhs = pair(th, phi[None])
    resid = lhs - lhs[0] - I_nl - I_diff - I_noise
    norm_th0 = math.sqrt(pair(th[0], th[0]))
    norm_phi = math.sqrt(pair(phi, phi))
    scale = max(
        float(np.max(np.abs(lhs))),
        float(np.max(np.abs(I_nl))),
        float(np.max(np.abs(I_diff))),
        float(np.max(np.abs(I_noise))),
        norm_th0 * norm_phi,
    )
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(resid)) / scale)
