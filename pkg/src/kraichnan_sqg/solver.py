"""
Time stepping of the Ito-form viscous equation

    d theta + u.grad theta dt + dW.grad theta = (c0/2 + nu) Lap theta dt,
    u = -grad^perp Lambda^{-2+beta} theta,

by Euler-Maruyama for transport and noise with an exact exponential
multiplier for the diffusion. The state is a batch of realizations held in
the rfft coefficient layout, shape (E, N, N//2 + 1), so ensembles and
viscosity ladders advance together with one FFT call per product.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .noise import BrownianDriver, NoiseModel, ito_drift_symbol
from .params import ModelParams
from .spectral import Grid, SpectralField, VectorField, write_checkpoint

DEFAULT_SOBOLEV = ("-1", "-alpha", "0")


class BlowUpError(RuntimeError):
    """Non-finite coefficients appeared; carries the last valid state and series."""

    def __init__(self, message, state=None, series=None):
        super().__init__(message)
        self.state = state
        self.series = series


class CFLError(RuntimeError):
    def __init__(self, message, state=None, series=None):
        super().__init__(message)
        self.state = state
        self.series = series


# single-field operators ---------------------------------------------------


def _products(grid: Grid, ax, ay, bx, by):
    """Dealiased a.b in rfft layout from four rfft-layout inputs."""
    prod = grid.irfft(ax) * grid.irfft(bx) + grid.irfft(ay) * grid.irfft(by)
    return grid.rfft(prod) * grid.half.dealias


def _velocity_half(grid: Grid, theta_h, beta):
    wn = grid.half
    psi = theta_h * wn.power(beta - 2.0)
    # u = -grad^perp psi = (d2 psi, -d1 psi)
    return wn.iky * psi, -wn.ikx * psi


def nonlinearity_standard_half(grid: Grid, theta_h: np.ndarray, beta: float) -> np.ndarray:
    wn = grid.half
    theta_h = theta_h * wn.dealias
    u1, u2 = _velocity_half(grid, theta_h, beta)
    return _products(grid, u1, u2, wn.ikx * theta_h, wn.iky * theta_h)


def nonlinearity_momentum_half(grid: Grid, theta_h: np.ndarray, beta: float) -> np.ndarray:
    """grad^perp . ((u.grad) h - (grad h)^T u) with h = -grad^perp Lambda^{-2} theta."""
    wn = grid.half
    theta_h = theta_h * wn.dealias
    u1, u2 = _velocity_half(grid, theta_h, beta)
    h1, h2 = _velocity_half(grid, theta_h, 0.0)
    U1, U2 = grid.irfft(u1), grid.irfft(u2)
    d1h1, d2h1 = grid.irfft(wn.ikx * h1), grid.irfft(wn.iky * h1)
    d1h2, d2h2 = grid.irfft(wn.ikx * h2), grid.irfft(wn.iky * h2)
    # v_i = u_j d_j h_i - u_j d_i h_j
    v1 = U1 * d1h1 + U2 * d2h1 - (U1 * d1h1 + U2 * d1h2)
    v2 = U1 * d1h2 + U2 * d2h2 - (U1 * d2h1 + U2 * d2h2)
    # the quadratic products are exact on the padded band; the curl is linear
    v1h = grid.rfft(v1) * wn.dealias
    v2h = grid.rfft(v2) * wn.dealias
    return -wn.iky * v1h + wn.ikx * v2h


def nonlinearity_standard(theta: SpectralField, beta: float) -> SpectralField:
    """Dealiased pseudo-spectral u.grad theta."""
    grid = theta.grid
    return SpectralField.from_half(nonlinearity_standard_half(grid, theta.to_half(), beta), grid)


def nonlinearity_momentum(theta: SpectralField, beta: float) -> SpectralField:
    """Momentum form of the nonlinearity, dealiased."""
    grid = theta.grid
    return SpectralField.from_half(nonlinearity_momentum_half(grid, theta.to_half(), beta), grid)


# scheme and state ---------------------------------------------------------


@dataclass(frozen=True)
class StepScheme:
    """Explicit transport/noise step followed by exp(-d(k) dt) diffusion.

    ``corrector`` picks the Ito drift symbol d(k): "galerkin" (default) is
    the exact band-limited corrector, "scalar" is (c0/2)|k|^2.

    ``multiplier`` fixes how d(k) enters. "balanced" (default) scales the
    state by (1 + 2 d dt)^{-1/2} before the explicit update, which makes the
    expected L^2 balance of the noise step exact; "exponential" applies
    exp(-d dt) after it. Both agree with exp(-d dt) to O(dt^2) and the
    viscous part exp(-nu |k|^2 dt) is always applied exactly after the update.
    """

    dt: float
    cfl_max: float = 0.5
    corrector: str = "galerkin"
    multiplier: str = "balanced"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.cfl_max > 0:
            raise ValueError(f"cfl_max must be positive, got {self.cfl_max}")
        if self.corrector not in ("galerkin", "scalar"):
            raise ValueError(f"unknown corrector {self.corrector!r}")
        if self.multiplier not in ("balanced", "exponential"):
            raise ValueError(f"unknown multiplier {self.multiplier!r}")


@dataclass
class SolverState:
    """Batch of realizations; ``coeffs`` has shape (E, N, N//2+1)."""

    coeffs: np.ndarray
    t: float
    step: int
    params: ModelParams
    grid: Grid
    noise: NoiseModel | None
    driver: BrownianDriver | None
    realizations: tuple
    nu: np.ndarray  # per-member viscosity, shape (E,)

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def theta(self, member: int = 0) -> SpectralField:
        return SpectralField.from_half(self.coeffs[member], self.grid)

    def copy(self) -> "SolverState":
        return replace(self, coeffs=self.coeffs.copy())


def initial_state(
    params: ModelParams,
    datum,
    noise: NoiseModel | None = None,
    driver: BrownianDriver | None = None,
    realizations=(0,),
    nus=None,
) -> SolverState:
    """Broadcast ``datum`` (a SpectralField or a list of them) over the batch.

    Member j uses realization ``realizations[j]`` of the driver and viscosity
    ``nus[j]`` (default ``params.nu``). The datum is projected onto the
    dealiased band.
    """
    grid = Grid(params.N, params.L)
    if isinstance(datum, SpectralField):
        data = [datum]
    else:
        data = list(datum)
    realizations = tuple(int(r) for r in realizations)
    E = max(len(realizations), len(data), 1 if nus is None else len(nus))
    if len(realizations) == 1:
        realizations = realizations * E
    if len(data) == 1:
        data = data * E
    if nus is None:
        nus = [params.nu] * E
    nus = np.asarray(nus, dtype=float)
    if not (len(realizations) == len(data) == len(nus) == E):
        raise ValueError("datum, realization and viscosity batches differ in length")
    for f in data:
        if f.grid != grid:
            raise ValueError("datum grid does not match the parameters")
        if not f.is_mean_free():
            raise ValueError("datum must be mean-free")
    coeffs = np.stack([f.to_half() for f in data]) * grid.half.dealias
    if noise is not None and driver is None:
        raise ValueError("a noise model needs a Brownian driver")
    return SolverState(coeffs, 0.0, 0, params, grid, noise, driver, realizations, nus)


class _Propagator:
    """Cached multipliers for one (state layout, scheme) combination."""

    def __init__(self, state: SolverState, scheme: StepScheme):
        grid = state.grid
        wn = grid.half
        self.grid = grid
        self.beta = state.params.beta
        self.dt = scheme.dt
        self.scheme = scheme
        if state.noise is not None:
            d = ito_drift_symbol(state.noise, wn, scheme.corrector)
        else:
            d = np.zeros_like(wn.k2)
        self.drift = d
        viscous = np.exp(-state.nu[:, None, None] * wn.k2[None] * scheme.dt)
        if scheme.multiplier == "balanced":
            self.pre = (1.0 + 2.0 * d * scheme.dt) ** -0.5 * wn.dealias
            self.post = viscous * wn.dealias
        else:
            self.pre = wn.dealias.astype(float)
            self.post = viscous * np.exp(-d * scheme.dt)[None] * wn.dealias
        self.vel = wn.power(self.beta - 2.0)

    def increments(self, state: SolverState):
        if state.noise is None:
            return None
        drv = state.driver
        if not math.isclose(drv.dt, self.dt, rel_tol=1e-12):
            raise ValueError(f"driver step {drv.dt} differs from scheme dt {self.dt}")
        z = drv.normals(state.step, state.noise.n_modes, state.realizations)
        return state.noise.half_coefficients(z, drv.dt)

    def advance(self, state: SolverState):
        """Return (new coefficients, max|u| per member at the start of the step)."""
        grid = self.grid
        wn = grid.half
        th = state.coeffs * self.pre
        psi = th * self.vel
        u1 = grid.irfft(wn.iky * psi)
        u2 = grid.irfft(-wn.ikx * psi)
        umax = np.sqrt(np.max(u1**2 + u2**2, axis=(-2, -1)))
        gx = grid.irfft(wn.ikx * th)
        gy = grid.irfft(wn.iky * th)
        a1 = self.dt * u1
        a2 = self.dt * u2
        dW = self.increments(state)
        if dW is not None:
            a1 = a1 + grid.irfft(dW[:, 0])
            a2 = a2 + grid.irfft(dW[:, 1])
        transport = grid.rfft(a1 * gx + a2 * gy)
        new = self.post * (th - transport)
        return new, umax


def max_velocity(state: SolverState) -> np.ndarray:
    grid = state.grid
    wn = grid.half
    psi = state.coeffs * wn.power(state.params.beta - 2.0)
    u1 = grid.irfft(wn.iky * psi)
    u2 = grid.irfft(-wn.ikx * psi)
    return np.sqrt(np.max(u1**2 + u2**2, axis=(-2, -1)))


def step(state: SolverState, scheme: StepScheme, _prop: _Propagator | None = None) -> SolverState:
    """Advance every member by one step of size ``scheme.dt``.

    Raises CFLError when dt * max|u| * N / L exceeds ``scheme.cfl_max`` and
    BlowUpError on non-finite output; both carry the unmodified input state.
    """
    prop = _prop or _Propagator(state, scheme)
    new, umax = prop.advance(state)
    cfl = scheme.dt * float(np.max(umax)) * state.grid.N / state.grid.L
    if not np.isfinite(cfl) or not np.all(np.isfinite(new)):
        raise BlowUpError(f"non-finite coefficients at step {state.step}", state=state)
    if cfl > scheme.cfl_max:
        raise CFLError(f"CFL number {cfl:.4g} exceeds {scheme.cfl_max} at t = {state.t:.6g}", state=state)
    return replace(state, coeffs=new, t=(state.step + 1) * scheme.dt, step=state.step + 1)


# diagnostics ----------------------------------------------------------------


@dataclass
class DiagnosticSeries:
    """Recorded diagnostics; every column has shape (n_records, E)."""

    t: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)

    def append(self, t: float, values: dict):
        self.t.append(float(t))
        for key, val in values.items():
            self.columns.setdefault(key, []).append(np.asarray(val, dtype=float))

    def __getitem__(self, key) -> np.ndarray:
        return np.array(self.columns[key])

    @property
    def times(self) -> np.ndarray:
        return np.array(self.t)

    def names(self) -> list:
        return list(self.columns)

    def to_csv(self, member: int = 0, header: str = "") -> str:
        buf = io.StringIO()
        buf.write(header)
        writer = csv.writer(buf, lineterminator="\n")
        names = self.names()
        writer.writerow(["t"] + names)
        for i, t in enumerate(self.t):
            row = [repr(t)] + [repr(float(self.columns[n][i][member])) for n in names]
            writer.writerow(row)
        return buf.getvalue()


def _sobolev_exponent(label: str, alpha: float) -> float:
    if label == "-alpha":
        return -alpha
    return float(label)


def measure(state: SolverState, lq=(2.0, 4.0, math.inf), sobolev=DEFAULT_SOBOLEV, cfl_dt=None, cfl_max=0.5) -> dict:
    """Diagnostics of every member: L^q, homogeneous H^s, max|u|, CFL margin."""
    grid = state.grid
    wn = grid.half
    th = state.coeffs
    values = grid.irfft(th)
    out = {}
    cell = (grid.L / grid.N) ** 2
    for q in lq:
        if math.isinf(q):
            out["Linf"] = np.max(np.abs(values), axis=(-2, -1))
        else:
            out[f"L{q:g}"] = (np.sum(np.abs(values) ** q, axis=(-2, -1)) * cell) ** (1.0 / q)
    # rfft layout: interior columns stand for two conjugate coefficients
    mult = np.full(wn.k2.shape, 2.0)
    mult[:, 0] = 1.0
    if grid.N % 2 == 0:
        mult[:, -1] = 1.0
    for label in sobolev:
        s = _sobolev_exponent(label, state.params.alpha)
        w = wn.power(2.0 * s) * mult
        w[0, 0] = 0.0
        out[f"H{label}"] = grid.L * np.sqrt(np.sum(w * np.abs(th) ** 2, axis=(-2, -1)))
    umax = max_velocity(state)
    out["max_u"] = umax
    if cfl_dt is not None:
        out["cfl_margin"] = cfl_max - cfl_dt * umax * grid.N / grid.L
    out["mean"] = th[..., 0, 0].real
    return out


@dataclass
class RunResult:
    state: SolverState
    series: DiagnosticSeries
    trajectory: list | None = None  # coefficient snapshots when recorded


def run(
    state: SolverState,
    t_end: float,
    scheme: StepScheme,
    every: int = 1,
    lq=(2.0, 4.0, math.inf),
    sobolev=DEFAULT_SOBOLEV,
    record_trajectory: bool = False,
    checkpoint_dir=None,
    checkpoint_every: int = 0,
    callback=None,
) -> RunResult:
    """Step until ``t_end`` recording diagnostics every ``every`` steps.

    The number of steps is round((t_end - t) / dt). Errors from ``step``
    propagate with the partial series attached.
    """
    if t_end < state.t:
        raise ValueError(f"t_end = {t_end} precedes the current time {state.t}")
    n_steps = int(round((t_end - state.t) / scheme.dt))
    prop = _Propagator(state, scheme)
    series = DiagnosticSeries()
    traj = [state.coeffs.copy()] if record_trajectory else None

    def record(s):
        series.append(s.t, measure(s, lq, sobolev, scheme.dt, scheme.cfl_max))
        if callback is not None:
            callback(s)

    record(state)
    if checkpoint_dir is not None and checkpoint_every:
        _checkpoint(state, checkpoint_dir)
    for i in range(n_steps):
        try:
            state = step(state, scheme, prop)
        except (BlowUpError, CFLError) as exc:
            exc.series = series
            raise
        if traj is not None:
            traj.append(state.coeffs.copy())
        if (i + 1) % every == 0 or i + 1 == n_steps:
            record(state)
        if checkpoint_dir is not None and checkpoint_every and (i + 1) % checkpoint_every == 0:
            _checkpoint(state, checkpoint_dir)
    return RunResult(state, series, traj)


def _checkpoint(state: SolverState, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for j in range(state.size):
        name = directory / f"theta_m{j:03d}_s{state.step:07d}.kgsq"
        write_checkpoint(name, state.theta(j), state.t)


def horizon_ratio(series: DiagnosticSeries, L: float) -> float:
    """max|u| * t_end / L over the run; wrap-around is negligible below 1/4."""
    if not series.t:
        return 0.0
    return float(np.max(series["max_u"]) * series.t[-1] / L)
