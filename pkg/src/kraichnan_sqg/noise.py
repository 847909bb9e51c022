"""
Kraichnan transport noise on the periodic lattice.

The noise is a finite sum of divergence-free Fourier modes,

    W(t, x) = sum_k a_k e_k [cos(k.x) B_k(t) + sin(k.x) B'_k(t)] sqrt(w),

with a_k = <k>^{-1-alpha}, e_k = k^perp/|k| and lattice weight
w = 2 pi / L^2, so the mode sum is the Riemann sum of
(2 pi)^{-1} int dk. Its covariance is the lattice truncation of

    C(z) = (2 pi)^{-1} int <k>^{-2-2 alpha} P^perp_k exp(i k.z) dk.

Brownian increments come from a counter-based generator (Philox) keyed by
(seed, realization) with the step index in the counter, so any increment can
be replayed without touching a stream.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spectral import Grid, SpectralField, VectorField

# counter word 2 separates independent uses of one (seed, realization) key
PURPOSE_NOISE = 0
PURPOSE_DATUM = 1
PURPOSE_SAMPLES = 2


@dataclass(frozen=True, eq=False)
class NoiseModel:
    alpha: float
    grid: Grid
    k_max: float
    m: np.ndarray  # (n_modes, 2) integer lattice indices, closed under negation
    amplitude: np.ndarray  # a_k
    normalization: float

    @property
    def n_modes(self) -> int:
        return len(self.amplitude)

    @cached_property
    def k(self) -> np.ndarray:
        return self.grid.dk * self.m.astype(float)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.hypot(self.k[:, 0], self.k[:, 1])

    @cached_property
    def direction(self) -> np.ndarray:
        """Unit vectors e_k = k^perp / |k|, shape (n_modes, 2)."""
        return np.stack([-self.k[:, 1], self.k[:, 0]], axis=1) / self.kabs[:, None]

    @cached_property
    def neg_index(self) -> np.ndarray:
        lookup = {tuple(mm): i for i, mm in enumerate(self.m)}
        return np.array([lookup[(-a, -b)] for a, b in self.m])

    @cached_property
    def weight(self) -> np.ndarray:
        """a_k^2 * w, the covariance weight carried by each mode."""
        return self.amplitude**2 * self.normalization

    def mode_table_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["kx", "ky", "amplitude"])
        for (kx, ky), a in zip(self.k, self.amplitude):
            writer.writerow([repr(float(kx)), repr(float(ky)), repr(float(a))])
        return buf.getvalue()

    # spectral assembly -------------------------------------------------
    @cached_property
    def _half_slots(self):
        """Modes whose coefficient is stored in the rfft layout."""
        N = self.grid.N
        sel = np.nonzero(self.m[:, 1] >= 0)[0]
        rows = np.mod(self.m[sel, 0], N)
        cols = self.m[sel, 1]
        return sel, rows, cols

    @cached_property
    def _full_slots(self):
        N = self.grid.N
        return np.mod(self.m[:, 0], N), np.mod(self.m[:, 1], N)

    def coefficients(self, normals: np.ndarray, dt: float, modes=None) -> np.ndarray:
        """Fourier coefficient of each mode's contribution for given normals.

        ``normals`` has shape (..., 2, n_modes) holding the cosine and sine
        channel draws. Returns complex (..., 2, len(modes)) vector
        coefficients, hat W(m) = a e_m sqrt(w dt) (zeta_m - conj zeta_{-m}) / 2
        with zeta = Z_cos - i Z_sin.
        """
        if modes is None:
            modes = np.arange(self.n_modes)
        zc, zs = normals[..., 0, :], normals[..., 1, :]
        neg = self.neg_index[modes]
        zeta = zc[..., modes] - 1j * zs[..., modes]
        zeta_neg = zc[..., neg] - 1j * zs[..., neg]
        scalar = 0.5 * self.amplitude[modes] * np.sqrt(self.normalization * dt) * (
            zeta - np.conj(zeta_neg)
        )
        e = self.direction[modes]
        return np.stack([scalar * e[:, 0], scalar * e[:, 1]], axis=-2)

    def half_coefficients(self, normals: np.ndarray, dt: float) -> np.ndarray:
        """Increment coefficients in rfft layout, shape (..., 2, N, N//2+1)."""
        sel, rows, cols = self._half_slots
        N = self.grid.N
        vals = self.coefficients(normals, dt, sel)
        out = np.zeros(vals.shape[:-1] + (N, N // 2 + 1), dtype=complex)
        out[..., rows, cols] = vals
        return out

    def full_coefficients(self, normals: np.ndarray, dt: float) -> np.ndarray:
        rows, cols = self._full_slots
        N = self.grid.N
        vals = self.coefficients(normals, dt)
        out = np.zeros(vals.shape[:-1] + (N, N), dtype=complex)
        out[..., rows, cols] = vals
        return out


def build_noise(alpha: float, grid: Grid, k_max: float | None = None) -> NoiseModel:
    """Retain every lattice mode with 0 < |k| <= k_max.

    ``k_max`` defaults to the dealiased Nyquist floor(N/3) * 2 pi / L and may
    not exceed the grid Nyquist.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if k_max is None:
        k_max = grid.k_dealias
    if k_max > grid.k_nyquist * (1 + 1e-12):
        raise ValueError(f"k_max = {k_max} exceeds the grid Nyquist {grid.k_nyquist}")
    mmax = int(np.floor(k_max / grid.dk + 1e-9))
    r = np.arange(-mmax, mmax + 1)
    mx, my = np.meshgrid(r, r, indexing="ij")
    mx, my = mx.ravel(), my.ravel()
    kabs = grid.dk * np.hypot(mx, my)
    keep = (kabs > 0) & (kabs <= k_max * (1 + 1e-12))
    m = np.stack([mx[keep], my[keep]], axis=1)
    amplitude = (1.0 + kabs[keep] ** 2) ** (-0.5 - 0.5 * alpha)
    return NoiseModel(
        alpha=alpha,
        grid=grid,
        k_max=float(k_max),
        m=m,
        amplitude=amplitude,
        normalization=2.0 * np.pi / grid.L**2,
    )


def covariance_C(model: NoiseModel, z) -> np.ndarray:
    """Lattice covariance sum a_k^2 w (e_k x e_k) cos(k.z); z may be (..., 2)."""
    z = np.asarray(z, dtype=float)
    phase = np.cos(z @ model.k.T)  # (..., n_modes)
    e = model.direction
    w = model.weight
    c11 = phase @ (w * e[:, 0] ** 2)
    c12 = phase @ (w * e[:, 0] * e[:, 1])
    c22 = phase @ (w * e[:, 1] ** 2)
    return np.stack([np.stack([c11, c12], -1), np.stack([c12, c22], -1)], -2)


def structure_Q(model: NoiseModel, z) -> np.ndarray:
    """Q(z) = C(0) - C(z)."""
    return covariance_C(model, np.zeros(2)) - covariance_C(model, z)


def corrector_c0(model: NoiseModel) -> float:
    """c0 = Tr C(0) / 2 for the truncated mode set."""
    return float(0.5 * np.sum(model.weight))


def ito_drift_symbol(model: NoiseModel, wn, kind: str = "galerkin") -> np.ndarray:
    """Fourier symbol d(n) of the Ito-Stratonovich drift, d theta = -d(n) theta dt.

    ``kind="scalar"`` gives (c0/2)|n|^2, the multiplier of (c0/2) Laplacian.
    ``kind="galerkin"`` gives the corrector of the band-limited system,

        d(n) = 1/2 sum_k a_k^2 w (e_k . n)^2 1[n + k in band],

    which coincides with (c0/2)|n|^2 whenever every n + k stays inside the
    dealiased band and makes the discrete L^2 balance exact in expectation.
    """
    if kind == "scalar":
        return 0.5 * corrector_c0(model) * wn.k2
    if kind != "galerkin":
        raise ValueError(f"unknown drift kind {kind!r}")

    grid = model.grid
    K = grid.cutoff_index
    R = int(np.max(np.abs(model.m)))
    size = 2 * R + 1
    e = model.direction
    w = model.weight
    # per-mode weights of n1^2, 2 n1 n2, n2^2 placed on the lattice
    tables = []
    for comp in (e[:, 0] ** 2, e[:, 0] * e[:, 1], e[:, 1] ** 2):
        A = np.zeros((size, size))
        np.add.at(A, (model.m[:, 0] + R, model.m[:, 1] + R), w * comp)
        S = np.zeros((size + 1, size + 1))
        S[1:, 1:] = A.cumsum(0).cumsum(1)
        tables.append(S)

    mx = np.rint(wn.kx / grid.dk).astype(np.int64)
    my = np.rint(wn.ky / grid.dk).astype(np.int64)

    def box(S, lo1, hi1, lo2, hi2):
        # sum of A over k in [lo1, hi1] x [lo2, hi2], clipped to the table
        lo1c = np.clip(lo1 + R, 0, size)
        hi1c = np.clip(hi1 + R + 1, 0, size)
        lo2c = np.clip(lo2 + R, 0, size)
        hi2c = np.clip(hi2 + R + 1, 0, size)
        hi1c = np.maximum(hi1c, lo1c)
        hi2c = np.maximum(hi2c, lo2c)
        return S[hi1c, hi2c] - S[lo1c, hi2c] - S[hi1c, lo2c] + S[lo1c, lo2c]

    # n + k in band  <=>  k in [-K - n1, K - n1] x [-K - n2, K - n2]
    lo1, hi1 = -K - mx, K - mx
    lo2, hi2 = -K - my, K - my
    s11, s12, s22 = (box(S, lo1, hi1, lo2, hi2) for S in tables)
    d = 0.5 * (wn.kx**2 * s11 + 2 * wn.kx * wn.ky * s12 + wn.ky**2 * s22)
    return np.where(wn.dealias, d, 0.5 * corrector_c0(model) * wn.k2)


@dataclass(frozen=True)
class BrownianDriver:
    """Replayable Brownian increments for the cosine and sine channels.

    Increments for step j over step size ``dt`` are built from ``substeps``
    finer draws, ``sqrt(dt/substeps) * sum_i Z(j*substeps + i)``. Drivers
    that share a seed and ``dt / substeps`` therefore sample one Brownian
    path at different resolutions.
    """

    seed: int
    dt: float
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def fine_dt(self) -> float:
        return self.dt / self.substeps

    def refined(self, factor: int) -> "BrownianDriver":
        """Driver on the same path with steps ``factor`` times smaller."""
        if self.substeps % factor:
            raise ValueError("refinement must divide the substep count")
        return BrownianDriver(self.seed, self.dt / factor, self.substeps // factor)

    def standard_normals(self, step: int, count: int, realization: int = 0, purpose: int = PURPOSE_NOISE):
        """Standard normals of shape (2, count) for one step, scaled to unit variance."""
        total = np.zeros(2 * count)
        for i in range(self.substeps):
            total += _philox_normals(self.seed, realization, step * self.substeps + i, purpose, 2 * count)
        if self.substeps > 1:
            total /= np.sqrt(self.substeps)
        return total.reshape(2, count)

    def normals(self, step: int, count: int, realizations) -> np.ndarray:
        """Batched normals, shape (len(realizations), 2, count)."""
        return np.stack([self.standard_normals(step, count, int(r)) for r in realizations])


def _philox_normals(seed: int, stream: int, counter: int, purpose: int, count: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    ctr = np.array([0, counter, purpose, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key, counter=ctr))
    return gen.standard_normal(count)


def counter_rng(seed: int, stream: int, purpose: int, index: int = 0) -> np.random.Generator:
    """Generator for non-noise randomness (data, sample draws) under the same key scheme."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    ctr = np.array([0, index, purpose, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=ctr))


def sample_increment(
    model: NoiseModel,
    driver: BrownianDriver,
    step: int,
    grid: Grid | None = None,
    realization: int = 0,
) -> VectorField:
    """One increment Delta W over ``driver.dt``; deterministic in (seed, step)."""
    grid = grid or model.grid
    if grid != model.grid:
        raise ValueError("noise model was built for a different grid")
    z = driver.standard_normals(step, model.n_modes, realization)
    c = model.full_coefficients(z, driver.dt)
    return VectorField(SpectralField(c[0], grid), SpectralField(c[1], grid), incompressible=True)


def point_increments(model: NoiseModel, normals: np.ndarray, dt: float, x) -> np.ndarray:
    """Delta W(x) evaluated directly from the mode sum, normals (..., 2, n_modes)."""
    x = np.asarray(x, dtype=float)
    phase = model.k @ x
    zc, zs = normals[..., 0, :], normals[..., 1, :]
    scal = model.amplitude * np.sqrt(model.normalization * dt) * (zc * np.cos(phase) + zs * np.sin(phase))
    return scal @ model.direction
