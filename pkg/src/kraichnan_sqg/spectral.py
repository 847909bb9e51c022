"""
Periodic-grid scalar fields and Fourier-multiplier operators.

Coefficients follow the convention theta(x) = sum_k theta_hat(k) exp(i k.x) on
the torus [0, L)^2 with k = (2 pi / L) m, m in Z^2, so a unit cosine mode has
coefficient 1/2 at +-k. This is ``scipy.fft.fft2(..., norm="forward")``.
Continuum torus norms then read ||theta||_{L^2}^2 = L^2 sum |theta_hat|^2.

Two layouts share the same multipliers: the full N x N layout used by
:class:`SpectralField`, and the half (rfft) layout used by the solver for
speed. Both are described by a :class:`Wavenumbers` table.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

CHECKPOINT_MAGIC = b"KGSQ"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIdd")  # magic, version, N, L, t


class MeanNotZeroError(ValueError):
    """Negative Fourier powers requested on a field with nonzero mean."""


@dataclass(frozen=True)
class Wavenumbers:
    """Wavevector table for one coefficient layout."""

    kx: np.ndarray
    ky: np.ndarray
    k2: np.ndarray
    kabs: np.ndarray
    dealias: np.ndarray  # bool, two-thirds rule
    nyquist: np.ndarray  # bool, modes with m_i == -N/2 in either direction

    def power(self, s: float) -> np.ndarray:
        """|k|^s with the k = 0 entry set to 0 (s != 0) or 1 (s == 0)."""
        if s == 0:
            return np.ones_like(self.kabs)
        out = np.zeros_like(self.kabs)
        nz = self.kabs > 0
        out[nz] = self.kabs[nz] ** s
        return out

    @cached_property
    def ikx(self) -> np.ndarray:
        # odd derivatives drop the unpaired Nyquist mode to stay real
        return np.where(self.nyquist, 0.0, 1j * self.kx)

    @cached_property
    def iky(self) -> np.ndarray:
        return np.where(self.nyquist, 0.0, 1j * self.ky)


@dataclass(frozen=True)
class Grid:
    N: int
    L: float

    def __post_init__(self):
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def dk(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cutoff_index(self) -> int:
        """Largest retained integer wavenumber under the two-thirds rule."""
        return self.N // 3

    @property
    def k_dealias(self) -> float:
        return self.cutoff_index * self.dk

    @property
    def k_nyquist(self) -> float:
        return (self.N // 2) * self.dk

    @cached_property
    def m(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.N) * self.N).astype(np.int64)

    def _table(self, mx: np.ndarray, my: np.ndarray) -> Wavenumbers:
        kx = self.dk * mx.astype(float)
        ky = self.dk * my.astype(float)
        k2 = kx**2 + ky**2
        K = self.cutoff_index
        half = self.N // 2
        return Wavenumbers(
            kx=kx,
            ky=ky,
            k2=k2,
            kabs=np.sqrt(k2),
            dealias=(np.abs(mx) <= K) & (np.abs(my) <= K),
            nyquist=(mx == -half) | (my == -half) | (my == half),
        )

    @cached_property
    def full(self) -> Wavenumbers:
        mx, my = np.meshgrid(self.m, self.m, indexing="ij")
        return self._table(mx, my)

    @cached_property
    def half(self) -> Wavenumbers:
        my_half = np.arange(self.N // 2 + 1)
        mx, my = np.meshgrid(self.m, my_half, indexing="ij")
        return self._table(mx, my)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.N) * self.dx

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    # transforms ---------------------------------------------------------
    def fft(self, values, workers=None):
        return sfft.fft2(values, norm="forward", workers=workers)

    def ifft(self, coeffs, workers=None):
        return sfft.ifft2(coeffs, norm="forward", workers=workers)

    def rfft(self, values, workers=None):
        return sfft.rfft2(values, norm="forward", workers=workers)

    def irfft(self, coeffs, workers=None):
        return sfft.irfft2(coeffs, s=(self.N, self.N), norm="forward", workers=workers)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar field in full layout."""

    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        if self.coeffs.shape != (self.grid.N, self.grid.N):
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match N={self.grid.N}"
            )

    @classmethod
    def from_physical(cls, values: np.ndarray, grid: Grid) -> "SpectralField":
        return cls(grid.fft(np.asarray(values, dtype=float)), grid)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(np.zeros((grid.N, grid.N), dtype=complex), grid)

    @classmethod
    def from_half(cls, half_coeffs: np.ndarray, grid: Grid) -> "SpectralField":
        return cls.from_physical(grid.irfft(half_coeffs), grid)

    def to_physical(self) -> np.ndarray:
        return self.grid.ifft(self.coeffs).real

    def to_half(self) -> np.ndarray:
        return self.coeffs[:, : self.grid.N // 2 + 1].copy()

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0].real)

    def is_mean_free(self, rtol: float = 1e-12) -> bool:
        scale = np.sqrt(np.sum(np.abs(self.coeffs) ** 2))
        return abs(self.coeffs[0, 0]) <= rtol * scale + 1e-300

    def hermitian_defect(self) -> float:
        """max |c(-k) - conj(c(k))| over the grid."""
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=(0, 1)), shift=(1, 1), axis=(0, 1))
        return float(np.max(np.abs(flipped - np.conj(c))))

    def dealiased(self) -> "SpectralField":
        return SpectralField(np.where(self.grid.full.dealias, self.coeffs, 0.0), self.grid)

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(coeffs, self.grid)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)


@dataclass(frozen=True, eq=False)
class VectorField:
    u1: SpectralField
    u2: SpectralField
    incompressible: bool = False

    @property
    def grid(self) -> Grid:
        return self.u1.grid

    def divergence(self) -> SpectralField:
        wn = self.grid.full
        return self.u1.with_coeffs(wn.ikx * self.u1.coeffs + wn.iky * self.u2.coeffs)

    def to_physical(self) -> np.ndarray:
        return np.stack([self.u1.to_physical(), self.u2.to_physical()])

    def __neg__(self):
        return VectorField(-self.u1, -self.u2, self.incompressible)


def _require_mean_free(field: SpectralField, what: str):
    if not field.is_mean_free():
        raise MeanNotZeroError(f"{what} requires a mean-free field (mean = {field.mean:g})")


def fractional_laplacian(field: SpectralField, s: float) -> SpectralField:
    """Apply Lambda^s = (-Delta)^(s/2) as the multiplier |k|^s."""
    if s < 0:
        _require_mean_free(field, f"Lambda^{s}")
    return field.with_coeffs(field.grid.full.power(s) * field.coeffs)


def perp_gradient(field: SpectralField) -> VectorField:
    """grad^perp theta = (-d2 theta, d1 theta); exactly divergence-free."""
    wn = field.grid.full
    return VectorField(
        field.with_coeffs(-wn.iky * field.coeffs),
        field.with_coeffs(wn.ikx * field.coeffs),
        incompressible=True,
    )


def velocity_from_scalar(theta: SpectralField, beta: float) -> VectorField:
    """u = -grad^perp Lambda^(-2+beta) theta."""
    return -perp_gradient(fractional_laplacian(theta, -2.0 + beta))


def sobolev_norm(field: SpectralField, s: float) -> float:
    """Homogeneous norm (L^2 sum_{k != 0} |k|^{2s} |theta_hat|^2)^{1/2}.

    The factor L^2 makes a single unit mode match its continuum torus norm.
    The mean is excluded for every s.
    """
    if s < 0:
        _require_mean_free(field, f"H^{s} norm")
    w = field.grid.full.power(2.0 * s)
    w[0, 0] = 0.0
    return float(field.grid.L * np.sqrt(np.sum(w * np.abs(field.coeffs) ** 2)))


def lebesgue_norm(field: SpectralField, q: float) -> float:
    """Physical-space quadrature of ||theta||_{L^q}; q = inf gives the grid max."""
    if q < 1:
        raise ValueError(f"q must lie in [1, inf], got {q}")
    values = field.to_physical()
    return lebesgue_norm_values(values, field.grid, q)


def lebesgue_norm_values(values: np.ndarray, grid: Grid, q: float) -> np.ndarray:
    """L^q norm over the last two axes of a physical array (batched)."""
    a = np.abs(values)
    if np.isinf(q):
        return np.max(a, axis=(-2, -1))
    return (np.sum(a**q, axis=(-2, -1)) * grid.dx**2) ** (1.0 / q)


def pairing(f: SpectralField, g: SpectralField) -> float:
    """L^2 inner product <f, g> on the torus."""
    return float(f.grid.L**2 * np.sum(f.coeffs * np.conj(g.coeffs)).real)


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    slope: float = -2.0,
    k_min: float = 0.0,
    k_max: float | None = None,
    amplitude: float = 1.0,
) -> SpectralField:
    """Real, mean-free, dealiased Gaussian field with |theta_hat|^2 ~ |k|^slope.

    Normalized to unit L^2 norm times ``amplitude``.
    """
    values = rng.standard_normal((grid.N, grid.N))
    c = grid.fft(values)
    wn = grid.full
    keep = wn.dealias & (wn.kabs > max(k_min, 0.0))
    if k_max is not None:
        keep &= wn.kabs <= k_max
    c = np.where(keep, c * wn.power(0.5 * slope), 0.0)
    norm = grid.L * np.sqrt(np.sum(np.abs(c) ** 2))
    if norm == 0:
        raise ValueError("empty wavenumber band")
    return SpectralField(c * (amplitude / norm), grid)


# checkpoints ----------------------------------------------------------------
def write_checkpoint(target, field: SpectralField, t: float):
    """Write the binary checkpoint format to a path or binary stream.

    Layout: magic "KGSQ", version u32, N u32, L f64, t f64 (little-endian),
    then the N x N coefficient array in row-major order as interleaved
    (real, imag) f64 pairs.
    """
    payload = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, field.grid.N, field.grid.L, t)
    body = np.ascontiguousarray(field.coeffs, dtype="<c16").tobytes()
    if hasattr(target, "write"):
        target.write(payload + body)
    else:
        with open(target, "wb") as fh:
            fh.write(payload + body)


def read_checkpoint(source) -> tuple[SpectralField, float]:
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated checkpoint header")
    magic, version, N, L, t = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    expected = N * N * 16
    body = raw[_HEADER.size :]
    if len(body) != expected:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    coeffs = np.frombuffer(body, dtype="<c16").reshape(N, N).astype(complex)
    return SpectralField(coeffs, Grid(int(N), float(L))), float(t)


def checkpoint_bytes(field: SpectralField, t: float) -> bytes:
    buf = io.BytesIO()
    write_checkpoint(buf, field, t)
    return buf.getvalue()


def physical_csv(field: SpectralField) -> str:
    """CSV of physical-space samples: x, y, value."""
    values = field.to_physical()
    X, Y = field.grid.coordinates()
    lines = ["x,y,theta"]
    for x, y, v in zip(X.ravel(), Y.ravel(), values.ravel()):
        lines.append(f"{x!r},{y!r},{v!r}")
    return "\n".join(lines) + "\n"
