"""
Initial data presets and the L^p-cap-H^{-1} approximation scheme.

Every preset returns a mean-free SpectralField together with its norms at
generation time, so run reports can quote the admissible class of the datum.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import interpolate, special

from .noise import PURPOSE_DATUM, counter_rng
from .spectral import Grid, SpectralField, lebesgue_norm, random_field, sobolev_norm

PRESETS = ("band_limited", "vortex_patch", "dipole", "bump_laplacian", "zero")


def _transition(t):
    """Smooth step: 0 for t <= 0, 1 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff_profile(r):
    """psi(r): 1 on r <= 1, 0 on r >= 2, smooth and radial."""
    return 1.0 - _transition(np.asarray(r, dtype=float) - 1.0)


def _periodic_offset(grid: Grid, center):
    """Minimal-image displacement of every grid point from ``center``."""
    X, Y = grid.coordinates()
    L = grid.L
    dx = (X - center[0] + 0.5 * L) % L - 0.5 * L
    dy = (Y - center[1] + 0.5 * L) % L - 0.5 * L
    return dx, dy


def _bump(s):
    inside = np.abs(s) < 1
    u = np.where(inside, 1.0 - s * s, 1.0)
    return np.where(inside, np.exp(-1.0 / u), 0.0)


def mean_free(values: np.ndarray, grid: Grid) -> SpectralField:
    f = SpectralField.from_physical(values, grid)
    c = f.coeffs.copy()
    c[0, 0] = 0.0
    return f.with_coeffs(c)


def datum_norms(f: SpectralField, p: float) -> dict:
    """Norms quoted alongside every generated datum."""
    return {
        "L1": lebesgue_norm(f, 1.0),
        "L2": lebesgue_norm(f, 2.0),
        f"L{p:g}": lebesgue_norm(f, p),
        "Linf": lebesgue_norm(f, math.inf),
        "H-1": sobolev_norm(f, -1.0),
    }


def make_datum(kind: str, grid: Grid, p: float = 2.0, seed: int = 0, **opts):
    """Build a preset datum; returns (field, norms).

    band_limited: random phases, |theta_k| ~ |k|^slope on k_min <= |k| <= k_max
        (opts slope=-2, k_min=0, k_max=None, amplitude=1 as L^2 norm)
    vortex_patch: mollified indicator of a disk (radius=1, width=0.25,
        amplitude=1); its mean is removed on the torus
    dipole: two opposite patches separated by ``separation`` (default 2.5)
    bump_laplacian: -Laplacian of a compact C^7 bump of ``radius`` (default 2)
    zero: the zero field

    Random presets draw from counter stream ``stream`` (default 0) of ``seed``.
    """
    center = opts.pop("center", (0.5 * grid.L, 0.5 * grid.L))
    stream = int(opts.pop("stream", 0))
    if kind == "zero":
        f = SpectralField.zeros(grid)
    elif kind == "band_limited":
        rng = counter_rng(seed, stream, PURPOSE_DATUM)
        kmax = opts.pop("k_max", None)
        f = random_field(
            grid,
            rng,
            slope=opts.pop("slope", -2.0),
            k_min=opts.pop("k_min", 0.0),
            k_max=kmax,
            amplitude=opts.pop("amplitude", 1.0),
        )
    elif kind == "vortex_patch":
        f = mean_free(_patch(grid, center, **opts), grid)
        opts = {}
    elif kind == "dipole":
        sep = opts.pop("separation", 2.5)
        c1 = (center[0] - 0.5 * sep, center[1])
        c2 = (center[0] + 0.5 * sep, center[1])
        values = _patch(grid, c1, **opts) - _patch(grid, c2, **opts)
        f = mean_free(values, grid)
        opts = {}
    elif kind == "bump_laplacian":
        f = mean_free(_bump_laplacian(grid, center, **opts), grid)
        opts = {}
    else:
        raise ValueError(f"unknown datum preset {kind!r}; expected one of {PRESETS}")
    if opts:
        raise ValueError(f"unused datum options for {kind}: {sorted(opts)}")
    return f, datum_norms(f, p)


def _patch(grid, center, radius=1.0, width=0.25, amplitude=1.0):
    dx, dy = _periodic_offset(grid, center)
    r = np.hypot(dx, dy)
    return amplitude * (1.0 - _transition((r - radius + 0.5 * width) / width))


def _bump_laplacian(grid, center, radius=2.0, amplitude=1.0):
    """-Laplacian of the compact C^7 bump (1 - (r/a)^2)^8, in closed form.

    The polynomial bump keeps the spectrum resolved on moderate grids, which
    the exp(-1/(1 - s^2)) profile does not.
    """
    dx, dy = _periodic_offset(grid, center)
    s2 = (dx * dx + dy * dy) / radius**2
    u = np.clip(1.0 - s2, 0.0, None)
    # Lap b = (b'' + b'/r) with b = u^8, u = 1 - s^2
    lap = (-32.0 * u**7 + 224.0 * s2 * u**6) / radius**2
    return -amplitude * lap


# approximation scheme -------------------------------------------------------


def _mollifier_transform(kappa: np.ndarray) -> np.ndarray:
    """Fourier transform of the unit-mass radial bump supported in |x| <= 1.

    phi_hat(kappa) = 2 pi int_0^1 phi(r) J0(kappa r) r dr, tabulated by
    fixed Gauss-Legendre quadrature and interpolated.
    """
    x, w = np.polynomial.legendre.leggauss(200)
    r = 0.5 * (x + 1.0)
    w = 0.5 * w
    prof = _bump(r)
    mass = 2 * np.pi * np.sum(w * prof * r)
    kmax = float(np.max(kappa)) if kappa.size else 0.0
    table = np.linspace(0.0, max(kmax, 1.0) * 1.0001, 4097)
    vals = 2 * np.pi * (special.j0(np.outer(table, r)) * (prof * r)) @ w / mass
    spline = interpolate.CubicSpline(table, vals)
    return spline(kappa)


def support_center(f: SpectralField):
    """Circular |f|^2-weighted centroid on the torus."""
    grid = f.grid
    v = f.to_physical() ** 2
    total = v.sum()
    if total == 0:
        return (0.5 * grid.L, 0.5 * grid.L)
    ang = 2 * np.pi * grid.x / grid.L
    cx = np.angle(np.sum(v.sum(1) * np.exp(1j * ang)))
    cy = np.angle(np.sum(v.sum(0) * np.exp(1j * ang)))
    return ((cx % (2 * np.pi)) * grid.L / (2 * np.pi), (cy % (2 * np.pi)) * grid.L / (2 * np.pi))


def mollify(f: SpectralField, epsilon: float) -> SpectralField:
    """phi^eps * f with phi^eps(x) = eps^{-2} phi(x / eps)."""
    kappa = epsilon * f.grid.full.kabs
    return f.with_coeffs(f.coeffs * _mollifier_transform(kappa))


def approximate_datum(f: SpectralField, epsilon: float, p: float = 2.0, center=None) -> SpectralField:
    """f^eps = phi^eps * (-div(psi^eps grad Lambda^{-2} f)).

    psi^eps(x) = psi(eps (x - c)) with c the support center of f. Raises
    ValueError when the cutoff radius 2/eps exceeds L/2. ``p`` does not
    change the construction; the scheme is uniform in p.
    """
    grid = f.grid
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if 2.0 / epsilon > 0.5 * grid.L:
        raise ValueError(f"cutoff radius 2/eps = {2.0 / epsilon:g} exceeds L/2 = {0.5 * grid.L:g}")
    if not f.is_mean_free():
        raise ValueError("datum must be mean-free")
    if center is None:
        center = support_center(f)
    wn = grid.full
    inv = wn.power(-2.0) * f.coeffs
    g1 = grid.ifft(1j * wn.kx * inv).real
    g2 = grid.ifft(1j * wn.ky * inv).real
    dx, dy = _periodic_offset(grid, center)
    psi = cutoff_profile(epsilon * np.hypot(dx, dy))
    h1 = grid.fft(psi * g1)
    h2 = grid.fft(psi * g2)
    div = -(1j * wn.kx * h1 + 1j * wn.ky * h2)
    return mollify(f.with_coeffs(div), epsilon)


def approximation_error(f: SpectralField, f_eps: SpectralField, p: float) -> float:
    """||f^eps - f||_{L^p} + ||f^eps - f||_{H^{-1}}."""
    d = f_eps - f
    return lebesgue_norm(d, p) + sobolev_norm(d, -1.0)
