"""
Coercivity function of the noise in the H^{-1} balance, its regularized
version, the (kappa1, kappa2) fit and the rescaled continuum covariance.

With j = n - k the coercivity function reads

    F(n) = int <j>^{-2-2 alpha} |P^perp_j n|^2 (|n - j|^{-2} - |n|^{-2}) dj,

the dimensional prefactor being set to 1. The integrand is bounded but
direction-dependent at j = 0 and at j = n (k = 0), so the plane is split
into a polar disk around k = 0 and polar circles around j = 0, with the
circles that cross the disk reduced to arcs. Radial integrals use global
adaptive Gauss-Legendre panels, angular integrals the trapezoid rule on full
circles and Gauss-Legendre on arcs; the far tail is mapped to a finite
interval with r = r0 t^{-1/(2 alpha)}.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

DEFAULT_TOL = 1e-6
DEFAULT_BUDGET = 50_000_000  # integrand evaluations per call
_ORDER = 8


class QuadratureBudgetError(RuntimeError):
    """Raised when the requested tolerance needs more evaluations than allowed."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class _Budget:
    def __init__(self, limit, radius):
        self.limit = limit
        self.used = 0
        self.radius = radius

    def charge(self, count):
        self.used += int(count)
        if self.used > self.limit:
            raise QuadratureBudgetError(
                f"quadrature budget of {self.limit} evaluations exhausted at |n| = {self.radius:g}",
                radius=self.radius,
            )


_GL_CACHE = {}


def _gauss_legendre(order):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def _adaptive(f, breakpoints, tol, budget, max_panels=20000):
    """Global adaptive Gauss-Legendre over consecutive breakpoints.

    ``f`` maps an array of nodes to integrand values. Each panel compares an
    order-8 rule with the composite rule on its two halves; the panel with
    the largest estimated error is bisected until the total estimate is
    below ``tol``.
    """
    x, w = _gauss_legendre(_ORDER)

    def panel(a, b):
        h = 0.5 * (b - a)
        m = 0.5 * (a + b)
        q = 0.5 * h
        nodes = np.concatenate([m + h * x, a + q + q * x, m + q + q * x])
        vals = f(nodes)
        coarse = h * np.dot(w, vals[:_ORDER])
        left = q * np.dot(w, vals[_ORDER : 2 * _ORDER])
        right = q * np.dot(w, vals[2 * _ORDER :])
        fine = left + right
        return fine, abs(fine - coarse)

    heap = []
    total_err = 0.0
    values = {}
    counter = 0
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        if b <= a:
            continue
        val, err = panel(a, b)
        heapq.heappush(heap, (-err, counter, a, b))
        values[counter] = val
        total_err += err
        counter += 1
    while total_err > tol and heap:
        if len(heap) > max_panels:
            raise QuadratureBudgetError(
                f"adaptive panel limit reached at |n| = {budget.radius:g}", radius=budget.radius
            )
        neg_err, idx, a, b = heapq.heappop(heap)
        total_err += neg_err
        del values[idx]
        mid = 0.5 * (a + b)
        if not a < mid < b:
            # panel collapsed to floating point resolution; accept as is
            continue
        for lo, hi in ((a, mid), (mid, b)):
            val, err = panel(lo, hi)
            heapq.heappush(heap, (-err, counter, lo, hi))
            values[counter] = val
            total_err += err
            counter += 1
    return math.fsum(values.values())


def _circle(h, r, rtol, budget, m0=16, m_max=1 << 15):
    """Trapezoid rule over full circles; one integral per radius in ``r``."""
    out = np.empty_like(r)
    active = np.arange(r.size)
    M = m0
    phi = 2 * np.pi * np.arange(M) / M
    vals = h(r[:, None], phi[None, :])
    budget.charge(vals.size)
    s = vals.sum(1)
    sa = np.abs(vals).sum(1)
    while active.size:
        mids = phi + np.pi / M
        v = h(r[active, None], mids[None, :])
        budget.charge(v.size)
        s2 = s + v.sum(1)
        sa2 = sa + np.abs(v).sum(1)
        coarse = s * (2 * np.pi / M)
        fine = s2 * (np.pi / M)
        scale = sa2 * (np.pi / M)
        done = np.abs(fine - coarse) <= rtol * scale + 1e-300
        out[active[done]] = fine[done]
        if M >= m_max and not np.all(done):
            raise QuadratureBudgetError(
                f"angular refinement limit reached at |n| = {budget.radius:g}", radius=budget.radius
            )
        keep = ~done
        active, s, sa = active[keep], s2[keep], sa2[keep]
        M *= 2
        phi = 2 * np.pi * np.arange(M) / M
    return out


def _arc(h, r, lo, hi, rtol, budget, m0=16, m_max=1 << 13):
    """Gauss-Legendre over arcs [lo, hi] (arrays matching ``r``)."""
    out = np.empty_like(r)
    active = np.arange(r.size)
    M = m0

    def rule(M, idx):
        x, w = _gauss_legendre(M)
        half = 0.5 * (hi[idx] - lo[idx])
        mid = 0.5 * (hi[idx] + lo[idx])
        phi = mid[:, None] + half[:, None] * x[None, :]
        vals = h(r[idx, None], phi)
        budget.charge(vals.size)
        return half * (vals @ w), half * (np.abs(vals) @ w)

    coarse, _ = rule(M, active)
    while active.size:
        fine, scale = rule(2 * M, active)
        done = np.abs(fine - coarse) <= rtol * scale + 1e-300
        out[active[done]] = fine[done]
        if 2 * M >= m_max and not np.all(done):
            raise QuadratureBudgetError(
                f"arc refinement limit reached at |n| = {budget.radius:g}", radius=budget.radius
            )
        keep = ~done
        active, coarse = active[keep], fine[keep]
        M *= 2
    return out


# kernels --------------------------------------------------------------------


def chi_delta(n, delta):
    """Fourier multiplier exp(-4 pi^2 |n|^2 delta) - exp(-4 pi^2 |n|^2 / delta)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    r2 = np.asarray(n, dtype=float) ** 2
    c = 4.0 * np.pi**2
    return np.exp(-c * r2 * delta) - np.exp(-c * r2 / delta)


@dataclass(frozen=True)
class GreenRegularization:
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def multiplier(self, n):
        return chi_delta(np.abs(np.asarray(n, dtype=float)), self.delta)


class _Kernel:
    """k -> w(|k|) |k|^{-2}; ``s2w`` returns the bounded product |k|^2 * that."""

    def __init__(self, delta=None):
        self.delta = delta

    def s2w(self, s):
        if self.delta is None:
            return np.ones_like(s)
        return chi_delta(s, self.delta)

    def __call__(self, s):
        return self.s2w(s) / s**2

    def scales(self):
        if self.delta is None:
            return []
        return [math.sqrt(self.delta) / (2 * math.pi), 1.0 / (2 * math.pi * math.sqrt(self.delta))]


def _as_vector(n):
    n = np.asarray(n, dtype=float)
    if n.shape == ():
        n = np.array([float(n), 0.0])
    if n.shape != (2,):
        raise ValueError("n must be a scalar radius or a 2-vector")
    R = float(np.hypot(n[0], n[1]))
    if R == 0.0:
        raise ValueError("F is not defined at n = 0")
    return n, R


def _geometric(lo, hi, ratio=4.0):
    if hi <= lo:
        return [lo]
    count = max(1, int(math.ceil(math.log(hi / lo) / math.log(ratio))))
    return list(np.geomspace(lo, hi, count + 1))


def _integrate(n, alpha, kernel: _Kernel, tol, budget_limit):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n, R = _as_vector(n)
    n1, n2 = n
    p = -1.0 - alpha
    target = tol * (R ** (-2 * alpha) + R**-2)
    budget = _Budget(budget_limit, R)
    rtol_ang = 1e-3 * tol
    part = 0.25 * target
    kR = float(kernel(np.array([R]))[0])
    rho = 0.5 * R
    extra = kernel.scales()

    # disk |k| < rho in polar coordinates around k = 0
    def h_disk(s, psi):
        kx = s * np.cos(psi)
        ky = s * np.sin(psi)
        jx, jy = n1 - kx, n2 - ky
        j2 = jx * jx + jy * jy
        cross_over_s = n2 * np.cos(psi) - n1 * np.sin(psi)
        bracket = kernel.s2w(s) - s * s * kR
        return (1.0 + j2) ** p * cross_over_s**2 / j2 * bracket

    def f_disk(s):
        return s * _circle(h_disk, s, rtol_ang, budget)

    lo = min(0.25, rho / 8, *(e / 4 for e in extra)) if extra else min(0.25, rho / 8)
    bp = [0.0] + [b for b in _geometric(min(lo, rho), rho) if 0 < b <= rho]
    bp += [e for e in extra if 0 < e < rho]
    disk = _adaptive(f_disk, sorted(set(bp)), part, budget)

    # polar circles around j = 0
    def h_out(r, phi):
        jx = r * np.cos(phi)
        jy = r * np.sin(phi)
        cross = n1 * jy - n2 * jx
        dx, dy = n1 - jx, n2 - jy
        dist = np.sqrt(dx * dx + dy * dy)
        return (1.0 + r * r) ** p * (cross / r) ** 2 * (kernel(dist) - kR)

    def f_full(r):
        return r * _circle(h_out, r, rtol_ang, budget)

    phin = math.atan2(n2, n1)

    def f_arc(r):
        c = (r * r + R * R - rho * rho) / (2 * r * R)
        b0 = np.arccos(np.clip(c, -1.0, 1.0))
        return r * _arc(h_out, r, phin + b0, phin + 2 * np.pi - b0, rtol_ang, budget)

    s0 = min(0.25, rho / 8)
    bp_in = [0.0] + _geometric(s0, rho) + [e for e in extra if 0 < e < rho]
    inner = _adaptive(f_full, sorted(set(bp_in)), part, budget)

    # arcs on (R/2, 3R/2) with r = R/2 + (R/2) u^2 and r = 3R/2 - (R/2) u^2
    def f_arc_lo(u):
        return f_arc(rho + rho * u * u) * (2 * rho * u)

    def f_arc_hi(u):
        return f_arc(3 * rho - rho * u * u) * (2 * rho * u)

    arcs = _adaptive(f_arc_lo, [0.0, 0.5, 1.0], 0.5 * part, budget)
    arcs += _adaptive(f_arc_hi, [0.0, 0.5, 1.0], 0.5 * part, budget)

    r1 = 3 * rho
    r0 = max(2 * r1, 4.0, *(4 * e for e in extra)) if extra else max(2 * r1, 4.0)
    bp_out = _geometric(r1, r0) + [e for e in extra if r1 < e < r0]
    outer = _adaptive(f_full, sorted(set(bp_out)), 0.5 * part, budget)

    inv = 1.0 / (2 * alpha)

    def f_tail(t):
        r = r0 * t ** (-inv)
        return f_full(r) * (r0 * inv) * t ** (-1.0 - inv)

    tail = _adaptive(f_tail, [0.0, 1e-3, 0.03, 0.3, 1.0], 0.5 * part, budget)
    return math.fsum([disk, inner, arcs, outer, tail]), budget.used


def eval_F(n, alpha: float, tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET) -> float:
    """F(n) to absolute accuracy about tol * (|n|^{-2 alpha} + |n|^{-2}).

    ``n`` is a 2-vector or a radius (taken along the first axis).
    """
    value, _ = _integrate(n, alpha, _Kernel(), tol, budget)
    return value


def eval_F_delta(n, alpha: float, delta: float, tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET) -> float:
    """F with |k|^{-2} - |n|^{-2} replaced by chi_delta(k)|k|^{-2} - chi_delta(n)|n|^{-2}."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    value, _ = _integrate(n, alpha, _Kernel(delta), tol, budget)
    return value


# profiles and kappa fit ------------------------------------------------------


@dataclass
class CoercivityProfile:
    alpha: float
    radii: np.ndarray
    values: np.ndarray
    quadrature_tolerance: float
    isotropy_defect: np.ndarray | None = None  # |F(r,0) - F(0,r)| per radius

    @classmethod
    def build(cls, alpha, radii, tol=DEFAULT_TOL, check_isotropy=False, budget=DEFAULT_BUDGET):
        radii = np.asarray(sorted(float(r) for r in radii))
        if radii.size == 0:
            raise ValueError("empty radius set")
        values = np.array([eval_F(r, alpha, tol, budget) for r in radii])
        defect = None
        if check_isotropy:
            other = np.array([eval_F(np.array([0.0, r]), alpha, tol, budget) for r in radii])
            defect = np.abs(other - values)
        return cls(alpha, radii, values, tol, defect)

    def bound_scale(self) -> np.ndarray:
        return self.radii ** (-2 * self.alpha) + self.radii**-2

    def n0(self):
        """Smallest sampled radius beyond which every sampled F is negative."""
        neg = self.values < 0
        if not neg[-1]:
            return None
        idx = len(neg)
        while idx > 0 and neg[idx - 1]:
            idx -= 1
        return float(self.radii[idx])


@dataclass(frozen=True)
class KappaFit:
    kappa1: float
    kappa2: float
    radii: tuple
    residual: float  # smallest slack of the fitted bound over the samples
    violations: int

    def to_dict(self):
        return {
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "radius_min": self.radii[0],
            "radius_max": self.radii[1],
            "residual": self.residual,
            "violations": self.violations,
        }


def kappa2_for(profile: CoercivityProfile, kappa1: float) -> float:
    r = profile.radii
    return max(0.0, float(np.max((profile.values + kappa1 * r ** (-2 * profile.alpha)) * r**2)))


def fit_kappas(profile: CoercivityProfile, grid_points: int = 4001) -> KappaFit:
    """Largest kappa1 on a deterministic grid with its minimal kappa2.

    A value kappa1 is admissible when -kappa1 |n|^{-2 alpha} alone bounds F
    from above on the top decade of sampled radii, i.e. the |n|^{-2} term is
    not needed at high wavenumber. The grid runs from 0 to the largest
    admissible ratio -F |n|^{2 alpha} seen on that decade; kappa2 then
    follows from the closed-form max over samples.
    """
    r, F, a = profile.radii, profile.values, profile.alpha
    if r[-1] / r[0] < 1e3 * (1 - 1e-12):
        raise ValueError("profile must span at least three decades of |n|")
    top = r >= r[-1] / 10.0
    ratios = -F[top] * r[top] ** (2 * a)
    upper = float(np.min(ratios))
    if not upper > 0:
        raise ValueError("no positive kappa1 is admissible on the sampled profile")
    grid = np.linspace(0.0, upper, grid_points)
    feasible = np.array([np.all(F[top] <= -k * r[top] ** (-2 * a)) for k in grid])
    kappa1 = float(grid[np.nonzero(feasible)[0][-1]])
    if not kappa1 > 0:
        raise ValueError("no positive kappa1 is admissible on the sampled profile")
    kappa2 = kappa2_for(profile, kappa1)
    bound = -kappa1 * r ** (-2 * a) + kappa2 * r**-2
    slack = bound - F
    tol_abs = 1e-12 * profile.bound_scale()
    return KappaFit(
        kappa1=kappa1,
        kappa2=kappa2,
        radii=(float(r[0]), float(r[-1])),
        residual=float(np.min(slack)),
        violations=int(np.sum(slack < -tol_abs)),
    )


def tail_slope(radii, values) -> float:
    """Least-squares log-log slope of -F against |n|."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values >= 0):
        raise ValueError("tail slope needs negative F on every sample")
    return float(np.polyfit(np.log(radii), np.log(-values), 1)[0])


def coercivity_table_csv(alpha, radii, F, F_delta: dict, fit: KappaFit | None, header="") -> str:
    """Rows of |n|, F, F^delta per delta and the fitted bound."""
    buf = io.StringIO()
    buf.write(header)
    writer = csv.writer(buf, lineterminator="\n")
    deltas = sorted(F_delta, reverse=True)
    writer.writerow(["radius", "F"] + [f"F_delta_{d:g}" for d in deltas] + ["bound"])
    for i, r in enumerate(radii):
        bound = ""
        if fit is not None:
            bound = repr(-fit.kappa1 * r ** (-2 * alpha) + fit.kappa2 * r**-2)
        row = [repr(float(r)), repr(float(F[i]))] + [repr(float(F_delta[d][i])) for d in deltas] + [bound]
        writer.writerow(row)
    return buf.getvalue()


# continuum covariance under rescaling --------------------------------------


def _series_s1(x, nu, start, terms=60):
    """sum_{m >= start} (x/2)^{2m} / (m! Gamma(m - nu + 1))."""
    y = (0.5 * x) ** 2
    total = np.zeros_like(x)
    for m in range(start, start + terms):
        total += y**m / (math.factorial(m) * special.gamma(m - nu + 1))
    return total


def _series_s2(x, nu, terms=60):
    """sum_{m >= 0} (x/2)^{2m + 2 nu} / (m! Gamma(m + nu + 1))."""
    y = (0.5 * x) ** 2
    total = np.zeros_like(x)
    for m in range(terms):
        total += y ** (m + nu) / (math.factorial(m) * special.gamma(m + nu + 1))
    return total


_SERIES_SWITCH = 2.0


def _profiles(alpha, x):
    """Dimensionless (Q_trace, Q_longitudinal) at lambda |z| = x for unit lambda.

    Small arguments use the ascending series with the constant terms removed
    analytically; larger ones use the modified Bessel function directly.
    """
    x = np.asarray(x, dtype=float)
    out_tr = np.zeros_like(x)
    out_l = np.zeros_like(x)
    c0 = 1.0 / (4 * alpha)
    g1 = special.gamma(1 + alpha)
    small = (x > 0) & (x <= _SERIES_SWITCH)
    big = x > _SERIES_SWITCH
    if np.any(small):
        xs = x[small]
        a = alpha
        nu = 1.0 + alpha
        out_tr[small] = -(np.pi / (2 * math.sin(a * np.pi) * g1)) * (_series_s1(xs, a, 1) - _series_s2(xs, a))
        out_l[small] = (np.pi / (math.sin(nu * np.pi) * g1)) * (_series_s1(xs, nu, 2) - _series_s2(xs, nu)) / xs**2
    if np.any(big):
        xb = x[big]
        g = xb**alpha * special.kv(alpha, xb) / (2**alpha * g1)
        ell = (1.0 - xb ** (1 + alpha) * special.kv(1 + alpha, xb) / (2**alpha * g1)) / xb**2
        out_tr[big] = 2 * c0 - g
        out_l[big] = c0 - ell
    return out_tr, out_l


def scaling_covariance(alpha: float, lam: float, z) -> np.ndarray:
    """C^lambda(z) = (2 pi)^{-1} int (lambda^2 + |k|^2)^{-1-alpha} P^perp_k e^{i k.z} dk.

    Equals lambda^{-2 alpha} C(lambda z) for the unit-scale continuum
    covariance. Evaluated from its Hankel-transform closed form: along z the
    entry is the longitudinal profile, across z the transverse one. ``z``
    may be (2,) or (..., 2); returns (..., 2, 2).
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    z = np.asarray(z, dtype=float)
    a = np.hypot(z[..., 0], z[..., 1])
    c0 = lam ** (-2 * alpha) / (4 * alpha)
    q_tr, q_l = _profiles(alpha, lam * a)
    scale = lam ** (-2 * alpha)
    ell = c0 - scale * q_l
    trans = (2 * c0 - scale * q_tr) - ell
    safe = np.where(a > 0, a, 1.0)
    zx, zy = z[..., 0] / safe, z[..., 1] / safe
    zx = np.where(a > 0, zx, 1.0)
    zy = np.where(a > 0, zy, 0.0)
    # C = trans I + (ell - trans) zhat zhat^T
    d = ell - trans
    c11 = trans + d * zx * zx
    c12 = d * zx * zy
    c22 = trans + d * zy * zy
    return np.stack([np.stack([c11, c12], -1), np.stack([c12, c22], -1)], -2)


def scaling_structure(alpha: float, lam: float, radius):
    """Q^lambda at separation |z| = ``radius`` as (trace, along z, across z).

    Computed without subtracting C^lambda(0) numerically, so it stays
    accurate as |z| -> 0.
    """
    a = np.abs(np.asarray(radius, dtype=float))
    q_tr, q_l = _profiles(alpha, lam * a)
    scale = lam ** (-2 * alpha)
    return scale * q_tr, scale * q_l, scale * (q_tr - q_l)


def structure_slope(alpha: float, lam: float, z_values) -> float:
    z_values = np.asarray(z_values, dtype=float)
    tr, _, _ = scaling_structure(alpha, lam, z_values)
    return float(np.polyfit(np.log(z_values), np.log(tr), 1)[0])


def kappa_report_json(alpha, fit: KappaFit, extra: dict | None = None) -> str:
    doc = {"alpha": alpha, "fit": fit.to_dict()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
