"""
Model parameters, the scaling-critical exponent and admissibility checks.

All quantities are dimensionless; the torus side ``L`` is the only length.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

# relative tolerance used to decide p == p_star
CRITICAL_RTOL = 1e-12


class ParameterError(ValueError):
    """Raised when a parameter lies outside the field-level domain."""


def critical_exponent(alpha: float, beta: float) -> float:
    """Return p_star = 1 / (1 - alpha - beta/2).

    Raises ParameterError when alpha + beta/2 >= 1, where the exponent is
    infinite or negative.
    """
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"beta must lie in [0, 1], got {beta}")
    gap = 1.0 - alpha - 0.5 * beta
    if gap <= 0.0:
        raise ParameterError(
            f"alpha + beta/2 = {alpha + 0.5 * beta} >= 1: critical exponent undefined"
        )
    return 1.0 / gap


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float = 0.0
    p: float = 2.0
    nu: float = 0.0
    L: float = 2.0 * math.pi
    N: int = 64

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta}")
        if not self.p > 1.0:
            raise ParameterError(f"p must lie in (1, inf), got {self.p}")
        if self.nu < 0.0:
            raise ParameterError(f"nu must be >= 0, got {self.nu}")
        if not self.L > 0.0:
            raise ParameterError(f"L must be > 0, got {self.L}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ParameterError(f"N must be an even integer >= 8, got {self.N}")

    @property
    def regime(self) -> str:
        return "euler" if self.beta == 0.0 else "gsqg"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ValidationReport:
    """Advisory summary of where a parameter set sits in the theory.

    ``status`` is one of ``"valid"`` (uniqueness conditions hold),
    ``"conjectural"`` (gSQG with alpha + beta > 1 but alpha + beta/2 + 1/p <= 1,
    the band the theory conjectures but does not prove) or ``"invalid"``.
    """

    regime: str
    status: str
    p_star: float | None
    criticality: str | None  # "critical", "subcritical", "supercritical"
    r: float | None  # integrability exponent of u*theta
    r_condition: bool
    reasons: tuple[str, ...]

    @property
    def valid(self) -> bool:
        return self.status == "valid"

    @property
    def critical(self) -> bool:
        return self.criticality == "critical"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reasons"] = list(self.reasons)
        return d


def validate(params: ModelParams) -> ValidationReport:
    """Classify ``params`` against the well-posedness conditions.

    Euler (beta = 0) needs alpha <= 1 - 1/p. gSQG (beta > 0) needs
    alpha + beta/2 + 1/p <= 1 and alpha + beta <= 1. The sufficient condition
    for the weak formulation, 1/r = (alpha + beta)/2 + 1/p <= 1 with
    alpha + beta <= 1, is reported alongside.
    """
    a, b, p = params.alpha, params.beta, params.p
    reasons = []
    try:
        p_star = critical_exponent(a, b)
    except ParameterError as exc:
        p_star = None
        reasons.append(str(exc))

    criticality = None
    if p_star is not None:
        if abs(p - p_star) < CRITICAL_RTOL * p_star:
            criticality = "critical"
        elif p > p_star:
            criticality = "subcritical"
        else:
            criticality = "supercritical"
            reasons.append(f"p = {p} < p_star = {p_star}")

    inv_r = 0.5 * (a + b) + 1.0 / p
    r = 1.0 / inv_r
    r_condition = inv_r <= 1.0 + CRITICAL_RTOL and a + b <= 1.0 + CRITICAL_RTOL

    scaling_ok = criticality in ("critical", "subcritical")
    if params.regime == "euler":
        status = "valid" if scaling_ok else "invalid"
    else:
        if a + b > 1.0 + CRITICAL_RTOL:
            reasons.append(f"alpha + beta = {a + b} > 1")
            status = "conjectural" if scaling_ok else "invalid"
        else:
            status = "valid" if scaling_ok else "invalid"

    return ValidationReport(
        regime=params.regime,
        status=status,
        p_star=p_star,
        criticality=criticality,
        r=r,
        r_condition=bool(r_condition),
        reasons=tuple(reasons),
    )
