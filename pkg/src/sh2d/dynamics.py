"""Right-hand sides of the nonlocal and local Swift-Hohenberg models.

Both models are integrated in the rewritten form

    u_t = -alpha*u - 2*lap(u) - lap²(u) + N(u),      alpha = 1 - mu,

which is algebraically identical to u_t = mu*u - (1 + lap)²u + N(u).
The nonlinearity is

    N(u) = -u * (G * u²)     (Variant.NONLOCAL, kernel G), or
    N(u) = -u³               (Variant.LOCAL_CUBIC).

A constant kernel with level g reduces the nonlocal term to -g‖u‖²·u,
which is what separates the two models' attractor-dimension estimates.

``linearized_apply`` evaluates the tangent dynamics v_t = -L(u)v, where

    L(u)v = lap²v + 2*lap(v) + alpha*v + v*(G*u²) + 2u*(G*(u v))

for the nonlocal model and L(u)v = lap²v + 2*lap(v) + alpha*v + 3u²v for
the local one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .fields import BC, Field, ensure_finite, laplacian, biharmonic, validate_field
from .kernels import ConvMode, Kernel, conv_mode_for, convolve_signed

__all__ = [
    "Variant",
    "ModelParams",
    "RhsBreakdown",
    "rhs",
    "rhs_breakdown",
    "linear_rhs",
    "nonlinear_rhs",
    "linearized_apply",
    "linearized_nonlinear",
]


class Variant(Enum):
    NONLOCAL = "nonlocal"
    LOCAL_CUBIC = "local"


@dataclass(frozen=True)
class ModelParams:
    """Model selection: growth parameter mu plus the nonlinearity variant."""

    mu: float
    variant: Variant = Variant.NONLOCAL
    kernel: Kernel | None = None

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu!r}")
        if self.variant is Variant.NONLOCAL and self.kernel is None:
            raise ValueError("nonlocal variant requires a kernel")

    @property
    def alpha(self) -> float:
        return 1.0 - self.mu


@dataclass
class RhsBreakdown:
    """Tendency split into the linear and nonlinear contributions."""

    linear_part: Field
    nonlinear_part: Field

    def total(self) -> Field:
        return Field(self.linear_part.grid, self.linear_part.values + self.nonlinear_part.values)


def linear_rhs(p: ModelParams, u: Field) -> Field:
    """-alpha*u - 2*lap(u) - lap²(u)."""
    lap = laplacian(u, validate=False)
    bih = biharmonic(u, validate=False)
    return Field(u.grid, -p.alpha * u.values - 2.0 * lap.values - bih.values)


def nonlinear_rhs(p: ModelParams, u: Field) -> Field:
    """N(u): -u·(G*u²) for the nonlocal model, -u³ for the local one."""
    if p.variant is Variant.NONLOCAL:
        w = convolve_signed(p.kernel, u.values**2, u.grid, conv_mode_for(u.grid))
        return Field(u.grid, -u.values * w)
    return Field(u.grid, -u.values**3)


def rhs_breakdown(p: ModelParams, u: Field) -> RhsBreakdown:
    validate_field(u, "rhs input")
    return RhsBreakdown(linear_part=linear_rhs(p, u), nonlinear_part=nonlinear_rhs(p, u))


def rhs(p: ModelParams, u: Field) -> Field:
    """Full tendency u_t."""
    parts = rhs_breakdown(p, u)
    out = parts.total()
    ensure_finite(out.values, "rhs output")
    return out


def linearized_nonlinear(p: ModelParams, u: Field, v: Field) -> Field:
    """Tangent of the nonlinear term at u in direction v."""
    if p.variant is Variant.NONLOCAL:
        mode = conv_mode_for(u.grid)
        w_uu = convolve_signed(p.kernel, u.values**2, u.grid, mode)
        w_uv = convolve_signed(p.kernel, u.values * v.values, u.grid, mode)
        return Field(u.grid, -(v.values * w_uu + 2.0 * u.values * w_uv))
    return Field(u.grid, -3.0 * u.values**2 * v.values)


def linearized_apply(p: ModelParams, u: Field, v: Field) -> Field:
    """Tangent dynamics v_t = -L(u)v (note the sign: this returns -L(u)v)."""
    if u.grid != v.grid:
        raise ValueError("linearized_apply: u and v live on different grids")
    validate_field(u, "linearization base")
    validate_field(v, "tangent field")
    lin = linear_rhs(p, v)
    nl = linearized_nonlinear(p, u, v)
    return Field(u.grid, lin.values + nl.values)
