"""Closed-form attractor bounds for the two model variants.

Everything here is elementary arithmetic on the model constants: the
absorbing-ball radius sqrt(mu/b), the trace-positivity threshold as a
function of the Young-inequality parameter eps, the eps that minimizes
it, and the resulting dimension estimates

    nonlocal:  C (1 + sqrt(mu + (2a - b) mu / b)),   eps_opt = 1 + sqrt(...)
    local:     C (1 + sqrt(mu)),                     eps_opt = 1 + sqrt(mu)

with a calibration constant C (default 1) absorbing the grid-independent
spectral-counting factor.  A constant kernel (a = b) gives
C (1 + sqrt(2 mu)); since a >= b the nonlocal estimate is never below
the local one at the same mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "TheoryInputs",
    "absorbing_radius",
    "poincare_lambda1",
    "threshold_nonlocal",
    "threshold_local",
    "bound_nonlocal",
    "bound_local",
    "bound_constant_kernel",
    "dimension_gap",
]


@dataclass(frozen=True)
class TheoryInputs:
    """Constants the estimates depend on: growth rate mu, kernel bounds
    0 < b <= a, and the calibration constant C."""

    mu: float
    a: float = 1.0
    b: float = 1.0
    C: float = 1.0

    def __post_init__(self) -> None:
        if not (self.mu > 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"dimension estimates need mu > 0, got mu={self.mu}")
        if not (0.0 < self.b <= self.a):
            raise ValueError(f"kernel bounds need 0 < b <= a, got b={self.b} a={self.a}")
        if not (self.C > 0.0):
            raise ValueError(f"calibration constant must be positive, got C={self.C}")

    @property
    def s(self) -> float:
        """mu + (2a - b) mu / b, the combined forcing strength."""
        return self.mu + (2.0 * self.a - self.b) * self.mu / self.b


def absorbing_radius(mu: float, b: float) -> float:
    """Radius sqrt(mu/b) of the absorbing ball in L² (mu > 0)."""
    if mu <= 0.0:
        raise ValueError(f"absorbing ball requires mu > 0, got mu={mu}")
    if b <= 0.0:
        raise ValueError(f"kernel floor must be positive, got b={b}")
    return math.sqrt(mu / b)


def poincare_lambda1(lx: float, ly: float) -> float:
    """Smallest Dirichlet-Laplacian eigenvalue pi²(1/lx² + 1/ly²) of the
    lx × ly rectangle."""
    if lx <= 0.0 or ly <= 0.0:
        raise ValueError(f"domain sides must be positive, got lx={lx} ly={ly}")
    return math.pi**2 * (1.0 / lx**2 + 1.0 / ly**2)


def _check_eps(eps: float) -> None:
    if eps <= 1.0:
        raise ValueError(f"eps must exceed 1 for the trace minorant, got eps={eps}")


def threshold_nonlocal(inp: TheoryInputs, eps: float) -> float:
    """Bundle size at which the nonlocal trace minorant turns positive,
    for a given eps > 1: sqrt((mu - 1 + eps + (2a - b) mu / b) C / (1 - 1/eps))."""
    _check_eps(eps)
    num = (inp.mu - 1.0 + eps + (2.0 * inp.a - inp.b) * inp.mu / inp.b) * inp.C
    return math.sqrt(num / (1.0 - 1.0 / eps))


def threshold_local(mu: float, eps: float, C: float = 1.0) -> float:
    """Local-cubic counterpart: sqrt((mu - 1 + eps) C / (1 - 1/eps))."""
    _check_eps(eps)
    if mu <= 0.0:
        raise ValueError(f"dimension estimates need mu > 0, got mu={mu}")
    return math.sqrt((mu - 1.0 + eps) * C / (1.0 - 1.0 / eps))


def bound_nonlocal(inp: TheoryInputs) -> tuple[float, float]:
    """Minimized nonlocal estimate: (C (1 + sqrt(s)), eps_opt = 1 + sqrt(s))."""
    root = math.sqrt(inp.s)
    return inp.C * (1.0 + root), 1.0 + root


def bound_local(mu: float, C: float = 1.0) -> tuple[float, float]:
    """Minimized local estimate: (C (1 + sqrt(mu)), eps_opt = 1 + sqrt(mu))."""
    if mu <= 0.0:
        raise ValueError(f"dimension estimates need mu > 0, got mu={mu}")
    root = math.sqrt(mu)
    return C * (1.0 + root), 1.0 + root


def bound_constant_kernel(mu: float, C: float = 1.0) -> float:
    """Constant kernel G = g has a = b, so the estimate collapses to
    C (1 + sqrt(2 mu)) independent of g."""
    if mu <= 0.0:
        raise ValueError(f"dimension estimates need mu > 0, got mu={mu}")
    return C * (1.0 + math.sqrt(2.0 * mu))


def dimension_gap(inp: TheoryInputs) -> float:
    """Nonlocal estimate minus the local estimate at the same mu and C;
    nonnegative whenever 2a >= b, which a >= b guarantees."""
    return bound_nonlocal(inp)[0] - bound_local(inp.mu, inp.C)[0]
