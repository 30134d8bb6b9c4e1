"""A-posteriori verification of the dissipativity estimates on trajectories.

The checks mirror the energy estimates satisfied by the spatially
discrete system:

* decay envelope      ‖u(t)‖² <= ‖u₀‖²·exp(-2 mu t) + mu/b
* absorbing ball      limsup ‖u‖ <= R = sqrt(mu/b), entered in finite time
* H² window bound     ∫_t^{t+1} ‖lap u‖² ds <= (1 + mu) + ‖u(t)‖², where
                      (1 + mu) is the minimum over beta > 0 of
                      (2 + 2 mu + beta)²/(8 beta), attained at
                      beta = 2 + 2 mu
* instantaneous decay ⟨rhs(u), u⟩ <= -(alpha - 1)‖u‖² - b‖u‖⁴

Because the discrete operators satisfy ⟨lap² u, u⟩ = ‖lap u‖² exactly in
both boundary modes, these inequalities hold sample-wise up to time
discretization error; the default slack is 1e-6 (relative) for spectral
runs and 1e-3 for clamped finite-difference runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams, Variant, rhs
from .fields import BC, inner, l2_norm
from .stepper import Trajectory

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

__all__ = [
    "BoundReport",
    "check_lemma1",
    "check_decay",
    "check_h2_bound",
    "check_dissipativity",
    "absorbing_entry",
    "envelope_crossing_time",
    "window_constant",
    "reports_to_json",
    "reports_to_text",
]


@dataclass
class BoundReport:
    """Outcome of one bound check on one trajectory."""

    bound_name: str
    satisfied: bool
    worst_margin: float
    time_of_worst: float
    samples: int
    tol: float
    inconclusive: bool = False
    details: dict = field(default_factory=dict)

    def to_kv_line(self) -> str:
        parts = [
            f"bound={self.bound_name}",
            f"satisfied={str(self.satisfied).lower()}",
            f"worst_margin={self.worst_margin:.6e}",
            f"time_of_worst={self.time_of_worst:.6g}",
            f"samples={self.samples}",
            f"tol={self.tol:.3e}",
        ]
        if self.inconclusive:
            parts.append("inconclusive=true")
        for key, val in self.details.items():
            if isinstance(val, float):
                parts.append(f"{key}={val:.6e}")
            else:
                parts.append(f"{key}={val}")
        return " ".join(parts)

    def to_json_obj(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "satisfied": self.satisfied,
            "worst_margin": self.worst_margin,
            "time_of_worst": self.time_of_worst,
            "samples": self.samples,
            "tol": self.tol,
            "inconclusive": self.inconclusive,
            "details": self.details,
        }


def _default_tol(traj: Trajectory, scale: float, rel: float | None) -> float:
    if rel is None:
        rel = 1.0e-6 if traj.grid.bc is BC.PERIODIC else 1.0e-3
    return rel * scale


def _kernel_floor(params: ModelParams) -> float:
    if params.variant is not Variant.NONLOCAL or params.kernel is None:
        raise ValueError("this bound needs the nonlocal variant with a kernel floor b")
    return params.kernel.b


def check_lemma1(
    traj: Trajectory,
    mu: float | None = None,
    b: float | None = None,
    tol_rel: float | None = None,
) -> BoundReport:
    """Check ‖u(t)‖² against the decay envelope at every series sample.

    For mu <= 0 the envelope argument does not apply (every solution
    decays to zero); the check is routed to :func:`check_decay`.
    """
    mu = traj.params.mu if mu is None else mu
    if mu <= 0:
        return check_decay(traj)
    b = _kernel_floor(traj.params) if b is None else b
    if b <= 0:
        raise ValueError(f"kernel floor b must be positive, got {b}")
    u0_sq = traj.l2[0] ** 2
    envelope = u0_sq * np.exp(-2.0 * mu * traj.times) + mu / b
    margins = envelope - traj.l2**2
    worst = int(np.argmin(margins))
    tol = _default_tol(traj, u0_sq, tol_rel)

    radius = float(np.sqrt(mu / b))
    tail_start = int(np.ceil(0.8 * (len(traj.times) - 1)))
    tail_max = float(np.max(traj.l2[tail_start:]))
    return BoundReport(
        bound_name="decay_envelope",
        satisfied=bool(margins[worst] >= -tol),
        worst_margin=float(margins[worst]),
        time_of_worst=float(traj.times[worst]),
        samples=len(traj.times),
        tol=tol,
        details={
            "mu": float(mu),
            "b": float(b),
            "initial_l2": float(traj.l2[0]),
            "absorbing_radius": radius,
            "tail_max": tail_max,
            "tail_ratio": tail_max / radius,
        },
    )


def check_decay(traj: Trajectory, slack_rel: float = 1.0e-9) -> BoundReport:
    """Check that ‖u(t)‖ is non-increasing (within slack) and ends below
    its initial value; the expected behaviour whenever mu <= 0."""
    l2 = traj.l2
    slack = slack_rel * max(float(l2[0]), 1.0)
    increments = np.diff(l2)
    worst = int(np.argmax(increments)) if len(increments) else 0
    worst_inc = float(increments[worst]) if len(increments) else 0.0
    ok = worst_inc <= slack and l2[-1] <= l2[0]
    return BoundReport(
        bound_name="l2_decay",
        satisfied=bool(ok),
        worst_margin=-worst_inc,
        time_of_worst=float(traj.times[worst + 1]) if len(increments) else float(traj.times[0]),
        samples=len(l2),
        tol=slack,
        details={"initial_l2": float(l2[0]), "final_l2": float(l2[-1])},
    )


def window_constant(mu: float, beta: float | None = None) -> float:
    """(2 + 2 mu + beta)²/(8 beta); minimized over beta at beta = 2 + 2 mu,
    where it equals 1 + mu."""
    if beta is None:
        beta = 2.0 + 2.0 * mu
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    return (2.0 + 2.0 * mu + beta) ** 2 / (8.0 * beta)


def check_h2_bound(
    traj: Trajectory,
    mu: float | None = None,
    stable_windows: int = 5,
    stable_rel: float = 0.05,
    slack_rel: float | None = None,
) -> BoundReport:
    """Windowed H² check over unit time windows [t, t+1).

    The bound: the trapezoid value of ∫ ‖lap u‖² ds over each window
    stays below (1 + mu) + ‖u(t_window)‖² plus slack.  Whether the
    windowed maxima of ‖lap u‖ have stabilized (relative spread over the
    last few windows below ``stable_rel``) is reported in the details as
    an attractor-entry indicator but does not affect ``satisfied`` —
    short transient runs are not violations.  Fewer than two complete
    windows makes the report inconclusive.
    """
    mu = traj.params.mu if mu is None else mu
    t = traj.times
    lap_sq = traj.lap_l2**2
    n_windows = int(np.floor(t[-1] - t[0]))
    if n_windows < 2:
        return BoundReport(
            bound_name="h2_window",
            satisfied=False,
            worst_margin=float("nan"),
            time_of_worst=float("nan"),
            samples=len(t),
            tol=0.0,
            inconclusive=True,
            details={"reason": "series_shorter_than_two_unit_windows"},
        )

    beta_opt = 2.0 + 2.0 * mu
    gronwall = window_constant(mu, beta_opt)
    maxima = []
    margins = []
    window_starts = []
    for w in range(n_windows):
        lo = t[0] + w
        hi = lo + 1.0
        mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        if np.count_nonzero(mask) < 2:
            continue
        tw = t[mask]
        fw = lap_sq[mask]
        maxima.append(float(np.sqrt(np.max(fw))))
        integral = float(_trapezoid(fw, tw)) / (tw[-1] - tw[0])
        bound = gronwall + traj.l2[mask][0] ** 2
        margins.append(bound - integral)
        window_starts.append(lo)
    maxima = np.asarray(maxima)
    margins = np.asarray(margins)

    peak = float(np.max(maxima)) if maxima.size else 0.0
    recent = maxima[-min(stable_windows, len(maxima)) :]
    if peak <= 1.0e-8 * max(traj.l2[0], 1.0):
        stabilized = True  # decayed to zero; trivially stable
        spread = 0.0
    else:
        spread = float((np.max(recent) - np.min(recent)) / np.max(recent))
        stabilized = spread <= stable_rel

    scale = gronwall + traj.l2[0] ** 2
    tol = _default_tol(traj, scale, slack_rel)
    worst = int(np.argmin(margins))
    ok = bool(margins[worst] >= -tol)
    return BoundReport(
        bound_name="h2_window",
        satisfied=ok,
        worst_margin=float(margins[worst]),
        time_of_worst=float(window_starts[worst]),
        samples=len(t),
        tol=tol,
        details={
            "beta_opt": beta_opt,
            "gronwall_rhs": gronwall,
            "windows": len(maxima),
            "recent_spread": spread,
            "stabilized": stabilized,
            "windowed_max_final": float(maxima[-1]),
        },
    )


def absorbing_entry(traj: Trajectory, radius: float | None = None, pad: float = 1.05) -> float | None:
    """First sample time from which ‖u‖ stays within the (padded) absorbing
    radius for the rest of the series; ``None`` if it never settles."""
    if radius is None:
        radius = pad * float(np.sqrt(traj.params.mu / _kernel_floor(traj.params)))
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    running_max = np.maximum.accumulate(traj.l2[::-1])[::-1]
    idx = np.nonzero(running_max <= radius)[0]
    if idx.size == 0:
        return None
    return float(traj.times[idx[0]])


def envelope_crossing_time(u0_l2: float, mu: float, b: float, radius: float) -> float:
    """Time at which the decay envelope crosses ``radius``²; an a-priori
    upper bound for the absorbing-ball entry time when ‖u₀‖ > radius."""
    if mu <= 0 or b <= 0:
        raise ValueError("envelope crossing requires mu > 0 and b > 0")
    gap = radius**2 - mu / b
    if gap <= 0:
        raise ValueError(f"radius² = {radius**2} must exceed mu/b = {mu / b}")
    if u0_l2**2 <= radius**2:
        return 0.0
    return float(np.log(u0_l2**2 / gap) / (2.0 * mu))


def check_dissipativity(traj: Trajectory, slack_rel: float | None = None) -> BoundReport:
    """Verify ⟨rhs(u), u⟩ <= -(alpha - 1)‖u‖² - b‖u‖⁴ on every stored
    snapshot (the instantaneous form of the decay estimate)."""
    if not traj.snapshots:
        return BoundReport(
            bound_name="dissipativity",
            satisfied=False,
            worst_margin=float("nan"),
            time_of_worst=float("nan"),
            samples=0,
            tol=0.0,
            inconclusive=True,
            details={"reason": "no_snapshots_stored"},
        )
    p = traj.params
    b = _kernel_floor(p) if p.variant is Variant.NONLOCAL else 0.0
    margins = []
    for snap in traj.snapshots:
        nsq = l2_norm(snap) ** 2
        lhs = inner(rhs(p, snap), snap)
        bound = -(p.alpha - 1.0) * nsq - b * nsq**2
        margins.append(bound - lhs)
    margins = np.asarray(margins)
    worst = int(np.argmin(margins))
    scale = max(traj.l2[0] ** 4, 1.0)
    tol = _default_tol(traj, scale, slack_rel)
    return BoundReport(
        bound_name="dissipativity",
        satisfied=bool(margins[worst] >= -tol),
        worst_margin=float(margins[worst]),
        time_of_worst=float(traj.snap_times[worst]),
        samples=len(margins),
        tol=tol,
        details={"b": b},
    )


def reports_to_json(reports: list[BoundReport]) -> str:
    return json.dumps([r.to_json_obj() for r in reports], indent=2)


def reports_to_text(reports: list[BoundReport]) -> str:
    return "\n".join(r.to_kv_line() for r in reports) + "\n"
