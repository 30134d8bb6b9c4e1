"""Time integration: ETDRK4 in periodic mode, IMEX schemes in both modes.

* ``Scheme.ETDRK4`` -- exponential time differencing RK4 (Cox & Matthews
  coefficients, evaluated with the Kassam & Trefethen contour trick:
  32 points on a unit circle around each linear-symbol value).  The stiff
  linear part mu - (1 + lap)² is handled exactly in Fourier space, so a
  run with the nonlinearity switched off reproduces mode growth rates to
  roundoff.  Periodic grids only.

* ``Scheme.IMEX_BE`` / ``Scheme.IMEX_CN`` -- implicit treatment of the
  linear part (backward Euler, or Crank-Nicolson paired with a
  second-order Adams-Bashforth extrapolation of the nonlinearity) with
  the nonlinear term explicit.  In periodic mode the solves are diagonal
  in Fourier space; in clamped mode the interior Dirichlet Laplacian is
  diagonalized exactly by the type-I discrete sine transform, so the
  implicit solve costs one DST pair per step and no matrix factorization.

Tangent propagation used by the Lyapunov machinery is the exact Jacobian
of the discrete step map: the tangent stages reuse the base stages of the
same scheme at the same dt.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from .dynamics import ModelParams, Variant
from .fields import (
    BC,
    Field,
    Grid,
    clamp_ring,
    h2_seminorms,
    k_squared,
    l2_norm,
    spectral_norms,
    validate_field,
)
from .kernels import ConvMode, transform_coefficients

__all__ = [
    "Scheme",
    "StepperConfig",
    "BlowUpError",
    "Trajectory",
    "linear_symbol",
    "dirichlet_symbols",
    "make_stepper",
    "step",
    "integrate",
    "make_initial",
]

BLOWUP_THRESHOLD = 1.0e6


class Scheme(Enum):
    ETDRK4 = "etdrk4"
    IMEX_BE = "imex_be"
    IMEX_CN = "imex_cn"


class BlowUpError(RuntimeError):
    """Raised when max|u| exceeds the guard threshold; carries the partial
    trajectory accumulated so far when raised from :func:`integrate`."""

    def __init__(self, t: float, max_abs: float, trajectory: "Trajectory | None" = None):
        self.t = t
        self.max_abs = max_abs
        self.trajectory = trajectory
        super().__init__(f"solution blew up at t={t:.6g}: max|u| = {max_abs:.3e}")


@dataclass(frozen=True)
class StepperConfig:
    """Integration controls.

    ``series_stride`` counts steps between norm-series samples and
    ``snapshot_stride`` counts steps between stored snapshots (0 disables
    snapshots).  ``linear_only`` switches the nonlinearity off, which is
    useful for validating the exact treatment of the linear symbol.
    """

    dt: float
    t_end: float
    scheme: Scheme = Scheme.ETDRK4
    series_stride: int = 10
    snapshot_stride: int = 0
    linear_only: bool = False

    def __post_init__(self):
        if self.dt <= 0 or not np.isfinite(self.dt):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if self.t_end <= 0 or not np.isfinite(self.t_end):
            raise ValueError(f"t_end must be positive and finite, got {self.t_end!r}")
        if self.series_stride < 1:
            raise ValueError(f"series_stride must be >= 1, got {self.series_stride}")
        if self.snapshot_stride < 0:
            raise ValueError(f"snapshot_stride must be >= 0, got {self.snapshot_stride}")
        if not isinstance(self.scheme, Scheme):
            raise ValueError(f"scheme must be a Scheme enum member, got {self.scheme!r}")


def linear_symbol(p: ModelParams, grid: Grid) -> np.ndarray:
    """mu - (1 - |k|²)² on the rfft2 lattice."""
    k2 = k_squared(grid)
    return p.mu - (1.0 - k2) ** 2


@lru_cache(maxsize=None)
def dirichlet_symbols(grid: Grid) -> np.ndarray:
    """Eigenvalues of the interior 5-point Dirichlet Laplacian under DST-I.

    Interior nodes are i = 1..nx-2; the eigenvectors are sin(p*pi*i/(nx-1))
    with eigenvalues -4/h² sin²(p*pi/(2(nx-1))).
    """
    px = np.arange(1, grid.nx - 1)
    py = np.arange(1, grid.ny - 1)
    lam_x = -4.0 / grid.hx**2 * np.sin(px * np.pi / (2.0 * (grid.nx - 1))) ** 2
    lam_y = -4.0 / grid.hy**2 * np.sin(py * np.pi / (2.0 * (grid.ny - 1))) ** 2
    lam = lam_x[:, None] + lam_y[None, :]
    lam.flags.writeable = False
    return lam


def _guard(u_phys: np.ndarray) -> None:
    m = float(np.max(np.abs(u_phys)))
    if not np.isfinite(m) or m > BLOWUP_THRESHOLD:
        raise BlowUpError(float("nan"), m)


def _enforce_reality(state: np.ndarray, ny: int) -> np.ndarray:
    """Re-pair the redundant ±kx bins of an rfft2 state (in place).

    The ky = 0 column (and ky = ny/2 for even ny) stores both halves of a
    conjugate pair, so reality of the field is a constraint on the state
    rather than a property of the storage.  Complex arithmetic on the
    half-spectrum lets roundoff split a pair, and the split component is
    invisible to irfft2 — the nonlinearity can never saturate it — while
    any bin with a positive linear symbol amplifies it exponentially.
    Averaging each column with its flipped conjugate restores the exact
    pairing and is the identity on states that already satisfy it.
    """
    cols = (0, ny // 2) if ny % 2 == 0 else (0,)
    for c in cols:
        col = state[..., :, c]
        state[..., :, c] = 0.5 * (col + np.conj(np.roll(col[..., ::-1], 1, axis=-1)))
    return state


class ETDRK4Stepper:
    """Spectral ETDRK4 for periodic grids; state is an rfft2 array."""

    def __init__(self, p: ModelParams, grid: Grid, cfg: StepperConfig):
        if grid.bc is not BC.PERIODIC:
            raise ValueError(
                "stepper.scheme=etdrk4 requires grid.bc=periodic; "
                "use imex_be or imex_cn for clamped runs"
            )
        self.p = p
        self.grid = grid
        self.cfg = cfg
        self._ghat = None
        if p.variant is Variant.NONLOCAL and not cfg.linear_only:
            self._ghat = transform_coefficients(p.kernel, grid, ConvMode.CIRCULAR)

        dt = cfg.dt
        L = dt * linear_symbol(p, grid)
        self.E = np.exp(L)
        self.E2 = np.exp(0.5 * L)
        m_pts = 32
        r = np.exp(2j * np.pi * (np.arange(m_pts) + 0.5) / m_pts)
        z = L[..., None] + r[None, None, :]
        ez = np.exp(z)
        self.Q = dt * np.mean((np.exp(0.5 * z) - 1.0) / z, axis=-1).real
        self.f1 = dt * np.mean((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z**3, axis=-1).real
        self.f2 = dt * np.mean((2.0 + z + ez * (-2.0 + z)) / z**3, axis=-1).real
        self.f3 = dt * np.mean((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z**3, axis=-1).real

    # -- state conversion ---------------------------------------------------

    def to_state(self, f: Field) -> np.ndarray:
        return _enforce_reality(sfft.rfft2(f.values), self.grid.ny)

    def to_field(self, state: np.ndarray) -> Field:
        return Field(self.grid, sfft.irfft2(state, s=self.grid.shape))

    def norms(self, state: np.ndarray) -> tuple[float, float, float]:
        return spectral_norms(state, self.grid)

    # -- nonlinear term -----------------------------------------------------

    def _stage_context(self, state: np.ndarray):
        """Physical value (and coupling weight) of one RK stage."""
        if self.cfg.linear_only:
            return None
        u = sfft.irfft2(state, s=self.grid.shape)
        _guard(u)
        if self.p.variant is Variant.NONLOCAL:
            w = sfft.irfft2(self._ghat * sfft.rfft2(u * u), s=self.grid.shape)
            return u, w
        return u, None

    def _nl_hat(self, ctx) -> np.ndarray | float:
        if ctx is None:
            return 0.0
        u, w = ctx
        if self.p.variant is Variant.NONLOCAL:
            return sfft.rfft2(-u * w)
        return sfft.rfft2(-(u**3))

    def _nl_tangent_hat(self, ctx, vhats: np.ndarray) -> np.ndarray | float:
        """Jacobian of the nonlinearity at the stage state, batched over the
        leading axis of ``vhats``."""
        if ctx is None:
            return 0.0
        u, w = ctx
        v = sfft.irfft2(vhats, s=self.grid.shape, axes=(-2, -1))
        if self.p.variant is Variant.NONLOCAL:
            w_uv = sfft.irfft2(
                self._ghat[None, ...] * sfft.rfft2(u[None, ...] * v, axes=(-2, -1)),
                s=self.grid.shape,
                axes=(-2, -1),
            )
            dn = -(v * w[None, ...] + 2.0 * u[None, ...] * w_uv)
        else:
            dn = -3.0 * (u**2)[None, ...] * v
        return sfft.rfft2(dn, axes=(-2, -1))

    # -- stepping -----------------------------------------------------------

    def _stages(self, uhat: np.ndarray):
        c0 = self._stage_context(uhat)
        n1 = self._nl_hat(c0)
        a = self.E2 * uhat + self.Q * n1
        ca = self._stage_context(a)
        n2 = self._nl_hat(ca)
        b = self.E2 * uhat + self.Q * n2
        cb = self._stage_context(b)
        n3 = self._nl_hat(cb)
        c = self.E2 * a + self.Q * (2.0 * n3 - n1)
        cc = self._stage_context(c)
        n4 = self._nl_hat(cc)
        new = self.E * uhat + self.f1 * n1 + 2.0 * self.f2 * (n2 + n3) + self.f3 * n4
        return _enforce_reality(new, self.grid.ny), (c0, ca, cb, cc)

    def step(self, uhat: np.ndarray) -> np.ndarray:
        new, _ = self._stages(uhat)
        return new

    def step_with_tangents(self, uhat: np.ndarray, vhats: np.ndarray):
        new, (c0, ca, cb, cc) = self._stages(uhat)
        d1 = self._nl_tangent_hat(c0, vhats)
        va = self.E2 * vhats + self.Q * d1
        d2 = self._nl_tangent_hat(ca, va)
        vb = self.E2 * vhats + self.Q * d2
        d3 = self._nl_tangent_hat(cb, vb)
        vc = self.E2 * va + self.Q * (2.0 * d3 - d1)
        d4 = self._nl_tangent_hat(cc, vc)
        vnew = self.E * vhats + self.f1 * d1 + 2.0 * self.f2 * (d2 + d3) + self.f3 * d4
        return new, _enforce_reality(vnew, self.grid.ny)

    def tangent_to_states(self, vectors: np.ndarray) -> np.ndarray:
        return _enforce_reality(sfft.rfft2(vectors, axes=(-2, -1)), self.grid.ny)

    def tangent_to_vectors(self, vstates: np.ndarray) -> np.ndarray:
        return sfft.irfft2(vstates, s=self.grid.shape, axes=(-2, -1))


class IMEXStepper:
    """Linearly implicit stepping in either boundary mode.

    Backward Euler solves (I - dt*Lin) u⁺ = u + dt*N(u); the
    Crank-Nicolson variant pairs the trapezoidal linear solve with a
    two-step Adams-Bashforth extrapolation of N (first step falls back to
    a forward-Euler evaluation).  Periodic solves divide by the Fourier
    symbol; clamped solves divide by the DST-I symbol of the interior
    operator.
    """

    def __init__(self, p: ModelParams, grid: Grid, cfg: StepperConfig):
        if cfg.scheme not in (Scheme.IMEX_BE, Scheme.IMEX_CN):
            raise ValueError(f"IMEXStepper cannot run scheme {cfg.scheme}")
        self.p = p
        self.grid = grid
        self.cfg = cfg
        self._n_prev = None
        dt = cfg.dt
        self._spectral = grid.bc is BC.PERIODIC
        if self._spectral:
            sym = linear_symbol(p, grid)
            conv_mode = ConvMode.CIRCULAR
        else:
            lam = dirichlet_symbols(grid)
            sym = -p.alpha - 2.0 * lam - lam * lam
            conv_mode = ConvMode.ZERO_PADDED
        if cfg.scheme is Scheme.IMEX_BE:
            self._den = 1.0 - dt * sym
            self._num = None
        else:
            self._den = 1.0 - 0.5 * dt * sym
            self._num = 1.0 + 0.5 * dt * sym
        self._ghat = None
        if p.variant is Variant.NONLOCAL and not cfg.linear_only:
            self._ghat = transform_coefficients(p.kernel, grid, conv_mode)

    # -- state conversion ---------------------------------------------------

    def _project(self, state):
        if self._spectral:
            _enforce_reality(state, self.grid.ny)
        return state

    def to_state(self, f: Field):
        if self._spectral:
            return self._project(sfft.rfft2(f.values))
        return f.values.copy()

    def to_field(self, state) -> Field:
        if self._spectral:
            return Field(self.grid, sfft.irfft2(state, s=self.grid.shape))
        return Field(self.grid, state.copy())

    def norms(self, state) -> tuple[float, float, float]:
        if self._spectral:
            return spectral_norms(state, self.grid)
        f = Field(self.grid, state)
        grad, lap = h2_seminorms(f)
        return l2_norm(f), grad, lap

    # -- pieces -------------------------------------------------------------

    def _coupling_weight(self, u: np.ndarray, density: np.ndarray) -> np.ndarray:
        if self._spectral:
            return sfft.irfft2(self._ghat * sfft.rfft2(density), s=self.grid.shape)
        nx, ny = self.grid.shape
        padded = np.zeros((2 * nx, 2 * ny))
        padded[:nx, :ny] = density
        out = sfft.irfft2(self._ghat * sfft.rfft2(padded), s=padded.shape)
        return out[:nx, :ny]

    def _stage_context(self, state):
        if self.cfg.linear_only:
            return None
        u = sfft.irfft2(state, s=self.grid.shape) if self._spectral else state
        _guard(u)
        if self.p.variant is Variant.NONLOCAL:
            return u, self._coupling_weight(u, u * u)
        return u, None

    def _nl_state(self, ctx):
        """Nonlinear tendency in state representation."""
        if ctx is None:
            return 0.0
        u, w = ctx
        n = -u * w if self.p.variant is Variant.NONLOCAL else -(u**3)
        if self._spectral:
            return sfft.rfft2(n)
        return clamp_ring(n)

    def _solve(self, rhs_state):
        """Apply (I - dt Lin)^{-1} (or the CN version) to a state array."""
        if self._spectral:
            return rhs_state / self._den
        out = np.zeros_like(rhs_state)
        coeffs = sfft.dstn(rhs_state[1:-1, 1:-1], type=1) / self._den
        out[1:-1, 1:-1] = sfft.idstn(coeffs, type=1)
        return out

    def _apply_num(self, state):
        if self._spectral:
            return self._num * state
        out = np.zeros_like(state)
        coeffs = self._num * sfft.dstn(state[1:-1, 1:-1], type=1)
        out[1:-1, 1:-1] = sfft.idstn(coeffs, type=1)
        return out

    # -- stepping -----------------------------------------------------------

    def step(self, state):
        ctx = self._stage_context(state)
        n_cur = self._nl_state(ctx)
        dt = self.cfg.dt
        if self.cfg.scheme is Scheme.IMEX_BE:
            return self._project(self._solve(state + dt * n_cur))
        n_prev = self._n_prev if self._n_prev is not None else n_cur
        expl = 1.5 * n_cur - 0.5 * n_prev
        self._n_prev = n_cur
        return self._project(self._solve(self._apply_num(state) + dt * expl))

    def step_with_tangents(self, state, vstates):
        if self.cfg.scheme is not Scheme.IMEX_BE:
            raise NotImplementedError(
                "tangent propagation is available for etdrk4 and imex_be only"
            )
        ctx = self._stage_context(state)
        dt = self.cfg.dt
        new = self._solve(state + dt * self._nl_state(ctx))
        if ctx is None:
            dn = np.zeros_like(vstates)
        else:
            u, w = ctx
            v = (
                sfft.irfft2(vstates, s=self.grid.shape, axes=(-2, -1))
                if self._spectral
                else vstates
            )
            if self.p.variant is Variant.NONLOCAL:
                w_uv = np.stack([self._coupling_weight(u, u * vj) for vj in v])
                dn = -(v * w[None, ...] + 2.0 * u[None, ...] * w_uv)
            else:
                dn = -3.0 * (u**2)[None, ...] * v
            if self._spectral:
                dn = sfft.rfft2(dn, axes=(-2, -1))
            else:
                dn = np.stack([clamp_ring(d) for d in dn])
        vnew = np.stack([self._solve(vstates[j] + dt * dn[j]) for j in range(len(vstates))])
        return self._project(new), self._project(vnew)

    def tangent_to_states(self, vectors: np.ndarray) -> np.ndarray:
        if self._spectral:
            return self._project(sfft.rfft2(vectors, axes=(-2, -1)))
        return vectors.copy()

    def tangent_to_vectors(self, vstates: np.ndarray) -> np.ndarray:
        if self._spectral:
            return sfft.irfft2(vstates, s=self.grid.shape, axes=(-2, -1))
        return vstates.copy()


def make_stepper(p: ModelParams, grid: Grid, cfg: StepperConfig):
    if cfg.scheme is Scheme.ETDRK4:
        return ETDRK4Stepper(p, grid, cfg)
    return IMEXStepper(p, grid, cfg)


def step(p: ModelParams, cfg: StepperConfig, u: Field, t: float = 0.0) -> Field:
    """Advance one step from state ``u`` (the dynamics are autonomous, so
    ``t`` only matters for blow-up reporting)."""
    stepper = make_stepper(p, u.grid, cfg)
    try:
        new = stepper.step(stepper.to_state(u))
    except BlowUpError as exc:
        raise BlowUpError(t + cfg.dt, exc.max_abs) from None
    return stepper.to_field(new)


@dataclass
class Trajectory:
    """Norm time series plus optional snapshots from one integration."""

    grid: Grid
    params: ModelParams
    cfg: StepperConfig
    times: np.ndarray
    l2: np.ndarray
    grad_l2: np.ndarray
    lap_l2: np.ndarray
    snap_times: list
    snapshots: list
    final: Field
    blew_up: bool = False

    SERIES_HEADER = "t,l2,grad_l2,lap_l2"

    def series_rows(self):
        for i in range(len(self.times)):
            yield (self.times[i], self.l2[i], self.grad_l2[i], self.lap_l2[i])

    def write_series_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.SERIES_HEADER + "\n")
            for t, a, b, c in self.series_rows():
                fh.write(f"{t:.17g},{a:.17g},{b:.17g},{c:.17g}\n")


def integrate(p: ModelParams, cfg: StepperConfig, u0: Field) -> Trajectory:
    """Integrate from ``u0`` to ``cfg.t_end``, sampling norms every
    ``series_stride`` steps (plus the initial and final states).

    Raises :class:`BlowUpError` (with the partial trajectory attached)
    when max|u| crosses the guard threshold.
    """
    validate_field(u0, "initial condition")
    stepper = make_stepper(p, u0.grid, cfg)
    n_steps = int(round(cfg.t_end / cfg.dt))
    if n_steps < 1:
        raise ValueError(f"t_end={cfg.t_end} is shorter than one step dt={cfg.dt}")

    times, l2s, grads, laps = [], [], [], []
    snap_times, snapshots = [], []
    state = stepper.to_state(u0)

    def build(final_state, blew_up=False):
        return Trajectory(
            grid=u0.grid,
            params=p,
            cfg=cfg,
            times=np.asarray(times),
            l2=np.asarray(l2s),
            grad_l2=np.asarray(grads),
            lap_l2=np.asarray(laps),
            snap_times=snap_times,
            snapshots=snapshots,
            final=stepper.to_field(final_state),
            blew_up=blew_up,
        )

    def emit(k, state):
        t = k * cfg.dt
        nl2, ngrad, nlap = stepper.norms(state)
        if not np.isfinite(nl2):
            raise BlowUpError(t, float("inf"), build(state, blew_up=True))
        times.append(t)
        l2s.append(nl2)
        grads.append(ngrad)
        laps.append(nlap)

    def snap(k, state):
        t = k * cfg.dt
        if cfg.snapshot_stride and (k % cfg.snapshot_stride == 0 or k == n_steps):
            if not snap_times or snap_times[-1] != t:
                snap_times.append(t)
                snapshots.append(stepper.to_field(state))

    emit(0, state)
    snap(0, state)
    for k in range(1, n_steps + 1):
        try:
            state = stepper.step(state)
        except BlowUpError as exc:
            raise BlowUpError(k * cfg.dt, exc.max_abs, build(state, blew_up=True)) from None
        if k % cfg.series_stride == 0 or k == n_steps:
            emit(k, state)
        snap(k, state)
    return build(state)


# ---------------------------------------------------------------------------
# initial conditions
# ---------------------------------------------------------------------------


def _clamped_window(grid: Grid) -> np.ndarray:
    # sin² window pinned to zero on the boundary ring, with vanishing
    # normal derivative there, so windowed fields stay admissible.
    wx = np.sin(np.pi * np.arange(grid.nx) / (grid.nx - 1)) ** 2
    wy = np.sin(np.pi * np.arange(grid.ny) / (grid.ny - 1)) ** 2
    return wx[:, None] * wy[None, :]


def make_initial(
    grid: Grid,
    kind: str = "smooth_random",
    seed: int = 0,
    amplitude: float = 1.0,
    mode: tuple[int, int] = (1, 0),
    falloff: float = 2.0,
    width: float | None = None,
    center: tuple[float, float] | None = None,
) -> Field:
    """Named, seeded initial-condition generators.

    kinds: ``smooth_random`` (spectrally band-limited noise with e-folding
    wavenumber ``falloff``), ``single_mode`` (cosine at integer mode
    indices ``mode``), ``bump`` (compactly supported radial bump).  The
    result is scaled so that its L2 norm equals ``amplitude``; clamped
    grids additionally apply a sin² window so the boundary ring vanishes.
    """
    if amplitude <= 0:
        raise ValueError(f"amplitude must be positive, got {amplitude}")
    if kind == "smooth_random":
        rng = np.random.default_rng(seed)
        shape_hat = (grid.nx, grid.ny // 2 + 1)
        coeffs = rng.standard_normal(shape_hat) + 1j * rng.standard_normal(shape_hat)
        coeffs *= np.exp(-k_squared(grid) / falloff**2)
        values = sfft.irfft2(coeffs, s=grid.shape)
    elif kind == "single_mode":
        ix, iy = mode
        x, y = grid.meshgrid()
        values = np.cos(2.0 * np.pi * (ix * x / grid.lx + iy * y / grid.ly))
    elif kind == "bump":
        x, y = grid.meshgrid()
        cx, cy = center if center is not None else (0.5 * grid.lx, 0.5 * grid.ly)
        wdt = width if width is not None else 0.25 * min(grid.lx, grid.ly)
        s2 = ((x - cx) ** 2 + (y - cy) ** 2) / wdt**2
        values = np.zeros(grid.shape)
        mask = s2 < 1.0
        values[mask] = np.exp(1.0 - 1.0 / (1.0 - s2[mask]))
    else:
        raise ValueError(f"unknown initial-condition kind {kind!r}")

    if grid.bc is BC.CLAMPED:
        values = values * _clamped_window(grid)
        clamp_ring(values)
    f = Field(grid, values)
    nrm = l2_norm(f)
    if nrm == 0.0:
        raise ValueError(f"initial condition {kind!r} vanished identically on this grid")
    f.values *= amplitude / nrm
    return f
