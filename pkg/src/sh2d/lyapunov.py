"""Lyapunov spectra via tangent-bundle QR and trace-of-projection bounds.

An orthonormal bundle of m tangent fields is co-integrated with the base
flow using the exact Jacobian of the discrete step map (same scheme, same
dt).  Every ``reorth_period`` steps the bundle is re-orthonormalized by a
QR factorization in the quadrature inner product and the log-stretches
log R_jj are accumulated; exponents are accumulated stretch over elapsed
time.  The convention follows the tangent dynamics v_t = -L(u)v, so a
positive trace of L(u) restricted to the bundle means phase-space volume
contraction, and Σ_i λ_i should match the time average of -Tr(L(u)Q_m).

``trace_LQm`` evaluates that trace term-by-term for the nonlocal model,

    Tr(L(u)Q_m) = Σ_j ‖lap φ_j‖² + 2⟨lap φ_j, φ_j⟩ + alpha
                   + ⟨φ_j², G*u²⟩ + 2⟨u φ_j, G*(u φ_j)⟩,

and ``trace_lower_bound`` evaluates the closed-form minorant

    Σ_j (1 - 1/eps)‖lap φ_j‖² + (1 - mu - eps + (b - 2a)‖u‖²)·m,

valid for every orthonormal family and every eps > 1 (for the local
model the kernel term is absent and the cubic term 3⟨u²φ_j, φ_j⟩ >= 0).
The Kaplan-Yorke dimension is interpolated from the sorted exponents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams, Variant
from .fields import BC, Field, Grid, l2_norm, laplacian, validate_field
from .kernels import conv_mode_for, convolve_signed
from .stepper import Scheme, StepperConfig, make_stepper

__all__ = [
    "TangentBundle",
    "TangentEvolution",
    "LyapunovReport",
    "init_bundle",
    "orthonormalize",
    "evolve_tangent",
    "exponents_and_ky",
    "kaplan_yorke",
    "trace_LQm",
    "trace_breakdown",
    "TraceBreakdown",
    "trace_lower_bound",
    "write_exponents_csv",
]

TANGENT_GUARD = 1.0e12


@dataclass
class TangentBundle:
    """Orthonormal tangent fields with accumulated log-stretches."""

    vectors: np.ndarray  # (m, nx, ny), orthonormal in the quadrature inner product
    log_growth: np.ndarray  # (m,)
    reorth_period: int = 10
    t: float = 0.0  # tangent time already accumulated

    @property
    def m(self) -> int:
        return len(self.vectors)


def orthonormalize(vectors: np.ndarray, cell_area: float) -> tuple[np.ndarray, np.ndarray]:
    """QR in the quadrature inner product; returns (Q, diag R) with positive
    diagonal.  diag R are the stretch factors of the incoming vectors."""
    m = len(vectors)
    a = vectors.reshape(m, -1).T * np.sqrt(cell_area)
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r).copy()
    signs = np.where(diag < 0.0, -1.0, 1.0)
    q = q * signs[None, :]
    diag = np.abs(diag)
    out = np.ascontiguousarray((q / np.sqrt(cell_area)).T.reshape(vectors.shape))
    # Householder QR smears roundoff into rows that are exactly zero in
    # every input vector; restore a shared zero boundary ring (clamped
    # walls) so the invariant survives re-orthonormalization.
    for sl in (np.s_[:, 0, :], np.s_[:, -1, :], np.s_[:, :, 0], np.s_[:, :, -1]):
        if not np.any(vectors[sl]):
            out[sl] = 0.0
    return out, diag


def _periodic_modes(grid: Grid, m: int) -> np.ndarray:
    """The m lowest-symbol real Fourier modes (cos/sin pairs), ordered by
    the linear-operator symbol (1 - |k|²)²."""
    x, y = grid.meshgrid()
    entries = []
    for ix in range(grid.nx // 2):
        iy_range = range(0, grid.ny // 2) if ix == 0 else range(-(grid.ny // 2) + 1, grid.ny // 2)
        for iy in iy_range:
            kx = 2.0 * np.pi * ix / grid.lx
            ky = 2.0 * np.pi * iy / grid.ly
            sym = (1.0 - (kx**2 + ky**2)) ** 2
            entries.append((sym, ix, iy))
    entries.sort(key=lambda e: e[0])
    fields = []
    for sym, ix, iy in entries:
        phase = 2.0 * np.pi * (ix * x / grid.lx + iy * y / grid.ly)
        for vals in (np.cos(phase), np.sin(phase)):
            nrm = np.sqrt(np.sum(vals**2) * grid.cell_area)
            if nrm < 1.0e-12:
                continue  # sin of the zero mode
            fields.append(vals / nrm)
            if len(fields) == m:
                return np.stack(fields)
    raise ValueError(f"grid too small for m={m} tangent modes")


def _clamped_modes(grid: Grid, m: int) -> np.ndarray:
    """The m lowest-symbol interior sine modes.  These are exact
    eigenvectors of the discrete clamped operator, with Laplacian
    eigenvalue lam(p, q); ordering by (1 + lam)² mirrors the periodic
    symbol ordering."""
    lam_x = -4.0 / grid.hx**2 * np.sin(np.arange(1, grid.nx - 1) * np.pi / (2 * (grid.nx - 1))) ** 2
    lam_y = -4.0 / grid.hy**2 * np.sin(np.arange(1, grid.ny - 1) * np.pi / (2 * (grid.ny - 1))) ** 2
    lam = lam_x[:, None] + lam_y[None, :]
    sym = (1.0 + lam) ** 2
    order = np.argsort(sym, axis=None)[:m]
    i = np.arange(grid.nx)
    j = np.arange(grid.ny)
    fields = []
    for flat in order:
        p, q = np.unravel_index(flat, sym.shape)
        sx = np.sin((p + 1) * np.pi * i / (grid.nx - 1))
        sy = np.sin((q + 1) * np.pi * j / (grid.ny - 1))
        sx[0] = sx[-1] = 0.0  # sin(p*pi) is only zero up to roundoff
        sy[0] = sy[-1] = 0.0
        vals = sx[:, None] * sy[None, :]
        fields.append(vals / np.sqrt(np.sum(vals**2) * grid.cell_area))
    return np.stack(fields)


def init_bundle(
    grid: Grid,
    m: int,
    reorth_period: int = 10,
    kind: str = "modes",
    seed: int = 0,
) -> TangentBundle:
    """Orthonormal starting bundle: ``modes`` picks the m lowest-symbol
    eigenfields of the linearization at u = 0; ``random`` draws seeded
    band-limited noise."""
    if m < 1:
        raise ValueError(f"bundle size m must be >= 1, got {m}")
    if kind == "modes":
        vecs = _periodic_modes(grid, m) if grid.bc is BC.PERIODIC else _clamped_modes(grid, m)
    elif kind == "random":
        from .stepper import make_initial

        vecs = np.stack(
            [make_initial(grid, "smooth_random", seed=seed + 97 * j).values for j in range(m)]
        )
    else:
        raise ValueError(f"unknown bundle kind {kind!r}")
    vecs, _ = orthonormalize(vecs, grid.cell_area)
    return TangentBundle(vectors=vecs, log_growth=np.zeros(m), reorth_period=reorth_period)


@dataclass
class TangentEvolution:
    """Result of co-integrating a tangent bundle along the base flow."""

    bundle: TangentBundle
    u_final: Field
    elapsed: float
    window_times: np.ndarray  # (n_windows,)
    running_exponents: np.ndarray  # (n_windows, m)
    trace_times: np.ndarray
    trace_values: np.ndarray


def evolve_tangent(
    p: ModelParams,
    cfg: StepperConfig,
    u0: Field,
    bundle: TangentBundle,
    t_span: float,
    trace_every: int = 1,
) -> TangentEvolution:
    """Advance base state and bundle together over ``t_span``.

    The tangent step is the exact Jacobian-vector product of the base
    scheme, so this is restricted to ``etdrk4`` and ``imex_be``.  If a
    tangent field exceeds the 1e12 guard inside a window, the window is
    restarted with a halved ``reorth_period``.
    """
    if cfg.scheme not in (Scheme.ETDRK4, Scheme.IMEX_BE):
        raise ValueError(
            f"tangent co-integration supports etdrk4 and imex_be, not {cfg.scheme.value}"
        )
    validate_field(u0, "tangent base state")
    stepper = make_stepper(p, u0.grid, cfg)
    cell_area = u0.grid.cell_area
    n_total = int(round(t_span / cfg.dt))
    if n_total < 1:
        raise ValueError(f"t_span={t_span} is shorter than one step dt={cfg.dt}")

    state = stepper.to_state(u0)
    vectors = bundle.vectors.copy()
    log_growth = bundle.log_growth.copy()
    period = bundle.reorth_period
    t_prior = bundle.t

    window_times, running, trace_times, trace_values = [], [], [], []
    steps_done = 0
    windows_done = 0
    while steps_done < n_total:
        width = min(period, n_total - steps_done)
        saved = (state.copy(), vectors.copy())
        while True:
            state_try = saved[0].copy()
            vstates = stepper.tangent_to_states(saved[1])
            ok = True
            for _ in range(width):
                state_try, vstates = stepper.step_with_tangents(state_try, vstates)
                if not np.all(np.isfinite(vstates)) or np.max(np.abs(vstates)) > TANGENT_GUARD:
                    ok = False
                    break
            if ok:
                break
            if width == 1:
                raise RuntimeError("tangent bundle blew up within a single step")
            period = max(1, period // 2)
            width = min(period, width)
        state = state_try
        vectors, diag = orthonormalize(stepper.tangent_to_vectors(vstates), cell_area)
        if np.any(diag <= 0.0) or not np.all(np.isfinite(diag)):
            raise RuntimeError("tangent bundle degenerated during re-orthonormalization")
        log_growth += np.log(diag)
        steps_done += width
        windows_done += 1
        t_elapsed = steps_done * cfg.dt
        window_times.append(t_elapsed)
        running.append(log_growth / (t_prior + t_elapsed))
        if trace_every and windows_done % trace_every == 0:
            trace_times.append(t_elapsed)
            trace_values.append(
                trace_LQm(p, stepper.to_field(state), vectors, check_orthonormal=False)
            )

    new_bundle = TangentBundle(
        vectors=vectors,
        log_growth=log_growth,
        reorth_period=period,
        t=t_prior + n_total * cfg.dt,
    )
    return TangentEvolution(
        bundle=new_bundle,
        u_final=stepper.to_field(state),
        elapsed=n_total * cfg.dt,
        window_times=np.asarray(window_times),
        running_exponents=np.asarray(running),
        trace_times=np.asarray(trace_times),
        trace_values=np.asarray(trace_values),
    )


def kaplan_yorke(exponents: np.ndarray) -> tuple[float | None, bool]:
    """Kaplan-Yorke dimension from exponents sorted in descending order.

    Returns (dimension, m_insufficient).  The dimension is 0 when the
    largest exponent is negative and ``None`` when every partial sum is
    nonnegative (the bundle is too small to bracket the dimension).
    """
    lam = np.asarray(exponents)
    if lam[0] < 0.0:
        return 0.0, False
    partial = np.cumsum(lam)
    nonneg = np.nonzero(partial >= 0.0)[0]
    j = int(nonneg[-1]) + 1  # number of leading exponents with S_j >= 0
    if j >= len(lam):
        return None, True
    return float(j + partial[j - 1] / abs(lam[j])), False


@dataclass
class LyapunovReport:
    exponents: np.ndarray  # descending
    ky_dimension: float | None
    m_insufficient: bool
    T: float
    analytic_threshold: float | None = None
    trace_mean: float | None = None

    def summary_lines(self) -> list[str]:
        lines = [
            f"lambda_{i + 1}={lam:.6g}" for i, lam in enumerate(self.exponents)
        ]
        ky = "none" if self.ky_dimension is None else f"{self.ky_dimension:.6g}"
        lines.append(f"ky_dimension={ky}")
        lines.append(f"m_insufficient={str(self.m_insufficient).lower()}")
        if self.analytic_threshold is not None:
            lines.append(f"analytic_threshold={self.analytic_threshold:.6g}")
        if self.trace_mean is not None:
            lines.append(f"trace_mean={self.trace_mean:.6g}")
        return lines


def exponents_and_ky(
    bundle: TangentBundle,
    T: float | None = None,
    analytic_threshold: float | None = None,
    trace_mean: float | None = None,
) -> LyapunovReport:
    """Exponents (descending) and Kaplan-Yorke dimension after time T."""
    T = bundle.t if T is None else T
    if T is None or T <= 0:
        raise ValueError(f"accumulated tangent time must be positive, got {T!r}")
    lam = np.sort(bundle.log_growth / T)[::-1]
    ky, insufficient = kaplan_yorke(lam)
    return LyapunovReport(
        exponents=lam,
        ky_dimension=ky,
        m_insufficient=insufficient,
        T=T,
        analytic_threshold=analytic_threshold,
        trace_mean=trace_mean,
    )


@dataclass
class TraceBreakdown:
    """Per-mode contributions to Tr(L(u)Q_m)."""

    biharmonic: np.ndarray  # ‖lap φ_j‖²
    laplacian_cross: np.ndarray  # 2⟨lap φ_j, φ_j⟩
    mass: np.ndarray  # alpha ‖φ_j‖²
    nonlinear_weight: np.ndarray  # ⟨φ_j², G*u²⟩ (nonlocal) or 3⟨u² φ_j, φ_j⟩ (local)
    coupling: np.ndarray  # 2⟨u φ_j, G*(u φ_j)⟩ (nonlocal; zeros for local)

    @property
    def total(self) -> float:
        return float(
            np.sum(self.biharmonic)
            + np.sum(self.laplacian_cross)
            + np.sum(self.mass)
            + np.sum(self.nonlinear_weight)
            + np.sum(self.coupling)
        )


def _as_vector_array(basis, grid: Grid) -> np.ndarray:
    if isinstance(basis, np.ndarray):
        vecs = basis
    else:
        vecs = np.stack([b.values if isinstance(b, Field) else np.asarray(b) for b in basis])
    if vecs.ndim != 3 or vecs.shape[1:] != grid.shape:
        raise ValueError(f"basis shape {vecs.shape} does not match grid {grid.shape}")
    return vecs


def trace_breakdown(p: ModelParams, u: Field, basis) -> TraceBreakdown:
    grid = u.grid
    vecs = _as_vector_array(basis, grid)
    m = len(vecs)
    area = grid.cell_area
    bih = np.empty(m)
    cross = np.empty(m)
    mass = np.empty(m)
    weight = np.empty(m)
    coupling = np.zeros(m)
    if p.variant is Variant.NONLOCAL:
        mode = conv_mode_for(grid)
        w_u = convolve_signed(p.kernel, u.values**2, grid, mode)
    for j, vals in enumerate(vecs):
        phi = Field(grid, vals)
        lap_phi = laplacian(phi, validate=False)
        bih[j] = np.sum(lap_phi.values**2) * area
        cross[j] = 2.0 * np.sum(lap_phi.values * vals) * area
        mass[j] = p.alpha * np.sum(vals**2) * area
        if p.variant is Variant.NONLOCAL:
            weight[j] = np.sum(vals**2 * w_u) * area
            uphi = u.values * vals
            coupling[j] = 2.0 * np.sum(uphi * convolve_signed(p.kernel, uphi, grid, mode)) * area
        else:
            weight[j] = 3.0 * np.sum(u.values**2 * vals**2) * area
    return TraceBreakdown(
        biharmonic=bih,
        laplacian_cross=cross,
        mass=mass,
        nonlinear_weight=weight,
        coupling=coupling,
    )


def trace_LQm(p: ModelParams, u: Field, basis, check_orthonormal: bool = True) -> float:
    """Tr(L(u)Q_m) for an orthonormal family; positive values mean the flow
    contracts m-dimensional volume along these directions."""
    vecs = _as_vector_array(basis, u.grid)
    if check_orthonormal:
        b = vecs.reshape(len(vecs), -1)
        gram = b @ b.T * u.grid.cell_area
        resid = float(np.max(np.abs(gram - np.eye(len(vecs)))))
        if resid > 1.0e-8:
            raise ValueError(f"basis is not orthonormal (Gram residual {resid:.3e})")
    return trace_breakdown(p, u, vecs).total


def trace_lower_bound(p: ModelParams, u: Field, eps: float, lap_norms_sq) -> float:
    """Closed-form minorant of Tr(L(u)Q_m) for an orthonormal family with
    the given ‖lap φ_j‖² values and any eps > 1."""
    if eps <= 1.0:
        raise ValueError(f"eps must exceed 1, got {eps}")
    lap_norms_sq = np.asarray(lap_norms_sq)
    m = len(lap_norms_sq)
    if p.variant is Variant.NONLOCAL:
        gap = p.kernel.b - 2.0 * p.kernel.a
    else:
        gap = 0.0
    usq = l2_norm(u) ** 2
    return float(
        (1.0 - 1.0 / eps) * np.sum(lap_norms_sq) + (1.0 - p.mu - eps + gap * usq) * m
    )


def write_exponents_csv(path, evolution: TangentEvolution) -> None:
    """CSV rows ``t, lambda_1..lambda_m, trace`` at re-orthonormalization
    times (trace column empty when not sampled at that window)."""
    m = evolution.bundle.m
    trace_map = {round(float(t), 12): v for t, v in zip(evolution.trace_times, evolution.trace_values)}
    header = "t," + ",".join(f"lambda_{j + 1}" for j in range(m)) + ",trace"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for t, lams in zip(evolution.window_times, evolution.running_exponents):
            lam_sorted = np.sort(lams)[::-1]
            tr = trace_map.get(round(float(t), 12))
            tr_txt = "" if tr is None else f"{tr:.17g}"
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in lam_sorted) + f",{tr_txt}\n")
