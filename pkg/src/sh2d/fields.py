"""Grids, scalar fields, norms and the discrete operators grad / lap / lap^2.

Two boundary modes are supported on the rectangle [0, lx] x [0, ly]:

* ``BC.PERIODIC`` -- Fourier collocation.  The Laplacian and biharmonic
  act by wavenumber multiplication and are exact for trigonometric
  polynomials.

* ``BC.CLAMPED`` -- second-order finite differences with the field pinned
  to zero on the boundary ring of the grid and extended by zero outside
  it.  The discrete Laplacian is the symmetric 5-point operator restricted
  to the interior; the biharmonic is that operator composed with itself
  (a 13-point stencil away from the boundary).  By construction
  ``inner(biharmonic(f), f) == l2_norm(laplacian(f))**2`` to machine
  precision, so the energy inequalities checked by the diagnostics hold
  sample-wise rather than only up to discretization error.

All norms use the rectangle quadrature weight hx*hy, which is exact for
trigonometric polynomials in periodic mode.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import fft as sfft

__all__ = [
    "BC",
    "Grid",
    "Field",
    "SpectralField",
    "NonFiniteFieldError",
    "zeros",
    "ensure_finite",
    "validate_field",
    "wavenumbers",
    "k_squared",
    "to_spectral",
    "from_spectral",
    "laplacian",
    "biharmonic",
    "inner",
    "l2_norm",
    "h2_seminorms",
    "spectral_norms",
    "write_snapshot",
    "read_snapshot",
]


class BC(Enum):
    """Boundary-condition mode of a grid."""

    PERIODIC = "periodic"
    CLAMPED = "clamped"


class NonFiniteFieldError(ValueError):
    """An operation received (or produced) NaN/Inf values."""

    def __init__(self, name: str, index: tuple, value: float):
        self.name = name
        self.index = tuple(int(i) for i in index)
        self.value = value
        super().__init__(
            f"{name} contains non-finite value {value!r} at index {self.index}"
        )


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid on [0, lx] x [0, ly].

    ``nx`` and ``ny`` must be even and at least 8 so that both the FFT
    half-spectrum layout and the interior finite-difference stencils are
    well defined.  Node coordinates are x_i = i*hx, y_j = j*hy with
    hx = lx/nx, hy = ly/ny.
    """

    nx: int
    ny: int
    lx: float
    ly: float
    bc: BC = BC.PERIODIC

    def __post_init__(self):
        for n, label in ((self.nx, "nx"), (self.ny, "ny")):
            if not isinstance(n, (int, np.integer)) or n < 8 or n % 2 != 0:
                raise ValueError(f"{label} must be an even integer >= 8, got {n!r}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError(f"domain lengths must be positive, got lx={self.lx}, ly={self.ly}")
        if not isinstance(self.bc, BC):
            raise ValueError(f"bc must be a BC enum member, got {self.bc!r}")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates (x, y) as 1-D arrays."""
        x = np.arange(self.nx) * self.hx
        y = np.arange(self.ny) * self.hy
        return x, y

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.coords()
        return np.meshgrid(x, y, indexing="ij")


@dataclass
class Field:
    """Real scalar field sampled on a :class:`Grid` (row-major, axis 0 = x)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass
class SpectralField:
    """Half-spectrum (rfft2) coefficients of a real field."""

    grid: Grid
    coeffs: np.ndarray


def zeros(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.shape))


def ensure_finite(values: np.ndarray, name: str = "field") -> None:
    """Raise :class:`NonFiniteFieldError` pointing at the first bad entry."""
    if not np.all(np.isfinite(values)):
        idx = np.argwhere(~np.isfinite(values))[0]
        raise NonFiniteFieldError(name, idx, values[tuple(idx)])


def _ring_max(values: np.ndarray) -> float:
    return max(
        float(np.max(np.abs(values[0, :]))),
        float(np.max(np.abs(values[-1, :]))),
        float(np.max(np.abs(values[:, 0]))),
        float(np.max(np.abs(values[:, -1]))),
    )


def clamp_ring(values: np.ndarray) -> np.ndarray:
    """Zero the boundary ring in place and return the array."""
    values[0, :] = 0.0
    values[-1, :] = 0.0
    values[:, 0] = 0.0
    values[:, -1] = 0.0
    return values


def validate_field(f: Field, name: str = "field") -> None:
    """Check finiteness and, in clamped mode, the zero boundary ring."""
    ensure_finite(f.values, name)
    if f.grid.bc is BC.CLAMPED and _ring_max(f.values) != 0.0:
        raise ValueError(f"{name}: clamped field must vanish on the boundary ring")


# ---------------------------------------------------------------------------
# spectral helpers (periodic mode)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def wavenumbers(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """1-D wavenumber lattices (kx, ky) for the rfft2 layout."""
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.hx)
    ky = 2.0 * np.pi * np.fft.rfftfreq(grid.ny, d=grid.hy)
    kx.flags.writeable = False
    ky.flags.writeable = False
    return kx, ky


@lru_cache(maxsize=None)
def k_squared(grid: Grid) -> np.ndarray:
    """|k|^2 on the rfft2 lattice, shape (nx, ny//2 + 1)."""
    kx, ky = wavenumbers(grid)
    k2 = kx[:, None] ** 2 + ky[None, :] ** 2
    k2.flags.writeable = False
    return k2


@lru_cache(maxsize=None)
def _parseval_weights(grid: Grid) -> np.ndarray:
    # rfft2 stores one half-spectrum column per conjugate pair; the DC and
    # Nyquist columns appear once.
    w = np.full(grid.ny // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    w.flags.writeable = False
    return w


def to_spectral(f: Field) -> SpectralField:
    return SpectralField(f.grid, sfft.rfft2(f.values))


def from_spectral(s: SpectralField) -> Field:
    return Field(s.grid, sfft.irfft2(s.coeffs, s=s.grid.shape))


def spectral_norms(coeffs: np.ndarray, grid: Grid) -> tuple[float, float, float]:
    """(l2, grad, lap) norms evaluated from rfft2 coefficients via Parseval."""
    w = _parseval_weights(grid)
    k2 = k_squared(grid)
    p = (coeffs.real**2 + coeffs.imag**2) * w[None, :]
    scale = grid.cell_area / (grid.nx * grid.ny)
    l2 = np.sqrt(scale * float(np.sum(p)))
    grad = np.sqrt(scale * float(np.sum(k2 * p)))
    lap = np.sqrt(scale * float(np.sum(k2 * k2 * p)))
    return l2, grad, lap


# ---------------------------------------------------------------------------
# discrete operators
# ---------------------------------------------------------------------------


def _stencil5(v: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """5-point Laplacian with zero extension beyond the array bounds."""
    out = (-2.0 / hx**2 - 2.0 / hy**2) * v
    out[1:, :] += v[:-1, :] / hx**2
    out[:-1, :] += v[1:, :] / hx**2
    out[:, 1:] += v[:, :-1] / hy**2
    out[:, :-1] += v[:, 1:] / hy**2
    return out


def _laplacian_values(values: np.ndarray, grid: Grid) -> np.ndarray:
    if grid.bc is BC.PERIODIC:
        return sfft.irfft2(-k_squared(grid) * sfft.rfft2(values), s=grid.shape)
    return clamp_ring(_stencil5(values, grid.hx, grid.hy))


def laplacian(f: Field, validate: bool = True) -> Field:
    """Discrete Laplacian of ``f`` in the grid's boundary mode."""
    if validate:
        validate_field(f, "laplacian input")
    return Field(f.grid, _laplacian_values(f.values, f.grid))


def biharmonic(f: Field, validate: bool = True) -> Field:
    """Discrete biharmonic; equals ``laplacian(laplacian(f))`` in both modes."""
    if validate:
        validate_field(f, "biharmonic input")
    grid = f.grid
    if grid.bc is BC.PERIODIC:
        k2 = k_squared(grid)
        return Field(grid, sfft.irfft2(k2 * k2 * sfft.rfft2(f.values), s=grid.shape))
    return Field(grid, _laplacian_values(_laplacian_values(f.values, grid), grid))


# ---------------------------------------------------------------------------
# inner products and norms
# ---------------------------------------------------------------------------


def inner(f: Field, g: Field) -> float:
    """L2 inner product with rectangle quadrature weight hx*hy."""
    if f.grid != g.grid:
        raise ValueError("inner: fields live on different grids")
    return float(np.sum(f.values * g.values)) * f.grid.cell_area


def l2_norm(f: Field) -> float:
    ensure_finite(f.values, "l2_norm input")
    return float(np.sqrt(np.sum(f.values**2) * f.grid.cell_area))


def h2_seminorms(f: Field) -> tuple[float, float]:
    """Return (‖grad f‖, ‖lap f‖).

    Periodic mode evaluates both through Parseval; clamped mode uses
    forward differences (which satisfy the summation-by-parts identity
    ‖grad f‖² = ⟨-lap f, f⟩ exactly) and the 5-point Laplacian.
    """
    ensure_finite(f.values, "h2_seminorms input")
    grid = f.grid
    if grid.bc is BC.PERIODIC:
        _, grad, lap = spectral_norms(sfft.rfft2(f.values), grid)
        return grad, lap
    dx = np.diff(f.values, axis=0) / grid.hx
    dy = np.diff(f.values, axis=1) / grid.hy
    grad_sq = (float(np.sum(dx**2)) + float(np.sum(dy**2))) * grid.cell_area
    lap = l2_norm(laplacian(f, validate=False))
    return float(np.sqrt(grad_sq)), lap


# ---------------------------------------------------------------------------
# snapshot format
# ---------------------------------------------------------------------------

_SNAP_MAGIC = b"SH2D"
_SNAP_VERSION = 1
_SNAP_HEADER = struct.Struct("<4sIIIddBd")
_BC_CODES = {BC.PERIODIC: 0, BC.CLAMPED: 1}
_BC_FROM_CODE = {v: k for k, v in _BC_CODES.items()}


def write_snapshot(f: Field, t: float, path) -> None:
    """Write a field snapshot in the SH2D binary format (little-endian)."""
    ensure_finite(f.values, "snapshot")
    grid = f.grid
    header = _SNAP_HEADER.pack(
        _SNAP_MAGIC,
        _SNAP_VERSION,
        grid.nx,
        grid.ny,
        grid.lx,
        grid.ly,
        _BC_CODES[grid.bc],
        float(t),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[Field, float]:
    """Read an SH2D snapshot; returns (field, time)."""
    raw = Path(path).read_bytes()
    if len(raw) < _SNAP_HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, nx, ny, lx, ly, bc_code, t = _SNAP_HEADER.unpack_from(raw)
    if magic != _SNAP_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {_SNAP_MAGIC!r}")
    if version != _SNAP_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    if bc_code not in _BC_FROM_CODE:
        raise ValueError(f"{path}: unknown boundary-condition code {bc_code}")
    expected = _SNAP_HEADER.size + nx * ny * 8
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", offset=_SNAP_HEADER.size).reshape(nx, ny)
    grid = Grid(nx=int(nx), ny=int(ny), lx=lx, ly=ly, bc=_BC_FROM_CODE[bc_code])
    return Field(grid, values.astype(float)), float(t)
