import numpy as np
import pytest

from sh2d.dynamics import ModelParams, Variant
from sh2d.fields import BC, Field, Grid
from sh2d.kernels import gaussian_floor


@pytest.fixture
def grid_small():
    return Grid(16, 16, 2.0 * np.pi, 2.0 * np.pi, BC.PERIODIC)


@pytest.fixture
def grid_clamped():
    return Grid(16, 16, 2.0 * np.pi, 2.0 * np.pi, BC.CLAMPED)


@pytest.fixture
def kernel_default():
    return gaussian_floor(1.0, 3.0, 2.0)


@pytest.fixture
def params_nonlocal(kernel_default):
    return ModelParams(mu=0.4, variant=Variant.NONLOCAL, kernel=kernel_default)


@pytest.fixture
def params_local():
    return ModelParams(mu=0.4, variant=Variant.LOCAL_CUBIC)


def random_field(grid, seed=0, amplitude=1.0, smooth=True):
    """Seeded band-limited (or raw) noise respecting the wall condition."""
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.shape)
    if smooth:
        coeffs = np.fft.rfft2(vals)
        kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.hx)
        ky = 2.0 * np.pi * np.fft.rfftfreq(grid.ny, d=grid.hy)
        k2 = kx[:, None] ** 2 + ky[None, :] ** 2
        vals = np.fft.irfft2(coeffs * np.exp(-k2), s=grid.shape)
    if grid.bc is BC.CLAMPED:
        ix = np.sin(np.pi * np.arange(grid.nx) / (grid.nx - 1)) ** 2
        iy = np.sin(np.pi * np.arange(grid.ny) / (grid.ny - 1)) ** 2
        vals = vals * ix[:, None] * iy[None, :]
        vals[0, :] = vals[-1, :] = vals[:, 0] = vals[:, -1] = 0.0
    nrm = np.sqrt(np.sum(vals**2) * grid.cell_area)
    return Field(grid, vals * (amplitude / nrm))
