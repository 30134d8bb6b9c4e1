import struct

import numpy as np
import pytest
from scipy import sparse
from scipy.sparse.linalg import eigsh

from conftest import random_field
from sh2d.fields import (
    BC,
    Field,
    Grid,
    NonFiniteFieldError,
    biharmonic,
    h2_seminorms,
    inner,
    l2_norm,
    laplacian,
    read_snapshot,
    to_spectral,
    spectral_norms,
    write_snapshot,
    zeros,
)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(7, 16, 1.0, 1.0)  # odd
    with pytest.raises(ValueError):
        Grid(16, 6, 1.0, 1.0)  # too small
    with pytest.raises(ValueError):
        Grid(16, 16, -1.0, 1.0)
    with pytest.raises(ValueError):
        Grid(16, 16, 1.0, 1.0, bc="periodic")  # not the enum


def test_norms_of_known_fields():
    g = Grid(64, 64, 2 * np.pi, 2 * np.pi)
    x, _ = g.meshgrid()
    assert l2_norm(Field(g, np.ones(g.shape))) == pytest.approx(2 * np.pi)
    # ∫∫ sin²x = π · 2π over the square
    assert l2_norm(Field(g, np.sin(x))) == pytest.approx(np.pi * np.sqrt(2.0))


def test_periodic_laplacian_exact_on_modes():
    g = Grid(32, 32, 2 * np.pi, 2 * np.pi)
    x, y = g.meshgrid()
    f = Field(g, np.sin(x))
    np.testing.assert_allclose(laplacian(f).values, -np.sin(x), atol=1e-12)
    w = Field(g, np.cos(2 * x + 3 * y))
    np.testing.assert_allclose(biharmonic(w).values, 169.0 * w.values, atol=1e-9)


def test_spectral_norms_match_physical_definitions():
    g = Grid(32, 32, 2 * np.pi, 2 * np.pi)
    f = random_field(g, seed=11)
    l2, grad, lap = spectral_norms(to_spectral(f).coeffs, g)
    assert l2 == pytest.approx(l2_norm(f), rel=1e-12)
    g2, lp2 = h2_seminorms(f)
    assert grad == pytest.approx(g2, rel=1e-12)
    assert lap == pytest.approx(lp2, rel=1e-12)
    assert lap == pytest.approx(l2_norm(laplacian(f)), rel=1e-12)


@pytest.mark.parametrize("bc", [BC.PERIODIC, BC.CLAMPED])
def test_laplacian_linear_and_symmetric(bc):
    g = Grid(16, 16, 5.0, 7.0, bc)
    f = random_field(g, seed=1)
    h = random_field(g, seed=2)
    lhs = laplacian(Field(g, 2.0 * f.values - 3.0 * h.values)).values
    rhs = 2.0 * laplacian(f).values - 3.0 * laplacian(h).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    assert inner(laplacian(f), h) == pytest.approx(inner(f, laplacian(h)), rel=1e-11)


@pytest.mark.parametrize("bc", [BC.PERIODIC, BC.CLAMPED])
def test_biharmonic_pairing_identity(bc):
    # The operator is built so that ⟨lap² f, f⟩ = ‖lap f‖² holds exactly,
    # which is what the energy estimates lean on.
    g = Grid(20, 16, 4.0, 3.0, bc)
    f = random_field(g, seed=3)
    lhs = inner(biharmonic(f), f)
    rhs = l2_norm(laplacian(f)) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("bc", [BC.PERIODIC, BC.CLAMPED])
def test_gradient_seminorm_is_dirichlet_form(bc):
    g = Grid(16, 24, 3.0, 5.0, bc)
    f = random_field(g, seed=4)
    grad, _ = h2_seminorms(f)
    assert grad**2 == pytest.approx(inner(laplacian(f), f) * -1.0, rel=1e-11)


def test_clamped_laplacian_second_order():
    # Gaussian bump well inside the walls; the 5-point stencil should
    # converge at order 2 in h.
    lx = 10.0
    c, w = 5.0, 0.8

    def exact(x, y):
        r2 = (x - c) ** 2 + (y - c) ** 2
        f = np.exp(-r2 / w**2)
        return f, (4.0 * r2 / w**4 - 4.0 / w**2) * f

    errs = []
    for n in (32, 64, 128):
        g = Grid(n, n, lx, lx, BC.CLAMPED)
        x, y = g.meshgrid()
        f_vals, lap_vals = exact(x, y)
        got = laplacian(Field(g, f_vals), validate=False).values
        errs.append(np.max(np.abs(got - lap_vals)[1:-1, 1:-1]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)


def test_clamped_eigenvalue_formula_against_sparse_solver():
    # Smallest interior eigenvalue of -lap from the sine formula vs an
    # independently assembled sparse matrix.
    g = Grid(20, 14, 3.0, 2.0, BC.CLAMPED)
    formula = 4.0 / g.hx**2 * np.sin(np.pi / (2 * (g.nx - 1))) ** 2 + 4.0 / g.hy**2 * np.sin(
        np.pi / (2 * (g.ny - 1))
    ) ** 2

    def second_diff(n, h):
        return sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / h**2

    dx = second_diff(g.nx - 2, g.hx)
    dy = second_diff(g.ny - 2, g.hy)
    neg_lap = -(
        sparse.kron(dx, sparse.identity(g.ny - 2)) + sparse.kron(sparse.identity(g.nx - 2), dy)
    )
    smallest = eigsh(neg_lap.tocsc(), k=1, which="SA", return_eigenvectors=False)[0]
    assert smallest == pytest.approx(formula, rel=1e-10)


def test_clamped_poincare_inequality():
    g = Grid(24, 24, 6.0, 6.0, BC.CLAMPED)
    lam1 = 4.0 / g.hx**2 * np.sin(np.pi / (2 * (g.nx - 1))) ** 2 + 4.0 / g.hy**2 * np.sin(
        np.pi / (2 * (g.ny - 1))
    ) ** 2
    for seed in range(5):
        f = random_field(g, seed=seed, smooth=False)
        grad, _ = h2_seminorms(f)
        assert grad**2 >= lam1 * l2_norm(f) ** 2 * (1.0 - 1e-12)


def test_validate_rejects_nonzero_ring():
    g = Grid(16, 16, 1.0, 1.0, BC.CLAMPED)
    vals = np.ones(g.shape)
    with pytest.raises(ValueError, match="boundary ring"):
        laplacian(Field(g, vals))


def test_nonfinite_rejected_with_location():
    g = Grid(16, 16, 1.0, 1.0)
    vals = np.zeros(g.shape)
    vals[3, 5] = np.nan
    with pytest.raises(NonFiniteFieldError) as err:
        laplacian(Field(g, vals))
    assert err.value.index == (3, 5)


class TestSnapshotFormat:
    def test_roundtrip(self, tmp_path):
        g = Grid(16, 12, 2.5, 3.5, BC.CLAMPED)
        f = random_field(g, seed=9)
        p = tmp_path / "state.sh2d"
        write_snapshot(f, 1.75, p)
        back, t = read_snapshot(p)
        assert t == 1.75
        assert back.grid == g
        np.testing.assert_array_equal(back.values, f.values)

    def test_layout_is_stable(self, tmp_path):
        # header: magic, version, nx, ny, lx, ly, bc code, time
        g = Grid(8, 8, 1.0, 2.0)
        p = tmp_path / "s.sh2d"
        write_snapshot(zeros(g), 0.5, p)
        raw = p.read_bytes()
        magic, version, nx, ny, lx, ly, bc_code, t = struct.unpack_from("<4sIIIddBd", raw)
        assert (magic, version, nx, ny, lx, ly, bc_code, t) == (b"SH2D", 1, 8, 8, 1.0, 2.0, 0, 0.5)
        assert len(raw) == struct.calcsize("<4sIIIddBd") + 8 * 64

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.sh2d"
        write_snapshot(zeros(Grid(8, 8, 1.0, 1.0)), 0.0, p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"NOPE"
        p.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="magic"):
            read_snapshot(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.sh2d"
        write_snapshot(zeros(Grid(8, 8, 1.0, 1.0)), 0.0, p)
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(ValueError):
            read_snapshot(p)
