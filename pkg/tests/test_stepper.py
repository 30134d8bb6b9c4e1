import numpy as np
import pytest

from conftest import random_field
from sh2d.dynamics import ModelParams, Variant, rhs
from sh2d.fields import BC, Field, Grid, inner, l2_norm
from sh2d.kernels import gaussian_floor
from sh2d.stepper import (
    BlowUpError,
    Scheme,
    StepperConfig,
    Trajectory,
    dirichlet_symbols,
    integrate,
    linear_symbol,
    make_initial,
    make_stepper,
)

KERNEL = gaussian_floor(1.0, 3.0, 2.0)


def _params(mu=0.4, variant=Variant.NONLOCAL):
    return ModelParams(mu=mu, variant=variant, kernel=KERNEL if variant is Variant.NONLOCAL else None)


def test_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        StepperConfig(dt=0.1, t_end=-1.0)
    with pytest.raises(ValueError):
        StepperConfig(dt=0.1, t_end=1.0, series_stride=-1)


def test_etdrk4_requires_periodic():
    g = Grid(16, 16, 6.0, 6.0, BC.CLAMPED)
    cfg = StepperConfig(dt=0.05, t_end=1.0, scheme=Scheme.ETDRK4)
    with pytest.raises(ValueError, match="etdrk4.*periodic|periodic.*etdrk4"):
        make_stepper(_params(), g, cfg)


def test_linear_modes_grow_at_symbol_rate():
    # With the nonlinearity switched off, every Fourier mode evolves by
    # exp(t (mu - (1 - k²)²)); ETDRK4 treats that exactly.
    g = Grid(32, 32, 2 * np.pi, 2 * np.pi)
    mu = 0.3
    p = _params(mu=mu)
    cfg = StepperConfig(dt=0.05, t_end=1.0, linear_only=True)
    x, y = g.meshgrid()
    for ix, iy in [(1, 0), (0, 2), (2, 1), (3, 3)]:
        kx = 2 * np.pi * ix / g.lx
        ky = 2 * np.pi * iy / g.ly
        rate = mu - (1.0 - (kx**2 + ky**2)) ** 2
        u0 = Field(g, np.cos(kx * x + ky * y))
        traj = integrate(p, cfg, u0)
        expected = np.exp(rate * 1.0) * l2_norm(u0)
        assert traj.l2[-1] == pytest.approx(expected, rel=1e-10)


def test_linear_symbol_values():
    g = Grid(16, 16, 2 * np.pi, 2 * np.pi)
    sym = linear_symbol(_params(mu=0.25), g)
    assert sym[0, 0] == pytest.approx(0.25 - 1.0)  # k = 0
    assert sym[1, 0] == pytest.approx(0.25 - (1.0 - 1.0) ** 2)  # |k| = 1


def test_dirichlet_solve_inverts_operator():
    # (I - dt L) applied to a backward-Euler linear step must return the
    # input state: checks the sine-transform diagonalization against the
    # explicit operators.
    from sh2d.fields import biharmonic, laplacian

    g = Grid(20, 16, 6.0, 5.0, BC.CLAMPED)
    p = _params(mu=0.4)
    cfg = StepperConfig(dt=0.07, t_end=1.0, scheme=Scheme.IMEX_BE, linear_only=True)
    st = make_stepper(p, g, cfg)
    u0 = random_field(g, seed=4)
    new = st.to_field(st.step(st.to_state(u0)))
    lin = Field(
        g,
        -p.alpha * new.values - 2.0 * laplacian(new).values - biharmonic(new).values,
    )
    recovered = new.values - cfg.dt * lin.values
    np.testing.assert_allclose(recovered, u0.values, atol=1e-11)


@pytest.mark.parametrize(
    "scheme,bc,min_order",
    [
        (Scheme.ETDRK4, BC.PERIODIC, 3.5),
        (Scheme.IMEX_BE, BC.PERIODIC, 0.85),
        (Scheme.IMEX_BE, BC.CLAMPED, 0.85),
        (Scheme.IMEX_CN, BC.PERIODIC, 1.6),
        (Scheme.IMEX_CN, BC.CLAMPED, 1.6),
    ],
)
def test_self_convergence_order(scheme, bc, min_order):
    g = Grid(32, 32, 16 * np.pi, 16 * np.pi, bc)
    p = _params(mu=0.4)
    u0 = make_initial(g, "smooth_random", seed=6, amplitude=1.5)
    t_end = 1.0

    def final_state(dt):
        cfg = StepperConfig(dt=dt, t_end=t_end, scheme=scheme, series_stride=10**9)
        return integrate(p, cfg, u0).final.values

    ref = final_state(t_end / 256)
    errs = [np.max(np.abs(final_state(dt) - ref)) for dt in (t_end / 8, t_end / 16, t_end / 32)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) > min_order, f"observed orders {orders}"


@pytest.mark.parametrize("scheme", [Scheme.ETDRK4, Scheme.IMEX_BE, Scheme.IMEX_CN])
def test_determinism(scheme):
    bc = BC.PERIODIC if scheme is Scheme.ETDRK4 else BC.CLAMPED
    g = Grid(24, 24, 10.0, 10.0, bc)
    p = _params()
    cfg = StepperConfig(dt=0.05, t_end=2.0, scheme=scheme)
    u0 = make_initial(g, "smooth_random", seed=1, amplitude=1.0)
    a = integrate(p, cfg, u0)
    b = integrate(p, cfg, u0)
    np.testing.assert_array_equal(a.final.values, b.final.values)
    np.testing.assert_array_equal(a.l2, b.l2)


def test_series_sampling_and_csv(tmp_path):
    g = Grid(16, 16, 6.0, 6.0)
    p = _params()
    cfg = StepperConfig(dt=0.1, t_end=1.0, series_stride=3, snapshot_stride=5)
    u0 = make_initial(g, "smooth_random", seed=2)
    traj = integrate(p, cfg, u0)
    np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert traj.snap_times == [0.0, 0.5, 1.0]
    path = tmp_path / "series.csv"
    traj.write_series_csv(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 0], traj.times)
    np.testing.assert_allclose(rows[:, 1], traj.l2, rtol=1e-15)
    assert path.read_text().splitlines()[0] == "t,l2,grad_l2,lap_l2"


@pytest.mark.parametrize("scheme,bc", [(Scheme.ETDRK4, BC.PERIODIC), (Scheme.IMEX_BE, BC.CLAMPED)])
def test_norm_dissipation_below_radius(scheme, bc):
    # Inside the absorbing ball the quartic term keeps ⟨rhs(u), u⟩ strictly
    # dissipative once mu <= 0; check the integrator tracks the decay.
    g = Grid(24, 24, 12.0, 12.0, bc)
    p = _params(mu=-0.3)
    cfg = StepperConfig(dt=0.05, t_end=4.0, scheme=scheme)
    u0 = make_initial(g, "smooth_random", seed=3, amplitude=1.0)
    traj = integrate(p, cfg, u0)
    assert np.all(np.diff(traj.l2) <= 1e-12)
    assert traj.l2[-1] < 0.3 * traj.l2[0]


def test_instantaneous_dissipation_along_path():
    g = Grid(24, 24, 12.0, 12.0)
    p = _params(mu=0.4)
    cfg = StepperConfig(dt=0.05, t_end=2.0, snapshot_stride=10)
    u0 = make_initial(g, "smooth_random", seed=9, amplitude=1.5)
    traj = integrate(p, cfg, u0)
    for f in traj.snapshots:
        lhs = inner(rhs(p, f), f)
        bound = p.mu * l2_norm(f) ** 2 - 1.0 * l2_norm(f) ** 4  # b = 1
        assert lhs <= bound + 1e-9


def test_blow_up_raises_with_partial_series():
    # Large state + large dt makes the explicit quartic stage diverge.
    g = Grid(16, 16, 6.0, 6.0)
    p = _params(mu=0.5)
    cfg = StepperConfig(dt=0.5, t_end=50.0, series_stride=1)
    u0 = make_initial(g, "smooth_random", seed=5, amplitude=40.0)
    with pytest.raises(BlowUpError) as err:
        integrate(p, cfg, u0)
    assert err.value.trajectory is not None
    assert err.value.trajectory.blew_up
    assert err.value.t <= 50.0
    assert len(err.value.trajectory.times) >= 1


def test_initial_conditions_have_requested_amplitude():
    for bc in (BC.PERIODIC, BC.CLAMPED):
        g = Grid(24, 24, 10.0, 10.0, bc)
        for kind in ("smooth_random", "single_mode", "bump"):
            f = make_initial(g, kind, seed=3, amplitude=1.7)
            assert l2_norm(f) == pytest.approx(1.7, rel=1e-12)
            if bc is BC.CLAMPED:
                assert np.all(f.values[0, :] == 0.0) and np.all(f.values[:, -1] == 0.0)


def test_initial_condition_determinism_and_kinds():
    g = Grid(16, 16, 6.0, 6.0)
    a = make_initial(g, "smooth_random", seed=12)
    b = make_initial(g, "smooth_random", seed=12)
    c = make_initial(g, "smooth_random", seed=13)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.max(np.abs(a.values - c.values)) > 1e-8
    with pytest.raises(ValueError):
        make_initial(g, "no_such_kind")


def test_dirichlet_symbols_match_eigenvalue_formula():
    g = Grid(12, 10, 3.0, 2.0, BC.CLAMPED)
    sym = dirichlet_symbols(g)
    lam_x = -4.0 / g.hx**2 * np.sin(1 * np.pi / (2 * (g.nx - 1))) ** 2
    lam_y = -4.0 / g.hy**2 * np.sin(2 * np.pi / (2 * (g.ny - 1))) ** 2
    lam = lam_x + lam_y
    assert sym[0, 1] == pytest.approx(lam, rel=1e-13)


@pytest.mark.parametrize("scheme", [Scheme.ETDRK4, Scheme.IMEX_BE])
def test_long_periodic_run_stays_inside_absorbing_ball(scheme):
    """The rfft2 state stores both +-kx halves of a conjugate pair in its
    ky=0 and Nyquist columns; if stepping ever lets those bins decouple,
    roundoff there grows at the raw linear rate (invisible to the
    nonlinearity) and the recorded norm leaves the absorbing ball after
    t ~ 37/mu.  Run long enough to catch that."""
    grid = Grid(32, 32, 16 * np.pi, 16 * np.pi, BC.PERIODIC)
    p = _params(mu=0.8)
    cfg = StepperConfig(dt=0.1, t_end=80.0, scheme=scheme, series_stride=10)
    traj = integrate(p, cfg, make_initial(grid, "smooth_random", seed=3, amplitude=2.0))
    assert not traj.blew_up
    radius = np.sqrt(p.mu / 1.0)
    assert np.max(traj.l2[len(traj.l2) // 2 :]) <= 1.05 * radius
    # recorded spectral norm and physical norm of the final state agree
    assert np.isclose(traj.l2[-1], l2_norm(traj.final), rtol=1e-12)
