import math

import mpmath
import numpy as np
import pytest

from inrdmd.data import Grid
from inrdmd.solvers.burgers import GrfSpec, burgers_simulate, grf_sample
from inrdmd.solvers.cst import CstParams, airfoil_curve, class_function, cst_airfoil, surfaces
from inrdmd.solvers.lbm import LbmConfig, LbmInstabilityError, LbmSolver, lbm_simulate
from inrdmd.solvers.shear import ShearSpec, ns_vorticity_simulate, shear_initial, shear_velocity


def line(n):
    return Grid((n,), (1.0,), (True,))


# --- GRF -------------------------------------------------------------------

def test_grf_zero_sigma_is_mean():
    u = grf_sample(GrfSpec(mean=0.3, n_modes=16, sigma=0.0), line(64))
    np.testing.assert_array_equal(u, 0.3)


def test_grf_first_mode_std():
    mpmath.mp.dps = 30
    ref = mpmath.sqrt(2) * 49 * ((2 * mpmath.pi) ** 2 + 49) ** mpmath.mpf(-1.25)
    lam1 = GrfSpec(gamma=2.5, tau=7.0, sigma=49.0).mode_std()[0]
    assert lam1 == pytest.approx(float(ref), rel=1e-14)
    assert lam1 == pytest.approx(0.2553, abs=1e-4)


def test_grf_variance_monte_carlo():
    spec = GrfSpec(n_modes=8)
    grid = line(32)
    vals = np.array([grf_sample(GrfSpec(n_modes=8, seed=s), grid)[5] for s in range(10_000)])
    expected = np.sum(spec.mode_std() ** 2)
    assert vals.var() == pytest.approx(expected, rel=0.05)


def test_grf_rejects_bad_gamma():
    with pytest.raises(ValueError):
        GrfSpec(gamma=0.5)


# --- Burgers ---------------------------------------------------------------

def test_burgers_constant_is_steady():
    traj = burgers_simulate(np.full(64, 0.7), 0.01, 1.0, 20, line(64))
    np.testing.assert_allclose(traj, 0.7, rtol=0, atol=1e-15)


def test_burgers_linear_decay():
    n, nu, T = 128, 0.01, 1.0
    grid = line(n)
    x = grid.axes()[0]
    u0 = 1e-6 * np.sin(2 * np.pi * x)
    traj = burgers_simulate(u0, nu, T, 10, grid)
    for k, t in enumerate(np.linspace(0, T, 11)):
        amp = 2 * np.abs(np.fft.rfft(traj[k])[1]) / n
        assert amp == pytest.approx(1e-6 * math.exp(-nu * (2 * np.pi) ** 2 * t), rel=1e-4)


def test_burgers_mean_conserved():
    grid = line(256)
    u0 = grf_sample(GrfSpec(mean=0.2, n_modes=128, seed=3), grid)
    traj = burgers_simulate(u0, 0.003, 1.0, 50, grid)
    assert np.max(np.abs(traj.mean(axis=1) - u0.mean())) <= 1e-10
    assert np.all(np.isfinite(traj))


# --- double shear / NS -----------------------------------------------------

GRID2 = Grid((32, 64), (1.0, 2.0), (True, True))


def test_shear_unperturbed_depends_on_z_only():
    om = shear_initial(ShearSpec(separation=0.3, eps=0.0), GRID2)
    np.testing.assert_allclose(om, np.tile(om[:, :1], (1, 64)), atol=1e-12)


def test_shear_velocity_at_layer_center():
    spec = ShearSpec(separation=0.25, eps=0.0)
    z1 = (1.0 - 0.25) / 2
    u, w = shear_velocity(spec, np.array([0.3]), np.array([z1]))
    assert u[0] == pytest.approx(1.0 * (-math.tanh(-0.25 / 0.05) - 1.0), abs=1e-15)
    assert w[0] == 0


def test_shear_vorticity_zero_mean():
    om = shear_initial(ShearSpec(separation=0.3, seed=4), GRID2)
    assert abs(om.mean()) <= 1e-12


def test_ns_zero_stays_zero():
    _, traj = ns_vorticity_simulate(np.zeros(GRID2.dims), 1e-3, 0.5, 5, GRID2, dt=0.01)
    assert np.all(traj == 0)


def test_ns_single_mode_decay():
    Lz, Lx = GRID2.extents
    z, x = np.meshgrid(*GRID2.axes(), indexing="ij")
    om0 = 2 * np.cos(2 * np.pi * x / Lx) * np.cos(2 * np.pi * z / Lz)
    nu = 0.01
    times, traj = ns_vorticity_simulate(om0, nu, 1.0, 6, GRID2, dt=0.01)
    rate = nu * ((2 * np.pi / Lx) ** 2 + (2 * np.pi / Lz) ** 2)
    for t, om in zip(times, traj):
        np.testing.assert_allclose(om, om0 * math.exp(-rate * t), rtol=0,
                                   atol=1e-3 * math.exp(-rate * t) * np.abs(om0).max())


def test_ns_circulation_conserved():
    rng = np.random.default_rng(0)
    om0 = shear_initial(ShearSpec(separation=0.3, seed=1), GRID2) + 0.3 + 0.1 * rng.standard_normal(GRID2.dims)
    _, traj = ns_vorticity_simulate(om0, 2e-3, 1.0, 5, GRID2)
    circ = traj.sum(axis=(1, 2))
    assert np.max(np.abs(circ - circ[0])) <= 1e-9 * abs(circ[0])


def test_ns_window_sampling():
    om0 = shear_initial(ShearSpec(separation=0.3, seed=1), GRID2)
    times, traj = ns_vorticity_simulate(om0, 2e-3, 1.0, 4, GRID2, t_start=0.5)
    np.testing.assert_allclose(times, [0.5, 2 / 3, 5 / 6, 1.0])
    assert traj.shape == (4,) + GRID2.dims


# --- LBM -------------------------------------------------------------------

def test_lbm_equilibrium_fixed_point():
    cfg = LbmConfig(nx=20, ny=12, inflow=(0.0, 0.0), cylinder=None, boundary="periodic")
    s = LbmSolver(cfg)
    f0 = s.f.copy()
    for _ in range(50):
        s.step()
    np.testing.assert_allclose(s.f, f0, rtol=0, atol=8 * np.finfo(float).eps)


def test_lbm_closed_box_mass():
    ny, nx = 16, 24
    rng = np.random.default_rng(2)
    cfg = LbmConfig(nx=nx, ny=ny, cylinder=(12.0, 8.0, 2.5), boundary="closed", nu=0.05,
                    rho0=1 + 0.01 * rng.standard_normal((ny, nx)),
                    u0=(0.02 * rng.standard_normal((ny, nx)), 0.02 * rng.standard_normal((ny, nx))))
    s = LbmSolver(cfg)
    m0 = s.mass()
    for _ in range(1000):
        s.step()
    assert abs(s.mass() - m0) <= 1e-9 * m0


def test_lbm_poiseuille():
    ny, nu, g = 23, 0.1, 1e-6
    cfg = LbmConfig(nx=4, ny=ny, inflow=(0.0, 0.0), cylinder=None, boundary="periodic_x",
                    nu=nu, body_force=(g, 0.0))
    s = LbmSolver(cfg)
    for _ in range(8000):
        s.step()
    ux = s.fields()["ux"][:, 1]
    y = np.arange(ny)
    lo, hi = 0.5, ny - 1.5
    ref = g / (2 * nu) * (y - lo) * (hi - y)
    fluid = slice(1, ny - 1)
    err = np.max(np.abs(ux[fluid] - ref[fluid])) / ref.max()
    assert err <= 0.02


def test_lbm_channel_runs_and_masks():
    cfg = LbmConfig(nx=60, ny=20, cylinder=(20.0, 9.5, 3.0), n_frames=3, stride=20, warmup=100)
    out = lbm_simulate(cfg)
    assert out["speed"].shape == (3, 20, 60)
    assert np.all(out["speed"][:, out["mask"]] == 0)
    assert out["mask"][0].all() and out["mask"][-1].all()


def test_lbm_instability_reported():
    cfg = LbmConfig(nx=30, ny=10, inflow=(0.0, 0.0), cylinder=None, boundary="periodic",
                    u0=(np.full((10, 30), 0.6), np.zeros((10, 30))), n_frames=1)
    with pytest.raises(LbmInstabilityError):
        lbm_simulate(cfg)


def test_lbm_config_validation():
    with pytest.raises(ValueError):
        LbmConfig(inflow=(0.35, 0.0)).validate()
    with pytest.raises(ValueError):
        LbmConfig(nx=20, ny=10, cylinder=(2.0, 5.0, 3.0)).validate()


# --- CST -------------------------------------------------------------------

def test_cst_trailing_edge():
    p = CstParams(t_e=0.01)
    zu, zl = surfaces(p, np.array([0.0, 1.0]))
    assert zu[1] == pytest.approx(0.005) and zl[1] == pytest.approx(-0.005)
    assert zu[0] == 0 and zl[0] == 0
    assert zu[1] - zl[1] == pytest.approx(p.t_e, abs=1e-15)


def test_cst_class_function_midpoint():
    assert class_function(0.5) == pytest.approx(math.sqrt(0.5) * 0.5, abs=1e-15)
    assert class_function(0.5) == pytest.approx(0.353553, abs=1e-6)


def test_cst_symmetric():
    p = CstParams(A_u0=0.3, A_u1=0.1, A_l0=-0.3, A_l1=-0.1, t_e=0.0, theta_cw=0.0)
    c = airfoil_curve(p, 41)
    upper = c[:41][::-1]
    lower = np.vstack([c[40:41], c[41:]])
    np.testing.assert_allclose(upper[:, 0], lower[:, 0], atol=1e-12)
    np.testing.assert_allclose(upper[:, 1], -lower[:, 1], atol=1e-12)


@pytest.mark.parametrize("theta", [0.0, 3.0, 10.0, -7.5])
def test_cst_rotation_preserves_chord(theta):
    c = airfoil_curve(CstParams(theta_cw=theta, t_e=0.0), 51)
    le, te = c[50], c[0]
    assert np.hypot(*(te - le)) == pytest.approx(1.0, abs=1e-12)
    if theta > 0:
        assert te[1] < le[1]  # clockwise: trailing edge drops


def test_cst_rejects_self_intersection():
    with pytest.raises(ValueError):
        airfoil_curve(CstParams(A_u0=-0.2, A_l0=0.2), 31)


def test_cst_mask():
    poly, mask = cst_airfoil(CstParams(), 101, 128, 64)
    assert mask.any() and mask.sum() < 0.1 * mask.size
    assert poly.shape == (201, 2)
    # leading edge sits at (32, 32); a cell just behind it is inside
    assert mask[32, 34]
    assert not mask[32, 28]
