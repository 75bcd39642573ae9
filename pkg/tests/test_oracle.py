import numpy as np
import pytest

from roacert.dynamics import HurwitzSpec, make_dense_hurwitz, make_linear, make_reversed_vdp, make_scalar_cubic
from roacert.errors import UnsupportedDimensionError
from roacert.lyapunov import GramCandidate
from roacert.oracle import eigen_exact_linear, grid_max_vdot, measure_kappa, vdp_limit_cycle


def test_grid_on_isotropic_decay(decay2):
    assert grid_max_vdot(*decay2, 1.0).gamma_true == pytest.approx(-2.0, abs=1e-12)


def test_grid_on_anisotropic_decay(aniso2):
    r = grid_max_vdot(*aniso2, 1.0)
    assert r.gamma_true == pytest.approx(-2.0, abs=1e-10)
    assert abs(r.argmax_state[0]) == pytest.approx(1.0, abs=1e-5)


def test_grid_on_scalar_cubic(cubic):
    r = grid_max_vdot(*cubic, 0.81)
    assert r.gamma_true == pytest.approx(2 * 0.81 * (0.81 - 1), abs=1e-12)
    assert abs(r.argmax_state[0]) == pytest.approx(0.9)


@pytest.mark.parametrize("n, seed", [(2, 0), (3, 1)])
def test_grid_agrees_with_eigen_oracle(n, seed):
    s = make_dense_hurwitz(HurwitzSpec(n, seed=seed))
    P = np.diag(np.arange(1.0, n + 1))
    exact = eigen_exact_linear(s.matrix, P, 1.5).gamma_true
    grid = grid_max_vdot(s, GramCandidate.quadratic(P), 1.5, resolution=181).gamma_true
    assert grid == pytest.approx(exact, rel=1e-6)


def test_grid_refuses_high_dimensions():
    s = make_dense_hurwitz(HurwitzSpec(4, seed=0))
    with pytest.raises(UnsupportedDimensionError):
        grid_max_vdot(s, GramCandidate.quadratic(np.eye(4)), 1.0)


def test_eigen_examples():
    assert eigen_exact_linear(-np.eye(2), np.eye(2), 1.0).gamma_true == pytest.approx(-2.0)
    assert eigen_exact_linear(np.diag([-1.0, -3.0]), np.eye(2), 2.0).gamma_true == pytest.approx(-4.0)


def test_eigen_is_homogeneous_in_rho(rng):
    M = rng.standard_normal((5, 5)) - 4 * np.eye(5)
    A = rng.standard_normal((5, 5))
    P = A @ A.T + np.eye(5)
    g1 = eigen_exact_linear(M, P, 1.0)
    g3 = eigen_exact_linear(M, P, 3.0)
    assert g3.gamma_true == pytest.approx(3.0 * g1.gamma_true, rel=1e-12)
    x = g1.argmax_state
    assert x @ P @ x == pytest.approx(1.0)
    assert x @ (M.T @ P + P @ M) @ x == pytest.approx(g1.gamma_true)


def test_limit_cycle_is_a_periodic_orbit():
    cyc = vdp_limit_cycle()
    assert np.allclose(cyc[0], cyc[-1], atol=1e-2)
    # the classic mu = 1 cycle reaches |x1| of about 2.0
    assert np.max(np.abs(cyc[:, 0])) == pytest.approx(2.01, abs=0.02)


def test_kappa_bounds():
    vdp = make_reversed_vdp()
    I2 = GramCandidate.quadratic(np.eye(2))
    assert measure_kappa(vdp, I2, 0.0).kappa == 0.0
    # a sublevel set containing the whole basin covers all of it
    assert measure_kappa(vdp, I2, 100.0, n_samples=20_000).kappa == 1.0
    r = measure_kappa(vdp, I2, 1.0, n_samples=200_000)
    # the unit disc lies inside the basin, so kappa is its area share
    assert r.kappa == pytest.approx(np.pi / r.roa_area, abs=5 * r.std_error + 0.01)


def test_kappa_needs_a_reference_basin(cubic):
    with pytest.raises(UnsupportedDimensionError):
        measure_kappa(cubic[0], cubic[1], 0.5)
