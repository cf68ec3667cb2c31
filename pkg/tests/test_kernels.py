"""Cross-validation of the numba kernels against the numpy fallbacks and the
scalar reference implementation."""

import numpy as np
import pytest

from latticehom import ALSI10MG, PlasticState, make_unit_cell, return_map
from latticehom import kernels
from latticehom.material import RM_TOL_REL

pytestmark = pytest.mark.skipif(not kernels.NUMBA_ENABLED,
                                reason="numba backend not active")

MAT = ALSI10MG
RM_TOL = RM_TOL_REL * MAT.sigma_y0


def _random_batch(rng, n):
    eps = rng.uniform(-0.03, 0.03, n)
    eps_pl = rng.uniform(-0.01, 0.01, n)
    alpha = rng.uniform(0.0, 0.05, n)
    q = rng.uniform(-150.0, 150.0, n)
    return eps, eps_pl, alpha, q


def test_return_map_batch_matches_numpy_and_scalar(rng):
    eps, eps_pl, alpha, q = _random_batch(rng, 500)
    args = (eps, eps_pl, alpha, q, MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL)
    nb = kernels.return_map_batch(*args)
    npy = kernels.return_map_batch_np(*args)
    for a, b in zip(nb[:5], npy[:5]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert nb[6] == npy[6] == 0
    np.testing.assert_array_equal(np.asarray(nb[5]), npy[5])
    # scalar reference on a subset
    for k in range(0, 500, 25):
        r = return_map(float(eps[k]), PlasticState(eps_pl[k], alpha[k], q[k]), MAT)
        assert nb[0][k] == pytest.approx(r.sigma, rel=1e-12, abs=1e-12)
        assert nb[1][k] == pytest.approx(r.D, rel=1e-12)
        assert nb[3][k] == pytest.approx(r.state_new.alpha, abs=1e-15)


def test_truss_kernels_match_numpy(rng):
    cell = make_unit_cell("xp_braced", 1.0, 0.1, 1.0)
    u = rng.normal(0.0, 1e-3, cell.n_tot)
    args_geo = (cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths)
    np.testing.assert_allclose(kernels.strut_strains(u, *args_geo),
                               kernels.strut_strains_np(u, *args_geo), rtol=1e-14)
    sigma = rng.normal(0.0, 100.0, cell.n_struts)
    f_nb = kernels.internal_force(cell.n_tot, cell.node_i, cell.node_j,
                                  cell.cx, cell.cy, cell.areas, sigma)
    f_np = kernels.internal_force_np(cell.n_tot, cell.node_i, cell.node_j,
                                     cell.cx, cell.cy, cell.areas, sigma)
    np.testing.assert_allclose(f_nb, f_np, rtol=1e-13, atol=1e-16)
    D = rng.uniform(1e3, 7e4, cell.n_struts)
    np.testing.assert_allclose(
        kernels.stiffness_values(cell.cx, cell.cy, cell.lengths, cell.areas, D),
        kernels.stiffness_values_np(cell.cx, cell.cy, cell.lengths, cell.areas, D),
        rtol=1e-13)


def test_truss_system_matches_numpy(rng):
    cell = make_unit_cell("x_braced", 1.0, 0.1, 1.0)
    u = rng.normal(0.0, 2e-3, cell.n_tot)
    eps_pl = rng.uniform(-1e-3, 1e-3, cell.n_struts)
    alpha = rng.uniform(0.0, 0.01, cell.n_struts)
    q = rng.uniform(-50.0, 50.0, cell.n_struts)
    args = (u, cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths, cell.areas,
            eps_pl, alpha, q, MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL)
    nb = kernels.truss_system(*args)
    npy = kernels.truss_system_np(*args)
    for a, b in zip(nb[:6], npy[:6]):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(nb[7], npy[7], rtol=1e-12, atol=1e-14)   # f
    np.testing.assert_allclose(nb[8], npy[8], rtol=1e-12)               # k values
    assert nb[9] == npy[9] == 0


def test_micro_solve_batch_matches_numpy(rng):
    cell = make_unit_cell("xp_braced", 1.0, 0.1, 1.0)
    ngp, ns = 16, cell.n_struts
    eps_hat = rng.uniform(-3e-3, 3e-3, (ngp, 3))
    # random committed states break the cell symmetry and force real
    # newton iterations on the independent displacements
    eps_pl = rng.uniform(-1e-3, 1e-3, (ngp, ns))
    alpha = rng.uniform(0.0, 0.01, (ngp, ns))
    q = rng.uniform(-50.0, 50.0, (ngp, ns))
    args = (cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths, cell.areas,
            cell.B0, cell.Be, cell.V_uc, eps_hat, eps_pl, alpha, q,
            MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL,
            1e-9 * MAT.E * cell.A, 25, 1e-10)
    nb = kernels.micro_solve_batch(*args)
    npy = kernels.micro_solve_batch_np(*args)
    assert np.all(np.asarray(nb[10]) == 1)
    assert np.all(npy[10] == 1)
    np.testing.assert_allclose(nb[0], npy[0], rtol=1e-9, atol=1e-12)  # sigma_bar
    np.testing.assert_allclose(nb[1], npy[1], rtol=1e-8, atol=1e-6)   # C_bar
    np.testing.assert_allclose(nb[2], npy[2], rtol=1e-8, atol=1e-14)  # d0
    assert np.any(np.asarray(nb[9]) > 0)  # asymmetric states need iterations


def test_pinv_cut_agrees(rng):
    for m in (np.eye(3), np.zeros((4, 4)), np.diag([2.0, 0.0]),
              rng.normal(size=(6, 6))):
        np.testing.assert_allclose(kernels.pinv_cut(m, 1e-10, 0.0),
                                   kernels.pinv_cut_np(m, 1e-10, 0.0),
                                   rtol=1e-10, atol=1e-12)
