"""Affinely self-similar family: calibration, stepping, PDE residual."""

import numpy as np
import pytest

from fastdiff_lab import affine
from fastdiff_lab import closedform as cf


@pytest.fixture(scope="module")
def params_n2():
    return cf.derive_params(2, 2.0 / 3.0)  # p = 4


def test_calibration_matches_independent_derivation(params_n2):
    # substituting the affine ansatz into the flow gives, by hand,
    # d sigma/d tau = (4/(1-m)) det(Sigma)^((1-m)/2), i.e. cB = (2(p+n))^(p+n)
    cb = affine.calibrate_cb(params_n2)
    analytic = (2.0 * (params_n2.p + params_n2.n)) ** (params_n2.p + params_n2.n)
    assert cb == pytest.approx(analytic, rel=1e-4)


def test_calibration_cached(params_n2):
    a = affine.calibrate_cb(params_n2)
    b = affine.calibrate_cb(params_n2)
    assert a == b


def test_state_validation(params_n2):
    with pytest.raises(ValueError, match="traceless"):
        affine.AffineState(np.diag([0.5, 0.1]), 1.0, 1.0)
    with pytest.raises(ValueError, match="symmetric"):
        affine.AffineState(np.array([[0.0, 1.0], [0.5, 0.0]]), 1.0, 1.0)
    with pytest.raises(ValueError, match="positive definiteness"):
        affine.make_affine_state(np.diag([0.5, -0.5]), 0.3, params_n2)


def test_rk4_fourth_order(params_n2):
    st = affine.make_affine_state(np.diag([0.25, -0.25]), 1.0, params_n2)
    ref = st
    for _ in range(2048):
        ref = affine.affine_step(ref, 0.1 / 2048, params_n2)
    errs = []
    for nsteps in (1, 2, 4):
        cur = st
        for _ in range(nsteps):
            cur = affine.affine_step(cur, 0.1 / nsteps, params_n2)
        errs.append(abs(cur.sigma - ref.sigma))
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(16.0, rel=0.3)


def test_affine_density_isotropic_reduces_to_barenblatt(params_n2):
    st = affine.make_affine_state(np.zeros((2, 2)), 1.0, params_n2)
    y = np.array([[0.0, 0.0], [0.5, 0.2], [1.0, -1.0]])
    rho = affine.affine_density(st, 0.0, y, params_n2)
    # sigma = 1: Sigma = I, so the density is exactly u_B
    r = np.linalg.norm(y, axis=-1)
    assert rho == pytest.approx(cf.barenblatt_u(r, params_n2))


def test_affine_density_batch_shapes(params_n2):
    st = affine.make_affine_state(np.diag([0.25, -0.25]), 1.0, params_n2)
    single = affine.affine_density(st, 0.1, np.array([0.3, 0.4]), params_n2)
    batch = affine.affine_density(st, 0.1, np.array([[0.3, 0.4]] * 5), params_n2)
    assert batch.shape == (5,)
    assert batch == pytest.approx(np.full(5, float(single)))


def test_pde_residual_small_and_second_order(params_n2):
    st = affine.make_affine_state(np.diag([0.25, -0.25]), 1.0, params_n2)
    r1 = affine.affine_pde_residual(st, params_n2, tau_elapsed=0.2,
                                    h=0.003125, dtau_fd=0.0015625)
    r2 = affine.affine_pde_residual(st, params_n2, tau_elapsed=0.2,
                                    h=0.0015625, dtau_fd=0.00078125)
    assert r1 <= 1e-4
    assert r1 / r2 == pytest.approx(4.0, abs=1.5)


def test_pde_residual_isotropic(params_n2):
    st = affine.make_affine_state(np.zeros((2, 2)), 1.0, params_n2)
    r = affine.affine_pde_residual(st, params_n2, tau_elapsed=0.2,
                                   h=0.003125, dtau_fd=0.0015625)
    assert r <= 1e-4  # reduces to the rescaling of u_B: residual ~ FD error


def test_positivity_abort_during_step(params_n2):
    st = affine.make_affine_state(np.diag([0.25, -0.25]), 0.26, params_n2)
    with pytest.raises(ValueError, match="positive definiteness"):
        # integrating backwards shrinks sigma below the smallest axis
        affine._advance(st, -0.5, params_n2)
