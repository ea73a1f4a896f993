import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svdno.autodiff import constant
from svdno.errors import DegenerateFieldError, ShapeError
from svdno.grids import Grid
from svdno.objectives import (beta_variability, gram_matrix, l_inf_error,
                              mean_l2_relative_error, orthogonality_loss,
                              relative_l2, total_loss, trapezoidal_weights)


# --- trapezoidal weights ---

def test_trapezoid_two_points():
    assert np.allclose(trapezoidal_weights(Grid((2,))), [0.5, 0.5])


def test_trapezoid_1d_interior():
    w = trapezoidal_weights(Grid((5,)))
    h = 0.25
    assert np.allclose(w, h * np.array([0.5, 1, 1, 1, 0.5]))
    assert abs(w.sum() - 1.0) < 1e-15


def test_trapezoid_2d_3x3():
    w = trapezoidal_weights(Grid((3, 3))).reshape(3, 3)
    assert abs(w[1, 1] - 0.25) < 1e-15
    for i, j in ((0, 0), (0, 2), (2, 0), (2, 2)):
        assert abs(w[i, j] - 0.0625) < 1e-15
    assert abs(w.sum() - 1.0) < 1e-15


def test_trapezoid_exact_on_affine():
    # exactness on a + b·x is the defining property of the rule
    g = Grid((17,), ((0.0, 2.0),))
    x = g.coords()[:, 0]
    w = trapezoidal_weights(g)
    f = 3.0 + 2.0 * x  # integral over [0,2] is 10
    assert abs((w * f).sum() - 10.0) < 1e-12


# --- Gram matrix / orthogonality ---

def test_gram_orthonormal_columns():
    g = Grid((101,))
    x = g.coords()[:, 0]
    w = trapezoidal_weights(g)
    # Legendre-style orthonormal pair on [0,1]
    basis = np.stack([np.ones_like(x), np.sqrt(3.0) * (2 * x - 1)], axis=1)
    G = gram_matrix(constant(basis[:, None, :]), w).data
    assert np.allclose(G, np.eye(2), atol=1e-3)


def test_gram_zero_basis():
    w = trapezoidal_weights(Grid((4,)))
    G = gram_matrix(constant(np.zeros((4, 1, 3))), w).data
    assert np.array_equal(G, np.zeros((3, 3)))


def test_gram_monomials():
    g = Grid((101,))
    x = g.coords()[:, 0]
    w = trapezoidal_weights(g)
    basis = np.stack([np.ones_like(x), x], axis=1)[:, None, :]
    G = gram_matrix(constant(basis), w).data
    assert np.allclose(G, [[1.0, 0.5], [0.5, 1.0 / 3.0]], atol=1e-3)


def test_ortho_loss_identity_is_zero():
    eye = constant(np.eye(3))
    assert orthogonality_loss(eye, eye).data == 0.0


def test_ortho_loss_all_ones_gram():
    g_phi = constant(np.ones((2, 2)))
    g_psi = constant(np.eye(2))
    assert abs(orthogonality_loss(g_phi, g_psi).data - 2.0) < 1e-15


def test_ortho_loss_duplicated_column_basis():
    g = Grid((51,))
    w = trapezoidal_weights(g)
    basis = constant(np.ones((51, 1, 2)))  # phi1 = phi2 = 1 on [0,1]
    G = gram_matrix(basis, w)
    loss = orthogonality_loss(G, constant(np.eye(2))).data
    assert abs(loss - 2.0) < 1e-12


def test_ortho_loss_zero_iff_identity():
    rng = np.random.default_rng(0)
    for _ in range(5):
        G = np.eye(3) + 1e-3 * rng.standard_normal((3, 3))
        assert orthogonality_loss(constant(G), constant(np.eye(3))).data > 0.0


# --- error metrics ---

def test_relative_l2_perfect():
    u = np.random.default_rng(1).standard_normal((2, 8))
    assert relative_l2(u, constant(u)).data == 0.0


def test_relative_l2_derived():
    u = np.array([[3.0, 4.0]])
    u_hat = np.array([[3.0, 0.0]])
    assert abs(mean_l2_relative_error(u, u_hat) - 80.0) < 1e-12


def test_relative_l2_scale_invariance():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((3, 10))
    u_hat = rng.standard_normal((3, 10))
    base = mean_l2_relative_error(u, u_hat)
    scaled = mean_l2_relative_error(7.0 * u, 7.0 * u_hat)
    assert abs(base - scaled) < 1e-10


def test_relative_l2_zero_target_degenerate():
    with pytest.raises(DegenerateFieldError):
        relative_l2(np.zeros((1, 4)), constant(np.ones((1, 4))))


def test_l_inf_trivial_and_derived():
    assert l_inf_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert l_inf_error(np.array([1.0, 2.0]), np.array([1.0, 5.0])) == 3.0


def test_l_inf_matches_loop_oracle():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((4, 6))
    u_hat = rng.standard_normal((4, 6))
    best = 0.0
    for i in range(4):
        for j in range(6):
            best = max(best, abs(u[i, j] - u_hat[i, j]))
    assert l_inf_error(u, u_hat) == best


def test_total_loss_perfect_orthonormal():
    u = np.random.default_rng(4).standard_normal((1, 8))
    eye = constant(np.eye(2))
    assert total_loss(u, constant(u), eye, eye).data == 0.0


def test_total_loss_duplicated_gram():
    u = np.random.default_rng(5).standard_normal((1, 8))
    ones = constant(np.ones((2, 2)))
    eye = constant(np.eye(2))
    assert abs(total_loss(u, constant(u), ones, eye).data - 2.0) < 1e-12


# --- beta variability ---

def test_beta_scale_invariance():
    rng = np.random.default_rng(6)
    g = Grid((32,))
    u = rng.standard_normal((11, 32))
    b1 = beta_variability(u, g, time_major=True)
    b2 = beta_variability(3.5 * u, g, time_major=True)
    assert abs(b1 - b2) < 1e-12


def test_beta_affine_invariance():
    rng = np.random.default_rng(7)
    g = Grid((16, 16))
    u = rng.standard_normal((16, 16))
    b1 = beta_variability(u, g)
    b2 = beta_variability(2.0 * u - 5.0, g)
    assert abs(b1 - b2) < 1e-12


def test_beta_constant_field_degenerate():
    with pytest.raises(DegenerateFieldError):
        beta_variability(np.ones((8, 8)), Grid((8, 8)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 200), lo=st.floats(-10, 10),
       width=st.floats(0.1, 20))
def test_trapezoid_sums_to_volume(n, lo, width):
    g = Grid((n,), ((lo, lo + width),))
    assert abs(trapezoidal_weights(g).sum() - width) < 1e-12 * max(1.0, width)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), scale=st.floats(1e-3, 1e3))
def test_relative_l2_scale_invariance_property(seed, scale):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((2, 12)) + 0.1  # keep targets away from zero norm
    u_hat = rng.standard_normal((2, 12))
    base = mean_l2_relative_error(u, u_hat)
    assert abs(mean_l2_relative_error(scale * u, scale * u_hat) - base) < 1e-8


def test_beta_rougher_field_larger():
    g = Grid((64,))
    x = g.coords()[:, 0]
    smooth = np.sin(2 * np.pi * x)[None]
    rough = np.sin(16 * np.pi * x)[None]
    assert beta_variability(rough, g, time_major=True) > \
        beta_variability(smooth, g, time_major=True)
