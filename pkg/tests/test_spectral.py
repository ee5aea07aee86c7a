import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_sure import spectral as sp
from spectral_sure.errors import (
    DifferentiabilityError,
    RepeatedSingularValuesError,
    ShapeMismatchError,
    SpectralSureError,
)
from spectral_sure.oracle import fd_divergence
from spectral_sure.penalty import PenaltySpec


def soft(theta):
    return sp.prox_function(PenaltySpec.nuclear(theta))


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


# --- svd ---------------------------------------------------------------------

def test_svd_identity():
    assert np.allclose(sp.svd(np.eye(3)).sigma, 1.0)


def test_svd_diagonal():
    dec = sp.svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(dec.sigma, [3, 2, 1])
    assert np.allclose(np.abs(dec.U), np.eye(3))
    assert np.allclose(np.abs(dec.V), np.eye(3))


@pytest.mark.parametrize("shape", [(5, 3), (3, 5), (4, 4), (1, 6)])
def test_svd_reconstructs(shape):
    Y = rand(shape, 1)
    dec = sp.svd(Y)
    assert dec.shape == shape
    assert dec.transposed == (shape[0] < shape[1])
    assert np.max(np.abs(dec.matrix() - Y)) <= 1e-8


def test_svd_sign_convention():
    dec = sp.svd(rand((6, 4), 2))
    idx = np.argmax(np.abs(dec.U), axis=0)
    assert np.all(dec.U[idx, np.arange(4)] > 0)


def test_svd_rejects_non_finite_and_bad_rank():
    with pytest.raises(SpectralSureError):
        sp.svd(np.array([[1.0, np.nan]]))
    with pytest.raises(ShapeMismatchError):
        sp.svd(np.ones(3))


# --- apply_spectral and truncate_rank ------------------------------------------

def test_apply_identity_and_zero():
    Y = rand((5, 3), 3)
    dec = sp.svd(Y)
    assert np.allclose(sp.apply_spectral(dec, sp.identity_function()), Y, atol=1e-8)
    assert np.array_equal(sp.apply_spectral(dec, sp.zero_function()), np.zeros((5, 3)))


def test_apply_soft_on_diagonal():
    out = sp.apply_spectral(sp.svd(np.diag([3.0, 2.0, 0.5])), soft(1.0))
    assert np.allclose(out, np.diag([2.0, 1.0, 0.0]))


def test_apply_rejects_undefined_values():
    with pytest.raises(SpectralSureError):
        sp.apply_spectral(sp.svd(np.eye(2)), lambda s: np.full_like(s, np.nan))


def test_apply_wide_matrix_keeps_orientation():
    Y = rand((3, 7), 4)
    assert np.allclose(sp.apply_spectral(sp.svd(Y), sp.identity_function()), Y)


def test_truncate_rank_examples():
    Y = rand((5, 3), 5)
    dec = sp.svd(Y)
    assert np.allclose(sp.truncate_rank(dec, 3), Y)
    assert np.array_equal(sp.truncate_rank(dec, 0), np.zeros((5, 3)))
    D = sp.svd(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(sp.truncate_rank(D, 2), np.diag([3.0, 2.0, 0.0]))
    with pytest.raises(ValueError):
        sp.truncate_rank(dec, 4)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_eckart_young(K):
    rng = np.random.default_rng(K)
    Y = rng.standard_normal((6, 4))
    best = np.linalg.norm(Y - sp.truncate_rank(sp.svd(Y), K))
    for _ in range(1000):
        M = rng.standard_normal((6, K)) @ rng.standard_normal((K, 4))
        assert best <= np.linalg.norm(Y - M) + 1e-12


@given(seed=st.integers(0, 10_000), K=st.integers(1, 3), scale=st.floats(1e-3, 1.0))
@settings(max_examples=100, deadline=None)
def test_lipschitz_bound(seed, K, scale):
    rng = np.random.default_rng(seed)
    Y1 = rng.standard_normal((6, 4))
    Y2 = Y1 + scale * rng.standard_normal((6, 4))
    gaps = [np.linalg.svd(Y, compute_uv=False) for Y in (Y1, Y2)]
    if min(s[K - 1] - s[K] for s in gaps) < 0.05:
        return
    lhs = np.linalg.norm(sp.truncate_rank(sp.svd(Y1), K) - sp.truncate_rank(sp.svd(Y2), K))
    assert lhs <= sp.lipschitz_constant(Y1, Y2, K) * np.linalg.norm(Y1 - Y2) * (1 + 1e-9)


# --- grouping ----------------------------------------------------------------

def test_group_values_multiplicities():
    g = sp.group_values([3.0, 3.0, 2.0, 1e-15, 0.0], exact=False)
    assert np.allclose(g.values, [3.0, 2.0, 0.0])
    assert list(g.multiplicities) == [2, 1, 2]
    assert g.multiplicities.sum() == 5


def test_group_values_exact_separates_near_ties():
    assert len(sp.group_values([1.0, 1.0 - 1e-12], exact=True).values) == 2
    assert len(sp.group_values([1.0, 1.0 - 1e-12]).values) == 1


def test_check_simple():
    sp.check_simple([3.0, 2.0, 1.0])
    with pytest.raises(RepeatedSingularValuesError):
        sp.check_simple([2.0, 2.0, 1.0])
    with pytest.raises(RepeatedSingularValuesError):
        sp.check_simple([2.0, 1.0, 0.0])
    sp.check_simple([2.0, 1.0, 0.0], allow_zero=True)


# --- symmetrization ------------------------------------------------------------

def test_symmetrize_scalar():
    sym = sp.symmetrize(sp.svd(np.array([[2.0]])))
    assert np.allclose(sym.Ystar, [[0, 2], [2, 0]])
    assert np.allclose(sorted(sym.sigma_star), [-2, 2])


def test_symmetrize_diagonal():
    sym = sp.symmetrize(sp.svd(np.diag([3.0, 1.0])))
    assert np.allclose(sym.sigma_star, [3, 1, -3, -1])


@pytest.mark.parametrize("shape", [(4, 2), (5, 5), (7, 3)])
def test_symmetrize_reconstructs(shape):
    sym = sp.symmetrize(sp.svd(rand(shape, 7)))
    P = sym.P
    assert np.max(np.abs(P @ sym.SigmaStar @ P.T - sym.Ystar)) <= 1e-8
    assert np.max(np.abs(P.T @ P - np.eye(P.shape[0]))) <= 1e-10


# --- directional derivative of matrix functions-----------------------------------------

def sym_rand(n, seed):
    A = rand((n, n), seed)
    return A + A.T


def test_shapiro_identity_returns_h():
    X, H = sym_rand(4, 1), sym_rand(4, 2)
    assert np.allclose(sp.shapiro_directional_derivative(X, sp.identity_function(), H), H)


def test_shapiro_square():
    X = np.diag([1.0, 2.0])
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    out = sp.shapiro_directional_derivative(X, sp.square_function(), H)
    assert np.allclose(out, [[0, 3], [3, 0]])


def _spectral_map(X, f):
    lam, Q = np.linalg.eigh(X)
    return (Q * f(lam)) @ Q.T


def test_shapiro_matches_one_sided_difference():
    f = sp.odd_extension(soft(0.7))
    X, H = sym_rand(4, 11), sym_rand(4, 12)
    t = 1e-7
    fd = (_spectral_map(X + t * H, f) - _spectral_map(X, f)) / t
    out = sp.shapiro_directional_derivative(X, f, H)
    assert np.max(np.abs(out - fd)) <= 1e-4 * max(1.0, np.max(np.abs(out)))


def test_shapiro_at_repeated_kink_eigenvalue():
    # X has a double eigenvalue exactly at the soft-threshold kink
    f = sp.odd_extension(soft(1.0))
    X = np.diag([1.0, 1.0, 3.0])
    H = sym_rand(3, 5)
    t = 1e-7
    fd = (_spectral_map(X + t * H, f) - _spectral_map(X, f)) / t
    assert np.allclose(sp.shapiro_directional_derivative(X, f, H), fd, atol=1e-5)


def test_shapiro_linear_in_direction():
    f = sp.odd_extension(sp.prox_function(PenaltySpec.scad(0.5)))
    X, H1, H2 = sym_rand(5, 1), sym_rand(5, 2), sym_rand(5, 3)
    lhs = sp.shapiro_directional_derivative(X, f, 2.0 * H1 - 0.5 * H2)
    rhs = 2.0 * sp.shapiro_directional_derivative(X, f, H1) - 0.5 * sp.shapiro_directional_derivative(X, f, H2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_shapiro_rejects_asymmetric_input():
    with pytest.raises(ShapeMismatchError):
        sp.shapiro_directional_derivative(rand((3, 3), 1), sp.identity_function(), np.eye(3))


def test_shapiro_rejects_jump():
    f = sp.odd_extension(sp.prox_function(PenaltySpec.rank(0.5)))
    with pytest.raises(DifferentiabilityError):
        sp.shapiro_directional_derivative(np.diag([1.0, 2.0]), f, np.eye(2))


# --- divergence ----------------------------------------------------------------

def test_divergence_identity_is_mn():
    assert sp.divergence(sp.svd(rand((5, 3), 1)), sp.identity_function()) == pytest.approx(15)


def test_divergence_zero_map():
    assert sp.divergence(sp.svd(rand((5, 3), 1)), sp.zero_function()) == 0


def test_divergence_soft_matches_fd():
    Y = rand((6, 4), 9)
    f = soft(1.0)
    est = lambda Z: sp.apply_spectral(sp.svd(Z), f)
    d = sp.divergence(sp.svd(Y), f)
    assert d == pytest.approx(fd_divergence(est, Y), rel=1e-4)


def test_divergence_requires_f0_zero():
    f = sp.SpectralFunction(lambda x: x + 1, lambda x: np.ones_like(x))
    with pytest.raises(SpectralSureError):
        sp.divergence(sp.svd(np.eye(2) * 2), f)


def test_divergence_repeated_values_identity():
    # exact repeated singular values: identity still gives mn
    Y = np.zeros((5, 3))
    Y[:3, :3] = np.diag([2.0, 2.0, 1.0])
    assert sp.divergence(sp.svd(Y), sp.identity_function(), exact=True) == pytest.approx(15)


def test_divergence_scaling_with_zero_block():
    # f(x) = c x is linear, so the divergence is c * mn even with zero singular values
    Y = np.zeros((4, 3))
    Y[0, 0] = 2.0
    assert sp.divergence(sp.svd(Y), sp.scaling_function(0.3)) == pytest.approx(0.3 * 12)


def test_divergence_repeated_at_kink_raises():
    Y = np.diag([1.0, 1.0, 3.0])
    with pytest.raises(DifferentiabilityError):
        sp.divergence(sp.svd(Y), soft(1.0), exact=True)


def test_divergence_directional_at_simple_kink_matches_forward_fd():
    from spectral_sure.oracle import forward_fd_divergence
    Y = rand((5, 3), 21)
    dec = sp.svd(Y)
    f = soft(float(dec.sigma[1]))
    est = lambda Z: sp.apply_spectral(sp.svd(Z), f)
    assert sp.divergence(dec, f) == pytest.approx(forward_fd_divergence(est, Y, 1e-8), abs=1e-4)


SPEC_FAMILIES = [PenaltySpec.nuclear(0.8), PenaltySpec.mcplus(0.8, gamma=2.0), PenaltySpec.scad(0.8)]


@pytest.mark.parametrize("spec", SPEC_FAMILIES + [None], ids=lambda s: "identity" if s is None else s.label)
def test_divergence_agrees_with_fd_on_random_shapes(spec):
    rng = np.random.default_rng(123)
    f = sp.identity_function() if spec is None else sp.prox_function(spec)
    est = lambda Z: sp.apply_spectral(sp.svd(Z), f)
    for _ in range(50):
        m = int(rng.integers(4, 9))
        n = int(rng.integers(3, min(m, 5) + 1))
        Y = rng.standard_normal((m, n))
        d = sp.divergence(sp.svd(Y), f)
        assert abs(d - fd_divergence(est, Y)) <= 1e-4 * max(1.0, abs(d))


@pytest.mark.parametrize("spec", SPEC_FAMILIES, ids=lambda s: s.label)
def test_divergence_by_symmetrization_agrees(spec):
    f = sp.prox_function(spec)
    for seed in range(3):
        dec = sp.svd(rand((4, 3), seed))
        assert sp.divergence_by_symmetrization(dec, f) == pytest.approx(sp.divergence(dec, f), abs=1e-8)


def test_divergence_sign_flip_invariance():
    Y = rand((6, 4), 33)
    dec = sp.svd(Y)
    flip = np.array([1.0, -1.0, -1.0, 1.0])
    flipped = sp.SvdDecomposition(dec.U * flip, dec.sigma, dec.V * flip, dec.transposed)
    f = sp.prox_function(PenaltySpec.scad(0.5))
    assert np.allclose(sp.apply_spectral(flipped, f), sp.apply_spectral(dec, f))
    assert sp.divergence(flipped, f) == pytest.approx(sp.divergence(dec, f))
