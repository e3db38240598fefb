"""Tests for Jacobians, the controllability matrix and numeric rank."""

import numpy as np
import pytest

from chainverifier.chains import XnesChain, XnesParams
from chainverifier.control_model import extended_transition, in_control_set, sample_sequence
from chainverifier.controllability import (
    FINITE_DIFFERENCE,
    DifferentiationError,
    InvalidWitnessError,
    central_difference_jacobian,
    check_forward_accessibility,
    controllability_matrix,
    find_rank_witness,
    jacobian_w,
    jacobian_x,
    numeric_rank,
    rank_condition,
    rank_witness,
)


def _composed_jacobian(model, x, blocks):
    shape = blocks.shape
    return central_difference_jacobian(lambda flat: extended_transition(model, x, flat.reshape(shape)),
                                       blocks.reshape(-1))


def test_random_walk_matrix_is_all_ones(random_walk):
    """A = B = 1, so every column block of C is 1."""
    cmat = controllability_matrix(random_walk, [0.3], [[0.1], [-0.2], [0.4]])
    np.testing.assert_allclose(cmat.mat, [[1.0, 1.0, 1.0]])
    assert (cmat.rows, cmat.cols) == (1, 3)


@pytest.mark.parametrize("n,k", [(1, 1), (1, 2), (3, 1), (3, 2)])
def test_xnes_matrix_matches_composed_jacobian(n, k):
    """C_x^k equals the Jacobian of w -> S_x^k(w) across random draws."""
    chain = XnesChain(XnesParams(n=n, lam=4, mu=2))
    for draw in range(20):
        rng = np.random.default_rng((7, n, k, draw))
        x = rng.normal(size=n)
        blocks = sample_sequence(chain, x, k, rng)
        cmat = controllability_matrix(chain, x, blocks)
        np.testing.assert_allclose(cmat.mat, _composed_jacobian(chain, x, blocks), rtol=1e-4, atol=1e-7)


@pytest.mark.parametrize("model_name,k", [("random_walk", 3), ("selection_walk", 2)])
def test_additive_matrix_matches_composed_jacobian(request, model_name, k):
    """The all-ones C_x^k of the additive walks equals the composed Jacobian across random draws."""
    model = request.getfixturevalue(model_name)
    for draw in range(20):
        rng = np.random.default_rng((8, k, draw))
        x = rng.normal(size=1)
        blocks = sample_sequence(model, x, k, rng)
        cmat = controllability_matrix(model, x, blocks)
        np.testing.assert_allclose(cmat.mat, np.ones((1, k)))
        np.testing.assert_allclose(cmat.mat, _composed_jacobian(model, x, blocks), rtol=1e-4, atol=1e-7)


def test_matrix_recursion_drops_first_step(xnes3):
    """The last p(k-1) columns of C_x^k are C^{k-1} taken from S_x^1 along the remaining blocks."""
    for draw in range(5):
        rng = np.random.default_rng((9, draw))
        x = rng.normal(size=3)
        blocks = sample_sequence(xnes3, x, 3, rng)
        full = controllability_matrix(xnes3, x, blocks).mat
        tail = controllability_matrix(xnes3, extended_transition(xnes3, x, blocks[:1]), blocks[1:]).mat
        np.testing.assert_allclose(full[:, xnes3.p:], tail, rtol=1e-12, atol=1e-15)


def test_xnes_state_jacobian_at_origin():
    """n=1, mu=1: dF/dz(0, 0) = [exp(1/2)]."""
    chain = XnesChain(XnesParams(n=1, lam=2, mu=1))
    np.testing.assert_allclose(jacobian_x(chain, [0.0], [0.0]), [[np.exp(0.5)]], rtol=1e-6)


def test_selection_walk_matrix(selection_walk):
    """The selection walk shares F with the random walk."""
    cmat = controllability_matrix(selection_walk, [2.0], [[0.5], [-0.3]])
    np.testing.assert_allclose(cmat.mat, [[1.0, 1.0]])


@pytest.mark.parametrize("n", [1, 2, 5])
def test_xnes_rank_at_zero_with_ordered_block(n):
    """Near the zero block with strictly ordered f-values the rank is n."""
    chain = XnesChain(XnesParams(n=n, lam=4, mu=2))
    rng = np.random.default_rng(n)
    blocks = 0.1 * rng.normal(size=(2, n))
    blocks = blocks[np.argsort(np.sum(blocks * blocks, axis=1))]
    assert in_control_set(chain, np.zeros(n), blocks.reshape(1, -1))
    witness = rank_witness(chain, np.zeros(n), blocks.reshape(1, -1))
    assert witness.report.numeric_rank == n
    assert witness.rank_ok


@pytest.mark.parametrize("n", [1, 2, 5])
def test_xnes_jacobian_at_zero_block(n):
    """dF/dw(0, 0) = kappa_m e^{kappa_sigma/2} [beta_1 I, ..., beta_mu I]."""
    params = XnesParams(n=n, lam=4, mu=2, weights=[0.7, 0.3], kappa_m=0.8, kappa_sigma=0.6)
    chain = XnesChain(params)
    jac = jacobian_w(chain, np.zeros(n), np.zeros(2 * n), strict=False)
    expected = 0.8 * np.exp(0.3) * np.hstack([0.7 * np.eye(n), 0.3 * np.eye(n)])
    np.testing.assert_allclose(jac, expected, rtol=1e-6, atol=1e-12)


def test_tied_block_refused_when_strict(xnes3):
    """Tied f-values are outside O and strict differentiation refuses them."""
    with pytest.raises(DifferentiationError, match="tie"):
        jacobian_w(xnes3, np.zeros(3), np.zeros(6))


def test_forward_mode_matches_finite_differences(xnes3):
    """jax forward mode and central differences agree."""
    pytest.importorskip("jax")
    rng = np.random.default_rng(3)
    x = rng.normal(size=3)
    w = sample_sequence(xnes3, x, 1, rng)[0]
    forward = jacobian_w(xnes3, x, w, method="forward")
    fd = jacobian_w(xnes3, x, w, method=FINITE_DIFFERENCE)
    np.testing.assert_allclose(forward, fd, rtol=1e-5, atol=1e-8)


def test_numeric_rank_cut_and_borderline():
    """Singular values are compared with rel_tol * sigma_max; near-cut values are flagged."""
    report = numeric_rank(np.diag([1.0, 1e-9]))
    assert report.numeric_rank == 1
    assert not report.full_rank
    assert report.borderline

    clean = numeric_rank(np.diag([2.0, 1.0]))
    assert clean.full_rank
    assert not clean.borderline


def test_numeric_rank_zero_matrix():
    """The zero matrix has rank 0."""
    report = numeric_rank(np.zeros((2, 3)))
    assert report.numeric_rank == 0
    assert (report.rows, report.cols) == (2, 3)


def test_numeric_rank_rejects_bad_tolerance():
    """rel_tol must be positive."""
    with pytest.raises(ValueError, match="must be positive"):
        numeric_rank(np.eye(2), rel_tol=0.0)


def test_rank_witness_outside_control_set(noisy_flip):
    """A witness with zero density is rejected."""
    with pytest.raises(InvalidWitnessError, match="outside the control set"):
        rank_witness(noisy_flip, [1.0], [[2.0]])


def test_frozen_model_has_rank_zero(frozen):
    """Ignoring the control gives a zero controllability matrix."""
    assert not rank_condition(frozen, [1.0], [[0.3], [0.1]])


def test_find_rank_witness_xnes_at_zero(xnes3):
    """Sampled sequences at 0 give a full-rank witness."""
    witness = find_rank_witness(xnes3, np.zeros(3), k_max=2, tries=4, seed=1)
    assert witness is not None
    assert witness.rank_ok


def test_find_rank_witness_returns_best_when_deficient(frozen):
    """Without a full-rank witness the highest-rank one is returned."""
    witness = find_rank_witness(frozen, [0.0], k_max=1, tries=2)
    assert witness is not None
    assert witness.report.numeric_rank == 0


def test_forward_accessibility(random_walk, frozen):
    """Every tested state has a full-rank witness for the random walk, none for the frozen chain."""
    assert check_forward_accessibility(random_walk, [[0.0], [3.0]], k_max=1, tries=2).all_full_rank
    report = check_forward_accessibility(frozen, [[0.0]], k_max=1, tries=2)
    assert not report.all_full_rank
    assert report.witnesses == [None]
