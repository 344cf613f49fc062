import numpy as np
import pytest

from robustltl.dynamics import DimensionError, MatrixFamily, UncertainSystem, affine_c_terms

from oracles import random_system, stacked_error, stepwise_states


def test_simulate_identity_system():
    sys = UncertainSystem(np.eye(2), np.eye(2), n_w=0, N=1)
    traj = sys.simulate(np.zeros(2), [1.0, 0.0], np.zeros((2, 0)))
    np.testing.assert_array_equal(traj.x, [[0, 0], [1, 0]])


def test_simulate_scalar_uncertain_a():
    sys = UncertainSystem(MatrixFamily.callback(lambda w: [[w[0]]], (1, 1)), [[1.0]], n_w=1, N=1)
    traj = sys.simulate([1.0], [3.0], [[2.0], [0.0]])
    assert traj.x[1, 0] == 5.0


def test_stack_empty_product_case():
    st = UncertainSystem(np.eye(2), np.eye(2), n_w=0, N=1).stack(np.zeros((2, 0)))
    np.testing.assert_array_equal(st.A, np.vstack([np.eye(2), np.eye(2)]))
    np.testing.assert_array_equal(st.B, np.vstack([np.zeros((2, 2)), np.eye(2)]))
    np.testing.assert_array_equal(st.c, 0)


def test_stack_hand_unrolled():
    st = UncertainSystem([[2.0]], [[1.0]], [1.0], n_w=0, N=2).stack(np.zeros((3, 0)))
    np.testing.assert_array_equal(st.A.ravel(), [1, 2, 4])
    np.testing.assert_array_equal(st.B, [[0, 0], [1, 0], [2, 1]])
    np.testing.assert_array_equal(st.c, [0, 1, 3])


def test_stack_matches_stepwise_random():
    rng = np.random.default_rng(10)
    assert max(stacked_error(rng) for _ in range(200)) <= 1e-9


def test_simulate_matches_oracle_recursion():
    rng = np.random.default_rng(11)
    for _ in range(50):
        sys, x0, u, w = random_system(rng)
        np.testing.assert_allclose(sys.simulate(x0, u, w).x.ravel(), stepwise_states(sys, x0, u, w), atol=1e-12)


def test_affine_c_terms_match_stack():
    rng = np.random.default_rng(12)
    for _ in range(30):
        n_x, n_w, N = 3, 2, int(rng.integers(1, 6))
        A = rng.normal(size=(n_x, n_x)) * 0.4
        c = MatrixFamily.affine(rng.normal(size=n_x), rng.normal(size=(n_w, n_x)))
        sys = UncertainSystem(A, rng.normal(size=(n_x, 1)), c, n_w=n_w, N=N)
        assert sys.is_lti
        c0, Cw = affine_c_terms(sys)
        w = rng.normal(size=(N + 1, n_w))
        np.testing.assert_allclose(c0 + Cw @ w.ravel(), sys.stack(w).c, atol=1e-10)


def test_dimension_errors():
    with pytest.raises(DimensionError):
        UncertainSystem(np.zeros((2, 3)), np.zeros((2, 1)), n_w=0, N=1)
    with pytest.raises(DimensionError):
        UncertainSystem(np.eye(2), np.zeros((3, 1)), n_w=0, N=1)
    sys = UncertainSystem(np.eye(2), np.zeros((2, 1)), n_w=1, N=2)
    with pytest.raises(DimensionError):
        sys.simulate(np.zeros(2), np.zeros(2), np.zeros((2, 1)))
    with pytest.raises(DimensionError):
        sys.simulate(np.zeros(3), np.zeros(2), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        UncertainSystem(np.eye(2), np.zeros((2, 1)), n_w=0, N=0)
    cb = MatrixFamily.callback(lambda w: np.eye(2), (2, 2))
    assert not UncertainSystem(cb, np.zeros((2, 1)), n_w=1, N=1).is_lti
