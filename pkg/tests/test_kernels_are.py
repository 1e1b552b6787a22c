import numpy as np
import pytest

from riccati_mor.errors import AreSolveError
from riccati_mor.kernels import are_residual, eigenvalues, solve_dense_are

from conftest import hamiltonian_oracle, random_stable


def test_scalar_quadratic():
    p = solve_dense_are(
        np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]])
    )
    assert abs(p[0, 0] - (np.sqrt(2) - 1)) < 1e-12


def test_zero_input_is_lyapunov_limit():
    p = solve_dense_are(-np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(1))
    assert np.allclose(p, 0.5 * np.eye(2), atol=1e-13)


def test_zero_output_gives_zero():
    p = solve_dense_are(-np.eye(3), np.ones((3, 1)), np.zeros((1, 3)), np.eye(1))
    assert np.array_equal(p, np.zeros((3, 3)))


def test_random_against_hamiltonian_oracle(backend):
    rng = np.random.default_rng(12)
    for _ in range(15):
        a = random_stable(rng, 6)
        b = rng.standard_normal((6, 1))
        c = rng.standard_normal((1, 6))
        r = np.array([[float(rng.uniform(0.5, 2.0))]])
        p = solve_dense_are(a, b, c, r)
        p_ref = hamiltonian_oracle(a, b, c, r)
        assert np.linalg.norm(p - p_ref) <= 1e-9 * np.linalg.norm(p_ref)


def test_solution_is_psd_and_stabilizing():
    rng = np.random.default_rng(13)
    for _ in range(25):
        n = int(rng.integers(2, 9))
        a = random_stable(rng, n)
        b = rng.standard_normal((n, 2))
        c = rng.standard_normal((2, n))
        r = np.eye(2)
        p = solve_dense_are(a, b, c, r)
        assert np.linalg.norm(p - p.T) <= 1e-12 * max(1.0, np.linalg.norm(p))
        eigs = np.linalg.eigvalsh(p)
        assert eigs.min() >= -1e-10 * max(np.abs(eigs).max(), 1e-30)
        closed = a - b @ np.linalg.solve(r, b.T @ p)
        assert eigenvalues(closed).real.max() < 0


def test_newton_residual_monotone_after_first_step():
    rng = np.random.default_rng(14)
    a = random_stable(rng, 7)
    b = rng.standard_normal((7, 1))
    c = rng.standard_normal((1, 7))
    _, hist = solve_dense_are(a, b, c, np.eye(1), with_info=True)
    floor = 100 * np.finfo(float).eps
    for prev, cur in zip(hist[1:], hist[2:]):
        if prev <= floor:
            break
        assert cur <= prev
    # quadratic convergence visible: some ratio drops well below 1
    ratios = [b_ / a_ for a_, b_ in zip(hist[1:], hist[2:]) if a_ > floor]
    assert min(ratios, default=0.0) < 0.1


def test_reported_residual_matches_recomputation():
    rng = np.random.default_rng(15)
    a = random_stable(rng, 5)
    b = rng.standard_normal((5, 1))
    c = rng.standard_normal((1, 5))
    p, hist = solve_dense_are(a, b, c, np.eye(1), with_info=True)
    rel = are_residual(a, b, c, np.eye(1), p) / np.linalg.norm(c) ** 2
    assert abs(rel - hist[-1]) <= 1e-6 * max(hist[-1], 1e-30)


def test_unstable_matrix_fails(backend):
    with pytest.raises(AreSolveError, match="ARE solve failed"):
        solve_dense_are(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), np.eye(1))
