import numpy as np
import pytest
import scipy.linalg
import scipy.sparse

from riccati_mor.errors import KrylovBreakdownError
from riccati_mor.kernels import eigenvalues, qr_append, solve_dense_are
from riccati_mor.krylov import (
    expand_galerkin,
    expand_petrov,
    galerkin_residual_norm,
    gark,
    next_shift,
    pg_residual_norm,
    pgark,
    relation_tail,
    seed_galerkin,
    seed_petrov,
    _project,
)
from conftest import explicit_riccati_residual as explicit_residual_norm
from conftest import random_passive
from conftest import sparse_system as make_system


def random_system(rng, n):
    a = random_passive(rng, n)
    return make_system(a, rng.standard_normal(n), rng.standard_normal(n))


def test_next_shift_singleton_candidate():
    assert next_shift([-1.0], []) == pytest.approx(1.0)


def test_next_shift_maximizes_product_on_interval():
    # mirrored hull of {-1, -4} is [1, 4]; |s+1||s+4| peaks at s = 4
    assert next_shift([-1.0, -4.0], []) == pytest.approx(4.0)


def test_next_shift_penalizes_used_shifts():
    # (s+2)(s+6) peaks at 6; dividing by |s+6|^3 moves the peak to 2
    ritz = [-2.0, -6.0]
    assert next_shift(ritz, []) == pytest.approx(6.0)
    assert next_shift(ritz, [6.0, 6.0, 6.0]) == pytest.approx(2.0)


def test_next_shift_fallback_doubles_last_shift():
    # no stable Ritz values leaves an empty candidate set
    assert next_shift([2.0, 3.0], [1.5 + 0j]) == pytest.approx(3.0)


def test_seed_normalizes_output_direction():
    rng = np.random.default_rng(50)
    c = rng.standard_normal((1, 7))
    state = seed_galerkin(c)
    assert state.order == 1
    assert np.allclose(state.w[:, 0], c[0] / np.linalg.norm(c[0]))


def test_expansion_matches_explicit_space_oracle():
    # two expansions with distinct shifts against the densely assembled space
    a_diag = np.diag([-1.0, -2.0, -3.0, -4.0, -5.0])
    rng = np.random.default_rng(51)
    c = rng.standard_normal((1, 5))
    sys = make_system(a_diag, rng.standard_normal(5), c)
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    sigmas = [1.5, 3.2]
    for s in sigmas:
        expand_galerkin(state, at_csc, s)
    at = a_diag.T
    block1 = np.linalg.solve(at - sigmas[0] * np.eye(5), c.T)
    block2 = np.linalg.solve(at - sigmas[1] * np.eye(5), block1)
    oracle = np.hstack([c.T, block1, block2])
    angles = scipy.linalg.subspace_angles(state.w, oracle)
    assert np.max(angles) <= 1e-10
    assert state.order <= 3  # dim bound r * p


def test_spaces_are_nested():
    rng = np.random.default_rng(52)
    sys = random_system(rng, 12)
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    previous = state.w.copy()
    for s in (1.0, 2.5, 0.7):
        expand_galerkin(state, at_csc, s)
        angles = scipy.linalg.subspace_angles(state.w, previous)
        assert np.max(angles[: previous.shape[1]]) <= 1e-10
        previous = state.w.copy()


def test_galerkin_residual_zero_tail():
    p_red = np.eye(3)
    assert galerkin_residual_norm(p_red, np.zeros((3, 0))) == 0.0


def test_galerkin_residual_homogeneous():
    rng = np.random.default_rng(53)
    p_red = rng.standard_normal((4, 4))
    tail = rng.standard_normal((4, 1))
    assert galerkin_residual_norm(2 * p_red, tail) == pytest.approx(
        2 * galerkin_residual_norm(p_red, tail)
    )


def test_galerkin_residual_matches_explicit_assembly():
    rng = np.random.default_rng(54)
    sys = random_system(rng, 5)
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    expand_galerkin(state, at_csc, 1.2)
    model = _project(sys, state)
    p_red = solve_dense_are(model.a, model.b, model.c, sys.r_weight)
    _, tail_coeffs = relation_tail(sys.a, state, model.a)
    cheap = galerkin_residual_norm(p_red, tail_coeffs)
    explicit = explicit_residual_norm(sys, state.w, p_red)
    assert abs(cheap - explicit) <= 1e-8 * explicit


def test_pg_residual_orthonormal_degenerates_to_galerkin():
    rng = np.random.default_rng(55)
    p_red = rng.standard_normal((3, 3))
    p_red = p_red + p_red.T
    tail = rng.standard_normal((3, 1))
    r_ext = np.eye(4)
    assert pg_residual_norm(p_red, tail, r_ext) == pytest.approx(
        galerkin_residual_norm(p_red, tail)
    )


def test_pg_residual_zero_core():
    assert pg_residual_norm(np.zeros((2, 2)), np.ones((2, 1)), np.eye(3)) == 0.0


def test_pg_residual_rejects_stale_factor():
    with pytest.raises(ValueError, match="stale"):
        pg_residual_norm(np.eye(2), np.ones((2, 1)), np.eye(5))


def test_pg_residual_matches_explicit_assembly():
    rng = np.random.default_rng(56)
    sys = random_system(rng, 5)
    state = seed_petrov(sys.b, sys.c)
    at_csc = sys.a.T.tocsc()
    a_csc = sys.a.tocsc()
    expand_petrov(state, at_csc, a_csc, 1.7, iteration=1)
    model = _project(sys, state)
    p_red = solve_dense_are(model.a, model.b, model.c, sys.r_weight)
    tail_dirs, tail_coeffs = relation_tail(sys.a, state, model.a)
    ext = qr_append(state.wq, tail_dirs, rtol=1e-15)
    cheap = pg_residual_norm(p_red, tail_coeffs, ext.r)
    explicit = explicit_residual_norm(sys, state.w, p_red)
    assert abs(cheap - explicit) <= 1e-8 * explicit


def test_gark_scalar_converges_immediately():
    sys = make_system([[-1.0]], [1.0], [1.0])
    result = gark(sys, tol=1e-8, r_max=5)
    assert result.model.order == 1
    assert result.solution.p[0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-10)
    assert result.solution.residual <= 1e-12


def test_gark_converges_with_invariant_checks():
    rng = np.random.default_rng(57)
    sys = random_system(rng, 30)
    result = gark(sys, tol=1e-9, r_max=30, check_invariants=True)
    assert result.solution.residual <= 1e-9
    assert result.history.residual_monotone(window=3)
    # lifted solution against the dense reference
    p_ref = solve_dense_are(sys.dense_a(), sys.b, sys.c, sys.r_weight)
    lifted = result.solution.lifted()
    assert np.linalg.norm(lifted - p_ref) <= 1e-6 * np.linalg.norm(p_ref)


def test_gark_shifts_real_for_symmetric_matrix():
    rng = np.random.default_rng(58)
    g = rng.standard_normal((20, 20))
    a = -(g @ g.T) / 20 - 0.3 * np.eye(20)
    sys = make_system(a, rng.standard_normal(20), rng.standard_normal(20))
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    for it in range(6):
        model = _project(sys, state)
        ritz = eigenvalues(model.a)
        sigma = next_shift(ritz, state.shifts)
        expand_galerkin(state, at_csc, sigma)
    assert all(s.imag == 0.0 for s in state.shifts)
    assert all(s.real > 0.0 for s in state.shifts)


def test_pgark_degenerates_to_gark_for_symmetric_c_equals_bt():
    rng = np.random.default_rng(59)
    g = rng.standard_normal((16, 16))
    a = -(g @ g.T) / 16 - 0.4 * np.eye(16)
    b = rng.standard_normal((16, 1))
    sys = make_system(a, b, b.T)
    res_g = gark(sys, tol=1e-9, r_max=20)
    res_pg = pgark(sys, tol=1e-9, r_max=20)
    assert res_g.history.orders == res_pg.history.orders
    for rg, rp in zip(res_g.history.residuals, res_pg.history.residuals):
        assert abs(rg - rp) <= 1e-8 * max(rg, 1e-30)


def test_pgark_breakdown_on_orthogonal_seed_pair():
    # disjoint single-node actuator and sensor give C B = 0
    a = np.diag([-1.0, -2.0, -3.0])
    b = np.array([[1.0], [0.0], [0.0]])
    c = np.array([[0.0, 0.0, 1.0]])
    sys = make_system(a, b, c)
    with pytest.raises(KrylovBreakdownError, match="serious breakdown") as err:
        pgark(sys, tol=1e-8, r_max=10)
    assert err.value.iteration == 1


def test_pgark_biorthogonality_tracked_during_run():
    rng = np.random.default_rng(60)
    sys = random_system(rng, 24)
    result = pgark(sys, tol=1e-9, r_max=24, check_invariants=True)
    assert result.solution.residual <= 1e-9
    assert result.model.biorthogonality_defect() <= 1e-8


def test_cheap_residuals_match_explicit_along_runs():
    rng = np.random.default_rng(61)
    for trial in range(3):
        n = int(rng.integers(8, 30))
        sys = random_system(rng, n)
        for driver in (gark, pgark):
            result = driver(sys, tol=1e-8, r_max=n)
            explicit = explicit_residual_norm(sys, result.model.w, result.solution.p)
            cheap_abs = result.solution.residual * np.linalg.norm(sys.c) ** 2
            floor = 1e-11 * np.linalg.norm(sys.c) ** 2
            if explicit <= floor and cheap_abs <= floor:
                continue  # both formulas bottomed out at roundoff
            assert abs(cheap_abs - explicit) <= 1e-6 * explicit


def test_gark_history_orders_strictly_increase():
    rng = np.random.default_rng(62)
    sys = random_system(rng, 18)
    result = gark(sys, tol=1e-10, r_max=18)
    orders = result.history.orders
    assert all(b > a for a, b in zip(orders, orders[1:]))


def rotational_system(rng, n):
    """Passive matrix with heavily complex spectrum (rotational blocks)."""
    a = np.zeros((n, n))
    for j in range(n // 2):
        w = 2.0 + 3.0 * j
        a[2 * j:2 * j + 2, 2 * j:2 * j + 2] = [[-0.5 - 0.1 * j, w], [-w, -0.5 - 0.1 * j]]
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = q @ a @ q.T
    return make_system(a, rng.standard_normal(n), rng.standard_normal(n))


def test_complex_shifts_expand_in_real_arithmetic():
    rng = np.random.default_rng(63)
    sys = rotational_system(rng, 24)
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    from riccati_mor.krylov import _initial_shift, _project

    for it in range(1, 9):
        model = _project(sys, state)
        ritz = eigenvalues(model.a)
        sigma = _initial_shift(ritz) if it == 1 else next_shift(ritz, state.shifts)
        expand_galerkin(state, at_csc, sigma)
    assert any(s.imag != 0 for s in state.shifts)
    for s in state.shifts:
        assert s.real > 0
        if s.imag != 0:
            assert s.conjugate() in state.shifts
    assert np.isrealobj(state.w)
    assert np.linalg.norm(state.w.T @ state.w - np.eye(state.order)) <= 1e-10


def test_gark_converges_on_rotational_spectrum():
    rng = np.random.default_rng(63)
    sys = rotational_system(rng, 24)
    result = gark(sys, tol=1e-9, r_max=24, check_invariants=True)
    assert result.solution.residual <= 1e-9


def test_pgark_on_rotational_spectrum_converges_or_reports():
    from riccati_mor.errors import NotConvergedError, PgIllPosedError

    rng = np.random.default_rng(63)
    sys = rotational_system(rng, 24)
    try:
        result = pgark(sys, tol=1e-9, r_max=24)
        assert result.solution.residual <= 1e-9
    except (PgIllPosedError, KrylovBreakdownError, NotConvergedError) as exc:
        assert exc.history is not None  # partial history for the harness


def test_gark_b_variant_shifts_converge():
    rng = np.random.default_rng(64)
    sys = random_system(rng, 20)
    plain = gark(sys, tol=1e-9, r_max=20)
    variant = gark(sys, tol=1e-9, r_max=20, use_b_variant=True)
    assert variant.solution.residual <= 1e-9
    assert variant.model.order <= 20 and plain.model.order <= 20


def test_gark_shift_sequence_on_diffusion_problem():
    # symmetric diffusion operator: real shifts inside the mirrored spectrum
    from riccati_mor.krylov import _initial_shift, _project
    from riccati_mor.problems import PdeConfig, Rect, assemble_system

    cfg = PdeConfig(
        epsilon=1.0, gamma=0.0,
        domain=Rect(0.0, 1.0, 0.0, 1.0),
        omega_b=Rect(0.2, 0.8, 0.2, 0.8),
        omega_c=Rect(0.1, 0.9, 0.1, 0.9),
        dx=0.1,
    )
    sys = assemble_system(cfg)
    lam = np.abs(np.linalg.eigvalsh(sys.dense_a()))
    at_csc = sys.a.T.tocsc()
    state = seed_galerkin(sys.c)
    for it in range(1, 15):
        model = _project(sys, state)
        ritz = eigenvalues(model.a)
        sigma = _initial_shift(ritz) if it == 1 else next_shift(ritz, state.shifts)
        expand_galerkin(state, at_csc, sigma)
    assert all(s.imag == 0 for s in state.shifts)
    assert all(lam.min() - 1e-9 <= s.real <= lam.max() + 1e-9 for s in state.shifts)
