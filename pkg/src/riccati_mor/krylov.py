"""Adaptive rational Krylov solvers for the large-scale Riccati equation.

Two reduce-while-solve strategies share the machinery here: a Galerkin
iteration on the space built from (A.T, C.T) with adaptive shifts, and a
Petrov-Galerkin variant that grows a second space from (A, B) and keeps the
two bases biorthogonal. Both monitor convergence through cheap residual
formulas based on the low-rank remainder of the projected operator.
"""

import time
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AreSolveError, KrylovBreakdownError, NotConvergedError, PgIllPosedError
from .kernels import are_residual_matrix, eigenvalues, qr_append, qr_factor, solve_dense_are, thin_svd
from .metrics import ConvergenceHistory, ConvergenceRecord, relative_residual
from .reduction import ReducedModel

__all__ = [
    "KrylovState",
    "AreSolution",
    "KrylovResult",
    "seed_galerkin",
    "seed_petrov",
    "expand_galerkin",
    "expand_petrov",
    "relation_tail",
    "galerkin_residual_norm",
    "pg_residual_norm",
    "next_shift",
    "gark",
    "pgark",
]

_BREAKDOWN_TOL = 1e-12
_NEAR_BREAKDOWN_TOL = 1e-8
_MAX_CONSECUTIVE_ILL_POSED = 8
_CONDITIONING_LIMIT = 1e3  # past this the cheap residual loses the 1e-6 match


@dataclass
class KrylovState:
    """Growing approximation space(s) with shift bookkeeping.

    ``w`` spans the search space (orthonormal columns in the Galerkin case);
    ``v`` is the Petrov-Galerkin right basis with ``w.T v = I``. ``wq``
    carries the incrementally updated QR factors of ``w`` used by the
    Petrov-Galerkin residual formula. ``shifts`` stays closed under
    conjugation so every basis is real.
    """

    w: np.ndarray
    v: Optional[np.ndarray] = None
    shifts: List[complex] = field(default_factory=list)
    last_cols: int = 0
    wq: object = None
    degraded_from: Optional[int] = None  # iteration of first near breakdown
    cond_flagged: bool = False

    @property
    def order(self):
        return self.w.shape[1]

    @property
    def petrov(self):
        return self.v is not None

    def biorthogonality_defect(self):
        if not self.petrov:
            return float(np.linalg.norm(self.w.T @ self.w - np.eye(self.order)))
        return float(np.linalg.norm(self.w.T @ self.v - np.eye(self.order)))


class AreSolution(NamedTuple):
    """Reduced Riccati solution with its relative residual and basis."""

    p: np.ndarray
    residual: float
    model: ReducedModel

    def lifted(self):
        """Dense approximation ``w p w.T`` (forms an n x n matrix)."""
        return self.model.w @ self.p @ self.model.w.T

    def lifted_gain(self, r_weight):
        return np.linalg.solve(r_weight, self.model.b.T @ self.p) @ self.model.w.T


class KrylovResult(NamedTuple):
    solution: AreSolution
    model: ReducedModel
    history: ConvergenceHistory


def _solve_shifted(op_csc, sigma, rhs):
    """Solve ``(op - sigma I) z = rhs`` with one sparse LU factorization."""
    n = op_csc.shape[0]
    if sigma.imag != 0.0:
        shifted = (op_csc - sigma * sp.identity(n, format="csc", dtype=complex)).tocsc()
    else:
        shifted = (op_csc - sigma.real * sp.identity(n, format="csc")).tocsc()
    lu = spla.splu(shifted)
    z = lu.solve(np.asarray(rhs))
    if not np.all(np.isfinite(z)):
        raise AreSolveError("shifted solve produced non-finite directions")
    return z


def _realify(z, sigma):
    """Real block spanning {z, conj(z)} for a conjugate shift pair."""
    if sigma.imag != 0.0:
        return np.hstack([z.real, z.imag]), [sigma, sigma.conjugate()]
    return np.ascontiguousarray(z.real), [complex(sigma.real)]


def seed_galerkin(c):
    """Seed the search space with the orthonormalized output directions."""
    factors = qr_factor(np.asarray(c, dtype=float).T)
    if factors.q.shape[1] == 0:
        raise ValueError("output map is zero, nothing to seed the space with")
    return KrylovState(w=factors.q, shifts=[], last_cols=factors.q.shape[1], wq=factors)


def expand_galerkin(state, at_csc, sigma):
    """One rational block step: solve against the last block, orthogonalize,
    append. Dependent columns deflate (block width shrinks permanently).

    Returns the number of columns actually added.
    """
    sigma = complex(sigma)
    block = state.w[:, state.w.shape[1] - state.last_cols:]
    z = _solve_shifted(at_csc, sigma, block)
    new_cols, used = _realify(z, sigma)
    factors = qr_append(state.wq, new_cols)
    added = factors.q.shape[1] - state.w.shape[1]
    state.wq = factors
    state.w = factors.q
    state.shifts.extend(used)
    if added:
        state.last_cols = added
    return added


def seed_petrov(b, c):
    """Biorthonormal seed pair from the input and output maps.

    Breakdown is certain when ``C B = 0``: the two seed blocks are then
    orthogonal and no biorthogonal scaling exists.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape[1] != c.shape[0]:
        raise ValueError(
            "Petrov-Galerkin pairing needs as many inputs as outputs "
            "(got m={}, p={})".format(b.shape[1], c.shape[0])
        )
    state = KrylovState(w=np.zeros((b.shape[0], 0)), v=np.zeros((b.shape[0], 0)), shifts=[])
    _biorth_append(state, c.T.copy(), b.copy(), iteration=1)
    state.wq = qr_factor(state.w)
    return state


def _biorth_append(state, zw, zv, iteration):
    """Two-sided Gram-Schmidt against the current pair, then symmetric
    scaling of the new blocks so that ``w_new.T v_new = I``."""
    w, v = state.w, state.v
    for _ in range(2):  # one reorthogonalization pass
        if w.shape[1]:
            zw = zw - w @ (v.T @ zw)
            zv = zv - v @ (w.T @ zv)
    norms_w = np.linalg.norm(zw, axis=0)
    norms_v = np.linalg.norm(zv, axis=0)
    floor = np.finfo(float).tiny
    zw = zw / np.maximum(norms_w, floor)
    zv = zv / np.maximum(norms_v, floor)
    coupling = zw.T @ zv
    u_c, s_c, vt_c = thin_svd(coupling)
    keep = s_c >= _BREAKDOWN_TOL
    if (norms_w <= floor).any() or (norms_v <= floor).any() or not keep.any():
        raise KrylovBreakdownError(
            "serious breakdown: new direction pair is numerically orthogonal",
            iteration=iteration,
        )
    if s_c[keep].min() < _NEAR_BREAKDOWN_TOL:
        warnings.warn(
            "near breakdown in biorthogonalization (coupling {:.2e}) at "
            "iteration {}".format(s_c[keep].min(), iteration),
            stacklevel=2,
        )
        if state.degraded_from is None:
            state.degraded_from = iteration
    scale = 1.0 / np.sqrt(s_c[keep])
    w_new = zw @ u_c[:, keep] * scale
    v_new = zv @ vt_c[keep].T * scale
    state.w = np.hstack([w, w_new])
    state.v = np.hstack([v, v_new])
    state.last_cols = w_new.shape[1]
    return w_new


def expand_petrov(state, at_csc, a_csc, sigma, iteration):
    """Grow both spaces with the same shift: (A.T - sigma I) feeds the
    search basis, (A - conj(sigma) I) the right basis."""
    sigma = complex(sigma)
    k = state.w.shape[1]
    wb = state.w[:, k - state.last_cols:]
    vb = state.v[:, k - state.last_cols:]
    zw = _solve_shifted(at_csc, sigma, wb)
    zv = _solve_shifted(a_csc, sigma.conjugate(), vb)
    zw, used = _realify(zw, sigma)
    zv, _ = _realify(zv, sigma.conjugate())
    w_new = _biorth_append(state, zw, zv, iteration)
    state.shifts.extend(used)
    # keep the QR factors of w in sync (never drop: w is full rank by
    # biorthogonality, a vanishing pivot is itself a breakdown)
    factors = qr_append(state.wq, w_new, rtol=1e-15)
    if not all(factors.kept):
        raise KrylovBreakdownError(
            "serious breakdown: search basis lost numerical rank",
            iteration=iteration,
        )
    state.wq = factors
    return w_new.shape[1]


def relation_tail(sys_a, state, a_red):
    """Low-rank remainder of the projected operator.

    Factors ``A.T w - w a_red.T = tail_dirs @ tail_coeffs.T`` where the
    rational space structure keeps the remainder at the block width. The
    directions come out orthonormal; the factorization is exact up to
    roundoff regardless of the numerical rank actually found.
    """
    atw = sys_a.T @ state.w
    f = atw - state.w @ a_red.T
    u, s, vt = thin_svd(f)
    if s.size == 0 or s[0] == 0.0:
        k = state.w.shape[1]
        return np.zeros((state.w.shape[0], 0)), np.zeros((k, 0))
    keep = s > 1e-13 * s[0]
    tail_dirs = u[:, keep]
    tail_coeffs = vt[keep].T * s[keep]
    return tail_dirs, tail_coeffs


def galerkin_residual_norm(p_red, tail_coeffs):
    """Riccati residual norm ``sqrt(2) * ||p_red tail_coeffs||_F`` for an
    orthonormal basis; exact at the reduced solution, never forms n x n."""
    return float(np.sqrt(2.0) * np.linalg.norm(p_red @ tail_coeffs))


def pg_residual_norm(p_red, tail_coeffs, r_ext):
    """Petrov-Galerkin residual norm through the triangular factor of the
    extended basis ``[w, tail_dirs]``; cost independent of n."""
    k = p_red.shape[0]
    q = tail_coeffs.shape[1]
    if r_ext.shape[1] != k + q or r_ext.shape[0] > k + q:
        raise ValueError(
            "stale extended QR factor: expected {0} columns, got shape {1}".format(
                k + q, r_ext.shape
            )
        )
    mid = np.zeros((k + q, k + q))
    block = p_red @ tail_coeffs
    mid[:k, k:] = block
    mid[k:, :k] = block.T
    return float(np.linalg.norm(r_ext @ mid @ r_ext.T))


def _pg_residual(state, p_red, tail_coeffs, r_ext, defect):
    """Petrov-Galerkin residual with the reduced-equation defect folded in.

    The rank-2p collapse assumes the reduced equation holds exactly; the
    Newton solver leaves a (normally negligible, occasionally floor-limited)
    defect that enters as the leading diagonal block.
    """
    k = p_red.shape[0]
    q = tail_coeffs.shape[1]
    mid = np.zeros((k + q, k + q))
    mid[:k, :k] = defect
    block = p_red @ tail_coeffs
    mid[:k, k:] = block
    mid[k:, :k] = block.T
    return float(np.linalg.norm(r_ext @ mid @ r_ext.T))


def _extended_r_factor(state, tail_dirs):
    """Triangular factor of [w, tail_dirs]: incremental append with a fresh
    rank-safe QR fallback when a tail direction lies in range(w)."""
    ext = qr_append(state.wq, tail_dirs, rtol=1e-15)
    if all(ext.kept):
        return ext.r
    return np.linalg.qr(np.hstack([state.w, tail_dirs]), mode="r")


def _hull_candidates(mirrored, points_total=200):
    """Discretized boundary of the convex hull of the mirrored Ritz set."""
    if len(mirrored) == 0:
        return np.array([])
    if len(mirrored) == 1:
        return mirrored
    spread = np.max(np.abs(mirrored.imag))
    scale = max(np.max(np.abs(mirrored)), 1.0)
    if spread <= 1e-12 * scale:
        xs = np.linspace(mirrored.real.min(), mirrored.real.max(), points_total)
        return xs.astype(complex)
    pts = np.column_stack([mirrored.real, mirrored.imag])
    try:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
    except Exception:
        order = np.argsort(mirrored.real)
        verts = pts[[order[0], order[-1]]]
    segments = []
    n_v = len(verts)
    per_edge = max(2, points_total // n_v)
    for i in range(n_v):
        a = verts[i]
        b = verts[(i + 1) % n_v]
        ts = np.linspace(0.0, 1.0, per_edge, endpoint=False)
        segments.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    edge = np.vstack(segments)
    return edge[:, 0] + 1j * edge[:, 1]


def next_shift(ritz, shifts, *, points_total=200):
    """Greedy adaptive shift on the mirrored-spectrum hull boundary.

    Maximizes ``prod |s - ritz_j| / prod |s + shift_j|`` over the boundary
    of the convex hull of the mirrored (sign-flipped) stable Ritz values.
    Complex winners imply the conjugate is used next (the expansion steps
    consume conjugate pairs jointly). Falls back to doubling the magnitude
    of the last shift when no candidate is available.
    """
    ritz = np.atleast_1d(np.asarray(ritz, dtype=complex))
    stable = ritz[ritz.real < 0]
    candidates = _hull_candidates(-stable, points_total)
    candidates = candidates[candidates.real > 0] if candidates.size else candidates
    if candidates.size == 0:
        if shifts:
            return complex(2.0 * abs(shifts[-1]))
        return 1.0 + 0.0j
    with np.errstate(divide="ignore"):
        score = np.sum(np.log(np.abs(candidates[:, None] - ritz[None, :])), axis=1)
        for s_used in shifts:
            score -= np.log(np.abs(candidates + s_used))
    best = candidates[int(np.argmax(score))]
    if abs(best.imag) <= 1e-12 * max(abs(best), 1.0):
        return complex(best.real)
    return complex(best)


def _initial_shift(ritz):
    """Mirrored mean of the seed Ritz values (real by conjugate closure)."""
    mean = -np.mean(np.asarray(ritz, dtype=complex))
    value = abs(mean.real)
    return complex(value if value > 0 else 1.0)


def _verify_convergence(sys, model, p_red, res, tol, history):
    """Confirm a tolerance crossing against the implicitly assembled
    residual (one O(n k^2) evaluation).

    The cheap formulas are exact algebra, yet their float evaluation
    degrades with the basis conditioning; a convergence claim is only
    accepted once the assembled oracle agrees. Returns the residual to
    record and whether to stop.
    """
    if res > tol:
        return res, False
    checked = relative_residual(sys, None, model.w, p_red)
    if checked <= tol:
        return checked, True
    history.events.append(
        "cheap residual {:.3e} crossed the tolerance but assembled residual "
        "is {:.3e} at order {}; continuing".format(res, checked, model.order)
    )
    return checked, False


def _note_conditioning(state, history):
    if state.cond_flagged:
        return
    r_w = state.wq.r
    if r_w.shape[0] and np.linalg.cond(r_w) > _CONDITIONING_LIMIT:
        state.cond_flagged = True
        history.events.append(
            "basis conditioning exceeded {:.0e} at order {}: cheap residual "
            "accuracy degrades from this order on".format(
                _CONDITIONING_LIMIT, state.order
            )
        )


def _record(history, state, res, t0, hook, model, p_red):
    extra = hook(model, p_red) if hook else {}
    history.append(
        ConvergenceRecord(
            order=state.order,
            residual=res,
            gain_error=extra.get("gain_error"),
            h2_error=extra.get("h2_error"),
            elapsed=time.perf_counter() - t0,
        )
    )


def _project(sys, state):
    w = state.w
    v = state.v if state.petrov else w
    return ReducedModel(v=v, w=w, a=w.T @ (sys.a @ v), b=w.T @ sys.b, c=sys.c @ v)


def _ritz_values(model, p_red, r_weight, use_b_variant):
    if use_b_variant:
        closed = model.a - model.b @ np.linalg.solve(r_weight, model.b.T @ p_red)
        return eigenvalues(closed)
    return eigenvalues(model.a)


def gark(sys, tol=1e-8, r_max=60, *, use_b_variant=False, metrics_hook=None,
         check_invariants=False):
    """Galerkin adaptive rational Krylov solution of the Riccati equation.

    Expands the search space one shifted solve at a time, projects, solves
    the reduced equation, and stops once the relative residual (cheap
    formula over ``norm(C)_F^2``) drops below ``tol``.

    Returns
    -------
    KrylovResult
        Reduced solution, reduced model, and per-iteration history.

    Raises
    ------
    NotConvergedError
        When ``r_max`` block iterations do not reach ``tol`` (history
        attached).
    AreSolveError
        When a reduced solve fails; the failing iteration is reported.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    at_csc = sys.a.T.tocsc()
    c_norm2 = float(np.linalg.norm(sys.c)) ** 2
    state = seed_galerkin(sys.c)
    history = ConvergenceHistory()
    t0 = time.perf_counter()
    for iteration in range(1, r_max + 1):
        model = _project(sys, state)
        try:
            p_red = solve_dense_are(model.a, model.b, model.c, sys.r_weight)
        except AreSolveError as exc:
            exc.iterations = iteration
            exc.history = history
            raise
        tail_dirs, tail_coeffs = relation_tail(sys.a, state, model.a)
        defect = are_residual_matrix(model.a, model.b, model.c, sys.r_weight, p_red)
        # exact identity for any p_red: the reduced-equation defect sits in
        # the w-diagonal block of the low-rank residual factorization
        res_abs = np.sqrt(
            np.linalg.norm(defect) ** 2
            + galerkin_residual_norm(p_red, tail_coeffs) ** 2
        )
        res = res_abs / c_norm2
        if check_invariants:
            _assert_invariants(sys, state, model, tail_dirs, tail_coeffs)
        res, done = _verify_convergence(sys, model, p_red, res, tol, history)
        _record(history, state, res, t0, metrics_hook, model, p_red)
        if done:
            solution = AreSolution(p=p_red, residual=res, model=model)
            return KrylovResult(solution=solution, model=model, history=history)
        ritz = _ritz_values(model, p_red, sys.r_weight, use_b_variant)
        if iteration == 1:
            sigma = _initial_shift(ritz)
        else:
            sigma = next_shift(ritz, state.shifts)
        if expand_galerkin(state, at_csc, sigma) == 0:
            raise NotConvergedError(
                "search space stagnated before reaching the tolerance",
                history=history,
            )
    raise NotConvergedError(
        "not converged within {} block iterations".format(r_max), history=history
    )


def pgark(sys, tol=1e-8, r_max=60, *, use_b_variant=False, metrics_hook=None,
          check_invariants=False):
    """Petrov-Galerkin adaptive rational Krylov solution of the Riccati
    equation; grows biorthogonal bases from (A.T, C.T) and (A, B).

    Additional failure modes compared to the Galerkin driver: serious
    breakdown of the biorthogonalization (:class:`KrylovBreakdownError`,
    certain when ``C B = 0``) and ill-posedness of the obliquely projected
    equation (:class:`PgIllPosedError`). Both carry the partial history.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    a_csc = sys.a.tocsc()
    at_csc = sys.a.T.tocsc()
    c_norm2 = float(np.linalg.norm(sys.c)) ** 2
    history = ConvergenceHistory()
    t0 = time.perf_counter()
    try:
        state = seed_petrov(sys.b, sys.c)
    except KrylovBreakdownError as exc:
        exc.history = history
        raise
    consecutive_failures = 0
    for iteration in range(1, r_max + 1):
        defect = state.biorthogonality_defect()
        if defect > 1e-8:
            raise KrylovBreakdownError(
                "biorthogonality lost ({:.2e}) at iteration {}".format(defect, iteration),
                iteration=iteration,
                history=history,
            )
        model = _project(sys, state)
        p_red = None
        try:
            p_red = solve_dense_are(model.a, model.b, model.c, sys.r_weight)
            consecutive_failures = 0
        except AreSolveError as exc:
            # a transiently ill-posed oblique projection: record and keep
            # expanding, later spaces routinely recover
            history.events.append(
                "reduced solve failed at order {}: {}".format(state.order, exc)
            )
            consecutive_failures += 1
            if consecutive_failures >= _MAX_CONSECUTIVE_ILL_POSED:
                raise PgIllPosedError(
                    "PG projected ARE ill-posed at r={} ({} consecutive failures)".format(
                        state.order, consecutive_failures
                    ),
                    iteration=iteration,
                    history=history,
                    residual=exc.residual,
                ) from exc
        if p_red is not None:
            tail_dirs, tail_coeffs = relation_tail(sys.a, state, model.a)
            defect = are_residual_matrix(model.a, model.b, model.c, sys.r_weight, p_red)
            r_ext = _extended_r_factor(state, tail_dirs)
            res = _pg_residual(state, p_red, tail_coeffs, r_ext, defect) / c_norm2
            _note_conditioning(state, history)
            if check_invariants:
                _assert_invariants(sys, state, model, tail_dirs, tail_coeffs)
            res, done = _verify_convergence(sys, model, p_red, res, tol, history)
            _record(history, state, res, t0, metrics_hook, model, p_red)
            if done:
                solution = AreSolution(p=p_red, residual=res, model=model)
                return KrylovResult(solution=solution, model=model, history=history)
            ritz = _ritz_values(model, p_red, sys.r_weight, use_b_variant)
        else:
            ritz = eigenvalues(model.a)
        if iteration == 1:
            sigma = _initial_shift(ritz)
        else:
            sigma = next_shift(ritz, state.shifts)
        try:
            added = expand_petrov(state, at_csc, a_csc, sigma, iteration)
        except KrylovBreakdownError as exc:
            exc.history = history
            raise
        if state.degraded_from == iteration:
            history.events.append(
                "near breakdown entering order {}: residual monitoring past "
                "this order is approximate".format(state.order)
            )
        if added == 0:
            raise NotConvergedError(
                "search space stagnated before reaching the tolerance",
                history=history,
            )
    raise NotConvergedError(
        "not converged within {} block iterations".format(r_max), history=history
    )


def _assert_invariants(sys, state, model, tail_dirs, tail_coeffs):
    """Debug-mode consistency checks run inside the iteration loop."""
    defect = state.biorthogonality_defect()
    limit = 1e-8 if state.petrov else 1e-10
    if defect > limit:
        raise AssertionError("basis defect {:.2e} exceeds {:.0e}".format(defect, limit))
    a_norm = spla.norm(sys.a)
    rel = sys.a.T @ state.w - state.w @ model.a.T - tail_dirs @ tail_coeffs.T
    if np.linalg.norm(rel) > 1e-8 * a_norm:
        raise AssertionError("projected-operator relation violated")
    real_shifts = [s for s in state.shifts if s.imag != 0.0]
    for s in real_shifts:
        if s.conjugate() not in state.shifts:
            raise AssertionError("shift set not closed under conjugation")
    if any(s.real <= 0 for s in state.shifts):
        raise AssertionError("shift with nonpositive real part")
