"""Dense linear-algebra and matrix-equation kernels.

The hot loops (Schur decomposition, quasi-triangular back-substitution) run
either in the compiled extension ``_core`` or in the numpy twin
``_reference``; the backend is chosen once at import time. Set
``RICCATI_MOR_PURE_PYTHON=1`` to force the fallback, and use
:func:`use_backend` to switch temporarily (tests, benchmarks).
"""

import contextlib
import os
from typing import NamedTuple

import numpy as np

from ..errors import AreSolveError, SingularLyapunovError
from . import _reference

__all__ = [
    "SchurForm",
    "QrFactors",
    "available_backends",
    "backend_name",
    "use_backend",
    "real_schur",
    "eigenvalues",
    "solve_lyapunov",
    "solve_sylvester",
    "solve_dense_are",
    "are_residual",
    "are_residual_matrix",
    "thin_svd",
    "qr_append",
    "qr_factor",
]

_BACKENDS = {"python": _reference}
if not os.environ.get("RICCATI_MOR_PURE_PYTHON"):
    try:
        from . import _core

        _BACKENDS["compiled"] = _core
    except ImportError:
        pass

_ACTIVE = "compiled" if "compiled" in _BACKENDS else "python"


def available_backends():
    return tuple(sorted(_BACKENDS))


def backend_name():
    """Name of the kernel backend in use ('compiled' or 'python')."""
    return _ACTIVE


@contextlib.contextmanager
def use_backend(name):
    """Temporarily run the kernels on the named backend."""
    global _ACTIVE
    if name not in _BACKENDS:
        raise ValueError("unknown backend {!r}; have {}".format(name, available_backends()))
    previous = _ACTIVE
    _ACTIVE = name
    try:
        yield
    finally:
        _ACTIVE = previous


def _impl():
    return _BACKENDS[_ACTIVE]


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("{} must be square, got shape {}".format(name, a.shape))
    if not np.all(np.isfinite(a)):
        raise ValueError("{} contains non-finite entries".format(name))
    return a


class SchurForm(NamedTuple):
    """Real Schur factorization ``a = q @ t @ q.T``."""

    q: np.ndarray
    t: np.ndarray

    def eigenvalues(self):
        return _reference.schur_eigenvalues(self.t)


def real_schur(a):
    """Real Schur decomposition of a square matrix.

    Parameters
    ----------
    a : (n, n) array_like
        Finite-valued square matrix.

    Returns
    -------
    SchurForm
        ``q`` orthogonal and ``t`` quasi upper triangular with 1x1/2x2
        diagonal blocks, ``q.T @ a @ q = t``.

    Raises
    ------
    SchurConvergenceError
        If the QR iteration does not settle within 30 n sweeps.
    """
    a = _as_square(a)
    t, q = _impl().francis_schur(a)
    return SchurForm(q=q, t=t)


def eigenvalues(a):
    """Eigenvalues of a square matrix via the real Schur form."""
    return real_schur(a).eigenvalues()


def _check_lyapunov_spectrum(eigs):
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    if np.any(eigs.real >= 0.0):
        raise SingularLyapunovError(
            "singular Lyapunov operator: coefficient matrix is not stable"
        )
    sums = eigs[:, None] + eigs[None, :]
    if np.min(np.abs(sums)) <= 1e-13 * scale:
        raise SingularLyapunovError(
            "singular Lyapunov operator: eigenvalue pair sums to zero to tolerance"
        )


def solve_lyapunov(a, q_rhs, *, schur_a=None):
    """Solve the continuous Lyapunov equation ``a x + x a.T + q_rhs = 0``.

    Bartels-Stewart: real Schur form of ``a`` followed by quasi-triangular
    back-substitution. ``a`` must be stable; ``q_rhs`` symmetric. Pass the
    observability orientation by handing in ``a.T``. A precomputed
    ``SchurForm`` of ``a`` can be supplied through ``schur_a``.
    """
    a = _as_square(a, "a")
    q_rhs = _as_square(q_rhs, "q_rhs")
    if a.shape != q_rhs.shape:
        raise ValueError("a and q_rhs must have matching shapes")
    if a.shape[0] == 0:
        return np.zeros((0, 0))
    form = real_schur(a) if schur_a is None else schur_a
    _check_lyapunov_spectrum(form.eigenvalues())
    c = form.q.T @ q_rhs @ form.q
    y = _impl().lyap_backsub(form.t, c)
    x = form.q @ y @ form.q.T
    return 0.5 * (x + x.T)


def solve_sylvester(a, b, c, *, schur_a=None, schur_b=None):
    """Solve the Sylvester equation ``a x + x b + c = 0``.

    Both coefficient spectra are assumed to avoid each other's negation
    (guaranteed here by stability of both), so the operator is nonsingular.
    Cached :class:`SchurForm` factorizations can be passed in when ``a`` or
    ``b`` is reused across solves.
    """
    a = _as_square(a, "a")
    b = _as_square(b, "b")
    c = np.asarray(c, dtype=float)
    if c.shape != (a.shape[0], b.shape[0]):
        raise ValueError("c must be shaped (a rows, b cols)")
    fa = real_schur(a) if schur_a is None else schur_a
    fb = real_schur(b) if schur_b is None else schur_b
    ea, eb = fa.eigenvalues(), fb.eigenvalues()
    scale = max(1.0, np.max(np.abs(ea), initial=0.0), np.max(np.abs(eb), initial=0.0))
    if np.min(np.abs(ea[:, None] + eb[None, :])) <= 1e-13 * scale:
        raise SingularLyapunovError("singular Sylvester operator")
    ctil = fa.q.T @ c @ fb.q
    y = _impl().sylv_backsub(fa.t, fb.t, ctil)
    return fa.q @ y @ fb.q.T


def are_residual_matrix(a, b, c, r_weight, p):
    """Dense Riccati residual matrix ``a.T p + p a - p b r^-1 b.T p + c.T c``."""
    atp = a.T @ p
    pb = p @ b
    return atp + atp.T - pb @ np.linalg.solve(r_weight, pb.T) + c.T @ c


def are_residual(a, b, c, r_weight, p):
    """Frobenius norm of the Riccati residual at ``p`` (dense assembly)."""
    return float(np.linalg.norm(are_residual_matrix(a, b, c, r_weight, p)))


def _bass_stabilizing_gain(a, b, r_weight):
    """Stabilizing feedback for an unstable coefficient matrix (Bass method).

    With beta above the spectral abscissa, ``-(a + beta I)`` is stable and
    the Lyapunov solution z of ``(a + beta I) z + z (a + beta I).T =
    2 b r^{-1} b.T`` yields the stabilizing gain ``r^{-1} b.T z^{+}``:
    the closed loop satisfies ``A_cl z + z A_cl.T = -2 beta z``.
    """
    n = a.shape[0]
    beta = 1.1 * np.linalg.norm(a) + 1.0
    rhs = 2.0 * b @ np.linalg.solve(r_weight, b.T)
    z = solve_lyapunov(-(a + beta * np.eye(n)), rhs)
    gain = np.linalg.solve(r_weight, b.T) @ np.linalg.pinv(z, rcond=1e-12)
    if eigenvalues(a - b @ gain).real.max() >= 0.0:
        raise AreSolveError(
            "ARE solve failed: could not stabilize the coefficient matrix"
        )
    return gain


def solve_dense_are(a, b, c, r_weight, *, tol=1e-12, max_iter=50, with_info=False):
    """Solve ``a.T p + p a - p b r^{-1} b.T p + c.T c = 0`` for the PSD ``p``.

    Newton iteration with Lyapunov solves, started at ``p = 0`` (valid for
    stable ``a``, the standing assumption of the full-order problems).
    Obliquely projected equations can have an unstable coefficient matrix
    while still being stabilizable; that case gets a Bass-method initial
    gain before the Newton loop. Iterates one polish step past the
    tolerance so the residual lands at its roundoff floor.

    Parameters
    ----------
    a : (n, n) array_like
        System matrix, stable or at least stabilizable through ``b``.
    b : (n, m) array_like
    c : (p, n) array_like
    r_weight : (m, m) array_like
        Symmetric positive definite control weight.
    tol : float
        Relative residual target, measured against ``norm(c)**2``.
    with_info : bool
        Also return the per-iteration relative residual history.

    Raises
    ------
    AreSolveError
        On a non-stable closed-loop iterate, a non-stabilizable coefficient
        matrix, or after ``max_iter`` steps.
    """
    a = _as_square(a, "a")
    b = np.asarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    c = np.asarray(c, dtype=float)
    if c.ndim == 1:
        c = c[None, :]
    r_weight = _as_square(r_weight, "r_weight")
    n = a.shape[0]
    ctc = c.T @ c
    denom = float(np.linalg.norm(c)) ** 2
    if denom == 0.0 and eigenvalues(a).real.max() < 0.0:
        # C = 0: p = 0 is the stabilizing solution for stable a
        p = np.zeros((n, n))
        return (p, [0.0]) if with_info else p

    residuals = []
    gain = np.zeros((b.shape[1], n))
    polish = False
    best_res = np.inf
    best_p = None
    stall = 0
    for it in range(1, max_iter + 1):
        a_cl = a - b @ gain
        rhs = ctc + gain.T @ r_weight @ gain
        try:
            p = solve_lyapunov(a_cl.T, rhs)
        except SingularLyapunovError as exc:
            if it == 1:
                # unstable coefficient matrix: look for a stabilizing start
                gain = _bass_stabilizing_gain(a, b, r_weight)
                continue
            raise AreSolveError(
                "ARE solve failed: closed-loop iterate not stable at step {}".format(it),
                residual=residuals[-1] if residuals else None,
                iterations=it,
            ) from exc
        gain = np.linalg.solve(r_weight, b.T @ p)
        res = are_residual(a, b, c, r_weight, p) / denom if denom else 0.0
        residuals.append(res)
        if res < best_res:
            if res > 0.5 * best_res:
                stall += 1
            else:
                stall = 0
            best_res = res
            best_p = p
        else:
            stall += 1
        if res <= tol:
            if polish or res <= 100 * np.finfo(float).eps:
                break
            polish = True
            continue
        if stall >= 4:
            # roundoff floor of badly scaled (obliquely projected) equations
            if best_res <= 1e-6:
                p = best_p
                break
            raise AreSolveError(
                "ARE solve failed: Newton stagnated at residual {:.3e}".format(best_res),
                residual=best_res,
                iterations=it,
            )
    else:
        raise AreSolveError(
            "ARE solve failed: no convergence in {} Newton steps".format(max_iter),
            residual=residuals[-1],
            iterations=max_iter,
        )
    gain = np.linalg.solve(r_weight, b.T @ p)
    closed_eigs = eigenvalues(a - b @ gain)
    if np.any(closed_eigs.real >= 0.0):
        raise AreSolveError(
            "ARE solve failed: closed loop not stable on exit",
            residual=residuals[-1],
            iterations=len(residuals),
        )
    return (p, residuals) if with_info else p


def thin_svd(x):
    """Thin singular value decomposition ``x = u @ diag(s) @ vt``.

    Singular values come back nonincreasing; ``u``/``vt`` have orthonormal
    columns/rows. Delegates to LAPACK behind the module contract.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("svd input contains non-finite entries")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    return u, s, vt


class QrFactors(NamedTuple):
    """Growing thin QR factorization ``q @ r`` of the kept columns."""

    q: np.ndarray
    r: np.ndarray
    kept: tuple

    @property
    def deficient(self):
        return not all(self.kept)


def qr_factor(cols, *, rtol=1e-13):
    """Thin QR of a fresh column block via :func:`qr_append`."""
    cols = np.asarray(cols, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    n = cols.shape[0]
    empty = QrFactors(np.zeros((n, 0)), np.zeros((0, 0)), ())
    return qr_append(empty, cols, rtol=rtol)


def qr_append(factors, new_cols, *, rtol=1e-13):
    """Append columns to a thin QR factorization.

    Modified Gram-Schmidt with one reorthogonalization pass per column;
    cost is linear in the number of existing columns per appended column.
    Columns whose residual norm falls below ``rtol`` times their original
    norm are flagged as dependent and not admitted into ``q`` (the caller
    decides what deflation means).

    Returns
    -------
    QrFactors
        ``q`` orthonormal, ``r`` square upper triangular with
        ``q @ r`` reproducing the kept columns, and the per-column ``kept``
        flags of this append.
    """
    q, r = factors.q, factors.r
    new_cols = np.asarray(new_cols, dtype=float)
    if new_cols.ndim == 1:
        new_cols = new_cols[:, None]
    if new_cols.shape[0] != q.shape[0]:
        raise ValueError("appended columns must match the row count")
    kept = []
    for j in range(new_cols.shape[1]):
        col = new_cols[:, j].copy()
        norm0 = np.linalg.norm(col)
        coeffs = np.zeros(q.shape[1])
        for _ in range(2):
            h = q.T @ col
            col -= q @ h
            coeffs += h
        pivot = np.linalg.norm(col)
        if norm0 == 0.0 or pivot < rtol * norm0:
            kept.append(False)
            continue
        kept.append(True)
        k = q.shape[1]
        q = np.hstack([q, (col / pivot)[:, None]])
        r_new = np.zeros((k + 1, k + 1))
        r_new[:k, :k] = r
        r_new[:k, k] = coeffs
        r_new[k, k] = pivot
        r = r_new
    return QrFactors(q=q, r=r, kept=tuple(kept))
