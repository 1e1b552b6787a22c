"""Quality metrics for reduced LQR solutions: relative Riccati residual,
feedback-gain error, and transfer-function (H2) error."""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import SingularLyapunovError
from .kernels import SchurForm, eigenvalues, real_schur, solve_dense_are, solve_lyapunov, solve_sylvester

__all__ = [
    "ConvergenceRecord",
    "ConvergenceHistory",
    "relative_residual",
    "lift_gain",
    "gain_error",
    "h2_norm",
    "h2_error",
    "ReferenceData",
    "compute_reference",
    "reference_hook",
]


@dataclass
class ConvergenceRecord:
    """One sweep/iteration entry: reduced order, metrics, elapsed seconds."""

    order: int
    residual: float
    gain_error: Optional[float] = None
    h2_error: Optional[float] = None
    elapsed: float = 0.0


@dataclass
class ConvergenceHistory:
    records: List[ConvergenceRecord] = field(default_factory=list)
    events: List[str] = field(default_factory=list)

    def append(self, record):
        if self.records and record.order <= self.records[-1].order:
            raise ValueError("reduced order must increase along the history")
        if not np.isfinite(record.residual) or record.residual < 0:
            raise ValueError("residual must be finite and nonnegative")
        for value in (record.gain_error, record.h2_error):
            if value is not None and (not np.isfinite(value) or value < 0):
                raise ValueError("metric values must be finite and nonnegative")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def orders(self):
        return [r.order for r in self.records]

    @property
    def residuals(self):
        return [r.residual for r in self.records]

    @property
    def final(self):
        return self.records[-1] if self.records else None

    def residual_monotone(self, window=3):
        """True when no residual grows across any ``window`` consecutive rows."""
        res = self.residuals
        span = window - 1
        return all(res[i + span] <= res[i] for i in range(len(res) - span))


def relative_residual(sys, v, w, p_red):
    """Relative Riccati residual of the lifted solution ``w p_red w.T``.

    The residual matrix is assembled implicitly from tall factors (products
    with n rows only, never an n x n intermediate), normalized by
    ``norm(C)_F^2``. This is the reference metric for POD/BT sweeps and the
    oracle for the cheap Krylov formulas.
    """
    w = np.asarray(w, dtype=float)
    p_red = np.asarray(p_red, dtype=float)
    k = w.shape[1]
    if p_red.shape != (k, k):
        raise ValueError("p_red must be square with the basis column count")
    if v is not None and v is not w:
        v = np.asarray(v, dtype=float)
        if v.shape != w.shape:
            raise ValueError("basis shapes differ")
        if np.linalg.norm(w.T @ v - np.eye(k)) > 1e-6:
            raise ValueError("bases are not biorthogonal")
    atw = sys.a.T @ w
    b_red = w.T @ sys.b
    quad = b_red @ np.linalg.solve(sys.r_weight, b_red.T)
    p = sys.c.shape[0]
    tall = np.hstack([atw, w, sys.c.T])
    theta = np.zeros((2 * k + p, 2 * k + p))
    theta[:k, k:2 * k] = p_red
    theta[k:2 * k, :k] = p_red
    theta[k:2 * k, k:2 * k] = -p_red @ quad @ p_red
    theta[2 * k:, 2 * k:] = np.eye(p)
    r_fac = np.linalg.qr(tall, mode="r")
    num = np.linalg.norm(r_fac @ theta @ r_fac.T)
    return float(num) / float(np.linalg.norm(sys.c)) ** 2


def lift_gain(model, p_red, r_weight):
    """Full-state feedback gain induced by a reduced Riccati solution.

    ``K = R^{-1} b_red.T p_red w.T``; restricting it to the basis recovers
    the reduced gain (``K v = R^{-1} b_red.T p_red``).
    """
    return np.linalg.solve(r_weight, model.b.T @ p_red) @ model.w.T


def gain_error(k_tilde, k_ref):
    """Relative Frobenius error between two feedback gains."""
    denom = np.linalg.norm(k_ref)
    if denom == 0.0:
        raise ValueError("reference gain is zero")
    return float(np.linalg.norm(k_tilde - k_ref) / denom)


def _h2_from_gramian(c, gram):
    val = float(np.trace(c @ gram @ c.T))
    return np.sqrt(max(val, 0.0))


def h2_norm(sys, *, schur_a=None):
    """H2 norm via the Gramian identity ``trace(C X C.T)`` with
    ``A X + X A.T + B B.T = 0`` (dense solve, desk scale)."""
    a = sys.dense_a() if hasattr(sys, "dense_a") else np.asarray(sys.a, dtype=float)
    try:
        gram = solve_lyapunov(a, sys.b @ sys.b.T, schur_a=schur_a)
    except SingularLyapunovError as exc:
        raise ValueError("H2 norm requires a stable system") from exc
    return _h2_from_gramian(sys.c, gram)


def h2_error(sys, model, *, reference=None):
    """Relative H2 norm of the error system diag(A, a_red) with stacked
    input [B; b_red] and output [C, -c_red].

    Exploits the block structure: the (1,1) Gramian block is the full
    reachability Gramian, the (1,2) block a Sylvester solve, the (2,2)
    block a small Lyapunov solve. Returns ``None`` when the reduced matrix
    is unstable (flagged non-value; the Gramian identity does not apply).
    """
    if eigenvalues(model.a).real.max() >= 0:
        return None
    if reference is None:
        reference = _gramian_reference(sys)
    x12 = solve_sylvester(
        reference.dense_a,
        model.a.T,
        sys.b @ model.b.T,
        schur_a=reference.schur_a,
    )
    x22 = solve_lyapunov(model.a, model.b @ model.b.T)
    err_sq = (
        reference.h2**2
        - 2.0 * float(np.trace(sys.c @ x12 @ model.c.T))
        + float(np.trace(model.c @ x22 @ model.c.T))
    )
    return float(np.sqrt(max(err_sq, 0.0)) / reference.h2)


@dataclass
class ReferenceData:
    """Expensive full-order quantities, computed once per system instance."""

    dense_a: np.ndarray
    schur_a: SchurForm
    p: Optional[np.ndarray]
    gain: Optional[np.ndarray]
    reach_gram: np.ndarray
    h2: float
    elapsed: float = 0.0


def _gramian_reference(sys):
    a = sys.dense_a()
    form = real_schur(a)
    gram = solve_lyapunov(a, sys.b @ sys.b.T, schur_a=form)
    return ReferenceData(
        dense_a=a,
        schur_a=form,
        p=None,
        gain=None,
        reach_gram=gram,
        h2=_h2_from_gramian(sys.c, gram),
    )


def compute_reference(sys, *, with_are=True):
    """Dense reference data: Schur form, reachability Gramian, H2 norm, and
    (optionally) the full-order Riccati solution with its feedback gain."""
    start = time.perf_counter()
    ref = _gramian_reference(sys)
    if with_are:
        ref.p = solve_dense_are(sys.dense_a(), sys.b, sys.c, sys.r_weight)
        ref.gain = np.linalg.solve(sys.r_weight, sys.b.T @ ref.p)
    ref.elapsed = time.perf_counter() - start
    return ref


def reference_hook(sys, reference):
    """Per-iteration metric callback wired into the Krylov drivers."""

    def hook(model, p_red):
        out = {}
        if reference is not None and reference.gain is not None:
            out["gain_error"] = gain_error(
                lift_gain(model, p_red, sys.r_weight), reference.gain
            )
        if reference is not None:
            out["h2_error"] = h2_error(sys, model, reference=reference)
        return out

    return hook
