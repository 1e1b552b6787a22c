"""Projection bases computed from the dynamical system: POD and balanced
truncation, plus the generic Petrov-Galerkin reduction step."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import RankDeficiencyError
from .kernels import solve_lyapunov, thin_svd

__all__ = ["ReducedModel", "pod_basis", "BtFactors", "bt_factors", "bt_basis", "reduce"]

_BIORTH_TOL = 1e-8


@dataclass
class ReducedModel:
    """Projected state-space triple with its basis pair.

    ``a = w.T A v``, ``b = w.T B``, ``c = C v`` for biorthogonal bases
    (``w.T v = I``); the Galerkin case has ``v is w`` with orthonormal
    columns. Hankel singular values ride along for balanced truncation.
    """

    v: np.ndarray
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    hankel: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def order(self):
        return self.a.shape[0]

    def biorthogonality_defect(self):
        return float(np.linalg.norm(self.w.T @ self.v - np.eye(self.order)))

    def transfer(self, s):
        """Reduced transfer function ``c (s I - a)^{-1} b``."""
        shifted = s * np.eye(self.order) - self.a
        return self.c @ np.linalg.solve(shifted, self.b.astype(complex))


def pod_basis(snapshots, r, *, svd=None):
    """Leading ``r`` left singular vectors of the snapshot matrix.

    Returns ``(basis, singular_values)`` where the basis serves as both
    projection matrices of a Galerkin reduction. Pass a precomputed thin
    ``svd`` triple to amortize sweeps over ``r``.

    Raises
    ------
    RankDeficiencyError
        If ``r`` exceeds the numerical rank (singular values above
        ``1e-12 * s[0]``); the attainable order is attached.
    """
    u, s, _ = thin_svd(snapshots.states) if svd is None else svd
    if r < 1:
        raise ValueError("reduced order must be at least 1")
    rank = int(np.count_nonzero(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    if r > rank:
        raise RankDeficiencyError(
            "insufficient snapshot rank: requested {}, attainable {}".format(r, rank),
            attainable=rank,
        )
    return u[:, :r].copy(), s.copy()


def _psd_sqrt_factor(x):
    """Factor ``x = f f.T`` of a numerically PSD matrix via eigendecomposition.

    Discretized Gramians are routinely semidefinite, where a strict Cholesky
    factorization breaks down; negative roundoff eigenvalues are clipped.
    """
    vals, vecs = np.linalg.eigh(0.5 * (x + x.T))
    top = vals[-1] if vals.size else 0.0
    keep = vals > max(top, 0.0) * 1e-15
    return vecs[:, keep] * np.sqrt(vals[keep])


@dataclass
class BtFactors:
    """Gramian square roots and the Hankel SVD, reusable across orders."""

    reach_factor: np.ndarray
    obs_factor: np.ndarray
    u: np.ndarray
    hankel: np.ndarray
    zt: np.ndarray

    @property
    def rank(self):
        if self.hankel.size == 0 or self.hankel[0] == 0.0:
            return 0
        return int(np.count_nonzero(self.hankel > 1e-12 * self.hankel[0]))


def bt_factors(sys, *, schur_a=None):
    """Solve both Gramian equations densely and factor the Hankel operator.

    Desk-scale only: the reachability and observability Gramians come from
    dense Lyapunov solves, the Hankel operator from the product of their
    square-root factors.
    """
    a = sys.dense_a() if hasattr(sys, "dense_a") else np.asarray(sys.a, dtype=float)
    reach = solve_lyapunov(a, sys.b @ sys.b.T, schur_a=schur_a)
    obs = solve_lyapunov(a.T, sys.c.T @ sys.c)
    phi = _psd_sqrt_factor(reach)
    upsilon = _psd_sqrt_factor(obs)
    if phi.shape[1] == 0:
        raise RankDeficiencyError(
            "reachability Gramian is numerically zero, nothing to balance",
            attainable=0,
        )
    if upsilon.shape[1] == 0:
        raise RankDeficiencyError(
            "observability Gramian is numerically zero, nothing to balance",
            attainable=0,
        )
    u, s, zt = thin_svd(upsilon.T @ phi)
    return BtFactors(reach_factor=phi, obs_factor=upsilon, u=u, hankel=s, zt=zt)


def bt_basis(sys, r, *, factors=None):
    """Balanced-truncation reduced model of order ``r``.

    ``w = obs_factor u_r s_r^{-1/2}``, ``v = reach_factor z_r s_r^{-1/2}``
    followed by an exact biorthogonality correction (the raw formulas lose
    digits once trailing Hankel values approach roundoff).
    """
    if factors is None:
        factors = bt_factors(sys)
    rank = factors.rank
    if r < 1:
        raise ValueError("reduced order must be at least 1")
    if r > rank:
        raise RankDeficiencyError(
            "Hankel spectrum supports order {} at most, requested {}".format(rank, r),
            attainable=rank,
        )
    scale = 1.0 / np.sqrt(factors.hankel[:r])
    w = factors.obs_factor @ factors.u[:, :r] * scale
    v = factors.reach_factor @ factors.zt[:r].T * scale
    v = v @ np.linalg.inv(w.T @ v)
    model = reduce(sys, v, w)
    model.hankel = factors.hankel.copy()
    return model


def reduce(sys, v, w):
    """Project the system onto the biorthogonal pair ``(v, w)``.

    Requires ``w.T v = I`` to tolerance; Galerkin callers pass ``v`` twice.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.shape != w.shape:
        raise ValueError("basis shapes differ")
    r = v.shape[1]
    defect = np.linalg.norm(w.T @ v - np.eye(r))
    if defect > _BIORTH_TOL:
        raise ValueError(
            "biorthogonality violation: ||w.T v - I|| = {:.3e}".format(defect)
        )
    return ReducedModel(
        v=v,
        w=w,
        a=w.T @ (sys.a @ v),
        b=w.T @ sys.b,
        c=sys.c @ v,
    )
