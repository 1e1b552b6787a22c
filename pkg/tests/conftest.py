import numpy as np
import pytest
import scipy.linalg
import scipy.sparse

from riccati_mor import kernels
from riccati_mor.problems import StateSpaceSystem


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the decorated test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


def random_stable(rng, n, margin=0.7):
    """Random dense matrix with all eigenvalues shifted into Re < -margin/2."""
    a = rng.standard_normal((n, n))
    shift = max(np.linalg.eigvals(a).real) + margin
    return a - shift * np.eye(n)


def random_passive(rng, n, margin=0.5):
    """Random matrix with negative definite symmetric part."""
    g = rng.standard_normal((n, n))
    sym = g @ g.T / n + margin * np.eye(n)
    skew = rng.standard_normal((n, n))
    skew = 0.5 * (skew - skew.T)
    return skew - sym


def haar_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def faddeev_leverrier(a):
    """Characteristic polynomial coefficients [1, c1, ..., cn] of ``a``.

    Trace-recursion oracle, independent of any eigenvalue computation.
    """
    n = a.shape[0]
    coeffs = [1.0]
    m = np.zeros_like(a)
    c = 1.0
    for k in range(1, n + 1):
        m = a @ (m + c * np.eye(n))
        c = -np.trace(m) / k
        coeffs.append(c)
    return np.array(coeffs)


def match_complex_multisets(left, right, tol):
    """Greedy nearest-neighbor matching of two complex multisets."""
    right = list(right)
    worst = 0.0
    for x in left:
        dists = [abs(x - y) for y in right]
        j = int(np.argmin(dists))
        worst = max(worst, dists[j])
        right.pop(j)
    return worst <= tol


def sparse_system(a, b, c, r=None):
    """Wrap dense triples into the sparse state-space container."""
    a = scipy.sparse.csr_matrix(np.atleast_2d(np.asarray(a, dtype=float)))
    b = np.atleast_2d(np.asarray(b, dtype=float)).reshape(a.shape[0], -1)
    c = np.atleast_2d(np.asarray(c, dtype=float)).reshape(-1, a.shape[0])
    return StateSpaceSystem(
        a=a, b=b, c=c,
        r_weight=np.eye(b.shape[1]) if r is None else np.asarray(r, dtype=float),
    )


def kron_oracle(a, q_rhs):
    """Lyapunov oracle: solve (I (x) A + A (x) I) vec(X) = -vec(Q) directly."""
    n = a.shape[0]
    lhs = np.kron(np.eye(n), a) + np.kron(a, np.eye(n))
    x = np.linalg.solve(lhs, -q_rhs.reshape(-1, order="F"))
    return x.reshape((n, n), order="F")


def hamiltonian_oracle(a, b, c, r):
    """Riccati oracle: stable invariant subspace of the Hamiltonian matrix."""
    n = a.shape[0]
    ham = np.block([
        [a, -b @ np.linalg.solve(r, b.T)],
        [-c.T @ c, -a.T],
    ])
    w, v = scipy.linalg.eig(ham)
    basis = v[:, w.real < 0]
    x, y = basis[:n], basis[n:]
    return np.real(y @ np.linalg.inv(x))


def explicit_riccati_residual(sys, w, p_red):
    """Dense n x n Riccati residual of the lifted solution (test oracle)."""
    a = sys.dense_a()
    lifted = w @ p_red @ w.T
    res = (
        a.T @ lifted
        + lifted @ a
        - lifted @ sys.b @ np.linalg.solve(sys.r_weight, sys.b.T) @ lifted
        + sys.c.T @ sys.c
    )
    return np.linalg.norm(res)
