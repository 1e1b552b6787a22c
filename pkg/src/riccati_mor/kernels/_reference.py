"""Pure numpy implementation of the dense kernel hot loops.

This module is the fallback twin of the compiled extension
``riccati_mor.kernels._core``: same algorithms, same contracts, numpy
slicing instead of C loops. Everything here works on float64 C-contiguous
arrays and mutates its ``h``/``q`` arguments in place where documented.
"""

import numpy as np

from ..errors import SchurConvergenceError, SingularLyapunovError

_EPS = np.finfo(float).eps


def hessenberg(a):
    """Reduce ``a`` to upper Hessenberg form by Householder reflections.

    Returns ``(h, q)`` with ``q`` orthogonal and ``q.T @ a @ q = h``.
    """
    h = np.array(a, dtype=float, order="C", copy=True)
    n = h.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = h[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += alpha if v[0] >= 0 else -alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= np.outer(2.0 * v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= np.outer(h[:, k + 1:] @ v, 2.0 * v)
        q[:, k + 1:] -= np.outer(q[:, k + 1:] @ v, 2.0 * v)
        h[k + 2:, k] = 0.0
    return h, q


def _unit_reflector(x):
    """Unit Householder vector mapping ``x`` onto a multiple of e1.

    Returns ``(u, beta)`` with ``(I - 2 u u.T) x = beta e1``, or ``None`` for
    a zero vector.
    """
    alpha = np.linalg.norm(x)
    if alpha == 0.0:
        return None
    v = x.astype(float).copy()
    if v[0] >= 0:
        v[0] += alpha
        beta = -alpha
    else:
        v[0] -= alpha
        beta = alpha
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return None
    return v / vnorm, beta


def _double_shift_roots(h11, h12, h21, h22):
    """Shift roots for the implicit double shift, scaled like LAPACK dlahqr.

    Real discriminant collapses both shifts onto the root closer to ``h22``.
    Returns (rt1r, rt1i, rt2r, rt2i).
    """
    s = abs(h11) + abs(h12) + abs(h21) + abs(h22)
    if s == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    h11, h12, h21, h22 = h11 / s, h12 / s, h21 / s, h22 / s
    tr = 0.5 * (h11 + h22)
    det = (h11 - tr) * (h22 - tr) - h12 * h21
    rtdisc = np.sqrt(abs(det))
    if det >= 0.0:
        return tr * s, rtdisc * s, tr * s, -rtdisc * s
    rt1 = tr + rtdisc
    rt2 = tr - rtdisc
    if abs(rt1 - h22) <= abs(rt2 - h22):
        rt2 = rt1
    else:
        rt1 = rt2
    return rt1 * s, 0.0, rt2 * s, 0.0


def _sweep_start(h, lo, hi, rt1r, rt1i, rt2r, rt2i):
    """Pick the bulge start position and its first column (dlahqr style).

    Starting below a sufficiently small interior subdiagonal keeps the shift
    information from being washed out while chasing through it.
    """
    m = hi - 2
    v = np.zeros(3)
    while m >= lo:
        h21s = h[m + 1, m]
        s = abs(h[m, m] - rt2r) + abs(rt2i) + abs(h21s)
        h21s /= s
        v[0] = (
            h21s * h[m, m + 1]
            + (h[m, m] - rt1r) * ((h[m, m] - rt2r) / s)
            - rt1i * (rt2i / s)
        )
        v[1] = h21s * (h[m, m] + h[m + 1, m + 1] - rt1r - rt2r)
        v[2] = h21s * h[m + 2, m + 1]
        norm1 = abs(v[0]) + abs(v[1]) + abs(v[2])
        v /= norm1
        if m == lo:
            break
        tst = abs(h[m, m - 1]) * (abs(v[1]) + abs(v[2]))
        ref = abs(v[0]) * (abs(h[m - 1, m - 1]) + abs(h[m, m]) + abs(h[m + 1, m + 1]))
        if tst <= _EPS * ref:
            break
        m -= 1
    return m, v


def _francis_sweep(h, q, lo, hi, m, first_col):
    """Double-shift bulge chase on rows m..hi of the active block [lo, hi]."""
    n = h.shape[0]
    for k in range(m, hi):
        nr = min(3, hi - k + 1)
        if k > m:
            x = h[k:k + nr, k - 1].copy()
        else:
            x = first_col[:nr].copy()
        refl = _unit_reflector(x)
        if refl is None:
            continue
        u, beta = refl
        if k > m:
            h[k, k - 1] = beta
            h[k + 1, k - 1] = 0.0
            if k < hi - 1:
                h[k + 2, k - 1] = 0.0
        elif m > lo:
            # bulge introduced mid-block: rows below carry exact zeros in
            # column m-1, so only the row-m component survives
            h[k, k - 1] *= 1.0 - 2.0 * u[0] * u[0]
        blk = h[k:k + nr, k:]
        blk -= np.outer(2.0 * u, u @ blk)
        rend = min(hi, k + nr) + 1
        blk = h[:rend, k:k + nr]
        blk -= np.outer(blk @ u, 2.0 * u)
        qblk = q[:, k:k + nr]
        qblk -= np.outer(qblk @ u, 2.0 * u)


def _standardize_2x2(h, q, i):
    """Rotate the isolated 2x2 diagonal block at (i, i) into standard form.

    Real eigenvalues: the block becomes upper triangular. Complex pair: the
    block gets equal diagonal entries (eigenvalues p +/- sqrt(-bc) i).
    """
    n = h.shape[0]
    a, b = h[i, i], h[i, i + 1]
    c, d = h[i + 1, i], h[i + 1, i + 1]
    if c == 0.0:
        return
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0.0:
        # real pair: rotate an eigenvector into the first coordinate
        sq = np.sqrt(disc)
        half = 0.5 * (a + d)
        lam = half + sq if half >= 0 else half - sq
        # pick the better-conditioned eigenvector representation
        v1 = np.array([b, lam - a])
        v2 = np.array([lam - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        nv = np.linalg.norm(v)
        if nv == 0.0:
            v = np.array([1.0, 0.0])
            nv = 1.0
        cs, sn = v[0] / nv, v[1] / nv
    else:
        # complex pair: zero the diagonal difference
        theta = 0.5 * np.arctan2(d - a, b + c) if (b + c) != 0.0 or a != d else 0.0
        cs, sn = np.cos(theta), np.sin(theta)
    g = np.array([[cs, -sn], [sn, cs]])
    h[i:i + 2, i:] = g.T @ h[i:i + 2, i:]
    h[:i + 2, i:i + 2] = h[:i + 2, i:i + 2] @ g
    q[:, i:i + 2] = q[:, i:i + 2] @ g
    if disc >= 0.0:
        h[i + 1, i] = 0.0


def _find_deflation(h, hi, smlnum):
    """Smallest lo so that [lo, hi] is unreduced (Ahues-Tisseur test)."""
    n = h.shape[0]
    k = hi
    while k > 0:
        sub = abs(h[k, k - 1])
        if sub <= smlnum:
            break
        tst = abs(h[k - 1, k - 1]) + abs(h[k, k])
        if tst == 0.0:
            if k - 2 >= 0:
                tst += abs(h[k - 1, k - 2])
            if k + 1 < n:
                tst += abs(h[k + 1, k])
        if sub <= _EPS * tst:
            ab = max(sub, abs(h[k - 1, k]))
            ba = min(sub, abs(h[k - 1, k]))
            aa = max(abs(h[k, k]), abs(h[k - 1, k - 1] - h[k, k]))
            bb = min(abs(h[k, k]), abs(h[k - 1, k - 1] - h[k, k]))
            s = aa + ab
            if ba * (ab / s) <= max(smlnum, _EPS * (bb * (aa / s))):
                break
        k -= 1
    return k


def francis_schur(a, max_sweeps=None, exc_every=10):
    """Real Schur decomposition by the implicit double-shift QR iteration.

    Returns ``(t, q)`` with ``q`` orthogonal and ``q.T @ a @ q = t`` quasi
    upper triangular (1x1 and 2x2 diagonal blocks). Raises
    :class:`SchurConvergenceError` after ``30 n`` sweeps (or ``max_sweeps``).
    """
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    h, q = hessenberg(a)
    if n == 1:
        return h, q
    budget = 30 * n if max_sweeps is None else max_sweeps
    smlnum = np.finfo(float).tiny * (n / _EPS)
    total = 0
    stalled = 0
    hi = n - 1
    while hi > 0:
        lo = _find_deflation(h, hi, smlnum)
        if lo > 0:
            h[lo, lo - 1] = 0.0
        if lo == hi:
            hi -= 1
            stalled = 0
            continue
        if lo == hi - 1:
            _standardize_2x2(h, q, lo)
            hi -= 2
            stalled = 0
            continue
        if total >= budget:
            raise SchurConvergenceError(
                "schur did not converge within {} sweeps".format(budget)
            )
        if stalled and stalled % exc_every == 0:
            # exceptional shifts centered at the corner entry (dlahqr style)
            s = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
            h11 = 0.75 * s + h[hi, hi]
            roots = _double_shift_roots(h11, -0.4375 * s, s, h11)
        else:
            roots = _double_shift_roots(
                h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi]
            )
        m, first_col = _sweep_start(h, lo, hi, *roots)
        _francis_sweep(h, q, lo, hi, m, first_col)
        total += 1
        stalled += 1
    return h, q


def schur_eigenvalues(t):
    """Eigenvalues read off the diagonal blocks of a quasi-triangular matrix."""
    n = t.shape[0]
    vals = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i == n - 1 or t[i + 1, i] == 0.0:
            vals[i] = t[i, i]
            i += 1
        else:
            a, b = t[i, i], t[i, i + 1]
            c, d = t[i + 1, i], t[i + 1, i + 1]
            half = 0.5 * (a + d)
            disc = 0.25 * (a - d) ** 2 + b * c
            if disc >= 0.0:
                sq = np.sqrt(disc)
                vals[i] = half + sq
                vals[i + 1] = half - sq
            else:
                sq = np.sqrt(-disc)
                vals[i] = half + 1j * sq
                vals[i + 1] = half - 1j * sq
            i += 2
    return vals


def _diag_blocks(t):
    """Indices (start, size) of the 1x1/2x2 diagonal blocks of ``t``."""
    n = t.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i < n - 1 and t[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def _solve_small_sylvester(tii, tjj, rhs):
    """Solve tii @ x + x @ tjj.T + rhs = 0 for block sizes <= 2."""
    p, qn = tii.shape[0], tjj.shape[0]
    lhs = np.kron(np.eye(qn), tii) + np.kron(tjj, np.eye(p))
    try:
        x = np.linalg.solve(lhs, -rhs.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunovError("singular Lyapunov operator") from exc
    return x.reshape((p, qn), order="F")


def lyap_backsub(t, c):
    """Solve ``t @ y + y @ t.T + c = 0`` for quasi upper triangular ``t``."""
    n = t.shape[0]
    y = np.zeros((n, n))
    blocks = _diag_blocks(t)
    for jb in range(len(blocks) - 1, -1, -1):
        j0, js = blocks[jb]
        j1 = j0 + js
        rhs = -c[:, j0:j1] - y[:, j1:] @ t[j0:j1, j1:].T
        tjj = t[j0:j1, j0:j1]
        for ib in range(len(blocks) - 1, -1, -1):
            i0, isz = blocks[ib]
            i1 = i0 + isz
            r = rhs[i0:i1] - t[i0:i1, i1:] @ y[i1:, j0:j1]
            y[i0:i1, j0:j1] = _solve_small_sylvester(t[i0:i1, i0:i1], tjj, -r)
    return y


def sylv_backsub(ta, tb, c):
    """Solve ``ta @ y + y @ tb + c = 0`` for quasi upper triangular factors."""
    n, m = ta.shape[0], tb.shape[0]
    y = np.zeros((n, m))
    arows = _diag_blocks(ta)
    bcols = _diag_blocks(tb)
    for jb in range(len(bcols)):
        j0, js = bcols[jb]
        j1 = j0 + js
        rhs = -c[:, j0:j1] - y[:, :j0] @ tb[:j0, j0:j1]
        tjj = tb[j0:j1, j0:j1].T
        for ib in range(len(arows) - 1, -1, -1):
            i0, isz = arows[ib]
            i1 = i0 + isz
            r = rhs[i0:i1] - ta[i0:i1, i1:] @ y[i1:, j0:j1]
            y[i0:i1, j0:j1] = _solve_small_sylvester(ta[i0:i1, i0:i1], tjj, -r)
    return y
