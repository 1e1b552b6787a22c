# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the dense kernel hot loops in ``_reference``.

Same algorithms and contracts, C loops instead of numpy slicing. See
``_reference.py`` for the documented reference implementation.
"""

import numpy as np

from libc.math cimport atan2, cos, fabs, hypot, sin, sqrt

from ..errors import SchurConvergenceError, SingularLyapunovError

cdef double _EPS = np.finfo(float).eps


cdef void _house_vec(double* v, int m) noexcept nogil:
    """Overwrite v (length m) with the unit Householder vector for v -> e1."""
    cdef double alpha = 0.0, nv = 0.0
    cdef int i
    for i in range(m):
        alpha += v[i] * v[i]
    alpha = sqrt(alpha)
    if alpha == 0.0:
        for i in range(m):
            v[i] = 0.0
        return
    if v[0] >= 0:
        v[0] += alpha
    else:
        v[0] -= alpha
    for i in range(m):
        nv += v[i] * v[i]
    nv = sqrt(nv)
    if nv == 0.0:
        return
    for i in range(m):
        v[i] /= nv


cdef void _rows_reflect(double[:, ::1] h, double* v, int m, int r0, int c0, int c1) noexcept nogil:
    """h[r0:r0+m, c0:c1] -= 2 v (v^T h[...])."""
    cdef int i, j
    cdef double acc
    for j in range(c0, c1):
        acc = 0.0
        for i in range(m):
            acc += v[i] * h[r0 + i, j]
        acc *= 2.0
        for i in range(m):
            h[r0 + i, j] -= v[i] * acc


cdef void _cols_reflect(double[:, ::1] h, double* v, int m, int c0, int r0, int r1) noexcept nogil:
    """h[r0:r1, c0:c0+m] -= 2 (h[...] v) v^T."""
    cdef int i, j
    cdef double acc
    for i in range(r0, r1):
        acc = 0.0
        for j in range(m):
            acc += h[i, c0 + j] * v[j]
        acc *= 2.0
        for j in range(m):
            h[i, c0 + j] -= acc * v[j]


def hessenberg(a):
    """Householder reduction to upper Hessenberg form; returns (h, q)."""
    h_arr = np.array(a, dtype=float, order="C", copy=True)
    cdef Py_ssize_t n = h_arr.shape[0]
    q_arr = np.eye(n)
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] q = q_arr
    cdef int k, i, m
    cdef double alpha, nv
    vbuf_arr = np.zeros(n)
    cdef double[::1] vbuf = vbuf_arr
    with nogil:
        for k in range(n - 2):
            m = n - k - 1
            alpha = 0.0
            for i in range(m):
                vbuf[i] = h[k + 1 + i, k]
                alpha += vbuf[i] * vbuf[i]
            alpha = sqrt(alpha)
            if alpha == 0.0:
                continue
            if vbuf[0] >= 0:
                vbuf[0] += alpha
            else:
                vbuf[0] -= alpha
            nv = 0.0
            for i in range(m):
                nv += vbuf[i] * vbuf[i]
            nv = sqrt(nv)
            if nv == 0.0:
                continue
            for i in range(m):
                vbuf[i] /= nv
            _rows_reflect(h, &vbuf[0], m, k + 1, k, n)
            _cols_reflect(h, &vbuf[0], m, k + 1, 0, n)
            _cols_reflect(q, &vbuf[0], m, k + 1, 0, n)
            for i in range(k + 2, n):
                h[i, k] = 0.0
    return h_arr, q_arr


cdef void _double_shift_roots(double h11, double h12, double h21, double h22,
                              double* rt) noexcept nogil:
    """Shift roots like LAPACK dlahqr; rt = [rt1r, rt1i, rt2r, rt2i]."""
    cdef double s, tr, det, rtdisc, rt1, rt2
    s = fabs(h11) + fabs(h12) + fabs(h21) + fabs(h22)
    if s == 0.0:
        rt[0] = rt[1] = rt[2] = rt[3] = 0.0
        return
    h11 /= s
    h12 /= s
    h21 /= s
    h22 /= s
    tr = 0.5 * (h11 + h22)
    det = (h11 - tr) * (h22 - tr) - h12 * h21
    rtdisc = sqrt(fabs(det))
    if det >= 0.0:
        rt[0] = tr * s
        rt[1] = rtdisc * s
        rt[2] = tr * s
        rt[3] = -rtdisc * s
        return
    rt1 = tr + rtdisc
    rt2 = tr - rtdisc
    if fabs(rt1 - h22) <= fabs(rt2 - h22):
        rt2 = rt1
    else:
        rt1 = rt2
    rt[0] = rt1 * s
    rt[1] = 0.0
    rt[2] = rt2 * s
    rt[3] = 0.0


cdef int _sweep_start(double[:, ::1] h, int lo, int hi, double* rt,
                      double* first_col) noexcept nogil:
    """Bulge start position below small interior subdiagonals (dlahqr)."""
    cdef int m = hi - 2
    cdef double h21s, s, norm1, tst, ref
    while m >= lo:
        h21s = h[m + 1, m]
        s = fabs(h[m, m] - rt[2]) + fabs(rt[3]) + fabs(h21s)
        h21s = h21s / s
        first_col[0] = (h21s * h[m, m + 1]
                        + (h[m, m] - rt[0]) * ((h[m, m] - rt[2]) / s)
                        - rt[1] * (rt[3] / s))
        first_col[1] = h21s * (h[m, m] + h[m + 1, m + 1] - rt[0] - rt[2])
        first_col[2] = h21s * h[m + 2, m + 1]
        norm1 = fabs(first_col[0]) + fabs(first_col[1]) + fabs(first_col[2])
        first_col[0] /= norm1
        first_col[1] /= norm1
        first_col[2] /= norm1
        if m == lo:
            break
        tst = fabs(h[m, m - 1]) * (fabs(first_col[1]) + fabs(first_col[2]))
        ref = fabs(first_col[0]) * (fabs(h[m - 1, m - 1]) + fabs(h[m, m])
                                    + fabs(h[m + 1, m + 1]))
        if tst <= _EPS * ref:
            break
        m -= 1
    return m


cdef void _francis_sweep(double[:, ::1] h, double[:, ::1] q, int lo, int hi,
                         int m, double* first_col, int n) noexcept nogil:
    cdef double v[3]
    cdef double alpha, beta
    cdef int k, nr, i, rend
    for k in range(m, hi):
        nr = 3 if hi - k + 1 > 3 else hi - k + 1
        if k > m:
            for i in range(nr):
                v[i] = h[k + i, k - 1]
        else:
            for i in range(nr):
                v[i] = first_col[i]
        alpha = 0.0
        for i in range(nr):
            alpha += v[i] * v[i]
        alpha = sqrt(alpha)
        if alpha == 0.0:
            continue
        beta = -alpha if v[0] >= 0 else alpha
        _house_vec(v, nr)
        if v[0] == 0.0 and v[1] == 0.0 and (nr < 3 or v[2] == 0.0):
            continue
        if k > m:
            h[k, k - 1] = beta
            h[k + 1, k - 1] = 0.0
            if k < hi - 1:
                h[k + 2, k - 1] = 0.0
        elif m > lo:
            h[k, k - 1] *= 1.0 - 2.0 * v[0] * v[0]
        _rows_reflect(h, v, nr, k, k, n)
        rend = (hi if hi < k + nr else k + nr) + 1
        _cols_reflect(h, v, nr, k, 0, rend)
        _cols_reflect(q, v, nr, k, 0, n)


cdef void _standardize_2x2(double[:, ::1] h, double[:, ::1] q, int i, int n) noexcept nogil:
    cdef double a = h[i, i], b = h[i, i + 1]
    cdef double c = h[i + 1, i], d = h[i + 1, i + 1]
    cdef double disc, sq, half, lam, n1, n2, nv, cs, sn, theta
    cdef double v0, v1, t0, t1
    cdef int j
    cdef bint real_pair
    if c == 0.0:
        return
    disc = 0.25 * (a - d) * (a - d) + b * c
    if disc >= 0.0:
        real_pair = True
        sq = sqrt(disc)
        half = 0.5 * (a + d)
        lam = half + sq if half >= 0 else half - sq
        v0 = b
        v1 = lam - a
        n1 = hypot(v0, v1)
        t0 = lam - d
        t1 = c
        n2 = hypot(t0, t1)
        if n2 > n1:
            v0 = t0
            v1 = t1
            n1 = n2
        if n1 == 0.0:
            v0 = 1.0
            v1 = 0.0
            n1 = 1.0
        cs = v0 / n1
        sn = v1 / n1
    else:
        real_pair = False
        if (b + c) != 0.0 or a != d:
            theta = 0.5 * atan2(d - a, b + c)
        else:
            theta = 0.0
        cs = cos(theta)
        sn = sin(theta)
    # rows i, i+1 from column i: G^T block
    for j in range(i, n):
        t0 = h[i, j]
        t1 = h[i + 1, j]
        h[i, j] = cs * t0 + sn * t1
        h[i + 1, j] = -sn * t0 + cs * t1
    for j in range(i + 2):
        t0 = h[j, i]
        t1 = h[j, i + 1]
        h[j, i] = cs * t0 + sn * t1
        h[j, i + 1] = -sn * t0 + cs * t1
    for j in range(n):
        t0 = q[j, i]
        t1 = q[j, i + 1]
        q[j, i] = cs * t0 + sn * t1
        q[j, i + 1] = -sn * t0 + cs * t1
    if real_pair:
        h[i + 1, i] = 0.0


cdef int _find_deflation(double[:, ::1] h, int hi, double smlnum, int n) noexcept nogil:
    cdef int k = hi
    cdef double sub, tst, ab, ba, aa, bb, s
    while k > 0:
        sub = fabs(h[k, k - 1])
        if sub <= smlnum:
            break
        tst = fabs(h[k - 1, k - 1]) + fabs(h[k, k])
        if tst == 0.0:
            if k - 2 >= 0:
                tst += fabs(h[k - 1, k - 2])
            if k + 1 < n:
                tst += fabs(h[k + 1, k])
        if sub <= _EPS * tst:
            # Ahues-Tisseur refinement
            ab = sub if sub > fabs(h[k - 1, k]) else fabs(h[k - 1, k])
            ba = sub if sub < fabs(h[k - 1, k]) else fabs(h[k - 1, k])
            aa = fabs(h[k, k])
            bb = fabs(h[k - 1, k - 1] - h[k, k])
            if aa < bb:
                aa, bb = bb, aa
            s = aa + ab
            tst = _EPS * (bb * (aa / s))
            if tst < smlnum:
                tst = smlnum
            if ba * (ab / s) <= tst:
                break
        k -= 1
    return k


def francis_schur(a, max_sweeps=None, int exc_every=10):
    """Real Schur decomposition; see the reference twin for the contract."""
    cdef Py_ssize_t n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    h_arr, q_arr = hessenberg(a)
    if n == 1:
        return h_arr, q_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] q = q_arr
    cdef int budget = 30 * n if max_sweeps is None else <int> max_sweeps
    cdef double smlnum = np.finfo(float).tiny * (n / _EPS)
    cdef int total = 0, stalled = 0, hi = n - 1, lo, m
    cdef double s, h11
    cdef double rt[4]
    cdef double first_col[3]
    cdef bint fail = False
    with nogil:
        while hi > 0:
            lo = _find_deflation(h, hi, smlnum, n)
            if lo > 0:
                h[lo, lo - 1] = 0.0
            if lo == hi:
                hi -= 1
                stalled = 0
                continue
            if lo == hi - 1:
                _standardize_2x2(h, q, lo, n)
                hi -= 2
                stalled = 0
                continue
            if total >= budget:
                fail = True
                break
            if stalled != 0 and stalled % exc_every == 0:
                # exceptional shifts centered at the corner entry
                s = fabs(h[hi, hi - 1]) + fabs(h[hi - 1, hi - 2])
                h11 = 0.75 * s + h[hi, hi]
                _double_shift_roots(h11, -0.4375 * s, s, h11, rt)
            else:
                _double_shift_roots(h[hi - 1, hi - 1], h[hi - 1, hi],
                                    h[hi, hi - 1], h[hi, hi], rt)
            m = _sweep_start(h, lo, hi, rt, first_col)
            _francis_sweep(h, q, lo, hi, m, first_col, n)
            total += 1
            stalled += 1
    if fail:
        raise SchurConvergenceError(
            "schur did not converge within {} sweeps".format(budget))
    return h_arr, q_arr


def schur_eigenvalues(t):
    from . import _reference
    return _reference.schur_eigenvalues(t)


cdef int _solve_small(double* m, double* rhs, int k) noexcept nogil:
    """Gaussian elimination with partial pivoting on a k x k system (k <= 4).

    Overwrites rhs with the solution; returns nonzero on singularity.
    """
    cdef int i, j, piv, col
    cdef double big, tmp, f
    for col in range(k):
        piv = col
        big = fabs(m[col * k + col])
        for i in range(col + 1, k):
            tmp = fabs(m[i * k + col])
            if tmp > big:
                big = tmp
                piv = i
        if big == 0.0:
            return 1
        if piv != col:
            for j in range(k):
                tmp = m[col * k + j]
                m[col * k + j] = m[piv * k + j]
                m[piv * k + j] = tmp
            tmp = rhs[col]
            rhs[col] = rhs[piv]
            rhs[piv] = tmp
        for i in range(col + 1, k):
            f = m[i * k + col] / m[col * k + col]
            if f != 0.0:
                for j in range(col, k):
                    m[i * k + j] -= f * m[col * k + j]
                rhs[i] -= f * rhs[col]
    for col in range(k - 1, -1, -1):
        tmp = rhs[col]
        for j in range(col + 1, k):
            tmp -= m[col * k + j] * rhs[j]
        rhs[col] = tmp / m[col * k + col]
    return 0


cdef int _small_sylvester(double[:, ::1] y, double[:, ::1] t, double[:, ::1] tb,
                          int i0, int isz, int j0, int jsz,
                          double* rhs, bint second_transposed) noexcept nogil:
    """Solve t[I,I] x + x s = -rhs and store x into y[I, J].

    s is tb[J,J].T when second_transposed (Lyapunov orientation, tb = t),
    else tb[J,J] (Sylvester). rhs is column-major of size isz*jsz.
    """
    cdef double m[16]
    cdef double r[4]
    cdef int k = isz * jsz, i, j, p, qn
    cdef double val
    for i in range(k):
        r[i] = -rhs[i]
    # vec(x) column-major: m = kron(I_jsz, t_II) + kron(s.T, I_isz)
    for i in range(k):
        for j in range(k):
            m[i * k + j] = 0.0
    for p in range(jsz):
        for i in range(isz):
            for j in range(isz):
                m[(p * isz + i) * k + (p * isz + j)] += t[i0 + i, i0 + j]
    for p in range(jsz):
        for qn in range(jsz):
            if second_transposed:
                # s = tb_JJ.T, so s.T = tb_JJ
                val = tb[j0 + p, j0 + qn]
            else:
                val = tb[j0 + qn, j0 + p]
            for i in range(isz):
                m[(p * isz + i) * k + (qn * isz + i)] += val
    if _solve_small(m, r, k):
        return 1
    for j in range(jsz):
        for i in range(isz):
            y[i0 + i, j0 + j] = r[j * isz + i]
    return 0


cdef _blocks(double[:, ::1] t):
    cdef int n = t.shape[0], i = 0
    starts = []
    sizes = []
    while i < n:
        if i < n - 1 and t[i + 1, i] != 0.0:
            starts.append(i)
            sizes.append(2)
            i += 2
        else:
            starts.append(i)
            sizes.append(1)
            i += 1
    return np.asarray(starts, dtype=np.int32), np.asarray(sizes, dtype=np.int32)


def lyap_backsub(t_in, c_in):
    """Solve t y + y t.T + c = 0 for quasi upper triangular t."""
    t_arr = np.ascontiguousarray(t_in, dtype=float)
    c_arr = np.ascontiguousarray(c_in, dtype=float)
    cdef double[:, ::1] t = t_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t n = t_arr.shape[0]
    y_arr = np.zeros((n, n))
    cdef double[:, ::1] y = y_arr
    starts_arr, sizes_arr = _blocks(t)
    cdef int[::1] starts = starts_arr
    cdef int[::1] sizes = sizes_arr
    cdef int nb = starts_arr.shape[0]
    cdef int jb, ib, j0, jsz, j1, i0, isz, i1, i, j, kk
    cdef double rhs[4]
    cdef double acc
    cdef int fail = 0
    with nogil:
        for jb in range(nb - 1, -1, -1):
            j0 = starts[jb]
            jsz = sizes[jb]
            j1 = j0 + jsz
            for ib in range(nb - 1, -1, -1):
                i0 = starts[ib]
                isz = sizes[ib]
                i1 = i0 + isz
                for j in range(jsz):
                    for i in range(isz):
                        # rhs = c[I,J] + y[I, j1:] t[J, j1:].T + t[I, i1:] y[i1:, J]
                        acc = c[i0 + i, j0 + j]
                        for kk in range(j1, n):
                            acc += y[i0 + i, kk] * t[j0 + j, kk]
                        for kk in range(i1, n):
                            acc += t[i0 + i, kk] * y[kk, j0 + j]
                        rhs[j * isz + i] = acc
                if _small_sylvester(y, t, t, i0, isz, j0, jsz, rhs, True):
                    fail = 1
                    break
            if fail:
                break
    if fail:
        raise SingularLyapunovError("singular Lyapunov operator")
    return y_arr


def sylv_backsub(ta_in, tb_in, c_in):
    """Solve ta y + y tb + c = 0 for quasi upper triangular ta, tb."""
    ta_arr = np.ascontiguousarray(ta_in, dtype=float)
    tb_arr = np.ascontiguousarray(tb_in, dtype=float)
    c_arr = np.ascontiguousarray(c_in, dtype=float)
    cdef double[:, ::1] ta = ta_arr
    cdef double[:, ::1] tb = tb_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t n = ta_arr.shape[0], m = tb_arr.shape[0]
    y_arr = np.zeros((n, m))
    cdef double[:, ::1] y = y_arr
    astarts_arr, asizes_arr = _blocks(ta)
    bstarts_arr, bsizes_arr = _blocks(tb)
    cdef int[::1] astarts = astarts_arr
    cdef int[::1] asizes = asizes_arr
    cdef int[::1] bstarts = bstarts_arr
    cdef int[::1] bsizes = bsizes_arr
    cdef int na = astarts_arr.shape[0], nbb = bstarts_arr.shape[0]
    cdef int jb, ib, j0, jsz, i0, isz, i1, i, j, kk
    cdef double rhs[4]
    cdef double acc
    cdef int fail = 0
    with nogil:
        for jb in range(nbb):
            j0 = bstarts[jb]
            jsz = bsizes[jb]
            for ib in range(na - 1, -1, -1):
                i0 = astarts[ib]
                isz = asizes[ib]
                i1 = i0 + isz
                for j in range(jsz):
                    for i in range(isz):
                        acc = c[i0 + i, j0 + j]
                        for kk in range(j0):
                            acc += y[i0 + i, kk] * tb[kk, j0 + j]
                        for kk in range(i1, n):
                            acc += ta[i0 + i, kk] * y[kk, j0 + j]
                        rhs[j * isz + i] = acc
                if _small_sylvester(y, ta, tb, i0, isz, j0, jsz, rhs, False):
                    fail = 1
                    break
            if fail:
                break
    if fail:
        raise SingularLyapunovError("singular Sylvester operator")
    return y_arr
