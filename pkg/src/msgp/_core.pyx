# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: compact-support assembly, cross-correlation, and the
up-looking sparse Cholesky with its symbolic helpers.

Every function here has a pure-Python twin in ``_pycore`` with the same
signature and results.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, exp, sqrt, pow, M_PI, isfinite
from libc.stdint cimport int64_t

cnp.import_array()

cdef enum:
    BOHMAN = 0
    TRUNCATED_POWER = 1
    MATERN_WENDLAND = 2
    POWER_EXPONENTIAL = 3


cdef inline double _corr(double t, double tau, int family, double alpha,
                         double nu, double phi, double ell) noexcept nogil:
    cdef double u, a, matern, wend
    if family == POWER_EXPONENTIAL:
        if tau <= 0.0:
            return 1.0 if t == 0.0 else 0.0
        u = t / tau
        return exp(-u * u)
    if t >= tau:
        return 0.0
    u = t / tau
    if family == BOHMAN:
        a = (1.0 - u) * cos(M_PI * u) + sin(M_PI * u) / M_PI
    elif family == TRUNCATED_POWER:
        a = pow(1.0 - pow(u, alpha), nu)
    else:
        a = t * phi
        matern = (1.0 + a + a * a / 3.0) * exp(-a)
        wend = pow(1.0 - u, ell + 2.0) * (
            (ell * ell + 4.0 * ell + 3.0) * u * u + (3.0 * ell + 6.0) * u + 3.0) / 3.0
        a = matern * wend
    return a if a > 0.0 else 0.0


def corr_1d(t, double tau, int family, params):
    cdef double[::1] tv = np.ascontiguousarray(np.ravel(t), dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(params, dtype=np.float64)
    out = np.empty(tv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    for i in range(tv.shape[0]):
        ov[i] = _corr(tv[i], tau, family, pv[0], pv[1], pv[2], pv[3])
    return out.reshape(np.shape(t))


def candidate_pairs(X, double cutoff):
    cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], p = xv.shape[1]
    cdef Py_ssize_t i, j, k, cnt = 0, cap = max(16, n * 4)
    cdef double d, s
    ptr = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] pv = ptr
    rows = np.empty(cap, dtype=np.int64)
    diffs = np.empty((cap, p), dtype=np.float64)
    cdef int64_t[::1] rv = rows
    cdef double[:, ::1] dv = diffs
    for j in range(n):
        for i in range(j + 1, n):
            s = 0.0
            for k in range(p):
                d = xv[i, k] - xv[j, k]
                s += d if d >= 0 else -d
                if s >= cutoff:
                    break
            if s < cutoff:
                if cnt == cap:
                    cap *= 2
                    rows = np.resize(rows, cap)
                    diffs = np.resize(diffs, (cap, p))
                    rv = rows
                    dv = diffs
                rv[cnt] = i
                for k in range(p):
                    d = xv[i, k] - xv[j, k]
                    dv[cnt, k] = d if d >= 0 else -d
                cnt += 1
        pv[j + 1] = cnt
    return ptr, rows[:cnt].copy(), np.ascontiguousarray(diffs[:cnt])


def assemble_lower(Py_ssize_t n, ptr, rows, diffs, tau, int family, params,
                   double nugget):
    cdef const int64_t[::1] pv = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef const int64_t[::1] rv = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const double[:, ::1] dv = np.ascontiguousarray(diffs, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t p = tv.shape[0]
    cdef Py_ssize_t npairs = rv.shape[0]
    cdef Py_ssize_t j, q, k, cnt = 0
    cdef double val, t
    cdef double alpha = prm[0], nu = prm[1], phi = prm[2], ell = prm[3]
    cdef bint compact = family != POWER_EXPONENTIAL
    indptr = np.empty(n + 1, dtype=np.int64)
    indices = np.empty(n + npairs, dtype=np.int64)
    data = np.empty(n + npairs, dtype=np.float64)
    cdef int64_t[::1] ip = indptr
    cdef int64_t[::1] ii = indices
    cdef double[::1] xx = data
    with nogil:
        for j in range(n):
            ip[j] = cnt
            ii[cnt] = j
            xx[cnt] = 1.0 + nugget
            cnt += 1
            for q in range(pv[j], pv[j + 1]):
                val = 1.0
                for k in range(p):
                    t = dv[q, k]
                    if compact and t >= tv[k]:
                        val = 0.0
                        break
                    val *= _corr(t, tv[k], family, alpha, nu, phi, ell)
                    if val == 0.0:
                        break
                if val != 0.0:
                    ii[cnt] = rv[q]
                    xx[cnt] = val
                    cnt += 1
        ip[n] = cnt
    return indptr, indices[:cnt].copy(), data[:cnt].copy()


def cross_correlation(Xa, Xb, tau, int family, params):
    cdef const double[:, ::1] av = np.ascontiguousarray(Xa, dtype=np.float64)
    cdef const double[:, ::1] bv = np.ascontiguousarray(Xb, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], p = av.shape[1]
    cdef Py_ssize_t i, j, k, cnt = 0, cap = max(64, na * 8)
    cdef double val, t
    cdef double alpha = prm[0], nu = prm[1], phi = prm[2], ell = prm[3]
    cdef bint compact = family != POWER_EXPONENTIAL
    indptr = np.empty(na + 1, dtype=np.int64)
    indices = np.empty(cap, dtype=np.int64)
    data = np.empty(cap, dtype=np.float64)
    cdef int64_t[::1] ip = indptr
    cdef int64_t[::1] ii = indices
    cdef double[::1] xx = data
    for i in range(na):
        ip[i] = cnt
        if cnt + nb > cap:
            cap = max(2 * cap, cnt + nb)
            indices = np.resize(indices, cap)
            data = np.resize(data, cap)
            ii = indices
            xx = data
        with nogil:
            for j in range(nb):
                val = 1.0
                for k in range(p):
                    t = av[i, k] - bv[j, k]
                    if t < 0:
                        t = -t
                    if compact and t >= tv[k]:
                        val = 0.0
                        break
                    val *= _corr(t, tv[k], family, alpha, nu, phi, ell)
                    if val == 0.0:
                        break
                if val != 0.0:
                    ii[cnt] = j
                    xx[cnt] = val
                    cnt += 1
    ip[na] = cnt
    return indptr, indices[:cnt].copy(), data[:cnt].copy()


def dense_corr(X, tau, int family, params, double nugget):
    """Full symmetric correlation matrix with ``1 + nugget`` on the diagonal."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], p = xv.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double val, t, acc
    cdef double alpha = prm[0], nu = prm[1], phi = prm[2], ell = prm[3]
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[::1] w = np.empty(p, dtype=np.float64)
    for k in range(p):
        w[k] = 1.0 / (tv[k] * tv[k]) if tv[k] > 0 else 0.0
    with nogil:
        for i in range(n):
            ov[i, i] = 1.0 + nugget
            for j in range(i + 1, n):
                if family == POWER_EXPONENTIAL:
                    acc = 0.0
                    for k in range(p):
                        t = xv[i, k] - xv[j, k]
                        acc = acc + t * t * w[k]
                    val = exp(-acc)
                else:
                    val = 1.0
                    for k in range(p):
                        t = xv[i, k] - xv[j, k]
                        if t < 0:
                            t = -t
                        if t >= tv[k]:
                            val = 0.0
                            break
                        val *= _corr(t, tv[k], family, alpha, nu, phi, ell)
                ov[i, j] = val
                ov[j, i] = val
    return out


def symperm_upper(Py_ssize_t n, Ap, Ai, Ax, pinv):
    cdef const int64_t[::1] ap = np.ascontiguousarray(Ap, dtype=np.int64)
    cdef const int64_t[::1] ai = np.ascontiguousarray(Ai, dtype=np.int64)
    cdef const double[::1] ax = np.ascontiguousarray(Ax, dtype=np.float64)
    cdef const int64_t[::1] pi = np.ascontiguousarray(pinv, dtype=np.int64)
    cdef Py_ssize_t j, q, i2, j2, col, slot
    Cp = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] cp = Cp
    nxt = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] nx = nxt
    cdef Py_ssize_t nnz = ap[n]
    Ci = np.empty(nnz, dtype=np.int64)
    Cx = np.empty(nnz, dtype=np.float64)
    cdef int64_t[::1] ci = Ci
    cdef double[::1] cx = Cx
    with nogil:
        for j in range(n):
            j2 = pi[j]
            for q in range(ap[j], ap[j + 1]):
                i2 = pi[ai[q]]
                nx[i2 if i2 > j2 else j2] += 1
        for j in range(n):
            cp[j + 1] = cp[j] + nx[j]
            nx[j] = cp[j]
        for j in range(n):
            j2 = pi[j]
            for q in range(ap[j], ap[j + 1]):
                i2 = pi[ai[q]]
                col = i2 if i2 > j2 else j2
                slot = nx[col]
                nx[col] += 1
                ci[slot] = j2 if i2 > j2 else i2
                cx[slot] = ax[q]
    return Cp, Ci, Cx


def etree(Py_ssize_t n, Cp, Ci):
    cdef const int64_t[::1] cp = np.ascontiguousarray(Cp, dtype=np.int64)
    cdef const int64_t[::1] ci = np.ascontiguousarray(Ci, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] par = parent
    cdef int64_t[::1] anc = ancestor
    cdef Py_ssize_t k, q, i, inext
    with nogil:
        for k in range(n):
            for q in range(cp[k], cp[k + 1]):
                i = ci[q]
                while i != -1 and i < k:
                    inext = anc[i]
                    anc[i] = k
                    if inext == -1:
                        par[i] = k
                    i = inext
    return parent


cdef inline Py_ssize_t _ereach(const int64_t[::1] cp, const int64_t[::1] ci,
                               Py_ssize_t k, const int64_t[::1] par,
                               int64_t[::1] mark, int64_t[::1] stack,
                               int64_t[::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t top = n, q, i, length
    mark[k] = k
    for q in range(cp[k], cp[k + 1]):
        i = ci[q]
        if i > k:
            continue
        length = 0
        while mark[i] != k:
            stack[length] = i
            length += 1
            mark[i] = k
            i = par[i]
        while length > 0:
            top -= 1
            length -= 1
            out[top] = stack[length]
    return top


def col_counts(Py_ssize_t n, Cp, Ci, parent):
    cdef const int64_t[::1] cp = np.ascontiguousarray(Cp, dtype=np.int64)
    cdef const int64_t[::1] ci = np.ascontiguousarray(Ci, dtype=np.int64)
    cdef const int64_t[::1] par = np.ascontiguousarray(parent, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    cdef int64_t[::1] cnt = counts
    cdef int64_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t k, t, top
    with nogil:
        for k in range(n):
            top = _ereach(cp, ci, k, par, mark, stack, out, n)
            for t in range(top, n):
                cnt[out[t]] += 1
    return counts


def chol_numeric(Py_ssize_t n, Cp, Ci, Cx, parent, Lp):
    cdef const int64_t[::1] cp = np.ascontiguousarray(Cp, dtype=np.int64)
    cdef const int64_t[::1] ci = np.ascontiguousarray(Ci, dtype=np.int64)
    cdef const double[::1] cx = np.ascontiguousarray(Cx, dtype=np.float64)
    cdef const int64_t[::1] par = np.ascontiguousarray(parent, dtype=np.int64)
    cdef const int64_t[::1] lp = np.ascontiguousarray(Lp, dtype=np.int64)
    cdef Py_ssize_t nnz = lp[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz, dtype=np.float64)
    cdef int64_t[::1] li = Li
    cdef double[::1] lx = Lx
    cdef int64_t[::1] c = np.array(Lp[:n], dtype=np.int64)
    cdef double[::1] x = np.zeros(n, dtype=np.float64)
    cdef int64_t[::1] mark = np.full(n, -1, dtype=np.int64)
    cdef int64_t[::1] stack = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] s = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t k, q, t, i, top, status = -1
    cdef double d, lki
    with nogil:
        for k in range(n):
            top = _ereach(cp, ci, k, par, mark, stack, s, n)
            x[k] = 0.0
            for q in range(cp[k], cp[k + 1]):
                if ci[q] <= k:
                    x[ci[q]] = cx[q]
            d = x[k]
            x[k] = 0.0
            for t in range(top, n):
                i = s[t]
                lki = x[i] / lx[lp[i]]
                x[i] = 0.0
                for q in range(lp[i] + 1, c[i]):
                    x[li[q]] -= lx[q] * lki
                d -= lki * lki
                q = c[i]
                c[i] += 1
                li[q] = k
                lx[q] = lki
            if d <= 0.0 or not isfinite(d):
                status = k
                break
            q = c[k]
            c[k] += 1
            li[q] = k
            lx[q] = sqrt(d)
    return Li, Lx, status


def lsolve(Py_ssize_t n, Lp, Li, Lx, double[:, ::1] X):
    cdef const int64_t[::1] lp = np.ascontiguousarray(Lp, dtype=np.int64)
    cdef const int64_t[::1] li = np.ascontiguousarray(Li, dtype=np.int64)
    cdef const double[::1] lx = np.ascontiguousarray(Lx, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[1], j, q, r, row
    cdef double piv, v
    with nogil:
        for j in range(n):
            piv = lx[lp[j]]
            for r in range(m):
                X[j, r] /= piv
            for q in range(lp[j] + 1, lp[j + 1]):
                v = lx[q]
                row = li[q]
                for r in range(m):
                    X[row, r] -= v * X[j, r]


def ltsolve(Py_ssize_t n, Lp, Li, Lx, double[:, ::1] X):
    cdef const int64_t[::1] lp = np.ascontiguousarray(Lp, dtype=np.int64)
    cdef const int64_t[::1] li = np.ascontiguousarray(Li, dtype=np.int64)
    cdef const double[::1] lx = np.ascontiguousarray(Lx, dtype=np.float64)
    cdef Py_ssize_t m = X.shape[1], j, q, r, row
    cdef double piv, v
    with nogil:
        for j in range(n - 1, -1, -1):
            for q in range(lp[j] + 1, lp[j + 1]):
                v = lx[q]
                row = li[q]
                for r in range(m):
                    X[j, r] -= v * X[row, r]
            piv = lx[lp[j]]
            for r in range(m):
                X[j, r] /= piv
