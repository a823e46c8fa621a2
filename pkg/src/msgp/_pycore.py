"""Pure-Python implementations of the numerical kernels.

Mirrors the compiled ``_core`` extension function for function; used when the
extension is unavailable or when ``MSGP_PURE=1`` is set.  The assembly and
cross-correlation kernels are vectorised with numpy; the sparse Cholesky is a
straight loop transcription and is slow beyond a few hundred rows.
"""

import numpy as np

BOHMAN = 0
TRUNCATED_POWER = 1
MATERN_WENDLAND = 2
POWER_EXPONENTIAL = 3


def corr_1d(t, tau, family, params):
    """Evaluate the one-dimensional correlation ``R(t; tau)`` elementwise."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    if family == POWER_EXPONENTIAL:
        if tau <= 0:
            return np.where(t == 0, 1.0, 0.0)
        return np.exp(-((t / tau) ** 2))
    inside = t < tau
    if not np.any(inside):
        return out
    u = t[inside] / tau
    if family == BOHMAN:
        v = (1.0 - u) * np.cos(np.pi * u) + np.sin(np.pi * u) / np.pi
    elif family == TRUNCATED_POWER:
        alpha, nu = params[0], params[1]
        v = (1.0 - u ** alpha) ** nu
    elif family == MATERN_WENDLAND:
        phi, ell = params[2], params[3]
        a = t[inside] * phi
        matern = (1.0 + a + a * a / 3.0) * np.exp(-a)
        wend = (1.0 - u) ** (ell + 2.0) * (
            (ell * ell + 4.0 * ell + 3.0) * u * u + (3.0 * ell + 6.0) * u + 3.0
        ) / 3.0
        v = matern * wend
    else:
        raise ValueError(f"unknown kernel family code {family}")
    out[inside] = np.maximum(v, 0.0)
    return out


def candidate_pairs(X, cutoff):
    """Pairs ``i > j`` with L1 distance strictly below ``cutoff``.

    Returns ``(ptr, rows, diffs)`` grouped by column ``j`` (CSC-like), rows
    increasing within each column, ``diffs`` holding ``|x_i - x_j|`` per
    dimension.
    """
    X = np.ascontiguousarray(X, dtype=float)
    n, p = X.shape
    ptr = np.zeros(n + 1, dtype=np.int64)
    rows = []
    diffs = []
    for j in range(n):
        d = np.abs(X[j + 1:] - X[j])
        keep = d.sum(axis=1) < cutoff
        idx = np.nonzero(keep)[0]
        rows.append(idx + j + 1)
        diffs.append(d[idx])
        ptr[j + 1] = ptr[j] + idx.size
    rows = np.concatenate(rows).astype(np.int64) if n else np.zeros(0, np.int64)
    diffs = np.concatenate(diffs) if n else np.zeros((0, p))
    return ptr, rows, np.ascontiguousarray(diffs.reshape(-1, p))


def _pair_values(diffs, tau, family, params):
    npairs, p = diffs.shape
    vals = np.ones(npairs)
    for k in range(p):
        if not npairs:
            break
        vals *= corr_1d(diffs[:, k], tau[k], family, params)
    return vals


def assemble_lower(n, ptr, rows, diffs, tau, family, params, nugget):
    """Lower-triangular CSC of the correlation matrix, diagonal first."""
    tau = np.asarray(tau, dtype=float)
    vals = _pair_values(diffs, tau, family, params)
    keep = vals != 0.0
    if family != POWER_EXPONENTIAL:
        keep &= np.all(diffs < tau, axis=1)
    col_of_pair = np.repeat(np.arange(n), np.diff(ptr))
    kept_cols = col_of_pair[keep]
    counts = np.bincount(kept_cols, minlength=n) + 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data = np.empty(indptr[-1])
    indices[indptr[:-1]] = np.arange(n)
    data[indptr[:-1]] = 1.0 + nugget
    # off-diagonal slots follow the diagonal in each column, in pair order
    offs = np.arange(kept_cols.size) - np.repeat(
        np.concatenate([[0], np.cumsum(counts - 1)[:-1]]), counts - 1
    )
    slots = indptr[kept_cols] + 1 + offs
    indices[slots] = rows[keep]
    data[slots] = vals[keep]
    return indptr, indices, data


def cross_correlation(Xa, Xb, tau, family, params, chunk=2048):
    """CSR ``(indptr, indices, data)`` of ``R(Xa[i], Xb[j])``."""
    Xa = np.ascontiguousarray(Xa, dtype=float)
    Xb = np.ascontiguousarray(Xb, dtype=float)
    tau = np.asarray(tau, dtype=float)
    na, p = Xa.shape
    indptr = [np.zeros(1, dtype=np.int64)]
    indices = []
    data = []
    total = 0
    for start in range(0, na, chunk):
        block = Xa[start:start + chunk]
        vals = np.ones((block.shape[0], Xb.shape[0]))
        for k in range(p):
            d = np.abs(block[:, k:k + 1] - Xb[None, :, k])
            vals *= corr_1d(d, tau[k], family, params)
            if family != POWER_EXPONENTIAL:
                vals[d >= tau[k]] = 0.0
        r, c = np.nonzero(vals)
        counts = np.bincount(r, minlength=block.shape[0])
        indptr.append(total + np.cumsum(counts))
        total += r.size
        indices.append(c.astype(np.int64))
        data.append(vals[r, c])
    return (
        np.concatenate(indptr),
        np.concatenate(indices) if indices else np.zeros(0, np.int64),
        np.concatenate(data) if data else np.zeros(0),
    )


def dense_corr(X, tau, family, params, nugget):
    """Full symmetric correlation matrix with ``1 + nugget`` on the diagonal."""
    X = np.asarray(X, dtype=float)
    tau = np.asarray(tau, dtype=float)
    n, p = X.shape
    if family == POWER_EXPONENTIAL:
        acc = np.zeros((n, n))
        for k in range(p):
            acc += (X[:, k, None] - X[None, :, k]) ** 2 / tau[k] ** 2
        R = np.exp(-acc)
    else:
        R = np.ones((n, n))
        for k in range(p):
            R *= corr_1d(np.abs(X[:, k, None] - X[None, :, k]), tau[k], family, params)
    np.fill_diagonal(R, 1.0 + nugget)
    return R


def symperm_upper(n, Ap, Ai, Ax, pinv):
    """Upper-triangular CSC of ``P A P^T`` from a one-triangle CSC of ``A``."""
    count = np.zeros(n, dtype=np.int64)
    for j in range(n):
        j2 = pinv[j]
        for q in range(Ap[j], Ap[j + 1]):
            i2 = pinv[Ai[q]]
            count[max(i2, j2)] += 1
    Cp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(count, out=Cp[1:])
    nxt = Cp[:-1].copy()
    Ci = np.empty(Cp[-1], dtype=np.int64)
    Cx = np.empty(Cp[-1])
    for j in range(n):
        j2 = pinv[j]
        for q in range(Ap[j], Ap[j + 1]):
            i2 = pinv[Ai[q]]
            col = max(i2, j2)
            slot = nxt[col]
            nxt[col] += 1
            Ci[slot] = min(i2, j2)
            Cx[slot] = Ax[q]
    return Cp, Ci, Cx


def etree(n, Cp, Ci):
    """Elimination tree of a matrix given by its upper-triangular CSC."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for q in range(Cp[k], Cp[k + 1]):
            i = Ci[q]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


def _ereach(Cp, Ci, k, parent, mark, stack, out):
    """Nonzero pattern of row ``k`` of L (excluding the diagonal)."""
    n = parent.shape[0]
    top = n
    mark[k] = k
    for q in range(Cp[k], Cp[k + 1]):
        i = Ci[q]
        if i > k:
            continue
        length = 0
        while mark[i] != k:
            stack[length] = i
            length += 1
            mark[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            out[top] = stack[length]
    return top


def col_counts(n, Cp, Ci, parent):
    counts = np.ones(n, dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, mark, stack, out)
        for t in range(top, n):
            counts[out[t]] += 1
    return counts


def chol_numeric(n, Cp, Ci, Cx, parent, Lp):
    """Up-looking numeric Cholesky.

    Returns ``(Li, Lx, status)`` where ``status`` is ``-1`` on success or the
    index of the first non-positive pivot.
    """
    nnz = Lp[n]
    Li = np.empty(nnz, dtype=np.int64)
    Lx = np.empty(nnz)
    c = np.array(Lp[:n], dtype=np.int64)
    x = np.zeros(n)
    mark = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    s = np.empty(n, dtype=np.int64)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, mark, stack, s)
        x[k] = 0.0
        for q in range(Cp[k], Cp[k + 1]):
            if Ci[q] <= k:
                x[Ci[q]] = Cx[q]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = s[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for q in range(Lp[i] + 1, c[i]):
                x[Li[q]] -= Lx[q] * lki
            d -= lki * lki
            q = c[i]
            c[i] += 1
            Li[q] = k
            Lx[q] = lki
        if d <= 0.0 or not np.isfinite(d):
            return Li, Lx, k
        q = c[k]
        c[k] += 1
        Li[q] = k
        Lx[q] = np.sqrt(d)
    return Li, Lx, -1


def lsolve(n, Lp, Li, Lx, X):
    """Solve ``L Y = X`` in place; ``X`` is ``(n, k)`` C-contiguous."""
    for j in range(n):
        X[j] /= Lx[Lp[j]]
        lo, hi = Lp[j] + 1, Lp[j + 1]
        if hi > lo:
            X[Li[lo:hi]] -= np.outer(Lx[lo:hi], X[j])
    return X


def ltsolve(n, Lp, Li, Lx, X):
    """Solve ``L^T Y = X`` in place."""
    for j in range(n - 1, -1, -1):
        lo, hi = Lp[j] + 1, Lp[j + 1]
        if hi > lo:
            X[j] -= Lx[lo:hi] @ X[Li[lo:hi]]
        X[j] /= Lx[Lp[j]]
    return X
