"""Row-wise hot kernels (softmax, log-softmax, layer norm) with numba JIT.

Every kernel operates on 2-D arrays, one independent row at a time, so the
accumulation order inside a row is fixed and results are bit-identical
regardless of thread count. Parallel variants only kick in above a size
threshold (thread-launch overhead dwarfs small inputs); plain numpy serves
as the fallback when numba is missing.
"""

import numpy as np

try:
    from numba import njit, prange

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        def dec(f):
            return f

        return dec if not args else dec(*args)


PARALLEL_MIN_ELEMS = 1 << 21


@njit(cache=True)
def _softmax_serial(x, out):
    k = x.shape[1]
    for i in range(x.shape[0]):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            e = np.exp(x[i, j] - m)
            out[i, j] = e
            s += e
        inv = 1.0 / s
        for j in range(k):
            out[i, j] *= inv


@njit(cache=True, parallel=True)
def _softmax_parallel(x, out):
    k = x.shape[1]
    for i in prange(x.shape[0]):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            e = np.exp(x[i, j] - m)
            out[i, j] = e
            s += e
        inv = 1.0 / s
        for j in range(k):
            out[i, j] *= inv


@njit(cache=True)
def _softmax_bwd_serial(y, g, out):
    k = y.shape[1]
    for i in range(y.shape[0]):
        dot = 0.0
        for j in range(k):
            dot += y[i, j] * g[i, j]
        for j in range(k):
            out[i, j] = y[i, j] * (g[i, j] - dot)


@njit(cache=True, parallel=True)
def _softmax_bwd_parallel(y, g, out):
    k = y.shape[1]
    for i in prange(y.shape[0]):
        dot = 0.0
        for j in range(k):
            dot += y[i, j] * g[i, j]
        for j in range(k):
            out[i, j] = y[i, j] * (g[i, j] - dot)


@njit(cache=True)
def _log_softmax_serial(x, out):
    k = x.shape[1]
    for i in range(x.shape[0]):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            s += np.exp(x[i, j] - m)
        lse = m + np.log(s)
        for j in range(k):
            out[i, j] = x[i, j] - lse


@njit(cache=True, parallel=True)
def _log_softmax_parallel(x, out):
    k = x.shape[1]
    for i in prange(x.shape[0]):
        m = x[i, 0]
        for j in range(1, k):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(k):
            s += np.exp(x[i, j] - m)
        lse = m + np.log(s)
        for j in range(k):
            out[i, j] = x[i, j] - lse


@njit(cache=True)
def _layernorm_serial(x, eps, out, rstd):
    k = x.shape[1]
    for i in range(x.shape[0]):
        mu = 0.0
        for j in range(k):
            mu += x[i, j]
        mu /= k
        var = 0.0
        for j in range(k):
            d = x[i, j] - mu
            var += d * d
        var /= k
        r = 1.0 / np.sqrt(var + eps)
        rstd[i] = r
        for j in range(k):
            out[i, j] = (x[i, j] - mu) * r


@njit(cache=True, parallel=True)
def _layernorm_parallel(x, eps, out, rstd):
    k = x.shape[1]
    for i in prange(x.shape[0]):
        mu = 0.0
        for j in range(k):
            mu += x[i, j]
        mu /= k
        var = 0.0
        for j in range(k):
            d = x[i, j] - mu
            var += d * d
        var /= k
        r = 1.0 / np.sqrt(var + eps)
        rstd[i] = r
        for j in range(k):
            out[i, j] = (x[i, j] - mu) * r


@njit(cache=True)
def _layernorm_bwd_serial(xhat, rstd, g, out):
    k = xhat.shape[1]
    for i in range(xhat.shape[0]):
        gm = 0.0
        gxm = 0.0
        for j in range(k):
            gm += g[i, j]
            gxm += g[i, j] * xhat[i, j]
        gm /= k
        gxm /= k
        r = rstd[i]
        for j in range(k):
            out[i, j] = r * (g[i, j] - gm - xhat[i, j] * gxm)


@njit(cache=True, parallel=True)
def _layernorm_bwd_parallel(xhat, rstd, g, out):
    k = xhat.shape[1]
    for i in prange(xhat.shape[0]):
        gm = 0.0
        gxm = 0.0
        for j in range(k):
            gm += g[i, j]
            gxm += g[i, j] * xhat[i, j]
        gm /= k
        gxm /= k
        r = rstd[i]
        for j in range(k):
            out[i, j] = r * (g[i, j] - gm - xhat[i, j] * gxm)


def _as_rows(x):
    """Collapse all leading axes: [..., K] -> contiguous [R, K]."""
    k = x.shape[-1]
    return np.ascontiguousarray(x).reshape(-1, k)


def _pick(serial, parallel, rows):
    return parallel if rows.size >= PARALLEL_MIN_ELEMS else serial


def softmax_lastaxis(x):
    rows = _as_rows(x)
    if HAS_NUMBA:
        out = np.empty_like(rows)
        _pick(_softmax_serial, _softmax_parallel, rows)(rows, out)
    else:
        m = rows.max(axis=1, keepdims=True)
        e = np.exp(rows - m)
        out = e / e.sum(axis=1, keepdims=True)
    return out.reshape(x.shape)


def softmax_lastaxis_bwd(y, g):
    yr, gr = _as_rows(y), _as_rows(g)
    if HAS_NUMBA:
        out = np.empty_like(yr)
        _pick(_softmax_bwd_serial, _softmax_bwd_parallel, yr)(yr, gr, out)
    else:
        out = yr * (gr - (yr * gr).sum(axis=1, keepdims=True))
    return out.reshape(y.shape)


def log_softmax_lastaxis(x):
    rows = _as_rows(x)
    if HAS_NUMBA:
        out = np.empty_like(rows)
        _pick(_log_softmax_serial, _log_softmax_parallel, rows)(rows, out)
    else:
        m = rows.max(axis=1, keepdims=True)
        z = rows - m
        out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return out.reshape(x.shape)


def layernorm_lastaxis(x, eps):
    """Normalize each row to mean 0, population variance 1. Returns (xhat, rstd)."""
    rows = _as_rows(x)
    if HAS_NUMBA:
        out = np.empty_like(rows)
        rstd = np.empty(rows.shape[0], dtype=rows.dtype)
        kern = _pick(_layernorm_serial, _layernorm_parallel, rows)
        kern(rows, rows.dtype.type(eps), out, rstd)
    else:
        mu = rows.mean(axis=1, keepdims=True)
        var = rows.var(axis=1, keepdims=True)
        rstd2 = 1.0 / np.sqrt(var + rows.dtype.type(eps))
        out = (rows - mu) * rstd2
        rstd = rstd2[:, 0]
    return out.reshape(x.shape), rstd.reshape(x.shape[:-1])


def layernorm_lastaxis_bwd(xhat, rstd, g):
    xr, gr = _as_rows(xhat), _as_rows(g)
    rr = np.ascontiguousarray(rstd).reshape(-1)
    if HAS_NUMBA:
        out = np.empty_like(xr)
        _pick(_layernorm_bwd_serial, _layernorm_bwd_parallel, xr)(xr, rr, gr, out)
    else:
        gm = gr.mean(axis=1, keepdims=True)
        gxm = (gr * xr).mean(axis=1, keepdims=True)
        out = rr[:, None] * (gr - gm - xr * gxm)
    return out.reshape(xhat.shape)
