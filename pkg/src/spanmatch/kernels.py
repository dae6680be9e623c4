"""Hot numeric kernels in two interchangeable backends.

Every kernel exists twice: a numba ``@njit`` version (fused loops, used by
default when numba imports) and a vectorized pure-numpy version. The active
backend is chosen at import time from the ``SPANMATCH_BACKEND`` environment
variable (``auto`` | ``numba`` | ``numpy``) and can be switched at runtime
with :func:`use_backend`. Both backends compute in float64 and agree to
~1e-12 relative (reduction order may differ).

All matrix arguments are C-contiguous 2-D float64 arrays unless noted.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap(args[0]) if args and callable(args[0]) else wrap


try:
    from scipy.special import erf as _erf_vec
except ImportError:  # pragma: no cover
    _erf_vec = np.vectorize(math.erf)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _np_softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _np_softmax_rows_grad(y, dy):
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def _np_gelu(x):
    return 0.5 * x * (1.0 + _erf_vec(x * _INV_SQRT2))


def _np_gelu_grad(x, dy):
    cdf = 0.5 * (1.0 + _erf_vec(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


def _np_layer_norm_rows(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * rstd
    return xhat * gain + bias, xhat, rstd[:, 0].copy()


def _np_layer_norm_rows_grad(xhat, rstd, gain, dy):
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    return dx, dgain, dbias


def _np_row_l2(a, b, squared):
    ss = ((a - b) ** 2).sum(axis=1)
    return ss if squared else np.sqrt(ss)


def _np_row_l2_grad(a, b, dist, ddist, squared):
    diff = a - b
    if squared:
        return diff * (2.0 * ddist)[:, None]
    denom = np.maximum(dist, 1e-30)
    return diff * (ddist / denom)[:, None]


def _np_softmax_xent(scores, gold):
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    rows = np.arange(scores.shape[0])
    logp = shifted[rows, gold] - np.log(z[:, 0])
    return -logp.mean(), probs


def _np_softmax_xent_grad(probs, gold, scale):
    d = probs * scale
    rows = np.arange(probs.shape[0])
    d[rows, gold] -= scale
    return d


def _np_adam_update(p, g, m, v, t, lr, b1, b2, eps):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

@njit(cache=True)
def _nb_softmax_rows(x):
    n, c = x.shape
    y = np.empty((n, c))
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, c):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(c):
            e = math.exp(x[i, j] - mx)
            y[i, j] = e
            s += e
        for j in range(c):
            y[i, j] /= s
    return y


@njit(cache=True)
def _nb_softmax_rows_grad(y, dy):
    n, c = y.shape
    dx = np.empty((n, c))
    for i in range(n):
        inner = 0.0
        for j in range(c):
            inner += dy[i, j] * y[i, j]
        for j in range(c):
            dx[i, j] = y[i, j] * (dy[i, j] - inner)
    return dx


@njit(cache=True)
def _nb_gelu(x):
    n, c = x.shape
    y = np.empty((n, c))
    for i in range(n):
        for j in range(c):
            v = x[i, j]
            y[i, j] = 0.5 * v * (1.0 + math.erf(v * _INV_SQRT2))
    return y


@njit(cache=True)
def _nb_gelu_grad(x, dy):
    n, c = x.shape
    dx = np.empty((n, c))
    for i in range(n):
        for j in range(c):
            v = x[i, j]
            cdf = 0.5 * (1.0 + math.erf(v * _INV_SQRT2))
            pdf = _INV_SQRT2PI * math.exp(-0.5 * v * v)
            dx[i, j] = dy[i, j] * (cdf + v * pdf)
    return dx


@njit(cache=True)
def _nb_layer_norm_rows(x, gain, bias, eps):
    n, c = x.shape
    y = np.empty((n, c))
    xhat = np.empty((n, c))
    rstd = np.empty(n)
    for i in range(n):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        r = 1.0 / math.sqrt(var + eps)
        rstd[i] = r
        for j in range(c):
            h = (x[i, j] - mu) * r
            xhat[i, j] = h
            y[i, j] = h * gain[j] + bias[j]
    return y, xhat, rstd


@njit(cache=True)
def _nb_layer_norm_rows_grad(xhat, rstd, gain, dy):
    n, c = xhat.shape
    dx = np.empty((n, c))
    dgain = np.zeros(c)
    dbias = np.zeros(c)
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(c):
            dgain[j] += dy[i, j] * xhat[i, j]
            dbias[j] += dy[i, j]
            dh = dy[i, j] * gain[j]
            m1 += dh
            m2 += dh * xhat[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            dx[i, j] = rstd[i] * (dy[i, j] * gain[j] - m1 - xhat[i, j] * m2)
    return dx, dgain, dbias


@njit(cache=True)
def _nb_row_l2(a, b, squared):
    n, c = a.shape
    out = np.empty(n)
    for i in range(n):
        ss = 0.0
        for j in range(c):
            d = a[i, j] - b[i, j]
            ss += d * d
        out[i] = ss if squared else math.sqrt(ss)
    return out


@njit(cache=True)
def _nb_row_l2_grad(a, b, dist, ddist, squared):
    n, c = a.shape
    da = np.empty((n, c))
    for i in range(n):
        if squared:
            f = 2.0 * ddist[i]
        else:
            denom = dist[i] if dist[i] > 1e-30 else 1e-30
            f = ddist[i] / denom
        for j in range(c):
            da[i, j] = (a[i, j] - b[i, j]) * f
    return da


@njit(cache=True)
def _nb_softmax_xent(scores, gold):
    n, c = scores.shape
    probs = np.empty((n, c))
    loss = 0.0
    for i in range(n):
        mx = scores[i, 0]
        for j in range(1, c):
            if scores[i, j] > mx:
                mx = scores[i, j]
        s = 0.0
        for j in range(c):
            e = math.exp(scores[i, j] - mx)
            probs[i, j] = e
            s += e
        for j in range(c):
            probs[i, j] /= s
        loss -= scores[i, gold[i]] - mx - math.log(s)
    return loss / n, probs


@njit(cache=True)
def _nb_softmax_xent_grad(probs, gold, scale):
    n, c = probs.shape
    d = np.empty((n, c))
    for i in range(n):
        for j in range(c):
            d[i, j] = probs[i, j] * scale
        d[i, gold[i]] -= scale
    return d


@njit(cache=True)
def _nb_adam_update(p, g, m, v, t, lr, b1, b2, eps):
    n, c = p.shape
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i in range(n):
        for j in range(c):
            m[i, j] = b1 * m[i, j] + (1.0 - b1) * g[i, j]
            v[i, j] = b2 * v[i, j] + (1.0 - b2) * g[i, j] * g[i, j]
            p[i, j] -= lr * (m[i, j] / c1) / (math.sqrt(v[i, j] / c2) + eps)


_NUMPY_IMPLS = {
    "softmax_rows": _np_softmax_rows,
    "softmax_rows_grad": _np_softmax_rows_grad,
    "gelu": _np_gelu,
    "gelu_grad": _np_gelu_grad,
    "layer_norm_rows": _np_layer_norm_rows,
    "layer_norm_rows_grad": _np_layer_norm_rows_grad,
    "row_l2": _np_row_l2,
    "row_l2_grad": _np_row_l2_grad,
    "softmax_xent": _np_softmax_xent,
    "softmax_xent_grad": _np_softmax_xent_grad,
    "adam_update": _np_adam_update,
}

_NUMBA_IMPLS = {
    "softmax_rows": _nb_softmax_rows,
    "softmax_rows_grad": _nb_softmax_rows_grad,
    "gelu": _nb_gelu,
    "gelu_grad": _nb_gelu_grad,
    "layer_norm_rows": _nb_layer_norm_rows,
    "layer_norm_rows_grad": _nb_layer_norm_rows_grad,
    "row_l2": _nb_row_l2,
    "row_l2_grad": _nb_row_l2_grad,
    "softmax_xent": _nb_softmax_xent,
    "softmax_xent_grad": _nb_softmax_xent_grad,
    "adam_update": _nb_adam_update,
}

KERNEL_NAMES = tuple(sorted(_NUMPY_IMPLS))

_active = "numpy"


def use_backend(name: str) -> str:
    """Bind module-level kernels to one backend; returns the chosen name."""
    global _active
    if name == "auto":
        name = "numba" if HAS_NUMBA else "numpy"
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r} (expected auto|numba|numpy)")
    impls = _NUMBA_IMPLS if name == "numba" else _NUMPY_IMPLS
    for key, fn in impls.items():
        globals()[key] = fn
    _active = name
    return name


def active_backend() -> str:
    return _active


def warmup() -> None:
    """Trigger one-time JIT compilation of every active kernel."""
    x = np.asarray([[0.5, -1.0, 2.0], [0.0, 0.0, 1.0]])
    g = np.asarray([0.9, 1.1, 1.0])
    b = np.asarray([0.0, 0.1, -0.1])
    y = softmax_rows(x)
    softmax_rows_grad(y, x)
    gelu(x)
    gelu_grad(x, x)
    out, xhat, rstd = layer_norm_rows(x, g, b, 1e-5)
    layer_norm_rows_grad(xhat, rstd, g, out)
    d = row_l2(x, out, False)
    row_l2_grad(x, out, d, d, False)
    row_l2(x, out, True)
    row_l2_grad(x, out, d, d, True)
    gold = np.asarray([0, 2], dtype=np.int64)
    loss, probs = softmax_xent(x, gold)
    softmax_xent_grad(probs, gold, 0.5)
    p = x.copy()
    adam_update(p, x, np.zeros_like(p), np.zeros_like(p), 1, 1e-3, 0.9, 0.999, 1e-8)


use_backend(os.environ.get("SPANMATCH_BACKEND", "auto"))
