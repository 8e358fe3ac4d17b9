"""Forward/backward pairs for the layers used by the classifiers.

Arrays are float64. Dense layers act on the last axis; token sequences are
(N, S, D).
"""
import math

import numpy as np

LN_EPS = 1e-5


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def glorot_uniform(rng, shape, fan_in, fan_out, scale=1.0):
    s = scale * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# --- dense / activations


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(x, w, dy):
    lead = x.reshape(-1, x.shape[-1])
    d2 = dy.reshape(-1, dy.shape[-1])
    return d2 @ w.T, lead.T @ d2, d2.sum(axis=0)


def relu_backward(y, dy):
    return dy * (y > 0)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu_forward(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * x * (1.0 + t), t


def gelu_backward(x, t, dy):
    dt = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dt)


# --- convolution / pooling


# Convolution and pooling work on channel-major (C, N, H, W) maps so that the
# im2col buffer is tap-major and every copy is a contiguous block.


def _wmat(w):
    # (O, C, k, k) -> (O, k*k*C), columns ordered (tap, channel)
    return w.transpose(0, 2, 3, 1).reshape(w.shape[0], -1)


def conv2d_forward(x, w, b):
    """'Same' zero-padded convolution. x: (C, N, H, W); w: (O, C, k, k)."""
    c, n, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((k * k, c, n, h, wd))
    for i in range(k):
        for j in range(k):
            cols[i * k + j] = xp[:, :, i : i + h, j : j + wd]
    cols = cols.reshape(k * k * c, n * h * wd)
    out = _wmat(w) @ cols
    out += b[:, None]
    return out.reshape(o, n, h, wd), cols


def conv2d_backward(x_shape, cols, w, dy, input_grad=True):
    c, n, h, wd = x_shape
    o, _, k, _ = w.shape
    p = k // 2
    d2 = dy.reshape(o, -1)
    dw = (d2 @ cols.T).reshape(o, k, k, c).transpose(0, 3, 1, 2)
    db = d2.sum(axis=1)
    if not input_grad:
        return None, dw, db
    dcols = (_wmat(w).T @ d2).reshape(k * k, c, n, h, wd)
    dxp = np.zeros((c, n, h + 2 * p, wd + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + wd] += dcols[i * k + j]
    return dxp[:, :, p : p + h, p : p + wd], dw, db


def _pool_views(x, size):
    h2, w2 = x.shape[-2] // size, x.shape[-1] // size
    return [
        (i, j, x[..., i : h2 * size : size, j : w2 * size : size])
        for i in range(size)
        for j in range(size)
    ]


def maxpool_forward(x, size):
    """Non-overlapping max pool over the last two axes; ragged edges are dropped."""
    views = _pool_views(x, size)
    out = views[0][2].copy()
    for _, _, v in views[1:]:
        np.maximum(out, v, out=out)
    return out


def maxpool_backward(x, out, size, dy):
    """Route each window's gradient to its first maximal element (row-major)."""
    dx = np.zeros(x.shape)
    free = np.ones(out.shape, dtype=bool)
    h2, w2 = out.shape[-2:]
    for i, j, v in _pool_views(x, size):
        hit = (v == out) & free
        free &= ~hit
        dx[..., i : h2 * size : size, j : w2 * size : size] = dy * hit
    return dx


# --- layer norm


def layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv)


def layernorm_backward(cache, g, dy):
    xhat, inv = cache
    d = xhat.shape[-1]
    dxhat = dy * g
    dx = inv / d * (
        d * dxhat
        - dxhat.sum(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
    )
    lead = (dy * xhat).reshape(-1, d)
    return dx, lead.sum(axis=0), dy.reshape(-1, d).sum(axis=0)


# --- multi-head self-attention


def attention_forward(x, wqkv, bqkv, wo, bo, heads):
    n, s, d = x.shape
    dh = d // heads
    qkv = (x @ wqkv + bqkv).reshape(n, s, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]  # (N, heads, S, dh)
    att = softmax(q @ k.transpose(0, 1, 3, 2) / math.sqrt(dh))
    o = (att @ v).transpose(0, 2, 1, 3).reshape(n, s, d)
    out = o @ wo + bo
    return out, (x, q, k, v, att, o)


def attention_backward(cache, wqkv, wo, heads, dy):
    x, q, k, v, att, o = cache
    n, s, d = x.shape
    dh = d // heads
    do, dwo, dbo = dense_backward(o, wo, dy)
    do = do.reshape(n, s, heads, dh).transpose(0, 2, 1, 3)
    datt = do @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ do
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) / math.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(n, s, 3 * d)
    dx, dwqkv, dbqkv = dense_backward(x, wqkv, dqkv)
    return dx.reshape(x.shape), dwqkv, dbqkv, dwo, dbo
