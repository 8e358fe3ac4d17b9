"""Small CNN: [conv3x3 -> ReLU -> maxpool] per channel stage, then dense -> ReLU -> dense.

Convolutions use zero 'same' padding; the flattened feature order is
(channel, row, col).
"""
import numpy as np

from . import layers as L


def feature_shape(spec):
    h, w = spec.height, spec.width
    for _ in spec.cnn_channels:
        h, w = h // spec.pool, w // spec.pool
    return spec.cnn_channels[-1], h, w


def init(spec, rng, scale=1.0):
    params = {}
    c_in, k = spec.channels, spec.kernel
    for i, c_out in enumerate(spec.cnn_channels, start=1):
        params[f"conv{i}.w"] = L.glorot_uniform(
            rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k, scale
        )
        params[f"conv{i}.b"] = np.zeros(c_out)
        c_in = c_out
    flat = int(np.prod(feature_shape(spec)))
    params["fc1.w"] = L.glorot_uniform(rng, (flat, spec.hidden), flat, spec.hidden, scale)
    params["fc1.b"] = np.zeros(spec.hidden)
    params["fc2.w"] = L.glorot_uniform(
        rng, (spec.hidden, spec.num_classes), spec.hidden, spec.num_classes, scale
    )
    params["fc2.b"] = np.zeros(spec.num_classes)
    return params


def forward(spec, params, x):
    cache = {"stages": []}
    h = np.ascontiguousarray(x.transpose(3, 0, 1, 2))  # (C, N, H, W)
    for i in range(1, len(spec.cnn_channels) + 1):
        z, cols = L.conv2d_forward(h, params[f"conv{i}.w"], params[f"conv{i}.b"])
        a = np.maximum(z, 0.0, out=z)
        pooled = L.maxpool_forward(a, spec.pool)
        cache["stages"].append((h.shape, cols, a, pooled))
        h = pooled
    # post-ReLU maps of the last conv layer, (C, N, h, w); consumed by Grad-CAM
    cache["conv_maps"] = cache["stages"][-1][2]
    flat = h.transpose(1, 0, 2, 3).reshape(h.shape[1], -1)
    z1 = flat @ params["fc1.w"] + params["fc1.b"]
    a1 = np.maximum(z1, 0.0)
    logits = a1 @ params["fc2.w"] + params["fc2.b"]
    cache.update(pooled_shape=h.shape, flat=flat, a1=a1)
    return logits, cache


def backward(spec, params, cache, dlogits, input_grad=True):
    grads = {}
    da1, grads["fc2.w"], grads["fc2.b"] = L.dense_backward(cache["a1"], params["fc2.w"], dlogits)
    dz1 = L.relu_backward(cache["a1"], da1)
    dflat, grads["fc1.w"], grads["fc1.b"] = L.dense_backward(cache["flat"], params["fc1.w"], dz1)
    c, n, hh, ww = cache["pooled_shape"]
    dh = dflat.reshape(n, c, hh, ww).transpose(1, 0, 2, 3)
    for i in range(len(cache["stages"]), 0, -1):
        in_shape, cols, a, pooled = cache["stages"][i - 1]
        da = L.maxpool_backward(a, pooled, spec.pool, dh)
        if i == len(cache["stages"]):
            cache["d_conv_maps"] = da
        dz = L.relu_backward(a, da)
        dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = L.conv2d_backward(
            in_shape, cols, params[f"conv{i}.w"], dz, input_grad=input_grad or i > 1
        )
    dx = None if dh is None else dh.transpose(1, 2, 3, 0)
    return grads, dx
