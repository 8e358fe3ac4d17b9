"""Multinomial logistic regression on flattened pixels."""
import numpy as np

from .layers import dense_backward, glorot_uniform


def init(spec, rng, scale=1.0):
    d = spec.height * spec.width * spec.channels
    return {
        "W": glorot_uniform(rng, (d, spec.num_classes), d, spec.num_classes, scale),
        "b": np.zeros(spec.num_classes),
    }


def forward(spec, params, x):
    flat = x.reshape(x.shape[0], -1)
    return flat @ params["W"] + params["b"], {"flat": flat, "shape": x.shape}


def backward(spec, params, cache, dlogits, input_grad=True):
    dflat, dw, db = dense_backward(cache["flat"], params["W"], dlogits)
    return {"W": dw, "b": db}, dflat.reshape(cache["shape"])
