"""Tiny vision transformer.

Patch embedding, a class token and learned positional embeddings, then
``blocks`` pre-norm encoder blocks (multi-head self-attention and a GELU
MLP, each with a residual connection), a final layer norm and a linear
head on the class token.
"""
import numpy as np

from . import layers as L

POS_INIT = 0.02


def n_patches(spec):
    return (spec.height // spec.patch) * (spec.width // spec.patch)


def patchify(x, p):
    n, h, w, c = x.shape
    r = x.reshape(n, h // p, p, w // p, p, c).transpose(0, 1, 3, 2, 4, 5)
    return r.reshape(n, (h // p) * (w // p), p * p * c)


def unpatchify(t, shape, p):
    n, h, w, c = shape
    r = t.reshape(n, h // p, w // p, p, p, c).transpose(0, 1, 3, 2, 4, 5)
    return r.reshape(shape)


def init(spec, rng, scale=1.0):
    d, m, k = spec.embed, spec.mlp, spec.num_classes
    pd = spec.patch * spec.patch * spec.channels
    g = L.glorot_uniform
    params = {
        "patch.w": g(rng, (pd, d), pd, d, scale),
        "patch.b": np.zeros(d),
        "cls": rng.uniform(-POS_INIT, POS_INIT, size=d),
        "pos": rng.uniform(-POS_INIT, POS_INIT, size=(n_patches(spec) + 1, d)),
    }
    for i in range(spec.blocks):
        params.update({
            f"block{i}.ln1.g": np.ones(d),
            f"block{i}.ln1.b": np.zeros(d),
            f"block{i}.qkv.w": g(rng, (d, 3 * d), d, 3 * d, scale),
            f"block{i}.qkv.b": np.zeros(3 * d),
            f"block{i}.proj.w": g(rng, (d, d), d, d, scale),
            f"block{i}.proj.b": np.zeros(d),
            f"block{i}.ln2.g": np.ones(d),
            f"block{i}.ln2.b": np.zeros(d),
            f"block{i}.mlp1.w": g(rng, (d, m), d, m, scale),
            f"block{i}.mlp1.b": np.zeros(m),
            f"block{i}.mlp2.w": g(rng, (m, d), m, d, scale),
            f"block{i}.mlp2.b": np.zeros(d),
        })
    params.update({
        "lnf.g": np.ones(d),
        "lnf.b": np.zeros(d),
        "head.w": g(rng, (d, k), d, k, scale),
        "head.b": np.zeros(k),
    })
    return params


def forward(spec, params, x):
    n = x.shape[0]
    patches = patchify(x, spec.patch)
    emb = patches @ params["patch.w"] + params["patch.b"]
    cls = np.broadcast_to(params["cls"], (n, 1, spec.embed))
    z = np.concatenate([cls, emb], axis=1) + params["pos"]
    cache = {"x_shape": x.shape, "patches": patches, "blocks": [], "attention": []}
    for i in range(spec.blocks):
        p = f"block{i}."
        h1, ln1 = L.layernorm_forward(z, params[p + "ln1.g"], params[p + "ln1.b"])
        a, att = L.attention_forward(
            h1, params[p + "qkv.w"], params[p + "qkv.b"],
            params[p + "proj.w"], params[p + "proj.b"], spec.heads,
        )
        z1 = z + a
        h2, ln2 = L.layernorm_forward(z1, params[p + "ln2.g"], params[p + "ln2.b"])
        u = h2 @ params[p + "mlp1.w"] + params[p + "mlp1.b"]
        gu, t = L.gelu_forward(u)
        z = z1 + gu @ params[p + "mlp2.w"] + params[p + "mlp2.b"]
        cache["blocks"].append((ln1, att, ln2, h2, u, gu, t))
        cache["attention"].append(att[4])
    c, lnf = L.layernorm_forward(z[:, 0], params["lnf.g"], params["lnf.b"])
    logits = c @ params["head.w"] + params["head.b"]
    cache.update(lnf=lnf, c=c, seq_len=z.shape[1])
    return logits, cache


def backward(spec, params, cache, dlogits, input_grad=True):
    grads = {}
    dc, grads["head.w"], grads["head.b"] = L.dense_backward(cache["c"], params["head.w"], dlogits)
    dcls, grads["lnf.g"], grads["lnf.b"] = L.layernorm_backward(cache["lnf"], params["lnf.g"], dc)
    n = dlogits.shape[0]
    dz = np.zeros((n, cache["seq_len"], spec.embed))
    dz[:, 0] = dcls
    for i in range(spec.blocks - 1, -1, -1):
        p = f"block{i}."
        ln1, att, ln2, h2, u, gu, t = cache["blocks"][i]
        dgu, grads[p + "mlp2.w"], grads[p + "mlp2.b"] = L.dense_backward(gu, params[p + "mlp2.w"], dz)
        du = L.gelu_backward(u, t, dgu.reshape(u.shape))
        dh2, grads[p + "mlp1.w"], grads[p + "mlp1.b"] = L.dense_backward(h2, params[p + "mlp1.w"], du)
        dln2, grads[p + "ln2.g"], grads[p + "ln2.b"] = L.layernorm_backward(
            ln2, params[p + "ln2.g"], dh2.reshape(dz.shape)
        )
        dz1 = dz + dln2
        dh1, grads[p + "qkv.w"], grads[p + "qkv.b"], grads[p + "proj.w"], grads[p + "proj.b"] = (
            L.attention_backward(att, params[p + "qkv.w"], params[p + "proj.w"], spec.heads, dz1)
        )
        dln1, grads[p + "ln1.g"], grads[p + "ln1.b"] = L.layernorm_backward(
            ln1, params[p + "ln1.g"], dh1
        )
        dz = dz1 + dln1
    grads["pos"] = dz.sum(axis=0)
    grads["cls"] = dz[:, 0].sum(axis=0)
    demb = dz[:, 1:]
    dpatches, grads["patch.w"], grads["patch.b"] = L.dense_backward(
        cache["patches"], params["patch.w"], demb
    )
    dx = unpatchify(dpatches.reshape(cache["patches"].shape), cache["x_shape"], spec.patch)
    return grads, dx
