"""Model specs, parameters and the forward/backward entry points."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import UnsupportedArchError, UsageError
from ..rng import make_rng
from . import cnn, logistic, vit
from .layers import softmax

ARCHS = {"logistic": logistic, "smallcnn": cnn, "tinyvit": vit}
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "smallcnn"
    height: int = 100
    width: int = 100
    channels: int = 1
    num_classes: int = 2
    # smallcnn
    cnn_channels: tuple = (8, 16)
    kernel: int = 3
    pool: int = 2
    hidden: int = 32
    # tinyvit
    patch: int = 10
    embed: int = 32
    heads: int = 4
    mlp: int = 64
    blocks: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cnn_channels", tuple(int(c) for c in self.cnn_channels))
        self.validate()

    def validate(self):
        if self.arch not in ARCHS:
            raise UnsupportedArchError(f"unsupported architecture {self.arch!r}")
        if min(self.height, self.width, self.channels) < 1:
            raise UsageError("input dimensions must be positive")
        if self.num_classes < 2:
            raise UsageError("num_classes must be >= 2")
        if self.arch == "smallcnn":
            if not self.cnn_channels or min(self.cnn_channels) < 1:
                raise UsageError("cnn_channels must be non-empty and positive")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise UsageError("kernel must be odd and positive")
            if self.pool < 1 or self.hidden < 1:
                raise UsageError("pool and hidden must be positive")
            if min(cnn.feature_shape(self)[:2]) < 1:
                raise UsageError("input too small for the number of pooling stages")
        if self.arch == "tinyvit":
            if self.patch < 1 or self.height % self.patch or self.width % self.patch:
                raise UsageError("patch size must divide height and width")
            if self.embed % self.heads:
                raise UsageError("embed must be divisible by heads")
            if min(self.mlp, self.blocks) < 1:
                raise UsageError("mlp and blocks must be positive")

    @property
    def input_shape(self):
        return (self.height, self.width, self.channels)

    def fields(self) -> dict:
        """Architecture-relevant fields, as stored in checkpoints."""
        base = ["height", "width", "channels", "num_classes"]
        extra = {
            "logistic": [],
            "smallcnn": ["cnn_channels", "kernel", "pool", "hidden"],
            "tinyvit": ["patch", "embed", "heads", "mlp", "blocks"],
        }[self.arch]
        return {k: getattr(self, k) for k in base + extra}

    def with_input(self, height, width, channels) -> "ModelSpec":
        return replace(self, height=height, width=width, channels=channels)


@dataclass
class ModelParams:
    spec: ModelSpec
    tensors: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def to_float32(self) -> "ModelParams":
        return ModelParams(
            self.spec,
            {k: v.astype(np.float32).astype(np.float64) for k, v in self.tensors.items()},
        )


def init_params(spec: ModelSpec, seed: int = 0, scale: float = 1.0) -> ModelParams:
    """Glorot-uniform weights (times ``scale``), zero biases, seed-derived."""
    rng = make_rng(seed, "init", spec.arch)
    return ModelParams(spec, ARCHS[spec.arch].init(spec, rng, scale))


def as_batch(spec: ModelSpec, images) -> np.ndarray:
    x = np.asarray(getattr(images, "data", images), dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :, None]
    elif x.ndim == 3:
        x = x[None] if x.shape == spec.input_shape else x[..., None]
    if x.ndim != 4 or x.shape[1:] != spec.input_shape:
        raise UsageError(f"input shape {x.shape[1:]} does not match model {spec.input_shape}")
    return x


def forward_batch(params: ModelParams, images, keep_cache: bool = False):
    """Logits for an (N, H, W, C) batch; optionally also the backprop cache."""
    spec = params.spec
    x = as_batch(spec, images)
    logits, cache = ARCHS[spec.arch].forward(spec, params.tensors, x)
    return (logits, cache) if keep_cache else logits


def forward(params: ModelParams, image):
    """Logits and class probabilities for a single image."""
    x = as_batch(params.spec, image)
    if x.shape[0] != 1:
        raise UsageError("forward takes a single image; use forward_batch")
    logits = forward_batch(params, x)[0]
    return logits, softmax(logits)


def predict_proba(params: ModelParams, images, batch_size: int = 64) -> np.ndarray:
    x = as_batch(params.spec, images)
    out = [softmax(forward_batch(params, x[i : i + batch_size])) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, params.spec.num_classes))


def loss_soft_ce(probs, label) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if probs.shape != label.shape:
        raise UsageError(f"probs {probs.shape} and label {label.shape} differ in shape")
    return float(-(label * np.log(np.maximum(probs, PROB_FLOOR))).sum(axis=-1).mean())


def loss_and_grads(params: ModelParams, images, labels):
    """Mean soft cross-entropy over the batch and its parameter gradients."""
    spec = params.spec
    x = as_batch(spec, images)
    y = np.asarray(labels, dtype=np.float64).reshape(len(x), spec.num_classes)
    if len(x) == 0:
        raise UsageError("batch must be non-empty")
    logits, cache = ARCHS[spec.arch].forward(spec, params.tensors, x)
    probs = softmax(logits)
    loss = loss_soft_ce(probs, y)
    dlogits = (probs - y) / len(x)
    grads, _ = ARCHS[spec.arch].backward(spec, params.tensors, cache, dlogits, input_grad=False)
    return loss, grads


def backward(params: ModelParams, images, labels) -> dict:
    return loss_and_grads(params, images, labels)[1]


def logit_input_gradient(params: ModelParams, image, target_class: int) -> np.ndarray:
    """d logit[target_class] / d image, shape (H, W, C)."""
    spec = params.spec
    x = as_batch(spec, image)
    logits, cache = ARCHS[spec.arch].forward(spec, params.tensors, x)
    dlogits = np.zeros_like(logits)
    dlogits[:, target_class] = 1.0
    _, dx = ARCHS[spec.arch].backward(spec, params.tensors, cache, dlogits)
    return dx[0]


def attention_maps(params: ModelParams, image) -> list:
    """Per-block attention weights (heads, S, S) of the tiny transformer."""
    if params.spec.arch != "tinyvit":
        raise UnsupportedArchError("attention maps need the tinyvit architecture")
    _, cache = forward_batch(params, image, keep_cache=True)
    return [a[0] for a in cache["attention"]]
