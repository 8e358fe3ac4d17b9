"""Mini-batch SGD with momentum on soft-label cross-entropy."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..augment import MixParams, cutmix_arrays, mixup_arrays, sample_cutbox, sample_lambda, sample_pair
from ..errors import UsageError
from ..rng import make_rng
from .core import ModelParams, ModelSpec, init_params, loss_and_grads

log = logging.getLogger(__name__)

DEFAULT_LR = {"logistic": 0.05, "smallcnn": 0.01, "tinyvit": 0.01}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: Optional[float] = None
    momentum: float = 0.9
    seed: int = 0
    mix: Optional[MixParams] = None
    mix_fraction: float = 0.5
    init_scale: float = 1.0

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise UsageError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate is not None and not self.learning_rate >= 0:
            raise UsageError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError("momentum must be in [0, 1)")
        if not 0.0 <= self.mix_fraction <= 1.0:
            raise UsageError("mix_fraction must be in [0, 1]")
        if not self.init_scale > 0:
            raise UsageError("init_scale must be > 0")

    def lr_for(self, arch: str) -> float:
        return DEFAULT_LR[arch] if self.learning_rate is None else self.learning_rate


def mix_batch(x, y, X_all, Y_all, mix: MixParams, n_mix: int, rng):
    """Overwrite the first ``n_mix`` rows of (x, y) with fresh mixed examples."""
    h, w = X_all.shape[1:3]
    for s in range(n_mix):
        i, j = sample_pair(len(X_all), rng)
        lam = sample_lambda(mix.alpha, rng)
        if mix.method == "cutmix":
            box = sample_cutbox(w, h, lam, rng)
            x[s], lam = cutmix_arrays(X_all[i], X_all[j], box.clipped)
        else:
            x[s] = mixup_arrays(X_all[i], X_all[j], lam)
        y[s] = lam * Y_all[i] + (1.0 - lam) * Y_all[j]
    return x, y


def sgd_step(params: ModelParams, grads: dict, velocity: dict, lr: float, momentum: float):
    for name, g in grads.items():
        v = velocity.get(name)
        v = g.copy() if v is None else momentum * v + g
        velocity[name] = v
        params.tensors[name] -= lr * v


def train_arrays(X, Y, spec: ModelSpec, cfg: TrainConfig, params: Optional[ModelParams] = None):
    """Train on (N, H, W, C) images and (N, K) soft labels.

    Returns the trained parameters and the per-epoch mean loss.
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise UsageError("cannot train on an empty dataset")
    if X.shape[1:] != spec.input_shape:
        raise UsageError(f"images {X.shape[1:]} do not match model input {spec.input_shape}")
    if params is None:
        params = init_params(spec, cfg.seed, cfg.init_scale)
    else:
        params = params.copy()
    lr = cfg.lr_for(spec.arch)
    mix = cfg.mix if cfg.mix is not None and len(X) > 1 else None
    velocity = {}
    history = []
    n = len(X)
    for epoch in range(cfg.epochs):
        order = make_rng(cfg.seed, "shuffle", epoch).permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx].copy(), Y[idx].copy()
            if mix is not None:
                n_mix = int(np.floor(cfg.mix_fraction * len(idx) + 0.5))
                mix_batch(xb, yb, X, Y, mix, n_mix, make_rng(cfg.seed, "mix", epoch, b))
            loss, grads = loss_and_grads(params, xb, yb)
            total += loss * len(idx)
            sgd_step(params, grads, velocity, lr, cfg.momentum)
        history.append(total / n)
        log.debug("epoch %d mean loss %.6f", epoch, history[-1])
    return params, history


def train(dataset, spec: ModelSpec, cfg: TrainConfig, params: Optional[ModelParams] = None):
    if len(dataset) == 0:
        raise UsageError("cannot train on an empty dataset")
    return train_arrays(dataset.images(), dataset.labels(), spec, cfg, params)


def write_loss_history(history, path):
    lines = ["epoch,mean_loss"] + [f"{e},{loss!r}" for e, loss in enumerate(history, start=1)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
