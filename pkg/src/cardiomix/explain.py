"""Attribution maps: occlusion, input-gradient saliency and Grad-CAM, plus
heatmap rendering and pointing-game scoring."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from .errors import UnsupportedArchError, UsageError
from .imgcore import Box, Image, save_ppm
from .model import ARCHS, ModelParams, forward_batch, logit_input_gradient, softmax
from .model.core import as_batch
from .preprocess import resize_array

TARGETS = ("logit", "probability")


@dataclass(frozen=True)
class OcclusionConfig:
    window: int = 15
    stride: int = 8
    baseline: float = 0.0
    target: str = "logit"
    target_class: int = 1
    batch_size: int = 64

    def validate(self, height: int, width: int):
        if self.window < 1 or self.window > min(height, width):
            raise UsageError(f"window {self.window} must be in [1, {min(height, width)}]")
        if not 1 <= self.stride <= self.window:
            # a stride beyond the window would leave pixels no window covers
            raise UsageError(f"stride must be in [1, window={self.window}]")
        if not 0.0 <= self.baseline <= 1.0:
            raise UsageError("baseline must be in [0, 1]")
        if self.target not in TARGETS:
            raise UsageError(f"target must be one of {TARGETS}")


@dataclass(frozen=True)
class AttributionMap:
    """Signed per-pixel attribution; positive values support the target class.

    ``windows`` holds ``(row, col, delta)`` for occlusion maps.
    """

    values: np.ndarray
    windows: Optional[tuple] = None

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def window_starts(n: int, window: int, stride: int) -> list:
    """Regular grid 0, s, 2s, ... plus an end-aligned start if the grid falls short."""
    if window > n:
        raise UsageError(f"window {window} larger than image extent {n}")
    starts = list(range(0, n - window + 1, stride))
    if starts[-1] != n - window:
        starts.append(n - window)
    return starts


def _score(params, x, cfg):
    logits = forward_batch(params, x)
    if cfg.target == "probability":
        return softmax(logits)[:, cfg.target_class]
    return logits[:, cfg.target_class]


def occlusion_map(params: ModelParams, image, cfg: OcclusionConfig = OcclusionConfig(), threads: int = 1):
    """Mean score drop over all occluding windows that cover each pixel."""
    x = as_batch(params.spec, image)[0]
    h, w = x.shape[:2]
    cfg.validate(h, w)
    positions = list(product(window_starts(h, cfg.window, cfg.stride),
                             window_starts(w, cfg.window, cfg.stride)))
    base = _score(params, x[None], cfg)[0]

    def chunk_scores(chunk):
        batch = np.repeat(x[None], len(chunk), axis=0)
        for b, (r, c) in enumerate(chunk):
            batch[b, r : r + cfg.window, c : c + cfg.window, :] = cfg.baseline
        return _score(params, batch, cfg)

    # a window already at the baseline leaves the input unchanged: delta is exactly 0
    changed = [
        i for i, (r, c) in enumerate(positions)
        if np.any(x[r : r + cfg.window, c : c + cfg.window] != cfg.baseline)
    ]
    todo = [positions[i] for i in changed]
    chunks = [todo[i : i + cfg.batch_size] for i in range(0, len(todo), cfg.batch_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(chunk_scores, chunks))
    else:
        scores = [chunk_scores(c) for c in chunks]
    deltas = np.zeros(len(positions))
    if changed:
        deltas[changed] = base - np.concatenate(scores)

    total = np.zeros((h, w))
    count = np.zeros((h, w))
    for (r, c), d in zip(positions, deltas):
        total[r : r + cfg.window, c : c + cfg.window] += d
        count[r : r + cfg.window, c : c + cfg.window] += 1
    windows = tuple((r, c, float(d)) for (r, c), d in zip(positions, deltas))
    return AttributionMap(total / count, windows)


def saliency_grad(params: ModelParams, image, target_class: int = 1) -> AttributionMap:
    """|d logit / d pixel|, max over channels."""
    g = logit_input_gradient(params, image, target_class)
    return AttributionMap(np.abs(g).max(axis=-1))


def gradcam(params: ModelParams, image, target_class: int = 1) -> AttributionMap:
    spec = params.spec
    if spec.arch != "smallcnn":
        raise UnsupportedArchError(f"Grad-CAM needs conv feature maps; {spec.arch!r} has none")
    x = as_batch(spec, image)
    arch = ARCHS[spec.arch]
    logits, cache = arch.forward(spec, params.tensors, x)
    dlogits = np.zeros_like(logits)
    dlogits[:, target_class] = 1.0
    arch.backward(spec, params.tensors, cache, dlogits)
    # channel-major (C, N, h, w); a single image sits at N = 0
    maps, dmaps = cache["conv_maps"][:, 0], cache["d_conv_maps"][:, 0]
    weights = dmaps.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, maps, axes=1), 0.0)
    cam = resize_array(cam, spec.height, spec.width)
    return AttributionMap(np.maximum(cam, 0.0))


def _values(attr) -> np.ndarray:
    return np.asarray(getattr(attr, "values", attr), dtype=np.float64)


def heatmap_image(attr, underlay: Image) -> Image:
    """50% blend of the grayscale underlay with red (positive) / blue (negative)."""
    v = _values(attr)
    gray = underlay.data.mean(axis=-1)
    if v.shape != gray.shape:
        raise UsageError(f"map {v.shape} and underlay {gray.shape} differ in size")
    rgb = np.repeat(gray[:, :, None], 3, axis=-1)
    peak = np.abs(v).max()
    if peak == 0:
        return Image(rgb)
    v = v / peak
    overlay = np.zeros_like(rgb)
    overlay[..., 0] = np.maximum(v, 0.0)
    overlay[..., 2] = np.maximum(-v, 0.0)
    return Image(np.clip(0.5 * rgb + 0.5 * overlay, 0.0, 1.0))


def render_heatmap(attr, underlay: Image, path) -> Image:
    img = heatmap_image(attr, underlay)
    save_ppm(img, path)
    return img


def write_attribution_csv(attr, path):
    v = _values(attr)
    with open(path, "w") as fh:
        for row in v:
            fh.write(",".join(repr(float(a)) for a in row) + "\n")


def pointing_game(attr, lesion_box: Box) -> bool:
    """Whether the map's argmax (first in row-major order on ties) hits the box."""
    v = _values(attr)
    if not Box(*lesion_box).inside(*v.shape):
        raise UsageError(f"lesion box {lesion_box} outside map of shape {v.shape}")
    row, col = np.unravel_index(int(np.argmax(v)), v.shape)
    return Box(*lesion_box).contains(int(row), int(col))
