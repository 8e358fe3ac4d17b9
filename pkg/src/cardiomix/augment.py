"""CutMix and MixUp example synthesis with reproducible randomness."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import UsageError
from .imgcore import Box, Dataset, Example, Image, save_pgm
from .rng import make_rng

METHODS = ("cutmix", "mixup")
DEFAULT_ALPHA = {"cutmix": 1.0, "mixup": 0.2}


@dataclass(frozen=True)
class MixParams:
    method: str = "cutmix"
    alpha: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown mix method {self.method!r}; expected one of {METHODS}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", DEFAULT_ALPHA[self.method])
        if not self.alpha > 0:
            raise UsageError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class CutBox:
    r_x: float
    r_y: float
    r_w: float
    r_h: float
    clipped: Box

    @property
    def area(self) -> int:
        return self.clipped.area


@dataclass(frozen=True)
class MixedExample:
    image: Image
    label: np.ndarray
    src_i: str
    src_j: str
    lambda_eff: float
    box: Optional[CutBox] = None


# ------------------------------------------------------------------ sampling


def _standard_normal(rng) -> float:
    # Box-Muller from two uniforms, so the stream is defined by the uniform source alone
    u1 = 1.0 - rng.random()
    u2 = rng.random()
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def _log_gamma_variate(alpha: float, rng) -> float:
    """log of a Gamma(alpha, 1) draw (Marsaglia-Tsang, boosted for alpha < 1)."""
    boost = 0.0
    if alpha < 1.0:
        # G(a) = G(a + 1) * U**(1/a); kept in log space so tiny alphas do not underflow
        boost = math.log(1.0 - rng.random()) / alpha
        alpha += 1.0
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _standard_normal(rng)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = 1.0 - rng.random()
        if u < 1.0 - 0.0331 * x**4 or math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return math.log(d * v) + boost


def sample_gamma(alpha: float, rng) -> float:
    return math.exp(_log_gamma_variate(alpha, rng))


def sample_lambda(alpha: float, rng) -> float:
    """Beta(alpha, alpha) draw as X / (X + Y) with X, Y ~ Gamma(alpha, 1)."""
    if not alpha > 0:
        raise UsageError(f"alpha must be > 0, got {alpha}")
    log_x = _log_gamma_variate(alpha, rng)
    log_y = _log_gamma_variate(alpha, rng)
    diff = log_y - log_x
    if diff > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(diff))


def _round(v: float) -> int:
    return math.floor(v + 0.5)


def cutbox_from(W: int, H: int, lam: float, r_x: float, r_y: float) -> CutBox:
    """Box with extents W*sqrt(1-lam), H*sqrt(1-lam) centred at (r_x, r_y).

    Edges round to the nearest integer (halves up), then clip to the image.
    """
    if not 0.0 <= lam <= 1.0:
        raise UsageError(f"lambda must be in [0, 1], got {lam}")
    cut = math.sqrt(1.0 - lam)
    r_w, r_h = W * cut, H * cut
    x0 = min(max(_round(r_x - r_w / 2), 0), W)
    x1 = min(max(_round(r_x + r_w / 2), 0), W)
    y0 = min(max(_round(r_y - r_h / 2), 0), H)
    y1 = min(max(_round(r_y + r_h / 2), 0), H)
    return CutBox(r_x, r_y, r_w, r_h, Box(x0, y0, max(x0, x1), max(y0, y1)))


def sample_cutbox(W: int, H: int, lam: float, rng) -> CutBox:
    r_x = rng.uniform(0.0, W)
    r_y = rng.uniform(0.0, H)
    return cutbox_from(W, H, lam, r_x, r_y)


# -------------------------------------------------------------------- mixing


def _check_pair(ex_i: Example, ex_j: Example):
    if ex_i.image.shape != ex_j.image.shape:
        raise UsageError(f"image shapes differ: {ex_i.image.shape} vs {ex_j.image.shape}")
    if ex_i.label.shape != ex_j.label.shape:
        raise UsageError("label dimensions differ")


def mix_labels(y_i, y_j, lam: float) -> np.ndarray:
    return lam * np.asarray(y_i) + (1.0 - lam) * np.asarray(y_j)


def cutmix_arrays(x_i: np.ndarray, x_j: np.ndarray, box: Box):
    """Paste ``box`` of x_j into x_i; returns (image, kept fraction)."""
    out = x_i.copy()
    out[box.y0 : box.y1, box.x0 : box.x1] = x_j[box.y0 : box.y1, box.x0 : box.x1]
    h, w = x_i.shape[:2]
    return out, 1.0 - box.area / (w * h)


def mixup_arrays(x_i: np.ndarray, x_j: np.ndarray, lam: float) -> np.ndarray:
    mixed = lam * x_i + (1.0 - lam) * x_j
    # rounding can land an ulp outside the segment [x_i, x_j]
    return np.clip(mixed, np.minimum(x_i, x_j), np.maximum(x_i, x_j))


def apply_cutmix(ex_i: Example, ex_j: Example, box: CutBox) -> MixedExample:
    _check_pair(ex_i, ex_j)
    pixels, lam_eff = cutmix_arrays(ex_i.image.data, ex_j.image.data, box.clipped)
    return MixedExample(
        Image(pixels), mix_labels(ex_i.label, ex_j.label, lam_eff), ex_i.id, ex_j.id, lam_eff, box
    )


def apply_mixup(ex_i: Example, ex_j: Example, lam: float) -> MixedExample:
    _check_pair(ex_i, ex_j)
    pixels = mixup_arrays(ex_i.image.data, ex_j.image.data, lam)
    return MixedExample(
        Image(pixels), mix_labels(ex_i.label, ex_j.label, lam), ex_i.id, ex_j.id, float(lam)
    )


def cutmix(ex_i: Example, ex_j: Example, params: MixParams, rng) -> MixedExample:
    _check_pair(ex_i, ex_j)
    lam = sample_lambda(params.alpha, rng)
    box = sample_cutbox(ex_i.image.width, ex_i.image.height, lam, rng)
    return apply_cutmix(ex_i, ex_j, box)


def mixup(ex_i: Example, ex_j: Example, params: MixParams, rng) -> MixedExample:
    _check_pair(ex_i, ex_j)
    return apply_mixup(ex_i, ex_j, sample_lambda(params.alpha, rng))


MIXERS = {"cutmix": cutmix, "mixup": mixup}


def sample_pair(n: int, rng):
    """Uniform ordered pair (i, j) with i != j."""
    if n < 2:
        raise UsageError("need at least two examples to mix")
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    return i, j + (j >= i)


def augment_item(dataset: Dataset, params: MixParams, index: int) -> MixedExample:
    """The ``index``-th mixed example; its stream depends only on (seed, index)."""
    rng = make_rng(params.seed, "augment", params.method, index)
    i, j = sample_pair(len(dataset), rng)
    return MIXERS[params.method](dataset[i], dataset[j], params, rng)


def augment_batch(dataset: Dataset, params: MixParams, n_out: int) -> list:
    if len(dataset) == 0:
        raise UsageError("cannot augment an empty dataset")
    if len(dataset) < 2:
        raise UsageError("need at least two examples to mix")
    return [augment_item(dataset, params, k) for k in range(n_out)]


def dump_mixed(mixed: list, outdir) -> Path:
    """Write mixed images as PGM plus a ``path,lambda_eff,src_i,src_j`` manifest."""
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    lines = ["path,lambda_eff,src_i,src_j"]
    for k, m in enumerate(mixed):
        rel = f"images/mix_{k:05d}.pgm"
        save_pgm(m.image, outdir / rel)
        lines.append(f"{rel},{m.lambda_eff!r},{m.src_i},{m.src_j}")
    path = outdir / "mixed.csv"
    path.write_text("\n".join(lines) + "\n")
    return path
