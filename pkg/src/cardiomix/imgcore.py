"""Image/label containers, Netpbm I/O, manifest ingestion and the synthetic
lesion dataset generator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ManifestError, PgmLengthError, PgmParseError, UsageError
from .rng import make_rng

DEFAULT_CLASS_NAMES = ("HC", "MCD")


class Box(NamedTuple):
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def area(self) -> int:
        return max(0, self.x1 - self.x0) * max(0, self.y1 - self.y0)

    def contains(self, row: int, col: int) -> bool:
        return self.y0 <= row < self.y1 and self.x0 <= col < self.x1

    def inside(self, height: int, width: int) -> bool:
        return 0 <= self.x0 <= self.x1 <= width and 0 <= self.y0 <= self.y1 <= height


@dataclass(frozen=True)
class Image:
    """An H x W x C grid of reals in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or min(data.shape) < 1:
            raise UsageError(f"image data must be HxWxC, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise UsageError("image values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape


def one_hot(index: int, num_classes: int) -> np.ndarray:
    if not 0 <= index < num_classes:
        raise UsageError(f"class index {index} out of range for {num_classes} classes")
    y = np.zeros(num_classes)
    y[index] = 1.0
    return y


def check_soft_label(label, num_classes: Optional[int] = None) -> np.ndarray:
    y = np.asarray(label, dtype=np.float64)
    if y.ndim != 1 or (num_classes is not None and y.shape[0] != num_classes):
        raise UsageError(f"label has shape {y.shape}, expected ({num_classes},)")
    if np.any(y < 0) or abs(y.sum() - 1.0) > 1e-9:
        raise UsageError("soft label must be non-negative and sum to 1")
    return y


@dataclass(frozen=True)
class Example:
    id: str
    image: Image
    label: np.ndarray
    lesion_box: Optional[Box] = None

    def __post_init__(self):
        object.__setattr__(self, "label", check_soft_label(self.label))
        if self.lesion_box is not None and not self.lesion_box.inside(
            self.image.height, self.image.width
        ):
            raise UsageError(f"lesion box {self.lesion_box} outside image bounds")

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.label))


@dataclass(frozen=True)
class Dataset:
    examples: tuple
    class_names: tuple = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        examples = tuple(self.examples)
        names = tuple(self.class_names)
        object.__setattr__(self, "examples", examples)
        object.__setattr__(self, "class_names", names)
        if examples:
            shape = examples[0].image.shape
            for ex in examples:
                if ex.image.shape != shape:
                    raise UsageError(
                        f"example {ex.id} has shape {ex.image.shape}, expected {shape}"
                    )
                if ex.label.shape[0] != len(names):
                    raise UsageError(f"example {ex.id} label does not match class count")

    def __len__(self):
        return len(self.examples)

    def __getitem__(self, i):
        return self.examples[i]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_shape(self):
        return self.examples[0].image.shape

    def images(self) -> np.ndarray:
        """Stacked (N, H, W, C) array."""
        return np.stack([ex.image.data for ex in self.examples])

    def labels(self) -> np.ndarray:
        return np.stack([ex.label for ex in self.examples])

    def classes(self) -> np.ndarray:
        return np.array([ex.class_index for ex in self.examples], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.examples[i] for i in indices), self.class_names)


# ---------------------------------------------------------------- Netpbm I/O


def quantize(values: np.ndarray) -> np.ndarray:
    """[0,1] reals to bytes, rounding half away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def _read_header(buf: bytes, n_fields: int):
    """Parse whitespace/comment separated header tokens after the magic.

    Returns the integer fields and the offset just past the last token.
    """
    pos = 2
    fields = []
    while len(fields) < n_fields:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        token = buf[start:pos]
        if not token:
            raise PgmParseError("unexpected end of header", start)
        if not token.isdigit():
            raise PgmParseError(f"invalid header field {token!r}", start)
        fields.append(int(token))
    return fields, pos


def load_pgm(path) -> Image:
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P5", b"P2"):
        raise PgmParseError(f"bad magic {magic!r}, expected P5 or P2", 0)
    (width, height, maxval), pos = _read_header(buf, 3)
    if width < 1 or height < 1:
        raise PgmParseError("image dimensions must be positive", pos)
    if not 1 <= maxval <= 255:
        raise PgmParseError(f"maxval {maxval} not in 1..255", pos)
    n = width * height
    if magic == b"P5":
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise PgmParseError("missing whitespace after maxval", pos)
        payload = buf[pos + 1 : pos + 1 + n]
        if len(payload) < n:
            raise PgmLengthError(f"{path}: expected {n} payload bytes, found {len(payload)}")
        pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        tokens = buf[pos:].split()
        if len(tokens) < n:
            raise PgmLengthError(f"{path}: expected {n} samples, found {len(tokens)}")
        try:
            pixels = np.array([int(t) for t in tokens[:n]], dtype=np.float64)
        except ValueError as exc:
            raise PgmParseError(f"non-integer sample ({exc})", pos) from None
    if pixels.max(initial=0) > maxval:
        raise PgmParseError(f"sample exceeds maxval {maxval}", pos)
    return Image((pixels / maxval).reshape(height, width, 1))


def _write_netpbm(magic: bytes, img: Image, path):
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    Path(path).write_bytes(header + quantize(img.data).tobytes())


def save_pgm(img: Image, path):
    if img.channels != 1:
        raise UsageError(f"PGM needs 1 channel, image has {img.channels}")
    _write_netpbm(b"P5", img, path)


def save_ppm(img: Image, path):
    if img.channels != 3:
        raise UsageError(f"PPM needs 3 channels, image has {img.channels}")
    _write_netpbm(b"P6", img, path)


def load_ppm(path) -> Image:
    """Read a binary P6 file (maxval 255); used for inspecting rendered heatmaps."""
    buf = Path(path).read_bytes()
    if buf[:2] != b"P6":
        raise PgmParseError(f"bad magic {buf[:2]!r}, expected P6", 0)
    (width, height, maxval), pos = _read_header(buf, 3)
    n = width * height * 3
    payload = buf[pos + 1 : pos + 1 + n]
    if len(payload) < n:
        raise PgmLengthError(f"{path}: expected {n} payload bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / maxval
    return Image(pixels.reshape(height, width, 3))


# ------------------------------------------------------------------ manifests


def load_manifest(path, class_names: Sequence[str] = DEFAULT_CLASS_NAMES) -> Dataset:
    """Read a ``path,label`` CSV; image paths resolve relative to the manifest."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    examples = []
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["path", "label"]:
        raise ManifestError(f"{path}: line 1: expected header 'path,label'")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 2:
            raise ManifestError(f"{path}: line {lineno}: expected 2 columns, got {len(row)}")
        rel, label = row[0].strip(), row[1].strip()
        try:
            index = int(label)
        except ValueError:
            raise ManifestError(f"{path}: line {lineno}: label {label!r} is not an integer") from None
        if not 0 <= index < len(class_names):
            raise ManifestError(
                f"{path}: line {lineno}: class index {index} out of range "
                f"for {len(class_names)} classes"
            )
        img_path = path.parent / rel
        if not img_path.exists():
            raise ManifestError(f"{path}: line {lineno}: image not found: {img_path}")
        examples.append(
            Example(Path(rel).stem, load_pgm(img_path), one_hot(index, len(class_names)))
        )
    if not examples:
        raise ManifestError(f"{path}: empty dataset")
    return Dataset(tuple(examples), tuple(class_names))


def load_lesion_boxes(path) -> dict:
    """Read the ``id,x0,y0,x1,y1`` sidecar written by :func:`save_dataset`."""
    boxes = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            boxes[row["id"]] = Box(*(int(row[k]) for k in ("x0", "y0", "x1", "y1")))
    return boxes


def attach_lesion_boxes(dataset: Dataset, boxes: dict) -> Dataset:
    examples = tuple(
        Example(ex.id, ex.image, ex.label, boxes.get(ex.id, ex.lesion_box))
        for ex in dataset.examples
    )
    return Dataset(examples, dataset.class_names)


def save_dataset(dataset: Dataset, outdir) -> Path:
    """Write images as PGM, plus ``manifest.csv`` and ``lesions.csv``."""
    outdir = Path(outdir)
    (outdir / "images").mkdir(parents=True, exist_ok=True)
    manifest = ["path,label"]
    lesions = ["id,x0,y0,x1,y1"]
    for ex in dataset.examples:
        rel = f"images/{ex.id}.pgm"
        save_pgm(ex.image, outdir / rel)
        manifest.append(f"{rel},{ex.class_index}")
        if ex.lesion_box is not None:
            lesions.append(f"{ex.id}," + ",".join(str(v) for v in ex.lesion_box))
    (outdir / "manifest.csv").write_text("\n".join(manifest) + "\n")
    (outdir / "lesions.csv").write_text("\n".join(lesions) + "\n")
    return outdir / "manifest.csv"


# ------------------------------------------------------------ synthetic data


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the two-class synthetic lesion dataset.

    Class 0 is a smooth random background; class 1 adds one bright
    Gaussian-profile ellipse whose bounding box is recorded.
    """

    per_class: int = 200
    height: int = 100
    width: int = 100
    radius_min: int = 8
    radius_max: int = 14
    contrast: float = 0.6
    noise: float = 0.1
    background: float = 0.2
    seed: int = 0
    coarse_grid: int = 6
    class_names: tuple = field(default=DEFAULT_CLASS_NAMES)

    def validate(self):
        if self.per_class < 0:
            raise UsageError("per_class must be >= 0")
        if self.height < 1 or self.width < 1:
            raise UsageError("image size must be positive")
        if not 1 <= self.radius_min <= self.radius_max:
            raise UsageError("need 1 <= radius_min <= radius_max")
        if self.radius_max >= min(self.height, self.width) / 2:
            raise UsageError("lesion radius must be < min(height, width) / 2")
        if self.contrast <= 0 or self.noise < 0 or self.background < 0:
            raise UsageError("contrast must be > 0, noise and background >= 0")
        if self.background + self.noise + self.contrast > 1.0:
            raise UsageError("background + noise + contrast must not exceed 1")
        if self.coarse_grid < 2:
            raise UsageError("coarse_grid must be >= 2")


def _smooth_field(rng, height, width, grid):
    """Low-frequency noise in [0, 1]: a coarse uniform grid upsampled bilinearly."""
    coarse = rng.random((grid, grid))
    ys = np.linspace(0, grid - 1, height)
    xs = np.linspace(0, grid - 1, width)
    y0 = np.minimum(np.floor(ys).astype(int), grid - 2)
    x0 = np.minimum(np.floor(xs).astype(int), grid - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = coarse[y0][:, x0] * (1 - fx) + coarse[y0][:, x0 + 1] * fx
    bottom = coarse[y0 + 1][:, x0] * (1 - fx) + coarse[y0 + 1][:, x0 + 1] * fx
    return np.clip(top * (1 - fy) + bottom * fy, 0.0, 1.0)


def _background(rng, spec):
    smooth = _smooth_field(rng, spec.height, spec.width, spec.coarse_grid)
    fine = rng.random((spec.height, spec.width))
    return spec.background + spec.noise * (0.7 * smooth + 0.3 * fine)


def _lesion(rng, spec):
    """Gaussian-profile ellipse; returns (additive intensity, bounding box)."""
    ry = int(rng.integers(spec.radius_min, spec.radius_max + 1))
    rx = int(rng.integers(spec.radius_min, spec.radius_max + 1))
    cy = int(rng.integers(ry, spec.height - ry))
    cx = int(rng.integers(rx, spec.width - rx))
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    d2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    # Gaussian profile with sigma = sqrt(2) radii: peak = contrast, rim = contrast * e^(-1/4)
    bump = np.where(d2 <= 1.0, spec.contrast * np.exp(-0.25 * d2), 0.0)
    return bump, Box(cx - rx, cy - ry, cx + rx + 1, cy + ry + 1)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    spec.validate()
    examples = []
    k = len(spec.class_names)
    for cls in (0, 1):
        for n in range(spec.per_class):
            rng = make_rng(spec.seed, "synthetic", cls, n)
            pixels = _background(rng, spec)
            box = None
            if cls == 1:
                bump, box = _lesion(rng, spec)
                pixels = pixels + bump
            pixels = np.clip(pixels, 0.0, 1.0)
            examples.append(Example(f"c{cls}_{n:05d}", Image(pixels), one_hot(cls, k), box))
    return Dataset(tuple(examples), spec.class_names)


def lesion_contrast(image: Image, box: Box) -> float:
    """Mean inside ``box`` minus the mean of the farthest equal-size patch."""
    h, w = image.height, image.width
    bw, bh = box.x1 - box.x0, box.y1 - box.y0
    best = None
    for y0 in (0, h - bh):
        for x0 in (0, w - bw):
            dist = math.hypot(y0 - box.y0, x0 - box.x0)
            if best is None or dist > best[0]:
                best = (dist, y0, x0)
    _, y0, x0 = best
    inside = image.data[box.y0 : box.y1, box.x0 : box.x1].mean()
    outside = image.data[y0 : y0 + bh, x0 : x0 + bw].mean()
    return float(inside - outside)
