"""Run configuration: defaults, ``key = value`` files and flag overrides.

Keys are dotted ``section.name``; unknown keys are rejected so typos fail
loudly. The resolved configuration is written next to every artifact and
can be loaded back to reproduce it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .augment import MixParams
from .errors import CardiomixError, ConfigError
from .explain import OcclusionConfig
from .imgcore import SyntheticSpec
from .model import ModelSpec, TrainConfig
from .preprocess import PreprocessConfig
from .rng import ALGORITHM, derive_seed


def _check(pred, message):
    return {"check": (pred, message)}


positive = _check(lambda v: v > 0, "must be > 0")
non_negative = _check(lambda v: v >= 0, "must be >= 0")
unit = _check(lambda v: 0.0 <= v <= 1.0, "must be in [0, 1]")


@dataclass
class RunSection:
    seed: int = field(default=0, metadata=non_negative)
    threads: int = field(default=0, metadata=non_negative)


@dataclass
class GenSection:
    per_class: int = field(default=200, metadata=non_negative)
    height: int = field(default=100, metadata=positive)
    width: int = field(default=100, metadata=positive)
    radius_min: int = field(default=8, metadata=positive)
    radius_max: int = field(default=14, metadata=positive)
    contrast: float = field(default=0.6, metadata=unit)
    noise: float = field(default=0.1, metadata=unit)
    background: float = field(default=0.2, metadata=unit)


@dataclass
class PreprocessSection:
    sigma: float = field(default=1.0, metadata=positive)
    radius: int = field(default=2, metadata=non_negative)
    height: int = field(default=100, metadata=positive)
    width: int = field(default=100, metadata=positive)


@dataclass
class AugmentSection:
    method: str = field(
        default="none",
        metadata=_check(lambda v: v in ("none", "cutmix", "mixup"), "must be none, cutmix or mixup"),
    )
    alpha: Optional[float] = field(default=None, metadata=positive)
    fraction: float = field(default=0.5, metadata=unit)
    count: int = field(default=16, metadata=non_negative)


@dataclass
class ModelSection:
    arch: str = field(
        default="smallcnn",
        metadata=_check(lambda v: v in ("logistic", "smallcnn", "tinyvit"),
                        "must be logistic, smallcnn or tinyvit"),
    )
    cnn_channels: tuple = (8, 16)
    kernel: int = field(default=3, metadata=positive)
    pool: int = field(default=2, metadata=positive)
    hidden: int = field(default=32, metadata=positive)
    patch: int = field(default=10, metadata=positive)
    embed: int = field(default=32, metadata=positive)
    heads: int = field(default=4, metadata=positive)
    mlp: int = field(default=64, metadata=positive)
    blocks: int = field(default=1, metadata=positive)


@dataclass
class TrainSection:
    epochs: int = field(default=30, metadata=non_negative)
    batch_size: int = field(default=16, metadata=positive)
    lr: Optional[float] = field(default=None, metadata=non_negative)
    momentum: float = field(default=0.9, metadata=_check(lambda v: 0 <= v < 1, "must be in [0, 1)"))
    init_scale: float = field(default=1.0, metadata=positive)


@dataclass
class EvalSection:
    folds: int = field(default=10, metadata=_check(lambda v: v >= 2, "must be >= 2"))


@dataclass
class ExplainSection:
    method: str = field(
        default="occlusion",
        metadata=_check(lambda v: v in ("occlusion", "saliency", "gradcam"),
                        "must be occlusion, saliency or gradcam"),
    )
    window: int = field(default=15, metadata=positive)
    stride: int = field(default=8, metadata=positive)
    baseline: float = field(default=0.0, metadata=unit)
    target: str = field(
        default="logit",
        metadata=_check(lambda v: v in ("logit", "probability"), "must be logit or probability"),
    )
    target_class: int = field(default=1, metadata=non_negative)
    limit: int = field(default=0, metadata=non_negative)
    only_class: int = field(default=-1, metadata=_check(lambda v: v >= -1, "must be >= -1"))


SECTIONS = {
    "run": RunSection,
    "gen": GenSection,
    "preprocess": PreprocessSection,
    "augment": AugmentSection,
    "model": ModelSection,
    "train": TrainSection,
    "eval": EvalSection,
    "explain": ExplainSection,
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    gen: GenSection = field(default_factory=GenSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    explain: ExplainSection = field(default_factory=ExplainSection)

    # ---- typed access

    def get(self, key: str):
        section, name = _split(key)
        return getattr(getattr(self, section), name)

    def set(self, key: str, value, line: Optional[int] = None):
        """Parse (if a string), check and store one dotted key."""
        section, name = _split(key, line)
        f = _field(section, name, line)
        if isinstance(value, str):
            value = _parse(value, f.type, key, line)
        check = f.metadata.get("check")
        if check is not None and value is not None and not check[0](value):
            raise ConfigError(f"{key} = {_format(value)}: {check[1]}", line)
        setattr(getattr(self, section), name, value)

    def items(self):
        for section in SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                yield f"{section}.{f.name}", getattr(obj, f.name)

    # ---- stage configs

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.run.seed, stage)

    def threads(self) -> int:
        if self.run.threads > 0:
            return self.run.threads
        env = os.environ.get("CARDIOMIX_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"CARDIOMIX_THREADS={env!r} is not an integer") from None
        return os.cpu_count() or 1

    def synthetic_spec(self) -> SyntheticSpec:
        g = self.gen
        return SyntheticSpec(
            per_class=g.per_class, height=g.height, width=g.width,
            radius_min=g.radius_min, radius_max=g.radius_max, contrast=g.contrast,
            noise=g.noise, background=g.background, seed=self.stage_seed("gen"),
        )

    def preprocess_config(self) -> PreprocessConfig:
        p = self.preprocess
        return PreprocessConfig(p.sigma, p.radius, p.height, p.width)

    def mix_params(self, stage: str = "train") -> Optional[MixParams]:
        if self.augment.method == "none":
            return None
        return MixParams(self.augment.method, self.augment.alpha, self.stage_seed(stage))

    def model_spec(self, channels: int = 1, num_classes: int = 2) -> ModelSpec:
        m = self.model
        return ModelSpec(
            arch=m.arch, height=self.preprocess.height, width=self.preprocess.width,
            channels=channels, num_classes=num_classes, cnn_channels=m.cnn_channels,
            kernel=m.kernel, pool=m.pool, hidden=m.hidden, patch=m.patch, embed=m.embed,
            heads=m.heads, mlp=m.mlp, blocks=m.blocks,
        )

    def train_config(self, stage: str = "train") -> TrainConfig:
        t = self.train
        return TrainConfig(
            epochs=t.epochs, batch_size=t.batch_size, learning_rate=t.lr, momentum=t.momentum,
            seed=self.stage_seed(stage), mix=self.mix_params(stage),
            mix_fraction=self.augment.fraction, init_scale=t.init_scale,
        )

    def occlusion_config(self) -> OcclusionConfig:
        e = self.explain
        return OcclusionConfig(e.window, e.stride, e.baseline, e.target, e.target_class)

    def validate(self):
        """Cross-field checks, done by building every stage config."""
        try:
            self.synthetic_spec().validate()
            self.preprocess_config().validate()
            self.model_spec()
            self.train_config().validate()
        except CardiomixError as exc:
            raise ConfigError(str(exc)) from None

    # ---- serialization

    def dumps(self) -> str:
        lines = [
            "# resolved configuration (defaults <- config file <- flags)",
            f"# rng: {ALGORITHM}",
        ]
        current = None
        for key, value in self.items():
            section = key.split(".")[0]
            if section != current:
                lines.append("")
                current = section
            lines.append(f"{key} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> Path:
        path = Path(outdir) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path


def _split(key: str, line: Optional[int] = None):
    section, dot, name = key.partition(".")
    if not dot or section not in SECTIONS:
        raise ConfigError(f"unknown key {key!r}", line)
    return section, name


def _field(section: str, name: str, line: Optional[int]):
    for f in fields(SECTIONS[section]):
        if f.name == name:
            return f
    raise ConfigError(f"unknown key '{section}.{name}'", line)


def _parse(text: str, type_, key: str, line: Optional[int]):
    text = text.strip()
    type_ = str(type_)
    try:
        if "Optional" in type_ and text.lower() in ("none", "default", ""):
            return None
        if type_ == "int":
            return int(text)
        if "float" in type_:
            return float(text)
        if type_ == "tuple":
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type_}", line) from None


def _format(value) -> str:
    if value is None:
        return "default"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def loads(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        cfg.set(key.strip(), value, lineno)
    return cfg


def load_config(path, base: Optional[RunConfig] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text(), base)


def copy_config(cfg: RunConfig) -> RunConfig:
    return RunConfig(**{s: replace(getattr(cfg, s)) for s in SECTIONS})
