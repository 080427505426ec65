"""Flat ``key=value`` run configuration shared by every CLI command."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from weakmap.backbone import BackboneConfig
from weakmap.ops import HeadConfig
from weakmap.train import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # master seed: data, split, initialization, shuffling and augmentation
    seed: int = 0
    # synthetic data
    n_samples: int = 2000
    num_classes: int = 4
    image_size: int = 64
    class_prior: float = 0.3
    label_noise: float = 0.05
    images_per_subject: int = 3
    split_train: float = 0.70
    split_val: float = 0.10
    split_eval: float = 0.20
    # backbone
    input_channels: int = 1
    stem_channels: int = 24
    stem_stride: int = 2
    num_blocks: int = 3
    layers_per_block: int = 4
    growth_rate: int = 12
    compression: float = 0.5
    se_reduction: int = 16
    use_se: bool = True
    # head
    m: int = 12
    k_plus: int = 1
    k_minus: int = 1
    alpha: float = 0.7
    # training
    batch_size: int = 16
    lr0: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    plateau_patience: int = 5
    plateau_min_delta: float = 1e-4
    lr_decay_factor: float = 0.1
    max_epochs: int = 16
    crop_size: int = 56
    # evaluation labels: "true" (drawn lesions) or "observed" (noisy labels)
    eval_labels: str = "true"
    # paths
    data_dir: str = "data"

    # -- sub-configs --------------------------------------------------------

    def backbone(self) -> BackboneConfig:
        return BackboneConfig(
            input_channels=self.input_channels,
            stem_channels=self.stem_channels,
            stem_stride=self.stem_stride,
            num_blocks=self.num_blocks,
            layers_per_block=self.layers_per_block,
            growth_rate=self.growth_rate,
            compression=self.compression,
            se_reduction=self.se_reduction,
            use_se=self.use_se,
        )

    def head(self) -> HeadConfig:
        return HeadConfig(m=self.m, num_classes=self.num_classes, k_plus=self.k_plus,
                          k_minus=self.k_minus, alpha=self.alpha)

    def train(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            lr0=self.lr0,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            plateau_patience=self.plateau_patience,
            plateau_min_delta=self.plateau_min_delta,
            lr_decay_factor=self.lr_decay_factor,
            max_epochs=self.max_epochs,
            crop_size=self.crop_size,
            seed=self.seed,
        )

    @property
    def fractions(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_val, self.split_eval)

    # -- text form ----------------------------------------------------------

    def dumps(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key] = val
        return cls().override(values)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def override(self, values: dict[str, str | int | float | bool]) -> "RunConfig":
        """Copy with ``values`` applied; string values are parsed by field type."""
        types = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, val in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            parsed[key] = _parse(key, types[key], val) if isinstance(val, str) else val
        return dataclasses.replace(self, **parsed)

    def validate(self) -> None:
        """Build every sub-config so invalid combinations fail early."""
        try:
            self.backbone()
            self.head()
            self.train()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.crop_size > self.image_size:
            raise ConfigError(f"crop_size {self.crop_size} exceeds image_size {self.image_size}")
        if self.eval_labels not in ("true", "observed"):
            raise ConfigError(f"eval_labels must be 'true' or 'observed', got {self.eval_labels!r}")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(key: str, typ, raw: str):
    name = typ if isinstance(typ, str) else typ.__name__
    try:
        if name == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if name == "int":
            return int(raw)
        if name == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {name}") from None
