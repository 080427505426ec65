"""Miniature DenseNet with SE-augmented transitions and the multi-map head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from weakmap import ops
from weakmap import tensor as T
from weakmap.ops import ClassScores, HeadConfig, SEParams
from weakmap.synthdata import Normalizer
from weakmap.tensor import RunningStats, ShapeError, Tensor


@dataclass(frozen=True)
class BackboneConfig:
    input_channels: int = 1
    stem_channels: int = 24
    stem_stride: int = 2
    num_blocks: int = 3
    layers_per_block: int = 4
    growth_rate: int = 12
    compression: float = 0.5
    se_reduction: int = 16
    use_se: bool = True

    def __post_init__(self):
        if not 0.0 < self.compression <= 1.0:
            raise ValueError(f"compression must lie in (0, 1], got {self.compression}")
        if min(self.input_channels, self.stem_channels, self.stem_stride, self.num_blocks, self.growth_rate) < 1:
            raise ValueError("backbone extents must be positive")
        if self.layers_per_block < 0 or self.se_reduction < 1:
            raise ValueError("invalid layers_per_block / se_reduction")

    @property
    def total_stride(self) -> int:
        return self.stem_stride * 2 ** (self.num_blocks - 1)

    def block_channels(self) -> list[tuple[int, int]]:
        """(channels in, channels out) for every dense block."""
        out = []
        c = self.stem_channels
        for b in range(self.num_blocks):
            c_out = c + self.layers_per_block * self.growth_rate
            out.append((c, c_out))
            if b < self.num_blocks - 1:
                c = transition_width(c_out, self.compression)
        return out

    @property
    def feature_channels(self) -> int:
        return self.block_channels()[-1][1]


def transition_width(channels: int, compression: float) -> int:
    return max(1, int(np.floor(compression * channels)))


@dataclass
class ModelParams:
    """Learnable tensors by name plus batchnorm running statistics."""

    tensors: dict[str, Tensor] = field(default_factory=dict)
    running: dict[str, RunningStats] = field(default_factory=dict)

    def trainable(self) -> list[Tensor]:
        return list(self.tensors.values())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def snapshot(self) -> "ModelParams":
        return ModelParams(
            {k: Tensor(v.values.copy(), requires_grad=True, name=k) for k, v in self.tensors.items()},
            {
                k: RunningStats(r.mean.copy(), r.var.copy(), r.momentum)
                for k, r in self.running.items()
            },
        )

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array view including running statistics."""
        out = {k: v.values for k, v in self.tensors.items()}
        for k, r in self.running.items():
            out[f"{k}.running_mean"] = r.mean
            out[f"{k}.running_var"] = r.var
        return out


def _he(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init_params(config: BackboneConfig, head: HeadConfig, seed: int) -> ModelParams:
    """He-normal weights, unit BN scale, zero shifts and biases; seed-determined."""
    rng = np.random.default_rng(seed)
    p = ModelParams()

    def add(name, arr):
        p.tensors[name] = Tensor(arr, requires_grad=True, name=name)

    k = 3
    add("stem.w", _he(rng, (k, k, config.input_channels, config.stem_channels), k * k * config.input_channels))
    for b, (c_in, c_out) in enumerate(config.block_channels()):
        c = c_in
        for layer in range(config.layers_per_block):
            pre = f"block{b}.layer{layer}"
            add(f"{pre}.bn.gamma", np.ones(c))
            add(f"{pre}.bn.beta", np.zeros(c))
            p.running[f"{pre}.bn"] = RunningStats.fresh(c)
            add(f"{pre}.conv.w", _he(rng, (3, 3, c, config.growth_rate), 9 * c))
            c += config.growth_rate
        if b < config.num_blocks - 1:
            pre = f"trans{b}"
            c_t = transition_width(c_out, config.compression)
            add(f"{pre}.conv.w", _he(rng, (1, 1, c_out, c_t), c_out))
            if config.use_se:
                hid = SEParams.hidden_width(c_t, config.se_reduction)
                add(f"{pre}.se.w1", _he(rng, (hid, c_t), c_t))
                add(f"{pre}.se.w2", _he(rng, (c_t, hid), hid))
    d = config.feature_channels
    add("head.w", _he(rng, (1, 1, d, head.m * head.num_classes), d))
    add("head.b", np.zeros(head.m * head.num_classes))
    return p


def dense_layer(x: Tensor, gamma: Tensor, beta: Tensor, conv_w: Tensor, training: bool,
                running: RunningStats | None) -> Tensor:
    y = T.relu(T.batchnorm(x, gamma, beta, training, running))
    return T.concat_channels(x, T.conv2d(y, conv_w, stride=1, padding=1))


def transition(x: Tensor, conv_w: Tensor, se: SEParams | None) -> Tensor:
    """1x1 conv, optional SE recalibration, then 2x2 average pooling."""
    h, w = x.shape[-3], x.shape[-2]
    if h % 2 or w % 2:
        raise ShapeError(f"transition: spatial extent {h}x{w} must be even")
    u = T.conv2d(x, conv_w)
    if se is not None:
        u = ops.se_block(u, se)
    return T.avg_pool2d(u, 2, 2)


def check_input_size(config: BackboneConfig, h: int, w: int) -> None:
    need = config.total_stride
    if h % need or w % need:
        raise ShapeError(f"input {h}x{w} must be divisible by {need} (stem stride x 2^(blocks-1))")


def backbone_forward(image: Tensor, params: ModelParams, config: BackboneConfig, training: bool = False,
                     identity_gate: bool = False) -> Tensor:
    """Stem, dense blocks and SE transitions; no transition after the last block.

    ``identity_gate`` bypasses SE recalibration (gate fixed at 1) without
    touching the parameters.
    """
    T._check_spatial(image, "backbone_forward")
    check_input_size(config, image.shape[-3], image.shape[-2])
    t = params.tensors
    x = T.conv2d(image, t["stem.w"], stride=config.stem_stride, padding=1)
    for b in range(config.num_blocks):
        for layer in range(config.layers_per_block):
            pre = f"block{b}.layer{layer}"
            x = dense_layer(x, t[f"{pre}.bn.gamma"], t[f"{pre}.bn.beta"], t[f"{pre}.conv.w"], training,
                            params.running[f"{pre}.bn"])
        if b < config.num_blocks - 1:
            pre = f"trans{b}"
            se = None
            if config.use_se and not identity_gate:
                se = SEParams(t[f"{pre}.se.w1"], t[f"{pre}.se.w2"], config.se_reduction)
            x = transition(x, t[f"{pre}.conv.w"], se)
    return x


class WeakMapNet:
    """Backbone plus multi-map / max-min head with image-level outputs."""

    def __init__(self, backbone: BackboneConfig, head: HeadConfig, params: ModelParams,
                 norm: Normalizer | None = None):
        self.backbone = backbone
        self.head = head
        self.params = params
        self.norm = norm  # input statistics fitted on the training part

    @classmethod
    def create(cls, backbone: BackboneConfig, head: HeadConfig, seed: int) -> "WeakMapNet":
        return cls(backbone, head, init_params(backbone, head, seed))

    def features(self, x: Tensor, training: bool = False) -> Tensor:
        return backbone_forward(x, self.params, self.backbone, training)

    def forward(self, x: Tensor, training: bool = False) -> ClassScores:
        f = self.features(x, training)
        t = self.params.tensors
        return ops.head_forward(f, t["head.w"], t["head.b"], self.head)

    __call__ = forward

    def class_maps(self, x: Tensor) -> Tensor:
        """Pre-pooling per-class maps (eval mode), ``[.., h, w, C]``."""
        f = self.features(x, training=False)
        t = self.params.tensors
        maps = ops.multi_map_transfer(f, t["head.w"], t["head.b"], self.head)
        return ops.class_wise_avg(maps, self.head)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Probabilities for a batch ``[N, H, W, C]`` without recording a tape."""
        with T.no_grad():
            return self.forward(Tensor._wrap(np.asarray(x, dtype=T.DTYPE)), training=False).p.values
