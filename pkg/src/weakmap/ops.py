"""Squeeze-and-excitation, multi-map transfer and max-min spatial pooling.

All blocks are differentiable compositions over :mod:`weakmap.tensor`.  Feature
maps are channel-last; a leading batch axis is optional throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from weakmap import tensor as T
from weakmap.tensor import ShapeError, Tensor

# a gate vector is just a Tensor[C] (or [N, C]) with entries in (0, 1)
GateVector = Tensor


@dataclass
class SEParams:
    w1: Tensor  # [hidden, C]
    w2: Tensor  # [C, hidden]
    reduction: int = 16

    @staticmethod
    def hidden_width(channels: int, reduction: int) -> int:
        return max(1, channels // reduction)

    @property
    def channels(self) -> int:
        return self.w1.shape[1]


@dataclass(frozen=True)
class HeadConfig:
    """Multi-map head settings: ``m`` maps per class, ``num_classes`` classes,
    ``k_plus`` / ``k_minus`` selected regions and min-term weight ``alpha``."""

    m: int = 12
    num_classes: int = 4
    k_plus: int = 1
    k_minus: int = 1
    alpha: float = 0.7

    def __post_init__(self):
        if self.m < 1 or self.num_classes < 1:
            raise ValueError("m and num_classes must be positive")
        if self.k_plus < 1 or self.k_minus < 0:
            raise ValueError("need k_plus >= 1 and k_minus >= 0")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


@dataclass
class ClassScores:
    r: Tensor  # pre-sigmoid scores
    p: Tensor  # probabilities


def squeeze(u: Tensor) -> Tensor:
    """Per-channel spatial mean of ``u``."""
    return T.global_avg_pool(u)


def excite(z: Tensor, params: SEParams) -> GateVector:
    if z.shape[-1] != params.channels:
        raise ShapeError(f"excite: descriptor has {z.shape[-1]} channels, gate expects {params.channels}")
    hidden = T.relu(T.dense(z, params.w1))
    return T.sigmoid(T.dense(hidden, params.w2))


def recalibrate(u: Tensor, s: GateVector) -> Tensor:
    if s.shape[-1] != u.shape[-1]:
        raise ShapeError(f"recalibrate: {s.shape[-1]} gates for {u.shape[-1]} channels")
    if s.ndim == 2:
        if u.ndim != 4 or u.shape[0] != s.shape[0]:
            raise ShapeError(f"recalibrate: batched gates {s.shape} vs maps {u.shape}")
        s = T.reshape(s, (s.shape[0], 1, 1, s.shape[1]))
    return T.mul(u, s)


def se_block(u: Tensor, params: SEParams) -> Tensor:
    return recalibrate(u, excite(squeeze(u), params))


def multi_map_transfer(f: Tensor, weights: Tensor, bias: Tensor | None, config: HeadConfig) -> Tensor:
    """1x1 convolution to ``m * num_classes`` maps, class-major channel layout."""
    want = config.m * config.num_classes
    if weights.shape[-1] != want:
        raise ShapeError(f"multi_map_transfer: weights produce {weights.shape[-1]} maps, config needs {want}")
    return T.conv2d(f, weights, bias)


def class_wise_avg(maps: Tensor, config: HeadConfig) -> Tensor:
    """Average each class's block of ``m`` consecutive maps."""
    total = maps.shape[-1]
    if total % config.m or total // config.m != config.num_classes:
        raise ShapeError(
            f"class_wise_avg: {total} maps cannot be split into {config.num_classes} classes x {config.m}"
        )
    lead = maps.shape[:-1]
    grouped = T.reshape(maps, lead + (config.num_classes, config.m))
    return T.mean_axis(grouped, -1)


def _select(flat: np.ndarray, k: int, largest: bool) -> np.ndarray:
    """Indices of the ``k`` largest/smallest entries along axis -2, row-major
    on ties, returned in ascending index order."""
    key = -flat if largest else flat
    idx = np.argsort(key, axis=-2, kind="stable")[..., :k, :]
    return np.sort(idx, axis=-2)


def _ordered_sum(flat: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Sum of the selected entries, accumulated left to right in index order."""
    vals = np.take_along_axis(flat, idx, axis=-2)
    acc = vals[..., 0, :]
    for j in range(1, vals.shape[-2]):
        acc = acc + vals[..., j, :]
    return acc


def max_min_pool(zbar: Tensor, config: HeadConfig) -> Tensor:
    """``[.., h, w, C] -> [.., C]``: top-k+ mean plus alpha times bottom-k- mean."""
    T._check_spatial(zbar, "max_min_pool")
    h, w = zbar.shape[-3], zbar.shape[-2]
    kp, km, alpha = config.k_plus, config.k_minus, float(config.alpha)
    if kp > h * w or km > h * w:
        raise ShapeError(f"max_min_pool: k+={kp}, k-={km} exceed {h * w} spatial positions")

    def fwd(a):
        flat = a.reshape(a.shape[:-3] + (h * w, a.shape[-1]))
        top = _select(flat, kp, True)
        out = _ordered_sum(flat, top) / kp
        bot = None
        if km:
            bot = _select(flat, km, False)
            out = out + alpha * (_ordered_sum(flat, bot) / km)
        return out, (flat.shape, a.shape, top, bot)

    def bwd(ctx, g):
        fshape, ashape, top, bot = ctx
        gflat = np.zeros(fshape, dtype=T.DTYPE)
        gexp = np.expand_dims(g, -2)
        # each index set is duplicate-free; the two sets may overlap, hence the separate buffer
        np.put_along_axis(gflat, top, np.broadcast_to(gexp / kp, top.shape), axis=-2)
        if bot is not None:
            part = np.zeros(fshape, dtype=T.DTYPE)
            np.put_along_axis(part, bot, np.broadcast_to(gexp * (alpha / km), bot.shape), axis=-2)
            gflat += part
        return (gflat.reshape(ashape),)

    return T.apply_op("max_min_pool", fwd, bwd, zbar)


def head_forward(f: Tensor, weights: Tensor, bias: Tensor | None, config: HeadConfig) -> ClassScores:
    zbar = class_wise_avg(multi_map_transfer(f, weights, bias, config), config)
    r = max_min_pool(zbar, config)
    return ClassScores(r=r, p=T.sigmoid(r))
