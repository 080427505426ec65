"""Finite-difference checks for every differentiable operator.

Each case draws a random point from its seed and rejects draws that sit
within 1e-3 of a ReLU kink or a top-k selection boundary, where central
differences are not meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from weakmap import ops
from weakmap import tensor as T
from weakmap.backbone import BackboneConfig, WeakMapNet, dense_layer, transition
from weakmap.ops import HeadConfig, SEParams
from weakmap.tensor import RunningStats, Tensor
from weakmap.train import bce_loss

EPS = 1e-5
TOLERANCE = 1e-4
KINK_MARGIN = 1e-3


@dataclass
class GradCase:
    name: str
    build: Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[Tensor]]]


def _t(a) -> Tensor:
    return Tensor(a, requires_grad=True)


def _away_from_zero(rng, shape):
    return rng.uniform(10 * KINK_MARGIN, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _case_conv(rng):
    x, k, b = _t(rng.normal(size=(2, 6, 5, 3))), _t(rng.normal(size=(3, 3, 3, 4))), _t(rng.normal(size=4))
    proj = rng.normal(size=(2, 3, 3, 4))
    return (lambda x, k, b: T.sum_all(T.mul(T.conv2d(x, k, b, stride=2, padding=1), Tensor(proj)))), [x, k, b]


def _case_conv_taps(rng):
    # Cout < Cin so the tap-offset lowering is exercised
    x, k = _t(rng.normal(size=(5, 5, 6))), _t(rng.normal(size=(3, 3, 6, 2)))
    proj = rng.normal(size=(5, 5, 2))
    return (lambda x, k: T.sum_all(T.mul(T.conv2d(x, k, padding=1), Tensor(proj)))), [x, k]


def _case_avg_pool(rng):
    x = _t(rng.normal(size=(2, 4, 6, 3)))
    proj = rng.normal(size=(2, 2, 3, 3))
    return (lambda x: T.sum_all(T.mul(T.avg_pool2d(x, 2), Tensor(proj)))), [x]


def _case_avg_pool_overlap(rng):
    x = _t(rng.normal(size=(5, 5, 2)))
    proj = rng.normal(size=(3, 3, 2))
    return (lambda x: T.sum_all(T.mul(T.avg_pool2d(x, 3, 1), Tensor(proj)))), [x]


def _case_batchnorm(rng):
    x = _t(rng.normal(size=(3, 4, 4, 3)))
    g, b = _t(rng.normal(size=3)), _t(rng.normal(size=3))
    proj = rng.normal(size=(3, 4, 4, 3))
    stats = RunningStats.fresh(3)
    return (lambda x, g, b: T.sum_all(T.mul(T.batchnorm(x, g, b, True, stats), Tensor(proj)))), [x, g, b]


def _case_batchnorm_eval(rng):
    x = _t(rng.normal(size=(4, 4, 3)))
    g, b = _t(rng.normal(size=3)), _t(rng.normal(size=3))
    stats = RunningStats(rng.normal(size=3), rng.uniform(0.5, 2.0, size=3))
    proj = rng.normal(size=(4, 4, 3))
    return (lambda x, g, b: T.sum_all(T.mul(T.batchnorm(x, g, b, False, stats), Tensor(proj)))), [x, g, b]


def _case_dense(rng):
    x, w, b = _t(rng.normal(size=(3, 5))), _t(rng.normal(size=(4, 5))), _t(rng.normal(size=4))
    proj = rng.normal(size=(3, 4))
    return (lambda x, w, b: T.sum_all(T.mul(T.dense(x, w, b), Tensor(proj)))), [x, w, b]


def _case_relu_sigmoid(rng):
    x = _t(_away_from_zero(rng, (4, 3)))
    proj = rng.normal(size=(4, 3))
    return (lambda x: T.sum_all(T.mul(T.sigmoid(T.relu(x)), Tensor(proj)))), [x]


def _case_elementwise(rng):
    a, b = _t(rng.normal(size=(2, 3, 3, 4))), _t(rng.normal(size=4))
    c = _t(rng.normal(size=(2, 3, 3, 2)))
    proj = rng.normal(size=(2, 3, 3, 6))

    def fn(a, b, c):
        y = T.concat_channels(T.add(T.mul(a, b), T.scalar_mul(a, 0.3)), c)
        return T.sum_all(T.mul(y, Tensor(proj)))

    return fn, [a, b, c]


def _case_se_block(rng):
    u = _t(rng.normal(size=(2, 4, 4, 8)))
    w1 = rng.normal(size=(2, 8))
    # keep hidden pre-activations away from the ReLU kink for both samples
    w1 = _shift_hidden(w1, u.values)
    p = SEParams(_t(w1), _t(rng.normal(size=(8, 2))), reduction=4)
    proj = rng.normal(size=(2, 4, 4, 8))
    return (lambda u, w1, w2: T.sum_all(T.mul(ops.se_block(u, SEParams(w1, w2, 4)), Tensor(proj)))), [u, p.w1, p.w2]


def _shift_hidden(w1: np.ndarray, u: np.ndarray) -> np.ndarray:
    z = u.mean(axis=(-3, -2))
    for _ in range(50):
        h = z @ w1.T
        if np.abs(h).min() > 0.05:
            return w1
        w1 = w1 * 1.3 + 0.1
    return w1


def _separated_map(rng, shape):
    """Random map whose top/bottom order statistics are at least 0.01 apart."""
    while True:
        m = rng.normal(size=shape)
        flat = np.sort(m.reshape(-1, shape[-3] * shape[-2], shape[-1]), axis=1)
        if np.diff(flat, axis=1).min() > 10 * KINK_MARGIN:
            return m


def _case_max_min_pool(rng):
    cfg = HeadConfig(m=1, num_classes=3, k_plus=2, k_minus=3, alpha=0.7)
    z = _t(_separated_map(rng, (2, 3, 4, 3)))
    proj = rng.normal(size=(2, 3))
    return (lambda z: T.sum_all(T.mul(ops.max_min_pool(z, cfg), Tensor(proj)))), [z]


def _case_multi_map(rng):
    cfg = HeadConfig(m=3, num_classes=2, k_plus=1, k_minus=1, alpha=0.7)
    f = _t(rng.normal(size=(3, 3, 5)))
    w, b = _t(rng.normal(size=(1, 1, 5, 6))), _t(rng.normal(size=6))
    proj = rng.normal(size=(3, 3, 2))
    return (lambda f, w, b: T.sum_all(T.mul(ops.class_wise_avg(ops.multi_map_transfer(f, w, b, cfg), cfg),
                                            Tensor(proj)))), [f, w, b]


def _case_head_bce(rng):
    cfg = HeadConfig(m=2, num_classes=3, k_plus=1, k_minus=1, alpha=0.7)
    f = _t(rng.normal(size=(2, 3, 3, 4)))
    w, b = _t(rng.normal(size=(1, 1, 4, 6))), _t(rng.normal(size=6))
    y = rng.integers(0, 2, size=(2, 3))
    return (lambda f, w, b: bce_loss(ops.head_forward(f, w, b, cfg).p, y)), [f, w, b]


def _case_dense_block(rng):
    x = _t(rng.normal(size=(2, 4, 4, 3)))
    g = 2
    tensors = [x]
    c = 3
    for _ in range(2):
        tensors += [_t(1 + 0.1 * rng.normal(size=c)), _t(0.1 * rng.normal(size=c)), _t(rng.normal(size=(3, 3, c, g)))]
        c += g
    proj = rng.normal(size=(2, 4, 4, c))

    def fn(x, *ps):
        y = x
        for i in range(2):
            y = dense_layer(y, ps[3 * i], ps[3 * i + 1], ps[3 * i + 2], True, None)
        return T.sum_all(T.mul(y, Tensor(proj)))

    return fn, tensors


def _case_transition(rng):
    x = _t(rng.normal(size=(2, 4, 4, 6)))
    w = _t(rng.normal(size=(1, 1, 6, 4)))
    w1 = _t(rng.normal(size=(1, 4)))
    w2 = _t(rng.normal(size=(4, 1)))
    proj = rng.normal(size=(2, 2, 2, 4))
    return (lambda x, w, w1, w2: T.sum_all(T.mul(transition(x, w, SEParams(w1, w2, 4)), Tensor(proj)))), [x, w, w1, w2]


TINY_BACKBONE = BackboneConfig(stem_channels=4, num_blocks=2, layers_per_block=2, growth_rate=3, se_reduction=2)
TINY_HEAD = HeadConfig(m=2, num_classes=2, k_plus=2, k_minus=1, alpha=0.7)


def _case_full_model(rng):
    seed = int(rng.integers(1 << 31))
    model = WeakMapNet.create(TINY_BACKBONE, TINY_HEAD, seed)
    x = Tensor(rng.normal(size=(2, 16, 16, 1)))
    y = rng.integers(0, 2, size=(2, 2))
    names = list(model.params.tensors)
    params = [model.params.tensors[n] for n in names]

    def fn(*ps):
        for n, p in zip(names, ps):
            model.params.tensors[n] = p
        return bce_loss(model.forward(x, training=True).p, y)

    return fn, params


CASES = [
    GradCase("conv2d", _case_conv),
    GradCase("conv2d_taps", _case_conv_taps),
    GradCase("avg_pool2d", _case_avg_pool),
    GradCase("avg_pool2d_overlap", _case_avg_pool_overlap),
    GradCase("batchnorm_train", _case_batchnorm),
    GradCase("batchnorm_eval", _case_batchnorm_eval),
    GradCase("dense", _case_dense),
    GradCase("relu_sigmoid", _case_relu_sigmoid),
    GradCase("mul_add_concat", _case_elementwise),
    GradCase("se_block", _case_se_block),
    GradCase("multi_map_class_avg", _case_multi_map),
    GradCase("max_min_pool", _case_max_min_pool),
    GradCase("head_bce", _case_head_bce),
    GradCase("dense_block", _case_dense_block),
    GradCase("transition", _case_transition),
    GradCase("full_model", _case_full_model),
]


def run_case(case: GradCase, seed: int, eps: float = EPS) -> float:
    rng = np.random.default_rng(seed)
    fn, inputs = case.build(rng)
    return T.grad_check(fn, inputs, eps)


def run_all(seeds=(0, 1, 2), eps: float = EPS) -> list[tuple[str, int, float]]:
    return [(c.name, s, run_case(c, s, eps)) for c in CASES for s in seeds]
