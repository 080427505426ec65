"""Image-label-only training: BCE, Adam, plateau decay, snapshot selection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from weakmap import tensor as T
from weakmap.backbone import ModelParams, WeakMapNet
from weakmap.synthdata import DatasetSplit, Normalizer, Sample, normalize_channels
from weakmap.tensor import Tensor

log = logging.getLogger(__name__)

BCE_CLAMP = 1e-15


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
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
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not 0 < self.lr_decay_factor < 1:
            raise ValueError("lr_decay_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.crop_size < 1:
            raise ValueError("batch_size, max_epochs and crop_size must be positive")


def bce_loss(p: Tensor, y) -> Tensor:
    """Mean binary cross-entropy over classes (and over the batch, if any).

    ``p`` is clamped to [1e-15, 1 - 1e-15] so saturated sigmoids stay finite.
    """
    y = np.asarray(y, dtype=T.DTYPE)
    if y.shape != p.shape:
        raise T.ShapeError(f"bce_loss: labels {y.shape} vs probabilities {p.shape}")
    n = p.size

    def fwd(a):
        q = np.clip(a, BCE_CLAMP, 1.0 - BCE_CLAMP)
        val = -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q)).sum() / n
        return np.array(val), q

    def bwd(q, g):
        return (float(g) * (q - y) / (q * (1.0 - q)) / n,)

    return T.apply_op("bce_loss", fwd, bwd, p)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.values) for p in params], [np.zeros_like(p.values) for p in params])


def adam_step(params: Sequence[Tensor], state: AdamState, lr: float, config: TrainConfig) -> None:
    """Bias-corrected Adam update, in place.  Rejects the whole step if any
    gradient is non-finite."""
    grads = [p.grad for p in params]
    if not all(np.isfinite(g).all() for g in grads):
        raise NonFiniteGradient("non-finite gradient; step rejected")
    b1, b2, eps = config.beta1, config.beta2, config.adam_eps
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if lr == 0.0:
            continue  # a signed-zero step would still flip -0.0 parameters
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# learning-rate schedule


def plateau_schedule(history: Sequence[float], config: TrainConfig) -> float:
    """Learning rate after observing ``history`` (one validation loss per epoch).

    An epoch improves only if it beats the best loss by strictly more than
    ``plateau_min_delta``.  When the run of non-improving epochs exceeds
    ``plateau_patience`` the rate is divided down once and the run restarts.
    """
    best = math.inf
    bad = 0
    decays = 0
    for loss in history:
        if loss < best - config.plateau_min_delta:
            best = loss
            bad = 0
        else:
            bad += 1
            if bad > config.plateau_patience:
                decays += 1
                bad = 0
    return config.lr0 * config.lr_decay_factor**decays


# ---------------------------------------------------------------------------
# augmentation


def flip_horizontal(image: np.ndarray) -> np.ndarray:
    return image[:, ::-1, :]


def augment(image: np.ndarray, rng: np.random.Generator, crop: int, force_flip: bool | None = None) -> np.ndarray:
    """Uniform random crop, then horizontal flip with probability 1/2."""
    s_h, s_w = image.shape[:2]
    if crop > s_h or crop > s_w:
        raise ValueError(f"crop {crop} exceeds image {s_h}x{s_w}")
    y0 = int(rng.integers(0, s_h - crop + 1))
    x0 = int(rng.integers(0, s_w - crop + 1))
    out = image[y0 : y0 + crop, x0 : x0 + crop, :]
    flip = rng.random() < 0.5 if force_flip is None else force_flip
    return np.ascontiguousarray(flip_horizontal(out) if flip else out)


def center_crop(image: np.ndarray, crop: int) -> np.ndarray:
    s_h, s_w = image.shape[:2]
    y0, x0 = (s_h - crop) // 2, (s_w - crop) // 2
    return image[y0 : y0 + crop, x0 : x0 + crop, :]


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss!r},{self.val_loss!r},{self.lr!r}"

    @classmethod
    def parse(cls, line: str) -> "EpochLog":
        e, tl, vl, lr = line.strip().split(",")
        return cls(int(e), float(tl), float(vl), float(lr))


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    diverged: bool = False


def validation_loss(model: WeakMapNet, samples: Sequence[Sample], idx: Sequence[int], norm: Normalizer,
                    crop: int, batch_size: int = 64) -> float:
    """Mean per-sample BCE on centre crops, eval mode."""
    if not idx:
        return math.nan
    total = 0.0
    with T.no_grad():
        for start in range(0, len(idx), batch_size):
            chunk = idx[start : start + batch_size]
            x = np.stack([center_crop(norm(samples[i].image), crop) for i in chunk])
            y = np.stack([samples[i].labels for i in chunk]).astype(T.DTYPE)
            p = model.forward(Tensor._wrap(x), training=False).p
            total += bce_loss(p, y).item() * len(chunk)
    return total / len(idx)


def train(
    model: WeakMapNet,
    samples: Sequence[Sample],
    split: DatasetSplit,
    config: TrainConfig,
    log_stream=None,
) -> TrainResult:
    """Fit ``model`` on the training part using image-level labels only.

    The model's parameters are left at the final epoch; the returned result
    carries the snapshot with the least validation loss.  Each finished epoch
    is written to ``log_stream`` (if given) as ``epoch,train_loss,val_loss,lr``.
    """
    train_idx = list(split.train)
    if not train_idx:
        raise ValueError("empty training split")
    norm = normalize_channels([samples[i] for i in train_idx])
    model.norm = norm
    params = model.params.trainable()
    state = AdamState.zeros_like(params)
    result = TrainResult(params=model.params.snapshot())
    history: list[float] = []
    crop = config.crop_size
    # normalize once; augmentation only slices
    cache = {i: norm(samples[i].image) for i in train_idx}
    labels = {i: np.asarray(samples[i].labels, dtype=T.DTYPE) for i in train_idx}

    for epoch in range(1, config.max_epochs + 1):
        lr = plateau_schedule(history, config)
        order = np.random.default_rng([config.seed, epoch, 0]).permutation(len(train_idx))
        batch_losses = []
        diverged = False
        for start in range(0, len(order), config.batch_size):
            chunk = [train_idx[j] for j in order[start : start + config.batch_size]]
            x = np.stack([augment(cache[i], np.random.default_rng([config.seed, epoch, i, 1]), crop) for i in chunk])
            y = np.stack([labels[i] for i in chunk])
            model.params.zero_grads()
            scores = model.forward(Tensor._wrap(x), training=True)
            loss = bce_loss(scores.p, y)
            if not np.isfinite(loss.values):
                diverged = True
                break
            T.backward(loss)
            try:
                adam_step(params, state, lr, config)
            except NonFiniteGradient:
                diverged = True
                break
            batch_losses.append(loss.item())
        if diverged:
            log.warning("epoch %d: non-finite loss, keeping snapshot from epoch %d", epoch, result.best_epoch)
            result.diverged = True
            break
        val = validation_loss(model, samples, split.validation, norm, crop)
        history.append(val)
        entry = EpochLog(epoch, float(np.mean(batch_losses)), val, lr)
        result.log.append(entry)
        if log_stream is not None:
            log_stream.write(entry.line() + "\n")
            log_stream.flush()
        log.info("epoch %d train %.4f val %.4f lr %.1e", epoch, entry.train_loss, val, lr)
        if val < result.best_val_loss:
            result.best_val_loss = val
            result.best_epoch = epoch
            result.params = model.params.snapshot()
    model.params.zero_grads()
    return result
