import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weakmap import tensor as T
from weakmap.backbone import BackboneConfig, WeakMapNet
from weakmap.ops import HeadConfig
from weakmap.synthdata import DatasetSplit, generate_dataset, split_by_subject
from weakmap.tensor import Tensor
from weakmap.train import (AdamState, EpochLog, NonFiniteGradient, TrainConfig, adam_step, augment, bce_loss,
                           center_crop, flip_horizontal, plateau_schedule, train, validation_loss)

TINY = BackboneConfig(stem_channels=8, num_blocks=2, layers_per_block=2, growth_rate=6, se_reduction=4)


# loss

def test_bce_examples():
    assert bce_loss(Tensor([0.5]), [1]).item() == pytest.approx(math.log(2), abs=1e-15)
    assert bce_loss(Tensor([0.9]), [0]).item() == pytest.approx(2.302585092994046, abs=1e-14)
    assert bce_loss(Tensor([1.0, 0.0]), [1, 0]).item() < 1e-14
    assert np.isfinite(bce_loss(Tensor([1.0, 0.0]), [0, 1]).item())


@given(arrays(np.float64, (3, 4), elements=st.floats(0, 1)), st.integers(0, 2**16 - 1))
def test_bce_non_negative(p, bits):
    y = np.array([(bits >> i) & 1 for i in range(12)]).reshape(3, 4)
    assert bce_loss(Tensor(p), y).item() >= 0


@given(arrays(np.float64, (2, 5), elements=st.floats(-8, 8)), st.integers(0, 2**10 - 1))
@settings(max_examples=50, deadline=None)
def test_sigmoid_bce_gradient_identity(r, bits):
    y = np.array([(bits >> i) & 1 for i in range(10)], dtype=float).reshape(2, 5)
    rt = Tensor(r, requires_grad=True)
    T.backward(bce_loss(T.sigmoid(rt), y))
    p = 1 / (1 + np.exp(-r))
    # mean over batch and classes: (p - y) / C per sample, then / N
    np.testing.assert_allclose(rt.grad, (p - y) / y.size, atol=1e-10)


# optimizer

def _param(values, grad):
    p = Tensor(np.array(values, dtype=float), requires_grad=True)
    p.grad = np.array(grad, dtype=float)
    return p


@pytest.mark.parametrize("lr", [1e-4, 0.3, 2.0])
def test_adam_first_step(lr):
    p = _param([1.0, -2.0], [1.0, 1.0])
    adam_step([p], AdamState.zeros_like([p]), lr, TrainConfig())
    np.testing.assert_allclose(p.values - np.array([1.0, -2.0]), -lr / (1 + 1e-8), rtol=1e-12, atol=1e-15)


def test_adam_zero_grads_leave_everything():
    p = _param([0.5, 1.5], [0.0, 0.0])
    state = AdamState.zeros_like([p])
    adam_step([p], state, 0.1, TrainConfig())
    assert p.values.tolist() == [0.5, 1.5]
    assert not state.m[0].any() and not state.v[0].any()


@given(arrays(np.float64, 5, elements=st.floats(-10, 10)), arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_adam_lr_zero_is_identity(values, grad):
    p = _param(values, grad)
    before = p.values.tobytes()
    adam_step([p], AdamState.zeros_like([p]), 0.0, TrainConfig())
    assert p.values.tobytes() == before


def test_adam_rejects_non_finite():
    p = _param([1.0], [np.nan])
    state = AdamState.zeros_like([p])
    with pytest.raises(NonFiniteGradient):
        adam_step([p], state, 0.1, TrainConfig())
    assert p.values.tolist() == [1.0] and state.t == 0


# schedule

def test_plateau_examples():
    cfg = TrainConfig(lr0=1e-3)
    assert plateau_schedule([1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3], cfg) == 1e-3
    assert plateau_schedule([1.0] * 7, cfg) == pytest.approx(1e-4, rel=1e-12)
    assert plateau_schedule([1.0] * 6, cfg) == 1e-3
    # improvement below min_delta still counts as a plateau
    assert plateau_schedule([1.0 - 1e-5 * i for i in range(7)], cfg) == pytest.approx(1e-4, rel=1e-12)
    # counter resets after a decay: a second decay needs six more bad epochs
    assert plateau_schedule([1.0] * 12, cfg) == pytest.approx(1e-4, rel=1e-12)
    assert plateau_schedule([1.0] * 13, cfg) == pytest.approx(1e-5, rel=1e-12)


@given(st.lists(st.floats(0, 5), max_size=30))
def test_plateau_lr_is_non_increasing(history):
    cfg = TrainConfig()
    rates = [plateau_schedule(history[:i], cfg) for i in range(len(history) + 1)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))


# augmentation

def test_augment_shapes_and_full_crop():
    img = np.random.default_rng(0).normal(size=(16, 16, 1))
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert augment(img, rng, 12).shape == (12, 12, 1)
        out = augment(img, rng, 16)
        assert np.array_equal(out, img) or np.array_equal(out, flip_horizontal(img))
    with pytest.raises(ValueError):
        augment(img, rng, 17)


def test_forced_flip_twice_is_identity():
    img = np.random.default_rng(2).normal(size=(8, 8, 1))
    once = augment(img, np.random.default_rng(0), 8, force_flip=True)
    twice = augment(once, np.random.default_rng(0), 8, force_flip=True)
    assert np.array_equal(twice, img)


def test_augment_offsets_cover_range():
    img = np.arange(64.0).reshape(8, 8, 1)
    rng = np.random.default_rng(3)
    corners = {augment(img, rng, 5, force_flip=False)[0, 0, 0] for _ in range(400)}
    assert corners == {float(8 * y + x) for y in range(4) for x in range(4)}


def test_center_crop():
    img = np.arange(49.0).reshape(7, 7, 1)
    assert center_crop(img, 3)[0, 0, 0] == 16.0


def test_epoch_log_roundtrip():
    e = EpochLog(3, 0.1 + 0.2, 1 / 3, 1e-4)
    assert EpochLog.parse(e.line()) == e


# loop

def _tiny_run(seed=0, epochs=3, n=24):
    samples = generate_dataset(seed, n, 4, 32)
    split = split_by_subject(samples, seed=seed)
    model = WeakMapNet.create(TINY, HeadConfig(), seed)
    buf = io.StringIO()
    cfg = TrainConfig(batch_size=8, lr0=1e-3, max_epochs=epochs, crop_size=24, seed=seed)
    return model, samples, split, train(model, samples, split, cfg, log_stream=buf), buf.getvalue()


def test_overfit_single_batch():
    samples = generate_dataset(0, 8, 4, 32)
    split = DatasetSplit(list(range(8)), list(range(8)), [])
    model = WeakMapNet.create(TINY, HeadConfig(), 0)
    cfg = TrainConfig(batch_size=8, lr0=3e-3, max_epochs=150, crop_size=32, plateau_patience=1000)
    result = train(model, samples, split, cfg)
    assert result.log[-1].train_loss < 0.05


def test_fixed_seed_identical_log():
    *_, a = _tiny_run()
    *_, b = _tiny_run()
    assert a == b and len(a.splitlines()) == 3


def test_returned_snapshot_reproduces_best_loss():
    model, samples, split, result, _ = _tiny_run(epochs=4)
    final = validation_loss(model, samples, split.validation, model.norm, 24)
    model.params = result.params
    best = validation_loss(model, samples, split.validation, model.norm, 24)
    assert best == result.best_val_loss
    assert best == min(e.val_loss for e in result.log)
    assert best <= final


class BoxGuard:
    """Sample stand-in that fails loudly if spatial annotations are touched."""

    def __init__(self, sample):
        self.image, self.labels = sample.image, sample.labels
        self.subject_id, self.sample_id = sample.subject_id, sample.sample_id
        self._boxes = sample.boxes
        self.box_reads = 0

    @property
    def boxes(self):
        self.box_reads += 1
        raise AssertionError("training touched bounding boxes")

    def true_labels(self, c):
        raise AssertionError("training touched box-derived labels")


def test_training_never_reads_boxes():
    samples = generate_dataset(1, 24, 4, 32)
    split = split_by_subject(samples, seed=1)
    guarded = [BoxGuard(s) for s in samples]
    model = WeakMapNet.create(TINY, HeadConfig(), 1)
    train(model, guarded, split, TrainConfig(batch_size=8, max_epochs=2, crop_size=24))
    assert sum(g.box_reads for g in guarded) == 0


def test_divergence_keeps_last_finite_snapshot():
    samples = generate_dataset(2, 24, 4, 32)
    split = split_by_subject(samples, seed=2)
    model = WeakMapNet.create(TINY, HeadConfig(), 2)
    cfg = TrainConfig(batch_size=8, lr0=1e-3, max_epochs=4, crop_size=24)
    per_epoch = math.ceil(len(split.train) / cfg.batch_size)
    calls = {"n": 0}
    real = T.backward

    def poisoned(loss):
        calls["n"] += 1
        real(loss)
        if calls["n"] > 2 * per_epoch:  # poison the first step of epoch 3
            model.params.tensors["head.b"].grad[:] = np.inf

    T.backward = poisoned
    try:
        result = train(model, samples, split, cfg)
    finally:
        T.backward = real
    assert result.diverged and len(result.log) == 2
    assert all(np.isfinite(a).all() for a in result.params.arrays().values())
