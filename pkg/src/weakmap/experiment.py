"""In-process generate -> split -> train -> evaluate pipeline for one RunConfig."""

from __future__ import annotations

import time
from dataclasses import dataclass

from weakmap.backbone import WeakMapNet
from weakmap.config import RunConfig
from weakmap.evaluate import EvalReport, evaluate
from weakmap.synthdata import generate_dataset, split_by_subject
from weakmap.train import TrainResult, train

# the three ablations, as config overrides
VARIANTS = {
    "full": {},
    "max_only": {"alpha": 0.0, "k_minus": 0},
    "no_se": {"use_se": False},
    "single_map": {"m": 1},
}


@dataclass
class RunOutcome:
    config: RunConfig
    model: WeakMapNet
    result: TrainResult
    report: EvalReport
    train_seconds: float
    eval_seconds: float


def run(cfg: RunConfig, log_stream=None) -> RunOutcome:
    cfg.validate()
    samples = generate_dataset(cfg.seed, cfg.n_samples, cfg.num_classes, cfg.image_size, cfg.class_prior,
                               cfg.label_noise, cfg.images_per_subject)
    split = split_by_subject(samples, cfg.fractions, cfg.seed)
    model = WeakMapNet.create(cfg.backbone(), cfg.head(), cfg.seed)
    t0 = time.perf_counter()
    result = train(model, samples, split, cfg.train(), log_stream=log_stream)
    t1 = time.perf_counter()
    model.params = result.params
    report = evaluate(model, samples, split, cfg.crop_size, label_source=cfg.eval_labels)
    return RunOutcome(cfg, model, result, report, t1 - t0, time.perf_counter() - t1)
