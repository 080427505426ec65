"""ROC-AUC, ten-crop inference, class heatmaps and the pointing game."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from weakmap import tensor as T
from weakmap.backbone import WeakMapNet
from weakmap.synthdata import Box, DatasetSplit, Sample, write_pgm
from weakmap.tensor import Tensor


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float | None:
    """Mann-Whitney AUC with ties counted as one half.

    Returns ``None`` when only one class is present.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)  # average ranks share ties evenly
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# ten-crop inference


def crop_offsets(size: int, crop: int) -> list[tuple[int, int]]:
    """(y0, x0) for the four corners and the centre."""
    if crop > size:
        raise ValueError(f"crop {crop} exceeds image size {size}")
    far = size - crop
    mid = far // 2
    return [(0, 0), (0, far), (far, 0), (far, far), (mid, mid)]


def ten_crops(image: np.ndarray, crop: int) -> np.ndarray:
    """``[10, crop, crop, C]``: five crops, then the same five flipped."""
    size = image.shape[0]
    views = [image[y : y + crop, x : x + crop, :] for y, x in crop_offsets(size, crop)]
    views += [v[:, ::-1, :] for v in views]
    return np.stack(views)


def ten_crop_predict(model: WeakMapNet, image: np.ndarray, crop: int) -> np.ndarray:
    """Mean probability over the ten crops of one (already normalized) image."""
    return ten_crop_predict_batch(model, image[None], crop)[0]


def ten_crop_predict_batch(model: WeakMapNet, images: np.ndarray, crop: int, chunk: int = 8) -> np.ndarray:
    out = []
    for start in range(0, len(images), chunk):
        block = images[start : start + chunk]
        crops = np.concatenate([ten_crops(im, crop) for im in block])
        p = model.predict(crops).reshape(len(block), 10, -1)
        out.append(p.mean(axis=1))
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# heatmaps


def bilinear_upsample(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize of a 2-D map, edges clamped."""
    h, w = grid.shape

    def axis(n_out, n_in):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(out_h, h)
    x0, x1, fx = axis(out_w, w)
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x1] * fx
    bot = grid[y1][:, x0] * (1 - fx) + grid[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


@dataclass
class Heatmap:
    low: np.ndarray  # [h, w] class map at backbone resolution
    full: np.ndarray  # [H, W] bilinear upsampling of ``low``

    def render(self) -> np.ndarray:
        """Min-max scaled uint8 image."""
        lo, hi = self.full.min(), self.full.max()
        if hi - lo <= 0:
            return np.zeros(self.full.shape, dtype=np.uint8)
        return np.rint((self.full - lo) / (hi - lo) * 255).astype(np.uint8)

    def peak(self) -> tuple[int, int]:
        """(row, col) of the maximum of the upsampled map; first in row-major order on ties."""
        flat = int(np.argmax(self.full))
        return divmod(flat, self.full.shape[1])


def class_heatmaps(model: WeakMapNet, image: np.ndarray) -> list[Heatmap]:
    """One heatmap per class from the pre-pooling class-averaged maps."""
    return class_heatmaps_batch(model, image[None])[0]


def class_heatmaps_batch(model: WeakMapNet, images: np.ndarray) -> list[list[Heatmap]]:
    with T.no_grad():
        maps = model.class_maps(Tensor._wrap(np.asarray(images, dtype=T.DTYPE))).values
    h, w = images.shape[1:3]
    return [
        [Heatmap(m[:, :, c], bilinear_upsample(m[:, :, c], h, w)) for c in range(m.shape[-1])]
        for m in maps
    ]


def pointing_game(heatmap: Heatmap, boxes: Sequence[Box], class_id: int) -> int | None:
    """1 if the heatmap peak falls inside a box of ``class_id``; None if there is no such box."""
    mine = [b for b in boxes if b.class_id == class_id]
    if not mine:
        return None
    row, col = heatmap.peak()
    return int(any(b.contains(col, row) for b in mine))


# ---------------------------------------------------------------------------
# full evaluation


@dataclass
class EvalReport:
    auc: list[float | None]
    pointing: list[float | None]
    chance: list[float | None]
    probabilities: np.ndarray = field(default=None, repr=False)

    @property
    def mean_auc(self) -> float:
        vals = [a for a in self.auc if a is not None]
        return float(np.mean(vals)) if vals else math.nan

    @staticmethod
    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else math.nan

    def lines(self) -> list[str]:
        def fmt(v):
            return "absent" if v is None else repr(float(v))

        out = [f"{c},{fmt(a)},{fmt(p)},{fmt(ch)}" for c, (a, p, ch) in enumerate(zip(self.auc, self.pointing, self.chance))]
        out.append(
            f"mean,{self.mean_auc!r},{self._mean(self.pointing)!r},{self._mean(self.chance)!r}"
        )
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WEAKMAP_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(
    model: WeakMapNet,
    samples: Sequence[Sample],
    split: DatasetSplit,
    crop: int,
    num_classes: int | None = None,
    label_source: str = "true",
) -> EvalReport:
    """Ten-crop AUC per class and pointing-game accuracy on the evaluation part.

    ``label_source="true"`` scores against the lesions actually drawn;
    ``"observed"`` uses the recorded (noisy) labels.
    """
    if model.norm is None:
        raise ValueError("model has no input normalization; train it or load a checkpoint first")
    c_count = num_classes or model.head.num_classes
    idx = list(split.evaluation)
    images = np.stack([model.norm(samples[i].image) for i in idx])
    if label_source == "true":
        y = np.stack([samples[i].true_labels(c_count) for i in idx])
    elif label_source == "observed":
        y = np.stack([samples[i].labels for i in idx])
    else:
        raise ValueError(f"unknown label_source {label_source!r}")

    n_workers = min(_workers(), max(1, len(idx)))
    parts = np.array_split(np.arange(len(idx)), n_workers)
    with ThreadPoolExecutor(n_workers) as pool:
        probs = list(pool.map(lambda sel: ten_crop_predict_batch(model, images[sel], crop), parts))
        maps = list(pool.map(lambda sel: _heatmap_chunks(model, images[sel]), parts))
    probs = np.concatenate(probs)
    heat = [hm for chunk in maps for hm in chunk]

    auc, point, chance = [], [], []
    for c in range(c_count):
        auc.append(roc_auc(probs[:, c], y[:, c]))
        hits, fracs = [], []
        for k, i in enumerate(idx):
            hit = pointing_game(heat[k][c], samples[i].boxes, c)
            if hit is None:
                continue
            hits.append(hit)
            fracs.append(_box_area_fraction(samples[i].boxes, c, images.shape[1], images.shape[2]))
        point.append(float(np.mean(hits)) if hits else None)
        chance.append(float(np.mean(fracs)) if fracs else None)
    return EvalReport(auc, point, chance, probs)


def _heatmap_chunks(model: WeakMapNet, images: np.ndarray, chunk: int = 32) -> list[list[Heatmap]]:
    out = []
    for start in range(0, len(images), chunk):
        out.extend(class_heatmaps_batch(model, images[start : start + chunk]))
    return out


def _box_area_fraction(boxes: Sequence[Box], class_id: int, h: int, w: int) -> float:
    mask = np.zeros((h, w), dtype=bool)
    for b in boxes:
        if b.class_id == class_id:
            mask[b.y0 : b.y1, b.x0 : b.x1] = True
    return float(mask.mean())


def write_heatmaps(out_dir: str | os.PathLike, sample_id: int, heatmaps: Sequence[Heatmap]) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for c, hm in enumerate(heatmaps):
        path = out / f"{sample_id}_{c}.pgm"
        tmp = path.with_name(path.name + ".tmp")
        write_pgm(tmp, hm.render(), 255)
        os.replace(tmp, path)
        paths.append(path)
    return paths
