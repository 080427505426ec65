"""Procedural multi-label lesion images with hidden ground-truth boxes.

Each class owns one lesion archetype with a distinctive shape/intensity
signature, drawn on a smooth textured background shared by all images of a
subject.  Boxes are kept for evaluation only; training reads ``image`` and
``labels`` and nothing else.

Archetypes (class id -> look):

    0 bright disc      solid disc brighter than the background
    1 dark disc        solid disc darker than the background
    2 ring             bright annulus, hollow centre
    3 bar              bright thick bar, horizontal or vertical
    4 checker patch    square of alternating bright/dark 2px cells
    5 gradient blob    Gaussian bump whose brightness ramps left to right
    6 speckle cluster  scattered bright dots inside a disc
    7 cross            bright plus sign
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

ARCHETYPES = (
    "bright_disc",
    "dark_disc",
    "ring",
    "bar",
    "checker",
    "gradient_blob",
    "speckle",
    "cross",
)
MAX_CLASSES = len(ARCHETYPES)
IMAGES_PER_SUBJECT = 3
LABEL_NOISE = 0.05
PGM_MAX16 = 65535


@dataclass(frozen=True)
class Box:
    class_id: int
    x0: int
    y0: int
    x1: int
    y1: int

    def contains(self, x: int, y: int) -> bool:
        """Half-open pixel membership: x0 <= x < x1, y0 <= y < y1."""
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)


@dataclass
class Sample:
    image: np.ndarray  # [H, W, 1] in [0, 1]
    labels: np.ndarray  # observed (possibly noisy) binary labels, int8[C]
    boxes: list[Box]
    subject_id: int
    sample_id: int = 0

    def true_labels(self, num_classes: int) -> np.ndarray:
        """Labels implied by the lesions actually drawn (evaluation only)."""
        out = np.zeros(num_classes, dtype=np.int8)
        for b in self.boxes:
            out[b.class_id] = 1
        return out


@dataclass
class DatasetSplit:
    train: list[int] = field(default_factory=list)
    validation: list[int] = field(default_factory=list)
    evaluation: list[int] = field(default_factory=list)

    def parts(self) -> dict[str, list[int]]:
        return {"train": self.train, "validation": self.validation, "evaluation": self.evaluation}


# ---------------------------------------------------------------------------
# rendering


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = gaussian_filter(rng.normal(size=(size, size)), sigma=size / 8, mode="wrap")
    coarse = (coarse - coarse.mean()) / (coarse.std() + 1e-12)
    yy, xx = np.mgrid[0:size, 0:size] / size
    ramp = rng.uniform(-0.1, 0.1) * xx + rng.uniform(-0.1, 0.1) * yy
    return 0.45 + 0.06 * coarse + ramp


def _draw(canvas: np.ndarray, cls: int, cx: float, cy: float, rad: float, rng: np.random.Generator) -> None:
    size = canvas.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(float)
    dx, dy = xx - cx, yy - cy
    d = np.hypot(dx, dy)
    amp = rng.uniform(0.25, 0.35)
    name = ARCHETYPES[cls]
    if name == "bright_disc":
        canvas += amp * (d <= rad)
    elif name == "dark_disc":
        canvas -= amp * (d <= rad)
    elif name == "ring":
        canvas += amp * ((d <= rad) & (d >= rad - 2.0))
    elif name == "bar":
        if rng.random() < 0.5:
            canvas += amp * ((np.abs(dx) <= rad) & (np.abs(dy) <= 1.5))
        else:
            canvas += amp * ((np.abs(dy) <= rad) & (np.abs(dx) <= 1.5))
    elif name == "checker":
        inside = (np.abs(dx) <= rad) & (np.abs(dy) <= rad)
        cells = ((np.floor(xx / 2) + np.floor(yy / 2)) % 2) * 2 - 1
        canvas += amp * inside * cells
    elif name == "gradient_blob":
        ramp = np.clip(0.5 + dx / (2 * rad), 0.0, 1.0)
        canvas += 1.3 * amp * ramp * np.exp(-(d / (0.6 * rad)) ** 2) * (d <= rad)
    elif name == "speckle":
        dots = rng.random((size, size)) < 0.3
        canvas += amp * (dots & (d <= rad))
    elif name == "cross":
        canvas += amp * (((np.abs(dx) <= rad) & (np.abs(dy) <= 1.0)) | ((np.abs(dy) <= rad) & (np.abs(dx) <= 1.0)))


def _lesion_box(cls: int, cx: float, cy: float, rad: float, size: int) -> Box:
    x0 = max(0, int(np.floor(cx - rad)))
    y0 = max(0, int(np.floor(cy - rad)))
    x1 = min(size, int(np.floor(cx + rad)) + 1)
    y1 = min(size, int(np.floor(cy + rad)) + 1)
    return Box(cls, x0, y0, x1, y1)


def render_sample(
    seed: int,
    index: int,
    num_classes: int,
    image_size: int,
    class_prior: np.ndarray,
    label_noise: float = LABEL_NOISE,
    images_per_subject: int = IMAGES_PER_SUBJECT,
) -> Sample:
    """Build one sample from its own counter-derived random stream."""
    subject = index // images_per_subject
    rng = np.random.default_rng([seed, index])
    subject_rng = np.random.default_rng([seed, subject, 1 << 30])
    img = _background(subject_rng, image_size)
    img += gaussian_filter(rng.normal(size=img.shape), 1.5) * 0.02
    present = rng.random(num_classes) < class_prior
    boxes = []
    margin = 2
    for cls in np.flatnonzero(present):
        rad = rng.uniform(4.0, 8.0)
        cx = rng.uniform(rad + margin, image_size - rad - margin - 1)
        cy = rng.uniform(rad + margin, image_size - rad - margin - 1)
        _draw(img, int(cls), cx, cy, rad, rng)
        boxes.append(_lesion_box(int(cls), cx, cy, rad, image_size))
    img += rng.normal(scale=0.02, size=img.shape)
    img = np.clip(img, 0.0, 1.0)
    img = np.round(img * PGM_MAX16) / PGM_MAX16  # exact 16-bit grid so PGM round-trips
    labels = present.astype(np.int8)
    flips = rng.random(num_classes) < label_noise
    labels[flips] = 1 - labels[flips]
    return Sample(img[:, :, None], labels, boxes, subject, index)


def generate_dataset(
    seed: int,
    n_samples: int,
    num_classes: int = 4,
    image_size: int = 64,
    class_prior: float | list[float] = 0.3,
    label_noise: float = LABEL_NOISE,
    images_per_subject: int = IMAGES_PER_SUBJECT,
) -> list[Sample]:
    if not 1 <= num_classes <= MAX_CLASSES:
        raise ValueError(f"num_classes must be in 1..{MAX_CLASSES}, got {num_classes}")
    prior = np.broadcast_to(np.asarray(class_prior, dtype=float), (num_classes,))
    return [
        render_sample(seed, i, num_classes, image_size, prior, label_noise, images_per_subject)
        for i in range(n_samples)
    ]


# ---------------------------------------------------------------------------
# splitting and normalization


def split_by_subject(
    samples: list[Sample], fractions: tuple[float, float, float] = (0.70, 0.10, 0.20), seed: int = 0
) -> DatasetSplit:
    """Shuffle subjects, then fill train/validation/evaluation quotas in order."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError(f"fractions must be three values summing to 1, got {fractions}")
    by_subject: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_subject.setdefault(s.subject_id, []).append(i)
    subjects = sorted(by_subject)
    if len(subjects) < 3:
        raise ValueError(f"need at least 3 subjects to fill 3 parts, got {len(subjects)}")
    order = np.random.default_rng(seed).permutation(len(subjects))
    queue = [subjects[i] for i in order]
    n = len(samples)
    parts: list[list[int]] = [[], [], []]
    quota = [fractions[0] * n, fractions[1] * n]
    pos = 0
    for p in range(2):
        # leave at least one subject for every later part
        while pos < len(queue) - (2 - p) and (len(parts[p]) < quota[p] or not parts[p]):
            parts[p].extend(by_subject[queue[pos]])
            pos += 1
    for sid in queue[pos:]:
        parts[2].extend(by_subject[sid])
    return DatasetSplit(*(sorted(p) for p in parts))


@dataclass
class Normalizer:
    mean: np.ndarray  # per channel
    std: np.ndarray

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return (image - self.mean) / self.std


STD_FLOOR = 1e-8


def normalize_channels(train_samples: list[Sample]) -> Normalizer:
    """Per-channel statistics over the training images only."""
    if not train_samples:
        raise ValueError("normalize_channels needs at least one training sample")
    stack = np.stack([s.image for s in train_samples])
    axes = tuple(range(stack.ndim - 1))
    mean = stack.mean(axis=axes)
    std = np.maximum(stack.std(axis=axes), STD_FLOOR)
    return Normalizer(mean, std)


# ---------------------------------------------------------------------------
# persistence


def write_pgm(path: str | os.PathLike, image: np.ndarray, maxval: int) -> None:
    """Binary PGM (P5); 16-bit samples are big-endian as the format requires."""
    h, w = image.shape[:2]
    if maxval > 255:
        data = np.asarray(image, dtype=">u2").tobytes()
    else:
        data = np.asarray(image, dtype=np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data)


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1
    dtype = ">u2" if maxval > 255 else np.uint8
    need = w * h * (2 if maxval > 255 else 1)
    if len(raw) - pos < need:
        raise ValueError(f"{path}: truncated pixel data")
    arr = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr, maxval


INDEX_HEADER = "# weakmap-dataset v1"


def save_dataset(
    out_dir: str | os.PathLike, samples: list[Sample], split: DatasetSplit, num_classes: int
) -> None:
    """Index file + 16-bit PGM images + split assignment under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    part_of = {}
    for name, idx in split.parts().items():
        for i in idx:
            part_of[i] = name
    lines = [f"{INDEX_HEADER} num_classes={num_classes} image_size={samples[0].image.shape[0]}"]
    for i, s in enumerate(samples):
        bits = "".join(str(int(v)) for v in s.labels)
        boxes = ";".join(f"{b.class_id}:{b.x0}:{b.y0}:{b.x1}:{b.y1}" for b in s.boxes)
        lines.append(f"{s.sample_id},{s.subject_id},{bits},{part_of[i]},{boxes}")
        pix = np.rint(s.image[:, :, 0] * PGM_MAX16).astype(np.uint16)
        _atomic(out / "images" / f"{s.sample_id:05d}.pgm", lambda p, pix=pix: write_pgm(p, pix, PGM_MAX16))
    _atomic(out / "index.csv", lambda p: Path(p).write_text("\n".join(lines) + "\n"))


def load_dataset(data_dir: str | os.PathLike) -> tuple[list[Sample], DatasetSplit, int]:
    root = Path(data_dir)
    lines = (root / "index.csv").read_text().splitlines()
    if not lines or not lines[0].startswith(INDEX_HEADER):
        raise ValueError(f"{root}: missing or foreign index header")
    meta = dict(kv.split("=") for kv in lines[0][len(INDEX_HEADER):].split())
    num_classes = int(meta["num_classes"])
    samples, split = [], DatasetSplit()
    for pos, line in enumerate(lines[1:]):
        sid, subj, bits, part, boxes = line.split(",", 4)
        labels = np.array([int(c) for c in bits], dtype=np.int8)
        blist = []
        if boxes:
            for tok in boxes.split(";"):
                blist.append(Box(*(int(v) for v in tok.split(":"))))
        pix, maxval = read_pgm(root / "images" / f"{int(sid):05d}.pgm")
        image = (pix.astype(np.float64) / maxval)[:, :, None]
        samples.append(Sample(image, labels, blist, int(subj), int(sid)))
        getattr(split, part).append(pos)
    return samples, split, num_classes


def _atomic(path: Path, write) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write(tmp)
    os.replace(tmp, path)
