"""Dataset ingestion, task-stream construction and non-IID client partitioning.

Streams come in two flavors: domain-incremental (every task sees all classes
through a per-task input transform — rotation or pixel permutation) and
split-class (disjoint class subsets per task, used for class- and
task-incremental evaluation). Partitioners slice each task's training set
across clients, always as an exact cover.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """The file does not follow the IDX byte layout."""


@dataclass
class Dataset:
    """Flat images (N x H*W in [0,1]), integer labels, and shape metadata."""

    images: np.ndarray
    labels: np.ndarray
    height: int
    width: int
    n_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or self.images.shape[0] == 0:
            raise ValueError("dataset images must be a nonempty 2-D matrix")
        if self.images.shape[1] != self.height * self.width:
            raise ValueError("image columns must equal height*width")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must align with image rows")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n_classes):
            raise ValueError("labels outside [0, n_classes)")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return self.images.shape[0]


@dataclass
class Task:
    """One task of a stream: transformed train/test data plus its class set."""

    task_id: int
    train: Dataset
    test: Dataset
    class_set: frozenset
    transform: tuple  # ("identity",) | ("rotate", angle) | ("permute", perm) | ("classes", ids)


@dataclass
class TaskStream:
    tasks: List[Task]
    kind: str  # "domain" or "split"

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def n_classes(self) -> int:
        return self.tasks[0].train.n_classes


@dataclass
class ClientShard:
    """Per-client training indices into each task of a stream."""

    client_id: int
    task_indices: List[np.ndarray] = field(default_factory=list)


def _read_idx_header(blob: bytes, path: str, expected_magic: int, n_dims: int):
    head = 4 + 4 * n_dims
    if len(blob) < head:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", blob[:4])[0]
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(f">{n_dims}I", blob[4:head])
    return dims, blob[head:]


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse big-endian IDX image/label files into a Dataset (pixels / 255)."""
    with open(images_path, "rb") as f:
        img_blob = f.read()
    with open(labels_path, "rb") as f:
        lab_blob = f.read()
    (n_img, rows, cols), img_body = _read_idx_header(
        img_blob, images_path, IDX_IMAGES_MAGIC, 3
    )
    (n_lab,), lab_body = _read_idx_header(lab_blob, labels_path, IDX_LABELS_MAGIC, 1)
    if len(img_body) != n_img * rows * cols:
        raise IdxFormatError(f"{images_path}: truncated image payload")
    if len(lab_body) != n_lab:
        raise IdxFormatError(f"{labels_path}: truncated label payload")
    if n_img != n_lab:
        raise IdxFormatError(
            f"image/label count mismatch: {n_img} images vs {n_lab} labels"
        )
    images = np.frombuffer(img_body, dtype=np.uint8).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_body, dtype=np.uint8).astype(np.int64)
    return Dataset(
        images=images.reshape(n_img, rows * cols),
        labels=labels,
        height=rows,
        width=cols,
        n_classes=int(labels.max()) + 1,
    )


def _square_factors(dim: int) -> Tuple[int, int]:
    h = int(np.sqrt(dim))
    while dim % h != 0:
        h -= 1
    return h, dim // h


def synth_dataset(
    n_per_class: int, n_classes: int, input_dim: int, spread: float, seed
) -> Dataset:
    """Gaussian clusters around random unit-norm class means.

    Points are rescaled by x -> x + 0.5 and clipped to [0, 1], so with
    spread 0 every point of a class equals its rescaled mean. The unit shift
    centers the clusters in pixel range while keeping their full amplitude.
    """
    if n_per_class < 1 or n_classes < 2 or input_dim < 1 or spread < 0:
        raise ValueError("synth_dataset arguments must be positive")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(n_classes, input_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    images = np.empty((n_classes * n_per_class, input_dim), dtype=np.float64)
    labels = np.empty(n_classes * n_per_class, dtype=np.int64)
    for c in range(n_classes):
        noise = rng.normal(size=(n_per_class, input_dim)) * spread
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        images[block] = means[c] + noise
        labels[block] = c
    images = np.clip(images + 0.5, 0.0, 1.0)
    h, w = _square_factors(input_dim)
    return Dataset(images=images, labels=labels, height=h, width=w, n_classes=n_classes)


def rotate_image(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate about the image center with bilinear interpolation, zero outside.

    Uses the pixel-center convention (center at (H-1)/2, (W-1)/2), which makes
    a 180-degree rotation an exact flip of both axes.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = rows - cy
    dx = cols - cx
    # inverse map: rotate output coordinates by -angle to find the source point
    src_y = cy + cos_t * dy + sin_t * dx
    src_x = cx - sin_t * dy + cos_t * dx
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0
    out = np.zeros_like(img)
    for oy, ox, wgt in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + oy
        xx = x0 + ox
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = np.zeros_like(img)
        vals[inside] = img[yy[inside], xx[inside]]
        out += wgt * vals
    return out


def _apply_transform(ds: Dataset, transform: tuple) -> Dataset:
    if transform[0] == "identity":
        images = ds.images.copy()
    elif transform[0] == "permute":
        images = ds.images[:, transform[1]]
    elif transform[0] == "rotate":
        angle = transform[1]
        images = np.stack(
            [
                rotate_image(row.reshape(ds.height, ds.width), angle).ravel()
                for row in ds.images
            ]
        )
        images = np.clip(images, 0.0, 1.0)
    else:
        raise ValueError(f"unknown transform {transform[0]!r}")
    return Dataset(
        images=images,
        labels=ds.labels.copy(),
        height=ds.height,
        width=ds.width,
        n_classes=ds.n_classes,
    )


def make_domain_tasks(
    base: Dataset,
    n_tasks: int,
    kind: str,
    seed,
    test: Optional[Dataset] = None,
) -> TaskStream:
    """Domain-incremental stream: one transform per task, shared by train and test.

    Task 0 is the identity; later tasks draw a fresh rotation angle in
    [0, 360) or a fresh pixel permutation. ``test`` defaults to the train data.
    """
    if n_tasks < 1:
        raise ValueError("need at least one task")
    if kind not in ("rotate", "permute"):
        raise ValueError(f"unknown domain kind {kind!r}")
    test = test if test is not None else base
    rng = np.random.default_rng(seed)
    full = frozenset(range(base.n_classes))
    tasks = []
    for t in range(n_tasks):
        if t == 0:
            transform = ("identity",)
        elif kind == "rotate":
            transform = ("rotate", float(rng.uniform(0.0, 360.0)))
        else:
            transform = ("permute", rng.permutation(base.height * base.width))
        tasks.append(
            Task(
                task_id=t,
                train=_apply_transform(base, transform),
                test=_apply_transform(test, transform),
                class_set=full,
                transform=transform,
            )
        )
    return TaskStream(tasks=tasks, kind="domain")


def make_split_tasks(
    base: Dataset, n_tasks: int, test: Optional[Dataset] = None
) -> TaskStream:
    """Split-class stream: classes sorted ascending and chunked into equal groups."""
    if base.n_classes % n_tasks != 0:
        raise ValueError(
            f"{base.n_classes} classes not divisible into {n_tasks} tasks"
        )
    test = test if test is not None else base
    per = base.n_classes // n_tasks
    tasks = []
    for t in range(n_tasks):
        classes = tuple(range(t * per, (t + 1) * per))
        tr_mask = np.isin(base.labels, classes)
        te_mask = np.isin(test.labels, classes)
        tasks.append(
            Task(
                task_id=t,
                train=Dataset(
                    images=base.images[tr_mask],
                    labels=base.labels[tr_mask],
                    height=base.height,
                    width=base.width,
                    n_classes=base.n_classes,
                ),
                test=Dataset(
                    images=test.images[te_mask],
                    labels=test.labels[te_mask],
                    height=test.height,
                    width=test.width,
                    n_classes=test.n_classes,
                ),
                class_set=frozenset(classes),
                transform=("classes", classes),
            )
        )
    return TaskStream(tasks=tasks, kind="split")


def _largest_remainder(n_items: int, proportions: np.ndarray) -> np.ndarray:
    """Integer counts summing to n_items, closest to n_items*proportions."""
    target = n_items * proportions
    counts = np.floor(target).astype(np.int64)
    short = n_items - int(counts.sum())
    if short > 0:
        remainders = target - counts
        # deterministic tie-break: larger remainder first, then lower index
        order = np.lexsort((np.arange(len(counts)), -remainders))
        counts[order[:short]] += 1
    return counts


def dirichlet_partition(
    task: Task, n_clients: int, alpha: float, prior, seed
) -> List[np.ndarray]:
    """Split a task's training indices across clients by Dirichlet proportions.

    Each client draws a class distribution from Dir(alpha * prior); per class,
    the clients' draws are normalized into split proportions and the class
    indices are divided by largest-remainder rounding, so every index is
    assigned exactly once.
    """
    if n_clients < 1 or alpha <= 0:
        raise ValueError("need n_clients >= 1 and alpha > 0")
    labels = task.train.labels
    classes = sorted(int(c) for c in np.unique(labels))
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (len(classes),) or np.any(prior <= 0):
        raise ValueError("prior must be a positive vector over classes present")
    prior = prior / prior.sum()
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(alpha * prior, size=n_clients)  # one row per client
    shards = [[] for _ in range(n_clients)]
    for ci, c in enumerate(classes):
        idx = np.flatnonzero(labels == c)
        col = weights[:, ci]
        counts = _largest_remainder(len(idx), col / col.sum())
        start = 0
        for k in range(n_clients):
            shards[k].append(idx[start : start + counts[k]])
            start += counts[k]
    return [np.concatenate(parts) if parts else np.array([], dtype=np.int64) for parts in shards]


def assign_digit_pairs(stream: TaskStream, n_clients: int, seed) -> List[ClientShard]:
    """Give each client all samples of exactly two labels, in every task.

    The label pairs come from a seeded random matching; when clients outnumber
    pairs, a pair's samples are split evenly among the clients sharing it, so
    each task's indices remain an exact cover.
    """
    n_classes = stream.n_classes
    if n_classes % 2 != 0:
        raise ValueError("digit-pair assignment needs an even class count")
    if 2 * n_clients < n_classes:
        raise ValueError("too few clients to cover every label pair")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_classes)
    pairs = [tuple(sorted((int(perm[2 * i]), int(perm[2 * i + 1])))) for i in range(n_classes // 2)]
    owners = [[] for _ in pairs]
    for k in range(n_clients):
        owners[k % len(pairs)].append(k)
    shards = [ClientShard(client_id=k) for k in range(n_clients)]
    for task in stream.tasks:
        labels = task.train.labels
        parts = {k: [] for k in range(n_clients)}
        for pair, holders in zip(pairs, owners):
            idx = np.flatnonzero(np.isin(labels, pair))
            counts = _largest_remainder(len(idx), np.full(len(holders), 1.0 / len(holders)))
            start = 0
            for k, cnt in zip(holders, counts):
                parts[k].append(idx[start : start + cnt])
                start += cnt
        for k in range(n_clients):
            shards[k].task_indices.append(
                np.concatenate(parts[k]) if parts[k] else np.array([], dtype=np.int64)
            )
    return shards


def downsample(ds: Dataset, factor: int) -> Dataset:
    """Mean-pool images by an integer factor (desk-scale shrink for IDX data)."""
    if factor == 1:
        return ds
    if ds.height % factor or ds.width % factor:
        raise ValueError("downsample factor must divide both image dimensions")
    h, w = ds.height // factor, ds.width // factor
    imgs = ds.images.reshape(len(ds), h, factor, w, factor).mean(axis=(2, 4))
    return Dataset(
        images=imgs.reshape(len(ds), h * w),
        labels=ds.labels.copy(),
        height=h,
        width=w,
        n_classes=ds.n_classes,
    )
