"""Synthetic heterogeneous benchmark, image-folder ingestion and splits.

The synthetic benchmark renders one procedural texture family per
class in two styles: the source domain sees the field sharp at its own
resolution, the target domain sees the same field blurred, channel
mixed and noisier at a different resolution. Same class id, same
underlying texture parameters, different rendering: a controlled
heterogeneous pair with no external downloads.

Texture family assignment (deterministic): class c uses family
``c % 3`` with variant ``c // 3``:

* family 0: oriented stripes, angle pi * (2*variant + 1) / 12;
* family 1: blob fields, 3 + 2*variant gaussian bumps at
  class-fixed positions;
* family 2: checkerboards with period 2 + variant.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import DomainShape

__all__ = [
    "DomainDataset",
    "SplitSpec",
    "LabelAccessError",
    "generate_synthetic_pair",
    "ingest_image_folder",
    "split_and_budget",
    "save_dataset",
    "load_dataset",
    "HDAD_MAGIC",
]

log = logging.getLogger(__name__)

HDAD_MAGIC = b"HDAD"
HDAD_VERSION = 1


class LabelAccessError(RuntimeError):
    """Hidden labels were requested through the training surface."""


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train/validation sizes and the shuffle seed."""

    train_per_class: int
    val_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.train_per_class < 0 or self.val_per_class < 0:
            raise ValueError(f"split sizes must be >= 0, got {self}")


class DomainDataset:
    """Images of one domain shape with (possibly partially hidden) labels.

    ``access`` controls the label surface: a "train" dataset only ever
    reveals the budgeted labels through ``label_of``/``make_batch``;
    the full ground truth is reachable only on "eval" datasets.
    """

    def __init__(
        self,
        images: np.ndarray,
        labels,
        shape: DomainShape,
        class_names: list[str],
        visible=None,
        access: str = "eval",
        n_labeled_per_class: int | None = None,
    ):
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[1:] != shape.chw:
            raise ValueError(f"images shape {images.shape} does not match domain {shape}")
        if images.size and (images.min() < 0.0 or images.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        if access not in ("train", "eval"):
            raise ValueError(f"unknown access mode {access!r}")
        self.images = images
        self.shape = shape
        self.class_names = list(class_names)
        self.access = access
        self.n_labeled_per_class = n_labeled_per_class
        n = images.shape[0]
        if labels is None:
            self._labels = None
            self._visible = np.zeros(n, dtype=bool)
        else:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError(f"labels shape {labels.shape} does not match {n} samples")
            if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
                raise ValueError("label out of range for class_names")
            self._labels = labels
            if visible is None:
                self._visible = np.ones(n, dtype=bool)
            else:
                self._visible = np.asarray(visible, dtype=bool)
                if self._visible.shape != (n,):
                    raise ValueError("visibility mask does not match sample count")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def image(self, i: int) -> np.ndarray:
        return self.images[i]

    def label_of(self, i: int):
        """The label of sample i, or None when it is hidden/absent."""
        if self._labels is None or not self._visible[i]:
            return None
        return int(self._labels[i])

    @property
    def labels(self) -> list:
        return [self.label_of(i) for i in range(len(self))]

    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self._visible)

    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(~self._visible)

    def eval_labels(self) -> np.ndarray:
        """Full ground truth; only evaluation datasets may expose it."""
        if self.access == "train":
            raise LabelAccessError("hidden labels are not accessible on a training dataset")
        if self._labels is None:
            raise LabelAccessError("dataset carries no labels")
        return self._labels.copy()

    def make_batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """(images, labels) for the given indices; hidden labels are -1."""
        idx = np.asarray(indices, dtype=np.int64)
        imgs = self.images[idx]
        lab = np.full(idx.shape, -1, dtype=np.int64)
        if self._labels is not None:
            vis = self._visible[idx]
            lab[vis] = self._labels[idx][vis]
        return imgs, lab


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------

_STRIPE_FREQ = 2.0
_BLOB_SIGMA = 0.10
_BLOB_KEY = 9021


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    v = (np.arange(h) + 0.5) / h
    u = (np.arange(w) + 0.5) / w
    return np.meshgrid(v, u, indexing="ij")


def _texture_field(class_id: int, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    vv, uu = _grid(h, w)
    family = class_id % 3
    variant = class_id // 3
    if family == 0:
        angle = np.pi * (2 * variant + 1) / 12.0
        phase = rng.uniform(0.0, 0.4)
        freq = _STRIPE_FREQ + rng.uniform(-0.3, 0.3)
        t = np.cos(angle) * uu + np.sin(angle) * vv
        return 0.5 + 0.45 * np.sin(2.0 * np.pi * freq * t + phase)
    if family == 1:
        count = 3 + 2 * variant
        base = np.random.default_rng([_BLOB_KEY, class_id]).random((count, 2))
        centers = base + rng.uniform(-0.04, 0.04, size=(count, 2))
        acc = np.zeros((h, w))
        for cy, cx in centers:
            acc += np.exp(-((uu - cx) ** 2 + (vv - cy) ** 2) / (2.0 * _BLOB_SIGMA**2))
        return np.clip(0.9 * acc, 0.0, 1.0)
    period = 2 + variant
    du, dv = rng.uniform(0.0, 0.15 / period, size=2)
    cells = np.floor((uu + du) * period) + np.floor((vv + dv) * period)
    return 0.1 + 0.8 * (cells % 2)


def _box_blur3(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, 1, mode="edge")
    out = np.zeros_like(img)
    for di in range(3):
        for dj in range(3):
            out += p[di : di + img.shape[0], dj : dj + img.shape[1]]
    return out / 9.0


_MIX_SCALE = (0.9, 0.7, 0.5, 0.8)
_MIX_SHIFT = (0.05, 0.2, 0.35, 0.15)


def _render_source(field: np.ndarray, channels: int, rng: np.random.Generator) -> np.ndarray:
    # per-sample contrast/brightness jitter keeps the source classifier
    # from keying on exact intensities instead of the texture shape
    contrast = rng.uniform(0.6, 1.0)
    brightness = rng.uniform(0.0, 1.0 - contrast)
    img = np.repeat((contrast * field + brightness)[None], channels, axis=0)
    img = img + rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def _render_target(field: np.ndarray, channels: int, rng: np.random.Generator) -> np.ndarray:
    # same contrast/brightness jitter idea as the source rendering, so
    # a handful of labeled exemplars cannot stand in for the class
    contrast = rng.uniform(0.65, 1.0)
    brightness = rng.uniform(0.0, 1.0 - contrast)
    blurred = _box_blur3(contrast * field + brightness)
    mix_jitter = rng.uniform(0.85, 1.15, size=channels)
    img = np.stack(
        [
            _MIX_SCALE[j % len(_MIX_SCALE)] * mix_jitter[j] * blurred + _MIX_SHIFT[j % len(_MIX_SHIFT)]
            for j in range(channels)
        ]
    )
    img = img + rng.normal(0.0, 0.05, size=img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def generate_synthetic_pair(
    num_classes: int,
    per_class: int,
    src_shape: DomainShape,
    tgt_shape: DomainShape,
    seed: int,
) -> tuple[DomainDataset, DomainDataset]:
    """Create the paired heterogeneous benchmark, fully labeled.

    Samples use per-item seeds derived from (seed, domain, class,
    item), so generation is deterministic and order-independent. The
    two domains are unpaired: their per-sample jitters differ.
    """
    if not 2 <= num_classes <= 16:
        raise ValueError(f"num_classes must be in [2, 16], got {num_classes}")
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    class_names = [f"class{c}" for c in range(num_classes)]

    def _domain(tag: int, shape: DomainShape, render) -> DomainDataset:
        images = np.empty((num_classes * per_class,) + shape.chw, dtype=np.float32)
        labels = np.empty(num_classes * per_class, dtype=np.int64)
        i = 0
        for c in range(num_classes):
            for k in range(per_class):
                rng = np.random.default_rng([seed, tag, c, k])
                field = _texture_field(c, shape.height, shape.width, rng)
                images[i] = render(field, shape.channels, rng)
                labels[i] = c
                i += 1
        return DomainDataset(images, labels, shape, class_names, access="eval")

    source = _domain(0, src_shape, _render_source)
    target = _domain(1, tgt_shape, _render_target)
    return source, target


# ---------------------------------------------------------------------------
# image-folder ingestion
# ---------------------------------------------------------------------------


def _resize_bilinear(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Per-channel bilinear resize of a (C, H, W) float array via PIL."""
    from PIL import Image

    out = np.empty((img.shape[0], h, w), dtype=np.float32)
    for c in range(img.shape[0]):
        pim = Image.fromarray(img[c].astype(np.float32), mode="F")
        out[c] = np.asarray(pim.resize((w, h), Image.BILINEAR), dtype=np.float32)
    return out


def _adapt_channels(img: np.ndarray, channels: int) -> np.ndarray:
    """Replicate the first channel upward or drop extra channels."""
    have = img.shape[0]
    if have == channels:
        return img
    if have > channels:
        return img[:channels]
    reps = [img[c % have] for c in range(channels)]
    return np.stack(reps)


def ingest_image_folder(root, shape: DomainShape, class_map) -> DomainDataset:
    """Load <root>/<folder>/*.png style trees into one domain dataset.

    ``class_map`` is an ordered list of (class_name, [folder names]);
    several folders mapping to one class are merged under one label.
    Images are decoded, resized bilinearly to the domain extents,
    channel-adapted (replicate up, truncate down) and scaled to [0, 1].
    Undecodable files are skipped with a logged count.
    """
    from PIL import Image

    root = Path(root)
    class_names = [name for name, _ in class_map]
    images: list[np.ndarray] = []
    labels: list[int] = []
    skipped = 0
    for class_id, (name, folders) in enumerate(class_map):
        count_before = len(images)
        for folder in folders:
            d = root / folder
            if not d.is_dir():
                raise FileNotFoundError(f"missing class folder: {d}")
            for path in sorted(d.iterdir()):
                if not path.is_file():
                    continue
                try:
                    with Image.open(path) as im:
                        arr = np.asarray(im, dtype=np.float32) / 255.0
                except Exception:
                    skipped += 1
                    continue
                if arr.ndim == 2:
                    arr = arr[None]
                else:
                    arr = arr.transpose(2, 0, 1)
                arr = _adapt_channels(arr, shape.channels)
                arr = _resize_bilinear(arr, shape.height, shape.width)
                images.append(np.clip(arr, 0.0, 1.0))
                labels.append(class_id)
        if len(images) == count_before:
            raise ValueError(f"class {name!r} has no decodable images")
    if skipped:
        log.warning("ingest_image_folder: skipped %d undecodable files", skipped)
    ds = DomainDataset(np.stack(images), np.asarray(labels), shape, class_names, access="eval")
    ds.ingest_skipped = skipped
    return ds


# ---------------------------------------------------------------------------
# splitting and label budgets
# ---------------------------------------------------------------------------


def split_and_budget(
    ds: DomainDataset, spec: SplitSpec, n_yt: int
) -> tuple[DomainDataset, DomainDataset]:
    """Stratified train/val split with a per-class label budget.

    In the train half exactly ``n_yt`` samples per class keep their
    labels visible; the rest are hidden (retained internally, exposed
    only through evaluation datasets). ``n_yt = 0`` yields a fully
    unlabeled training set.
    """
    if ds._labels is None:
        raise ValueError("split_and_budget needs a labeled dataset")
    if not 0 <= n_yt <= spec.train_per_class:
        raise ValueError(f"n_yt must be in [0, {spec.train_per_class}], got {n_yt}")
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    visible: list[np.ndarray] = []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds._labels == c)
        need = spec.train_per_class + spec.val_per_class
        if members.size < need:
            raise ValueError(
                f"class {ds.class_names[c]!r} has {members.size} samples, split needs {need}"
            )
        rng = np.random.default_rng([spec.seed, c])
        perm = members[rng.permutation(members.size)]
        tr = perm[: spec.train_per_class]
        va = perm[spec.train_per_class : need]
        train_idx.append(tr)
        val_idx.append(va)
        mask = np.zeros(tr.size, dtype=bool)
        mask[:n_yt] = True
        visible.append(mask)
    tr_all = np.concatenate(train_idx)
    va_all = np.concatenate(val_idx)
    train = DomainDataset(
        ds.images[tr_all],
        ds._labels[tr_all],
        ds.shape,
        ds.class_names,
        visible=np.concatenate(visible),
        access="train",
        n_labeled_per_class=n_yt,
    )
    val = DomainDataset(
        ds.images[va_all],
        ds._labels[va_all],
        ds.shape,
        ds.class_names,
        access="eval",
        n_labeled_per_class=spec.val_per_class,
    )
    return train, val


# ---------------------------------------------------------------------------
# binary tensor dumps
# ---------------------------------------------------------------------------


def save_dataset(path, ds: DomainDataset) -> None:
    """Write the binary dump: magic, version, counts, shape, samples.

    Labels are stored only when every sample's label is visible.
    Per-sample data is float32 little-endian in (C, H, W) order.
    """
    labeled = ds._labels is not None and bool(ds._visible.all()) and len(ds) > 0
    with open(path, "wb") as f:
        f.write(HDAD_MAGIC)
        f.write(struct.pack("<HIIIIB", HDAD_VERSION, len(ds), ds.shape.height, ds.shape.width, ds.shape.channels, 1 if labeled else 0))
        for i in range(len(ds)):
            f.write(ds.images[i].astype("<f4").tobytes())
            if labeled:
                f.write(struct.pack("<H", int(ds._labels[i])))


def load_dataset(path, class_names=None) -> DomainDataset:
    """Read a dump written by :func:`save_dataset`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != HDAD_MAGIC:
            raise ValueError(f"{path}: not a dataset dump (magic {magic!r})")
        version, n, h, w, c, labeled = struct.unpack("<HIIIIB", f.read(19))
        if version != HDAD_VERSION:
            raise ValueError(f"{path}: unsupported dump version {version}")
        shape = DomainShape(h, w, c)
        per = shape.numel
        images = np.empty((n,) + shape.chw, dtype=np.float32)
        labels = np.empty(n, dtype=np.int64) if labeled else None
        for i in range(n):
            images[i] = np.frombuffer(f.read(4 * per), dtype="<f4").reshape(shape.chw)
            if labeled:
                labels[i] = struct.unpack("<H", f.read(2))[0]
    if class_names is None:
        top = int(labels.max()) + 1 if labeled and n else 0
        class_names = [f"class{i}" for i in range(top)]
    return DomainDataset(images, labels, shape, class_names, access="eval")
