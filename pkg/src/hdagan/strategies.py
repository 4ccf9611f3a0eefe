"""Final-classifier training sets and the evaluation loop.

Three assembly strategies build a labeled, target-shaped training set
from a trained adaptation bundle:

* source strategy: every source image pushed through the
  source-to-target generator, keeping its true label;
* target strategy: the original target images, unlabeled ones tagged
  with the source classifier's verdict on their generated source
  counterpart (hard argmax, ties to the lowest class index);
* full strategy: the union of the two, counting the genuinely labeled
  target samples once.

All strategies additionally include whatever labeled target data
exists. The baseline uses only that labeled target data. The final
classifier trains independently: nothing here writes to the bundle.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from collections import Counter

import numpy as np

from . import tensor as T
from .data import DomainDataset, HDAD_MAGIC, HDAD_VERSION
from .losses import classification_loss
from .models import DomainShape, ModelBundle
from .nn import Network, adam_step
from .tensor import Tensor
from .training import TrainDivergedError, _nan_guard, predict_labels

__all__ = [
    "AssembledSet",
    "PROV_LABELED",
    "PROV_TRANSFERRED",
    "PROV_PSEUDO",
    "assemble_hda_source",
    "assemble_hda_target",
    "assemble_hda_full",
    "assemble_baseline",
    "train_final",
    "evaluate",
    "save_assembled",
    "load_assembled",
]

PROV_LABELED = "labeled-target"
PROV_TRANSFERRED = "transferred-source"
PROV_PSEUDO = "pseudo-labeled-target"

_PROV_CODES = {PROV_TRANSFERRED: 0, PROV_PSEUDO: 1, PROV_LABELED: 2}
_PROV_NAMES = {v: k for k, v in _PROV_CODES.items()}


@dataclass
class AssembledSet:
    """Target-shaped labeled images with per-item provenance tags."""

    images: np.ndarray
    labels: np.ndarray
    provenance: list[str]
    shape: DomainShape

    def __len__(self) -> int:
        return self.images.shape[0]

    def histogram(self) -> dict[str, int]:
        return dict(Counter(self.provenance))


def _generate(net: Network, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    out = []
    with T.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunk = images[start : start + batch_size]
            out.append(net.forward(Tensor(chunk), training=False).data)
    return np.concatenate(out) if out else np.empty((0,), dtype=np.float32)


def _labeled_target_items(target_ds: DomainDataset):
    idx = target_ds.labeled_indices()
    imgs, labels = target_ds.make_batch(idx)
    return imgs, labels


def assemble_hda_source(
    bundle: ModelBundle, source_ds: DomainDataset, target_ds: DomainDataset
) -> AssembledSet:
    """Transferred source images with their true labels, plus whatever
    labeled target samples exist."""
    src_idx = source_ds.labeled_indices()
    src_imgs, src_labels = source_ds.make_batch(src_idx)
    transferred = _generate(bundle.g_s2t, src_imgs)
    lab_imgs, lab_labels = _labeled_target_items(target_ds)
    images = np.concatenate([transferred, lab_imgs]) if lab_imgs.size else transferred
    labels = np.concatenate([src_labels, lab_labels]) if lab_labels.size else src_labels
    prov = [PROV_TRANSFERRED] * len(src_idx) + [PROV_LABELED] * len(lab_labels)
    return AssembledSet(images.astype(np.float32), labels, prov, bundle.tgt_shape)


def assemble_hda_target(bundle: ModelBundle, target_ds: DomainDataset) -> AssembledSet:
    """Original target images; unlabeled ones get pseudo-labels from
    the source classifier applied to their generated source images."""
    unl_idx = target_ds.unlabeled_indices()
    unl_imgs, _ = target_ds.make_batch(unl_idx)
    if unl_idx.size:
        generated = _generate(bundle.g_t2s, unl_imgs)
        pseudo = predict_labels(bundle.c_s, generated)
    else:
        pseudo = np.empty(0, dtype=np.int64)
    lab_imgs, lab_labels = _labeled_target_items(target_ds)
    parts_i = [a for a in (unl_imgs, lab_imgs) if a.size]
    images = np.concatenate(parts_i) if parts_i else unl_imgs
    parts_l = [a for a in (pseudo, lab_labels) if a.size]
    labels = np.concatenate(parts_l) if parts_l else pseudo
    prov = [PROV_PSEUDO] * len(unl_idx) + [PROV_LABELED] * len(lab_labels)
    return AssembledSet(images.astype(np.float32), labels, prov, bundle.tgt_shape)


def assemble_hda_full(
    bundle: ModelBundle, source_ds: DomainDataset, target_ds: DomainDataset
) -> AssembledSet:
    """Union of the source and target assemblies; labeled target items
    are counted once."""
    a = assemble_hda_source(bundle, source_ds, target_ds)
    b = assemble_hda_target(bundle, target_ds)
    keep = [i for i, p in enumerate(a.provenance) if p == PROV_TRANSFERRED]
    images = np.concatenate([a.images[keep], b.images]) if keep else b.images
    labels = np.concatenate([a.labels[keep], b.labels]) if keep else b.labels
    prov = [PROV_TRANSFERRED] * len(keep) + b.provenance
    return AssembledSet(images.astype(np.float32), labels, prov, bundle.tgt_shape)


def assemble_baseline(target_ds: DomainDataset, shape: DomainShape) -> AssembledSet:
    """Only the labeled target budget; empty when no labels exist."""
    lab_imgs, lab_labels = _labeled_target_items(target_ds)
    if not lab_labels.size:
        lab_imgs = np.empty((0,) + shape.chw, dtype=np.float32)
        lab_labels = np.empty(0, dtype=np.int64)
    return AssembledSet(lab_imgs.astype(np.float32), lab_labels, [PROV_LABELED] * len(lab_labels), shape)


def train_final(
    final: Network,
    assembled: AssembledSet,
    epochs: int,
    seed: int,
    lr: float = 1e-3,
    batch_size: int = 8,
    beta1: float = 0.5,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> Network:
    """Minibatch cross-entropy training of the final classifier only."""
    if len(assembled) == 0:
        raise ValueError("train_final: the assembled set is empty")
    rng = np.random.default_rng([seed, 303])
    n = len(assembled)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = final.forward(Tensor(assembled.images[idx]), training=True)
            loss = classification_loss(logits, assembled.labels[idx])
            _nan_guard("final", loss.item())
            loss.backward()
            adam_step(final.params, lr, beta1, beta2, adam_eps)
    return final


def evaluate(final: Network, val: DomainDataset) -> float:
    """Accuracy percentage on a labeled validation set, 2 decimals."""
    labels = val.eval_labels()
    if labels.size == 0:
        raise ValueError("evaluate: empty validation set")
    pred = predict_labels(final, val.images)
    return round(100.0 * float((pred == labels).mean()), 2)


def save_assembled(path, assembled: AssembledSet) -> None:
    """Dataset dump plus one provenance byte per item."""
    with open(path, "wb") as f:
        f.write(HDAD_MAGIC)
        f.write(
            struct.pack(
                "<HIIIIB",
                HDAD_VERSION,
                len(assembled),
                assembled.shape.height,
                assembled.shape.width,
                assembled.shape.channels,
                1,
            )
        )
        for i in range(len(assembled)):
            f.write(assembled.images[i].astype("<f4").tobytes())
            f.write(struct.pack("<HB", int(assembled.labels[i]), _PROV_CODES[assembled.provenance[i]]))


def load_assembled(path) -> AssembledSet:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != HDAD_MAGIC:
            raise ValueError(f"{path}: not a dataset dump (magic {magic!r})")
        version, n, h, w, c, labeled = struct.unpack("<HIIIIB", f.read(19))
        if version != HDAD_VERSION or not labeled:
            raise ValueError(f"{path}: not an assembled-set dump")
        shape = DomainShape(h, w, c)
        per = shape.numel
        images = np.empty((n,) + shape.chw, dtype=np.float32)
        labels = np.empty(n, dtype=np.int64)
        prov = []
        for i in range(n):
            images[i] = np.frombuffer(f.read(4 * per), dtype="<f4").reshape(shape.chw)
            lab, code = struct.unpack("<HB", f.read(3))
            labels[i] = lab
            prov.append(_PROV_NAMES[code])
    return AssembledSet(images, labels, prov, shape)
