"""The four loss families and their weighted composition.

All losses take and return tensors so gradients flow through them:

* adversarial real/fake losses (non-saturating generator form),
* L1 cycle-reconstruction loss,
* metric-alignment loss on pairwise distances, dimension-normalized so
  distances are comparable across heterogeneous spaces,
* cross-entropy classification consistency.

Probabilities entering a log are clamped at 1e-7 for numerical safety.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = [
    "LossWeights",
    "LossReport",
    "gan_loss_discriminator",
    "gan_loss_generator",
    "cycle_loss",
    "metric_loss",
    "classification_loss",
    "total_loss",
    "all_pairs",
]

PROB_EPS = 1e-7
DIST_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the composite objective."""

    lambda_cycle: float = 10.0
    w_metric: float = 1.0
    w_classif: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 0:
                raise ValueError(f"loss weight {f.name} must be >= 0, got {v}")


@dataclass
class LossReport:
    """Per-term scalar values for one training step."""

    gan_s2t: float = 0.0
    gan_t2s: float = 0.0
    cycle: float = 0.0
    metric_s2t: float = 0.0
    metric_t2s: float = 0.0
    classif_s: float = 0.0
    classif_t: float = 0.0
    total: float = 0.0

    FIELDS = ("gan_s2t", "gan_t2s", "cycle", "metric_s2t", "metric_t2s", "classif_s", "classif_t", "total")

    def as_row(self) -> list[float]:
        return [getattr(self, name) for name in self.FIELDS]


def _lower_clamp(t: Tensor, lo: float) -> Tensor:
    # max(t, lo) built from relu; gradient passes only above the floor
    return T.relu(t - lo) + lo


def _clamp(t: Tensor, lo: float, hi: float) -> Tensor:
    # lo + relu(t - lo) - relu(t - hi) equals clip(t, lo, hi)
    return T.relu(t - lo) - T.relu(t - hi) + lo


def _check_batch(t: Tensor, name: str) -> None:
    if t.size == 0 or t.shape[0] == 0:
        raise ValueError(f"{name}: empty batch")


def gan_loss_discriminator(d_real_logits: Tensor, d_fake_logits: Tensor) -> Tensor:
    """-mean log sig(real) - mean log(1 - sig(fake)).

    This is the discriminator's minimization target; driving it down
    maximizes the adversarial objective over D.
    """
    _check_batch(d_real_logits, "gan_loss_discriminator")
    _check_batch(d_fake_logits, "gan_loss_discriminator")
    if d_real_logits.shape[0] != d_fake_logits.shape[0]:
        raise T.ShapeError(
            f"gan_loss_discriminator: real batch {d_real_logits.shape} vs fake batch {d_fake_logits.shape}"
        )
    p_real = _clamp(T.sigmoid(d_real_logits), PROB_EPS, 1.0 - PROB_EPS)
    p_fake = _clamp(T.sigmoid(d_fake_logits), PROB_EPS, 1.0 - PROB_EPS)
    return -T.reduce_mean(T.log(p_real)) - T.reduce_mean(T.log(1.0 - p_fake))


def gan_loss_generator(d_fake_logits: Tensor) -> Tensor:
    """Non-saturating generator loss: -mean log sig(fake)."""
    _check_batch(d_fake_logits, "gan_loss_generator")
    p_fake = _clamp(T.sigmoid(d_fake_logits), PROB_EPS, 1.0 - PROB_EPS)
    return -T.reduce_mean(T.log(p_fake))


def cycle_loss(x: Tensor, x_reconstructed: Tensor) -> Tensor:
    """Mean absolute error between a batch and its round-trip images."""
    if x.shape != x_reconstructed.shape:
        raise T.ShapeError(
            f"cycle_loss: shapes {x.shape} and {x_reconstructed.shape} differ"
        )
    return T.reduce_mean(T.absval(x - x_reconstructed))


def _pair_distances(flat: Tensor, idx_i: np.ndarray, idx_j: np.ndarray) -> Tensor:
    d = flat.shape[1]
    diff = T.gather_rows(flat, idx_i) - T.gather_rows(flat, idx_j)
    sq = T.reduce_sum(T.square(diff), axes=1)
    return T.sqrt(sq + DIST_EPS) * (1.0 / float(np.sqrt(d)))


def metric_loss(x_batch: Tensor, g_x_batch: Tensor, pairs) -> Tensor:
    """Mean squared difference of paired sample distances before and
    after generation.

    Distances are Euclidean on the flattened sample divided by the
    square root of that domain's element count, so the two domains'
    scales match. ``g_x_batch[i]`` must be the image of
    ``x_batch[i]``.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("metric_loss: empty pair list")
    n = x_batch.shape[0]
    if g_x_batch.shape[0] != n:
        raise T.ShapeError(
            f"metric_loss: batches disagree, {x_batch.shape} vs {g_x_batch.shape}"
        )
    idx_i = np.asarray([p[0] for p in pairs], dtype=np.int64)
    idx_j = np.asarray([p[1] for p in pairs], dtype=np.int64)
    if idx_i.min() < 0 or idx_j.min() < 0 or idx_i.max() >= n or idx_j.max() >= n:
        raise IndexError(f"metric_loss: pair index out of range for batch {n}")
    xf = T.reshape(x_batch, (n, -1))
    gf = T.reshape(g_x_batch, (n, -1))
    dx = _pair_distances(xf, idx_i, idx_j)
    dg = _pair_distances(gf, idx_i, idx_j)
    return T.reduce_mean(T.square(dx - dg))


def classification_loss(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels."""
    _check_batch(logits, "classification_loss")
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise T.ShapeError(f"classification_loss: {n} logit rows but labels shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"classification_loss: label out of range [0, {num_classes})"
        )
    onehot = np.zeros((n, num_classes), dtype=T.current_dtype())
    onehot[np.arange(n), labels] = 1.0
    probs = T.softmax(logits, axis=1)
    p_true = T.reduce_sum(probs * Tensor(onehot), axes=1)
    return -T.reduce_mean(T.log(_lower_clamp(p_true, PROB_EPS)))


def total_loss(terms: dict, weights: LossWeights):
    """Weighted sum of the term dictionary; absent terms contribute 0.

    Works on tensors (for the training graph) and on plain floats (for
    report bookkeeping) alike.
    """
    if weights.lambda_cycle < 0 or weights.w_metric < 0 or weights.w_classif < 0:
        raise ValueError("total_loss: negative weights")
    get = lambda k: terms.get(k, 0.0)
    return (
        get("gan_s2t")
        + get("gan_t2s")
        + weights.lambda_cycle * get("cycle")
        + weights.w_classif * (get("classif_s") + get("classif_t"))
        + weights.w_metric * (get("metric_s2t") + get("metric_t2s"))
    )


def all_pairs(n: int) -> list[tuple[int, int]]:
    """Every unordered index pair within a batch of size n."""
    return [(i, j) for i in range(n) for j in range(i + 1, n)]
