"""Classifier pretraining and the alternating adversarial optimization.

Each iteration runs three sub-updates in a fixed order:

1. both discriminators descend their real/fake loss with the
   generators frozen (generator outputs are detached);
2. both generators descend the composite objective (adversarial,
   cycle, metric alignment and classification consistency) with the
   discriminators and classifiers frozen;
3. optionally, the classifiers take a supervised step on real labeled
   data (off by default; they stay frozen after pretraining).

Classification-consistency routing: the source classifier judges
generated source images from labeled target samples, the target
classifier judges generated target images from labeled source samples.
With no target labels anywhere, both classification terms are inactive
and the run degenerates to the cycle/metric objective.

Frozen networks run in eval mode during sub-updates that exclude them,
so their parameters and running statistics stay bitwise unchanged.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from . import tensor as T
from .data import DomainDataset
from .losses import (
    LossReport,
    LossWeights,
    all_pairs,
    classification_loss,
    cycle_loss,
    gan_loss_discriminator,
    gan_loss_generator,
    metric_loss,
    total_loss,
)
from .models import ModelBundle
from .nn import Network, adam_step
from .tensor import Tensor

__all__ = [
    "TrainingConfig",
    "StepTrace",
    "Batch",
    "TrainDivergedError",
    "pretrain_classifier",
    "train_step",
    "train",
    "select_pairs",
    "predict_labels",
    "TRACE_HEADER",
]

log = logging.getLogger(__name__)

TRACE_HEADER = "iteration,gan_s2t,gan_t2s,cycle,metric_s2t,metric_t2s,classif_s,classif_t,total,ms"


class TrainDivergedError(RuntimeError):
    """A loss term became NaN; the run aborts rather than skipping."""


@dataclass
class TrainingConfig:
    """Knobs for the adversarial phase and both classifier trainings."""

    iterations: int = 3000
    batch_size: int = 8
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-4
    lr_classifier: float = 1e-3
    lr_final: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_epochs: int = 10
    final_epochs: int = 30
    pair_policy: str = "auto"  # auto | all | random
    pair_count: int = 32
    classifier_freeze: bool = True
    log_every: int = 100
    checkpoint_every: int = 1000

    def validate(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weights.w_metric > 0 and self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 while the metric loss is active")
        if self.pair_policy not in ("auto", "all", "random"):
            raise ValueError(f"unknown pair_policy {self.pair_policy!r}")
        if self.pair_count < 1:
            raise ValueError(f"pair_count must be >= 1, got {self.pair_count}")


@dataclass
class StepTrace:
    """One iteration's loss report and wall time."""

    iteration: int
    report: LossReport
    ms: float

    def as_csv(self) -> str:
        vals = ",".join(f"{v:.9g}" for v in self.report.as_row())
        return f"{self.iteration},{vals},{self.ms:.3f}"


@dataclass
class Batch:
    """A minibatch with labels as int64, -1 marking hidden/absent ones."""

    images: Tensor
    labels: np.ndarray

    @classmethod
    def from_dataset(cls, ds: DomainDataset, indices) -> "Batch":
        imgs, labels = ds.make_batch(indices)
        return cls(Tensor(imgs), labels)

    @property
    def size(self) -> int:
        return self.images.shape[0]

    def labeled_mask(self) -> np.ndarray:
        return self.labels >= 0


def select_pairs(batch_size: int, cfg: TrainingConfig, rng: np.random.Generator) -> list:
    """Index pairs for the metric loss under the configured policy.

    "auto" takes every unordered pair for batches of 8 or fewer and
    falls back to ``pair_count`` random pairs for larger batches.
    """
    if batch_size < 2:
        return []
    if cfg.pair_policy == "all" or (cfg.pair_policy == "auto" and batch_size <= 8):
        return all_pairs(batch_size)
    pairs = []
    for _ in range(cfg.pair_count):
        i = int(rng.integers(batch_size))
        j = int(rng.integers(batch_size - 1))
        if j >= i:
            j += 1
        pairs.append((i, j))
    return pairs


def _nan_guard(name: str, value: float) -> float:
    if math.isnan(value) or math.isinf(value):
        raise TrainDivergedError(f"loss term {name!r} is {value}; aborting the run")
    return value


def predict_labels(net: Network, images: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode argmax predictions over an (N, C, H, W) array."""
    out = np.empty(images.shape[0], dtype=np.int64)
    with T.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunk = images[start : start + batch_size]
            logits = net.forward(Tensor(chunk), training=False)
            out[start : start + chunk.shape[0]] = logits.data.argmax(axis=1)
    return out


def pretrain_classifier(
    classifier: Network,
    ds: DomainDataset,
    epochs: int,
    seed: int,
    lr: float = 1e-3,
    batch_size: int = 8,
    beta1: float = 0.5,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> tuple[Network, float]:
    """Supervised minibatch training on the dataset's labeled subset.

    Returns the classifier (left in eval mode) and its training-set
    accuracy after the last epoch. Zero epochs leave the parameters
    untouched.
    """
    labeled = ds.labeled_indices()
    if labeled.size == 0:
        raise ValueError("pretrain_classifier: the labeled subset is empty")
    rng = np.random.default_rng([seed, 101])
    for _ in range(epochs):
        order = labeled[rng.permutation(labeled.size)]
        for start in range(0, order.size, batch_size):
            batch = Batch.from_dataset(ds, order[start : start + batch_size])
            logits = classifier.forward(batch.images, training=True)
            loss = classification_loss(logits, batch.labels)
            _nan_guard("pretrain", loss.item())
            loss.backward()
            adam_step(classifier.params, lr, beta1, beta2, adam_eps)
    imgs, labels = ds.make_batch(labeled)
    accuracy = float((predict_labels(classifier, imgs) == labels).mean())
    return classifier, accuracy


def _generator_losses(
    bundle: ModelBundle,
    src: Batch,
    tgt: Batch,
    cfg: TrainingConfig,
    pairs_src: list,
    pairs_tgt: list,
    use_classif_t: bool,
) -> dict:
    """Tensor-valued terms of the generator objective.

    Gated terms (zero weight, missing labels, no pairs) are simply left
    out; ``total_loss`` treats absent keys as zero.
    """
    w = cfg.weights
    fake_t = bundle.g_s2t.forward(src.images, training=True)
    fake_s = bundle.g_t2s.forward(tgt.images, training=True)
    terms: dict = {
        "gan_s2t": gan_loss_generator(bundle.d_t.forward(fake_t, training=False)),
        "gan_t2s": gan_loss_generator(bundle.d_s.forward(fake_s, training=False)),
    }
    if w.lambda_cycle > 0:
        rec_s = bundle.g_t2s.forward(fake_t, training=True)
        rec_t = bundle.g_s2t.forward(fake_s, training=True)
        terms["cycle"] = cycle_loss(src.images, rec_s) + cycle_loss(tgt.images, rec_t)
    if w.w_metric > 0 and pairs_src:
        terms["metric_s2t"] = metric_loss(src.images, fake_t, pairs_src)
    if w.w_metric > 0 and pairs_tgt:
        terms["metric_t2s"] = metric_loss(tgt.images, fake_s, pairs_tgt)
    if w.w_classif > 0:
        tgt_mask = tgt.labeled_mask()
        if tgt_mask.any():
            idx = np.flatnonzero(tgt_mask)
            gen_src = T.gather_rows(fake_s, idx)
            logits = bundle.c_s.forward(gen_src, training=False)
            terms["classif_s"] = classification_loss(logits, tgt.labels[idx])
        src_mask = src.labeled_mask()
        if use_classif_t and src_mask.any():
            idx = np.flatnonzero(src_mask)
            gen_tgt = T.gather_rows(fake_t, idx)
            logits = bundle.c_t.forward(gen_tgt, training=False)
            terms["classif_t"] = classification_loss(logits, src.labels[idx])
    return terms


def train_step(
    bundle: ModelBundle,
    src_batch: Batch,
    tgt_batch: Batch,
    cfg: TrainingConfig,
    pair_rng: np.random.Generator | None = None,
    iteration: int = 0,
    use_classif_t: bool = True,
) -> StepTrace:
    """One alternating update over both discriminators and generators."""
    t0 = time.perf_counter()
    if pair_rng is None:
        pair_rng = np.random.default_rng([cfg.seed, 202, iteration])

    # (1) discriminators, generators frozen (eval mode, detached fakes)
    with T.no_grad():
        fake_t = bundle.g_s2t.forward(src_batch.images, training=False)
        fake_s = bundle.g_t2s.forward(tgt_batch.images, training=False)
    d_s_loss = gan_loss_discriminator(
        bundle.d_s.forward(src_batch.images, training=True),
        bundle.d_s.forward(fake_s.detach(), training=True),
    )
    _nan_guard("d_s", d_s_loss.item())
    d_s_loss.backward()
    adam_step(bundle.d_s.params, cfg.lr_discriminator, cfg.beta1, cfg.beta2, cfg.adam_eps)
    d_t_loss = gan_loss_discriminator(
        bundle.d_t.forward(tgt_batch.images, training=True),
        bundle.d_t.forward(fake_t.detach(), training=True),
    )
    _nan_guard("d_t", d_t_loss.item())
    d_t_loss.backward()
    adam_step(bundle.d_t.params, cfg.lr_discriminator, cfg.beta1, cfg.beta2, cfg.adam_eps)

    # (2) generators, discriminators and classifiers frozen
    pairs_src = select_pairs(src_batch.size, cfg, pair_rng)
    pairs_tgt = select_pairs(tgt_batch.size, cfg, pair_rng)
    terms = _generator_losses(bundle, src_batch, tgt_batch, cfg, pairs_src, pairs_tgt, use_classif_t)
    report = LossReport()
    for name, t in terms.items():
        setattr(report, name, _nan_guard(name, t.item()))
    g_total = total_loss(terms, cfg.weights)
    report.total = _nan_guard("total", g_total.item())
    g_total.backward()
    adam_step(bundle.g_s2t.params, cfg.lr_generator, cfg.beta1, cfg.beta2, cfg.adam_eps)
    adam_step(bundle.g_t2s.params, cfg.lr_generator, cfg.beta1, cfg.beta2, cfg.adam_eps)
    # gradients that leaked into frozen networks are discarded
    bundle.d_s.params.zero_grad()
    bundle.d_t.params.zero_grad()
    bundle.c_s.params.zero_grad()
    bundle.c_t.params.zero_grad()

    # (3) optional supervised refresh of the classifiers on real data
    if not cfg.classifier_freeze:
        src_mask = src_batch.labeled_mask()
        if src_mask.any():
            idx = np.flatnonzero(src_mask)
            logits = bundle.c_s.forward(T.gather_rows(src_batch.images, idx), training=True)
            loss = classification_loss(logits, src_batch.labels[idx])
            _nan_guard("c_s", loss.item())
            loss.backward()
            adam_step(bundle.c_s.params, cfg.lr_classifier, cfg.beta1, cfg.beta2, cfg.adam_eps)
        tgt_mask = tgt_batch.labeled_mask()
        if tgt_mask.any():
            idx = np.flatnonzero(tgt_mask)
            logits = bundle.c_t.forward(T.gather_rows(tgt_batch.images, idx), training=True)
            loss = classification_loss(logits, tgt_batch.labels[idx])
            _nan_guard("c_t", loss.item())
            loss.backward()
            adam_step(bundle.c_t.params, cfg.lr_classifier, cfg.beta1, cfg.beta2, cfg.adam_eps)

    ms = (time.perf_counter() - t0) * 1e3
    return StepTrace(iteration, report, ms)


class _BatchStream:
    """Cycles through a dataset in shuffled full-size minibatches."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        out = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def train(
    bundle: ModelBundle,
    source_ds: DomainDataset,
    target_ds: DomainDataset,
    cfg: TrainingConfig,
    checkpoint_dir=None,
    on_trace=None,
) -> tuple[ModelBundle, list[StepTrace]]:
    """Pretrain the classifiers, then run the adversarial iterations.

    The target classifier is skipped entirely when the target has no
    labeled samples, and both classification-consistency terms stay
    inactive for the whole run in that case. Periodic checkpoints are
    written when ``checkpoint_dir`` is given; a write failure aborts.
    """
    cfg.validate()
    if cfg.pretrain_epochs > 0:
        _, acc_s = pretrain_classifier(
            bundle.c_s, source_ds, cfg.pretrain_epochs, cfg.seed,
            lr=cfg.lr_classifier, batch_size=cfg.batch_size,
            beta1=cfg.beta1, beta2=cfg.beta2, adam_eps=cfg.adam_eps,
        )
        log.info("pretrained c_s: train accuracy %.3f", acc_s)
    have_target_labels = target_ds.labeled_indices().size > 0
    if have_target_labels and cfg.pretrain_epochs > 0:
        _, acc_t = pretrain_classifier(
            bundle.c_t, target_ds, cfg.pretrain_epochs, cfg.seed + 1,
            lr=cfg.lr_classifier, batch_size=cfg.batch_size,
            beta1=cfg.beta1, beta2=cfg.beta2, adam_eps=cfg.adam_eps,
        )
        log.info("pretrained c_t: train accuracy %.3f", acc_t)
    elif not have_target_labels:
        log.info("no labeled target samples: c_t pretraining skipped")

    batch_rng = np.random.default_rng([cfg.seed, 11])
    pair_rng = np.random.default_rng([cfg.seed, 12])
    src_stream = _BatchStream(len(source_ds), cfg.batch_size, batch_rng)
    tgt_stream = _BatchStream(len(target_ds), cfg.batch_size, batch_rng)

    traces: list[StepTrace] = []
    for it in range(1, cfg.iterations + 1):
        src_batch = Batch.from_dataset(source_ds, src_stream.next())
        tgt_batch = Batch.from_dataset(target_ds, tgt_stream.next())
        trace = train_step(
            bundle, src_batch, tgt_batch, cfg,
            pair_rng=pair_rng, iteration=it, use_classif_t=have_target_labels,
        )
        traces.append(trace)
        if on_trace is not None:
            on_trace(trace)
        if cfg.log_every > 0 and it % cfg.log_every == 0:
            r = trace.report
            log.info(
                "iter %d: total %.4f cycle %.4f gan %.4f/%.4f",
                it, r.total, r.cycle, r.gan_s2t, r.gan_t2s,
            )
        if checkpoint_dir is not None and cfg.checkpoint_every > 0 and it % cfg.checkpoint_every == 0:
            _write_checkpoints(bundle, checkpoint_dir)
    if checkpoint_dir is not None:
        _write_checkpoints(bundle, checkpoint_dir)
    return bundle, traces


def _write_checkpoints(bundle: ModelBundle, directory) -> None:
    from .checkpoint import save_network

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, net in bundle.networks().items():
        if name == "final":
            continue  # the final classifier is trained separately
        save_network(directory / f"{name}.hdac", net)
