"""Flat key=value run configuration shared by every CLI command.

Unknown keys are hard errors; every key has a documented default; the
parse -> format -> parse round trip is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .losses import LossWeights
from .models import DomainShape
from .data import SplitSpec
from .training import TrainingConfig

__all__ = ["RunConfig", "ConfigError", "parse_config", "format_config", "load_config", "KEY_HELP"]


class ConfigError(ValueError):
    """Bad key, bad value or an unsatisfiable combination."""


@dataclass
class RunConfig:
    """Everything a run needs: data, shapes, training, strategy, paths."""

    seed: int = 0
    num_classes: int = 4
    per_class: int = 50
    src_height: int = 16
    src_width: int = 16
    src_channels: int = 1
    tgt_height: int = 8
    tgt_width: int = 8
    tgt_channels: int = 3
    base_channels: int = 16
    iterations: int = 3000
    batch_size: int = 8
    lambda_cycle: float = 10.0
    w_metric: float = 1.0
    w_classif: float = 1.0
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-4
    lr_classifier: float = 1e-3
    lr_final: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    pretrain_epochs: int = 10
    final_epochs: int = 30
    pair_policy: str = "auto"
    pair_count: int = 32
    classifier_freeze: bool = True
    log_every: int = 100
    checkpoint_every: int = 1000
    train_per_class: int = 40
    val_per_class: int = 10
    n_yt: int = 5
    strategy: str = "target"
    data_dir: str = "data"
    out_dir: str = "runs/default"

    def src_shape(self) -> DomainShape:
        return DomainShape(self.src_height, self.src_width, self.src_channels)

    def tgt_shape(self) -> DomainShape:
        return DomainShape(self.tgt_height, self.tgt_width, self.tgt_channels)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_per_class, self.val_per_class, self.seed)

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            seed=self.seed,
            weights=LossWeights(self.lambda_cycle, self.w_metric, self.w_classif),
            lr_generator=self.lr_generator,
            lr_discriminator=self.lr_discriminator,
            lr_classifier=self.lr_classifier,
            lr_final=self.lr_final,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            pretrain_epochs=self.pretrain_epochs,
            final_epochs=self.final_epochs,
            pair_policy=self.pair_policy,
            pair_count=self.pair_count,
            classifier_freeze=self.classifier_freeze,
            log_every=self.log_every,
            checkpoint_every=self.checkpoint_every,
        )

    def validate(self) -> None:
        try:
            self.training_config().validate()
            self.src_shape()
            self.tgt_shape()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.strategy not in ("baseline", "source", "target", "full"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if not 0 <= self.n_yt <= self.train_per_class:
            raise ConfigError(f"n_yt must be in [0, {self.train_per_class}], got {self.n_yt}")
        if not 2 <= self.num_classes <= 16:
            raise ConfigError(f"num_classes must be in [2, 16], got {self.num_classes}")
        if self.per_class < self.train_per_class + self.val_per_class:
            raise ConfigError(
                f"per_class {self.per_class} cannot satisfy train {self.train_per_class} + val {self.val_per_class}"
            )


KEY_HELP = {
    "seed": "master seed for data, init, shuffling and dropout",
    "num_classes": "synthetic benchmark class count (2..16)",
    "per_class": "generated samples per class and domain",
    "src_height": "source domain image height",
    "src_width": "source domain image width",
    "src_channels": "source domain channel count",
    "tgt_height": "target domain image height",
    "tgt_width": "target domain image width",
    "tgt_channels": "target domain channel count",
    "base_channels": "network width multiplier",
    "iterations": "adversarial training iterations (0 disables)",
    "batch_size": "minibatch size for every phase",
    "lambda_cycle": "cycle-reconstruction weight",
    "w_metric": "metric-alignment weight",
    "w_classif": "classification-consistency weight",
    "lr_generator": "Adam learning rate for both generators",
    "lr_discriminator": "Adam learning rate for both discriminators",
    "lr_classifier": "Adam learning rate for classifier pretraining",
    "lr_final": "Adam learning rate for the final classifier",
    "beta1": "Adam first-moment decay",
    "beta2": "Adam second-moment decay",
    "adam_eps": "Adam epsilon",
    "pretrain_epochs": "classifier pretraining epochs",
    "final_epochs": "final classifier training epochs",
    "pair_policy": "metric pair sampling: auto, all or random",
    "pair_count": "random pairs per step when pair_policy applies",
    "classifier_freeze": "keep classifiers frozen during adversarial phase",
    "log_every": "console log period in iterations (0 silences)",
    "checkpoint_every": "checkpoint period in iterations (0 disables)",
    "train_per_class": "training samples per class after the split",
    "val_per_class": "validation samples per class",
    "n_yt": "labeled target samples per class",
    "strategy": "final-classifier assembly: baseline, source, target or full",
    "data_dir": "where dataset dumps live",
    "out_dir": "where checkpoints, traces and metrics go",
}

_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as err:
        raise ConfigError(f"key {key!r}: {err}") from None


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _convert(key, raw))
    cfg.validate()
    return cfg


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Config from an optional file plus override key/value pairs."""
    if path is not None:
        text = Path(path).read_text()
        cfg = parse_config(text)
    else:
        cfg = RunConfig()
    for key, value in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}")
        if isinstance(value, str):
            value = _convert(key, value)
        setattr(cfg, key, value)
    cfg.validate()
    return cfg
