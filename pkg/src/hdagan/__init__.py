"""Heterogeneous domain adaptation with cycle-consistent generators.

A source domain with labels and a target domain with few or no labels
live in different metric spaces (different image sizes and channel
counts). Two generators learn an invertible mapping between them under
adversarial, cycle-reconstruction, metric-alignment and classification
consistency losses; a final classifier is then trained on one of three
assembled target-shaped training sets and evaluated on target data.
"""

from .tensor import Tensor, backward, no_grad
from .models import DomainShape, ModelBundle, build_bundle
from .data import DomainDataset, SplitSpec, generate_synthetic_pair, split_and_budget
from .losses import LossReport, LossWeights
from .training import TrainingConfig, StepTrace, train, train_step, pretrain_classifier
from .strategies import (
    AssembledSet,
    assemble_baseline,
    assemble_hda_full,
    assemble_hda_source,
    assemble_hda_target,
    evaluate,
    train_final,
)
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "DomainShape",
    "ModelBundle",
    "build_bundle",
    "DomainDataset",
    "SplitSpec",
    "generate_synthetic_pair",
    "split_and_budget",
    "LossReport",
    "LossWeights",
    "TrainingConfig",
    "StepTrace",
    "train",
    "train_step",
    "pretrain_classifier",
    "AssembledSet",
    "assemble_baseline",
    "assemble_hda_full",
    "assemble_hda_source",
    "assemble_hda_target",
    "evaluate",
    "train_final",
    "RunConfig",
    "load_config",
    "__version__",
]
