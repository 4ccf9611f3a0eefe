"""Concrete network builders for the adaptation architecture.

Six training-time networks (two generators, two discriminators, two
domain classifiers) plus the independently trained final classifier,
all parameterized by the two domain shapes. Every builder probes its
result at construction so invalid shapes fail here, never at forward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .nn import Network
from .tensor import Tensor

__all__ = [
    "DomainShape",
    "ModelBundle",
    "ArchitectureError",
    "build_generator",
    "build_discriminator",
    "build_classifier",
    "build_final_classifier",
    "build_bundle",
]


class ArchitectureError(ValueError):
    """A network cannot be built for the requested shapes."""


@dataclass(frozen=True)
class DomainShape:
    """Height, width and channel count of one domain's samples."""

    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ArchitectureError(f"domain extents must be >= 1, got {self}")

    @property
    def chw(self) -> tuple:
        return (self.channels, self.height, self.width)

    @property
    def numel(self) -> int:
        return self.height * self.width * self.channels


def _probe(net: Network, in_shape: DomainShape, batch: int = 2) -> tuple:
    x = Tensor(np.zeros((batch, in_shape.channels, in_shape.height, in_shape.width)))
    with T.no_grad():
        y = net.forward(x, training=False)
    return y.shape


def build_generator(
    in_shape: DomainShape,
    out_shape: DomainShape,
    base_channels: int = 16,
    seed: int = 0,
    name: str = "generator",
) -> Network:
    """Generator crossing from one domain shape to the other.

    Entry conv lifts to base_channels, two residual blocks process,
    a chain of x2 upsample or stride-2 conv stages moves the spatial
    extents toward the target, an exact center crop/pad lands on it,
    and the exit conv plus sigmoid emits out_channels in [0, 1].
    """
    if base_channels < 1:
        raise ArchitectureError(f"base_channels must be >= 1, got {base_channels}")
    for s in (in_shape, out_shape):
        if s.height < 4 or s.width < 4:
            raise ArchitectureError(f"generator needs spatial extents >= 4, got {s}")
    b = base_channels
    layers = [nn.conv(in_shape.channels, b, 3, 1, 1), nn.relu()]
    layers += [nn.residual_block(b), nn.residual_block(b)]
    ratio = 0.5 * (
        math.log2(out_shape.height / in_shape.height)
        + math.log2(out_shape.width / in_shape.width)
    )
    stages = round(ratio)
    for _ in range(stages):
        layers += [nn.upsample(2), nn.conv(b, b, 3, 1, 1), nn.relu()]
    for _ in range(-stages):
        layers += [nn.conv(b, b, 3, 2, 1), nn.relu()]
    layers.append(nn.crop_pad(out_shape.height, out_shape.width))
    layers += [nn.conv(b, out_shape.channels, 3, 1, 1), nn.sigmoid()]

    try:
        nn.trace_shape(layers, in_shape.chw)
    except T.ShapeError as err:
        raise ArchitectureError(str(err)) from None
    net = Network(name, layers, seed)
    got = _probe(net, in_shape)
    want = (2,) + out_shape.chw
    if got != want:
        raise ArchitectureError(f"{name}: probe produced {got}, expected {want}")
    return net


def build_discriminator(
    shape: DomainShape,
    base_channels: int = 16,
    seed: int = 0,
    name: str = "discriminator",
) -> Network:
    """Four stride-2 convs (channels x1/x2/x4/x8), then pool and a logit.

    Batchnorm and relu follow layers 2 to 4; the head is a global mean
    pool plus a dense layer to a single raw logit (losses apply the
    sigmoid). Four halvings need extents of at least 8 under the
    ceil-halving padding rule; smaller inputs fail at build.
    """
    if base_channels < 1:
        raise ArchitectureError(f"base_channels must be >= 1, got {base_channels}")
    if min(shape.height, shape.width) < 8:
        raise ArchitectureError(
            f"discriminator: spatial extent collapses below 1 before layer 4 for {shape}"
        )
    b = base_channels
    layers = [
        nn.conv(shape.channels, b, 3, 2, 1),
        nn.relu(),
        nn.conv(b, 2 * b, 3, 2, 1),
        nn.batchnorm(2 * b),
        nn.relu(),
        nn.conv(2 * b, 4 * b, 3, 2, 1),
        nn.batchnorm(4 * b),
        nn.relu(),
        nn.conv(4 * b, 8 * b, 3, 2, 1),
        nn.batchnorm(8 * b),
        nn.relu(),
        nn.global_mean_pool(),
        nn.dense(8 * b, 1),
    ]
    try:
        nn.trace_shape(layers, shape.chw)
    except T.ShapeError as err:
        raise ArchitectureError(str(err)) from None
    net = Network(name, layers, seed)
    got = _probe(net, shape)
    if got != (2, 1):
        raise ArchitectureError(f"{name}: probe produced {got}, expected (2, 1)")
    return net


def build_classifier(
    shape: DomainShape,
    num_classes: int,
    base_channels: int = 16,
    seed: int = 0,
    name: str = "classifier",
) -> Network:
    """Four relu convs with maxpool after layers 1 and 2 and dropout
    after layers 2 and 4, pooled into num_classes logits."""
    if num_classes < 2:
        raise ArchitectureError(f"num_classes must be >= 2, got {num_classes}")
    if min(shape.height, shape.width) < 4:
        raise ArchitectureError(f"classifier needs spatial extents >= 4, got {shape}")
    b = base_channels
    layers = [
        nn.conv(shape.channels, b, 3, 1, 1),
        nn.relu(),
        nn.maxpool(2),
        nn.conv(b, 2 * b, 3, 1, 1),
        nn.relu(),
        nn.maxpool(2),
        nn.dropout(0.25),
        nn.conv(2 * b, 2 * b, 3, 1, 1),
        nn.relu(),
        nn.conv(2 * b, 4 * b, 3, 1, 1),
        nn.relu(),
        nn.dropout(0.25),
        nn.global_mean_pool(),
        nn.dense(4 * b, num_classes),
    ]
    try:
        nn.trace_shape(layers, shape.chw)
    except T.ShapeError as err:
        raise ArchitectureError(str(err)) from None
    net = Network(name, layers, seed)
    got = _probe(net, shape)
    if got != (2, num_classes):
        raise ArchitectureError(f"{name}: probe produced {got}, expected (2, {num_classes})")
    return net


def build_final_classifier(
    shape: DomainShape,
    num_classes: int,
    base_channels: int = 16,
    seed: int = 0,
    name: str = "final",
) -> Network:
    """Three relu convs with one maxpool, pooled into num_classes logits."""
    if num_classes < 2:
        raise ArchitectureError(f"num_classes must be >= 2, got {num_classes}")
    if min(shape.height, shape.width) < 2:
        raise ArchitectureError(f"final classifier needs spatial extents >= 2, got {shape}")
    b = base_channels
    layers = [
        nn.conv(shape.channels, b, 3, 1, 1),
        nn.relu(),
        nn.maxpool(2),
        nn.conv(b, 2 * b, 3, 1, 1),
        nn.relu(),
        nn.conv(2 * b, 2 * b, 3, 1, 1),
        nn.relu(),
        nn.global_mean_pool(),
        nn.dense(2 * b, num_classes),
    ]
    try:
        nn.trace_shape(layers, shape.chw)
    except T.ShapeError as err:
        raise ArchitectureError(str(err)) from None
    net = Network(name, layers, seed)
    got = _probe(net, shape)
    if got != (2, num_classes):
        raise ArchitectureError(f"{name}: probe produced {got}, expected (2, {num_classes})")
    return net


@dataclass
class ModelBundle:
    """The six training-time networks plus the final classifier."""

    g_s2t: Network
    g_t2s: Network
    d_s: Network
    d_t: Network
    c_s: Network
    c_t: Network
    final: Network
    src_shape: DomainShape
    tgt_shape: DomainShape
    num_classes: int

    def networks(self) -> dict[str, Network]:
        return {
            "g_s2t": self.g_s2t,
            "g_t2s": self.g_t2s,
            "d_s": self.d_s,
            "d_t": self.d_t,
            "c_s": self.c_s,
            "c_t": self.c_t,
            "final": self.final,
        }


def build_bundle(
    src_shape: DomainShape,
    tgt_shape: DomainShape,
    num_classes: int,
    base_channels: int = 16,
    seed: int = 0,
) -> ModelBundle:
    """Build all seven networks with per-network seeds derived from seed.

    Cycle shape closure (source -> target -> source and back) is
    verified by probe forwards here.
    """
    bundle = ModelBundle(
        g_s2t=build_generator(src_shape, tgt_shape, base_channels, seed * 10 + 0, "g_s2t"),
        g_t2s=build_generator(tgt_shape, src_shape, base_channels, seed * 10 + 1, "g_t2s"),
        d_s=build_discriminator(src_shape, base_channels, seed * 10 + 2, "d_s"),
        d_t=build_discriminator(tgt_shape, base_channels, seed * 10 + 3, "d_t"),
        c_s=build_classifier(src_shape, num_classes, base_channels, seed * 10 + 4, "c_s"),
        c_t=build_classifier(tgt_shape, num_classes, base_channels, seed * 10 + 5, "c_t"),
        final=build_final_classifier(tgt_shape, num_classes, base_channels, seed * 10 + 6, "final"),
        src_shape=src_shape,
        tgt_shape=tgt_shape,
        num_classes=num_classes,
    )
    probe = Tensor(np.zeros((2,) + src_shape.chw))
    with T.no_grad():
        there = bundle.g_s2t.forward(probe)
        back = bundle.g_t2s.forward(there)
    if back.shape != probe.shape:
        raise ArchitectureError(f"cycle shape closure failed: {probe.shape} -> {back.shape}")
    return bundle
