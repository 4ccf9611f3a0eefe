"""Layer specifications, parameter containers and the Adam optimizer.

A network is a plain list of ``LayerSpec`` plus a ``ParameterSet``;
``forward`` walks the list. Nothing here knows about domains or GANs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

__all__ = [
    "LayerSpec",
    "ParameterSet",
    "Network",
    "MissingGradientError",
    "conv",
    "batchnorm",
    "relu",
    "maxpool",
    "upsample",
    "dropout",
    "dense",
    "sigmoid",
    "softmax_layer",
    "residual_block",
    "global_mean_pool",
    "crop_pad",
    "init_parameters",
    "forward",
    "trace_shape",
    "adam_step",
]


class MissingGradientError(RuntimeError):
    """An optimizer step found a parameter without a gradient."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer: a kind tag plus its kind-specific hyperparameters."""

    kind: str
    args: tuple = ()

    def arg(self, name):
        return dict(self.args)[name]


def _spec(kind: str, **kwargs) -> LayerSpec:
    return LayerSpec(kind, tuple(sorted(kwargs.items())))


def conv(in_channels: int, out_channels: int, kernel: int = 3, stride: int = 1, pad: Optional[int] = None) -> LayerSpec:
    if in_channels < 1 or out_channels < 1:
        raise ValueError(f"conv channels must be >= 1, got {in_channels}->{out_channels}")
    if kernel < 1 or stride < 1:
        raise ValueError(f"conv kernel/stride must be >= 1, got {kernel}/{stride}")
    if pad is None:
        pad = kernel // 2
    if pad < 0:
        raise ValueError(f"conv pad must be >= 0, got {pad}")
    return _spec("conv", in_channels=in_channels, out_channels=out_channels, kernel=kernel, stride=stride, pad=pad)


def batchnorm(channels: int) -> LayerSpec:
    if channels < 1:
        raise ValueError(f"batchnorm channels must be >= 1, got {channels}")
    return _spec("batchnorm", channels=channels)


def relu() -> LayerSpec:
    return _spec("relu")


def maxpool(kernel: int = 2, stride: Optional[int] = None) -> LayerSpec:
    if kernel < 1:
        raise ValueError(f"maxpool kernel must be >= 1, got {kernel}")
    return _spec("maxpool", kernel=kernel, stride=kernel if stride is None else stride)


def upsample(factor: int = 2) -> LayerSpec:
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    return _spec("upsample", factor=factor)


def dropout(rate: float) -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    return _spec("dropout", rate=rate)


def dense(in_features: int, out_features: int) -> LayerSpec:
    if in_features < 1 or out_features < 1:
        raise ValueError(f"dense features must be >= 1, got {in_features}->{out_features}")
    return _spec("dense", in_features=in_features, out_features=out_features)


def sigmoid() -> LayerSpec:
    return _spec("sigmoid")


def softmax_layer(axis: int = 1) -> LayerSpec:
    return _spec("softmax", axis=axis)


def residual_block(channels: int, kernel: int = 3) -> LayerSpec:
    """conv-batchnorm-relu-conv-batchnorm plus the input skip."""
    if channels < 1:
        raise ValueError(f"residual block channels must be >= 1, got {channels}")
    return _spec("residual-block", channels=channels, kernel=kernel)


def global_mean_pool() -> LayerSpec:
    return _spec("global-mean-pool")


def crop_pad(height: int, width: int) -> LayerSpec:
    if height < 1 or width < 1:
        raise ValueError(f"crop_pad target must be positive, got {height}x{width}")
    return _spec("crop-pad", height=height, width=width)


class ParameterSet:
    """Ordered name -> Tensor map with per-parameter Adam state.

    Iteration order is insertion order and therefore stable across
    runs; running-statistics buffers (not optimized) live separately.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.opt_m: dict[str, np.ndarray] = {}
        self.opt_v: dict[str, np.ndarray] = {}
        self.opt_step: int = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.params[name] = Tensor(value, requires_grad=True)

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.asarray(value, dtype=T.current_dtype())

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __len__(self) -> int:
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every named array (parameters first, then buffers)."""
        out = [(name, p.data) for name, p in self.params.items()]
        out.extend(self.buffers.items())
        return out


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(-limit, limit, size=shape).astype(T.current_dtype())


def init_parameters(layers: list[LayerSpec], seed: int) -> ParameterSet:
    """Glorot-uniform conv/dense weights, zero biases, unit batchnorm.

    Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    ps = ParameterSet()
    for i, layer in enumerate(layers):
        prefix = f"layer{i}"
        a = dict(layer.args)
        if layer.kind == "conv":
            c, f, k = a["in_channels"], a["out_channels"], a["kernel"]
            ps.add(f"{prefix}.weight", _glorot(rng, (f, c, k, k), c * k * k, f * k * k))
            ps.add(f"{prefix}.bias", np.zeros(f, dtype=T.current_dtype()))
        elif layer.kind == "dense":
            fi, fo = a["in_features"], a["out_features"]
            ps.add(f"{prefix}.weight", _glorot(rng, (fo, fi), fi, fo))
            ps.add(f"{prefix}.bias", np.zeros(fo, dtype=T.current_dtype()))
        elif layer.kind == "batchnorm":
            c = a["channels"]
            ps.add(f"{prefix}.gamma", np.ones(c, dtype=T.current_dtype()))
            ps.add(f"{prefix}.beta", np.zeros(c, dtype=T.current_dtype()))
            ps.add_buffer(f"{prefix}.running_mean", np.zeros(c))
            ps.add_buffer(f"{prefix}.running_var", np.ones(c))
        elif layer.kind == "residual-block":
            c, k = a["channels"], a["kernel"]
            for sub in ("conv1", "conv2"):
                ps.add(f"{prefix}.{sub}.weight", _glorot(rng, (c, c, k, k), c * k * k, c * k * k))
                ps.add(f"{prefix}.{sub}.bias", np.zeros(c, dtype=T.current_dtype()))
                bn = sub.replace("conv", "bn")
                ps.add(f"{prefix}.{bn}.gamma", np.ones(c, dtype=T.current_dtype()))
                ps.add(f"{prefix}.{bn}.beta", np.zeros(c, dtype=T.current_dtype()))
                ps.add_buffer(f"{prefix}.{bn}.running_mean", np.zeros(c))
                ps.add_buffer(f"{prefix}.{bn}.running_var", np.ones(c))
    return ps


def _apply_bn(x: Tensor, ps: ParameterSet, prefix: str, training: bool) -> Tensor:
    return T.batchnorm2d(
        x,
        ps[f"{prefix}.gamma"],
        ps[f"{prefix}.beta"],
        ps.buffers[f"{prefix}.running_mean"],
        ps.buffers[f"{prefix}.running_var"],
        training,
    )


def forward(
    layers: list[LayerSpec],
    params: ParameterSet,
    x: Tensor,
    training: bool = False,
    seed: int = 0,
    step: int = 0,
) -> Tensor:
    """Apply the layers in order; empty lists act as the identity.

    The training flag routes to batchnorm and dropout; dropout draws
    its mask from (seed, layer index, step).
    """
    for i, layer in enumerate(layers):
        a = dict(layer.args)
        prefix = f"layer{i}"
        try:
            if layer.kind == "conv":
                x = T.conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], a["stride"], a["pad"])
            elif layer.kind == "dense":
                if x.ndim != 2:
                    x = T.reshape(x, (x.shape[0], -1))
                w = params[f"{prefix}.weight"]
                if x.shape[1] != w.shape[1]:
                    raise ShapeError(f"dense expects {w.shape[1]} features, got {x.shape[1]}")
                x = T.matmul(x, T.transpose2d(w)) + params[f"{prefix}.bias"]
            elif layer.kind == "batchnorm":
                x = _apply_bn(x, params, prefix, training)
            elif layer.kind == "relu":
                x = T.relu(x)
            elif layer.kind == "sigmoid":
                x = T.sigmoid(x)
            elif layer.kind == "softmax":
                x = T.softmax(x, a["axis"])
            elif layer.kind == "maxpool":
                x = T.maxpool2d(x, a["kernel"], a["stride"])
            elif layer.kind == "upsample":
                x = T.upsample_nearest2d(x, a["factor"])
            elif layer.kind == "dropout":
                x = T.dropout(x, a["rate"], training, seed=seed, layer_id=i, step=step)
            elif layer.kind == "global-mean-pool":
                x = T.reduce_mean(x, (2, 3))
            elif layer.kind == "crop-pad":
                x = T.crop_pad2d(x, a["height"], a["width"])
            elif layer.kind == "residual-block":
                h = T.conv2d(x, params[f"{prefix}.conv1.weight"], params[f"{prefix}.conv1.bias"], 1, a["kernel"] // 2)
                h = T.batchnorm2d(
                    h,
                    params[f"{prefix}.bn1.gamma"],
                    params[f"{prefix}.bn1.beta"],
                    params.buffers[f"{prefix}.bn1.running_mean"],
                    params.buffers[f"{prefix}.bn1.running_var"],
                    training,
                )
                h = T.relu(h)
                h = T.conv2d(h, params[f"{prefix}.conv2.weight"], params[f"{prefix}.conv2.bias"], 1, a["kernel"] // 2)
                h = T.batchnorm2d(
                    h,
                    params[f"{prefix}.bn2.gamma"],
                    params[f"{prefix}.bn2.beta"],
                    params.buffers[f"{prefix}.bn2.running_mean"],
                    params.buffers[f"{prefix}.bn2.running_var"],
                    training,
                )
                x = h + x
            else:
                raise ValueError(f"unknown layer kind {layer.kind!r}")
        except ShapeError as err:
            raise ShapeError(f"layer {i} ({layer.kind}): {err}") from None
    return x


def trace_shape(layers: list[LayerSpec], in_shape: tuple) -> tuple:
    """Simulate extents through the layers for a (C, H, W) input.

    Raises ShapeError before any compute if the stack is invalid, so
    builders can fail at construction rather than at forward time.
    """
    c, h, w = in_shape
    flat = None
    for i, layer in enumerate(layers):
        a = dict(layer.args)
        kind = layer.kind
        if kind == "conv":
            if flat is not None:
                raise ShapeError(f"layer {i} (conv): input already flattened")
            if c != a["in_channels"]:
                raise ShapeError(f"layer {i} (conv): expects {a['in_channels']} channels, got {c}")
            k, s, p = a["kernel"], a["stride"], a["pad"]
            if k > h + 2 * p or k > w + 2 * p:
                raise ShapeError(f"layer {i} (conv): kernel {k} larger than padded {h}x{w}")
            h = (h + 2 * p - k) // s + 1
            w = (w + 2 * p - k) // s + 1
            if h < 1 or w < 1:
                raise ShapeError(f"layer {i} (conv): non-positive output extent {h}x{w}")
            c = a["out_channels"]
        elif kind == "maxpool":
            k, s = a["kernel"], a["stride"]
            if k > h or k > w:
                raise ShapeError(f"layer {i} (maxpool): window {k} larger than input {h}x{w}")
            h = (h - k) // s + 1
            w = (w - k) // s + 1
        elif kind == "upsample":
            h *= a["factor"]
            w *= a["factor"]
        elif kind == "crop-pad":
            h, w = a["height"], a["width"]
        elif kind == "residual-block":
            if c != a["channels"]:
                raise ShapeError(f"layer {i} (residual-block): expects {a['channels']} channels, got {c}")
        elif kind == "dense":
            feats = flat if flat is not None else c * h * w
            if feats != a["in_features"]:
                raise ShapeError(f"layer {i} (dense): expects {a['in_features']} features, got {feats}")
            flat = a["out_features"]
        elif kind == "global-mean-pool":
            flat = c
        # relu / sigmoid / softmax / dropout / batchnorm keep extents
    return (flat,) if flat is not None else (c, h, w)


def adam_step(
    params: ParameterSet,
    lr: float,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
    params.opt_step += 1
    t = params.opt_step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = p.grad
        m = params.opt_m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
            params.opt_m[name] = m
            params.opt_v[name] = v
        else:
            v = params.opt_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    params.zero_grad()


class Network:
    """A named layer stack bound to its parameters.

    Training-mode forwards advance an internal step counter that feeds
    the dropout streams, keeping masks reproducible run to run.
    """

    def __init__(self, name: str, layers: list[LayerSpec], seed: int):
        self.name = name
        self.layers = list(layers)
        self.seed = seed
        self.params = init_parameters(self.layers, seed)
        self._step = 0

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        if training:
            self._step += 1
        return forward(self.layers, self.params, x, training=training, seed=self.seed, step=self._step)

    __call__ = forward

    def num_parameters(self) -> int:
        return self.params.num_values()

    def __repr__(self):
        return f"Network({self.name!r}, {len(self.layers)} layers, {self.num_parameters()} params)"
