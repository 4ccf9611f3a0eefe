"""Dense float32 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: just enough primitives to express
convolutional generators, discriminators and classifiers together with
their losses. Arrays are row-major numpy buffers, binary operations
broadcast by the trailing-dimension rule, and a fresh graph is traced
per training step and torn down by ``backward``.

Conventions:

* Element type is float32 everywhere. ``use_dtype`` exists only so test
  oracles (finite differences) can run the same code in float64.
* ``log``/``div``/``sqrt`` do not guard their domain; callers clamp.
* Tensors recorded on a tape are never mutated in place. Leaf
  parameters may be updated between steps, after the graph is gone.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "no_grad",
    "use_dtype",
    "current_dtype",
    "elementwise",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "log",
    "exp",
    "relu",
    "sigmoid",
    "square",
    "absval",
    "sqrt",
    "matmul",
    "transpose2d",
    "reshape",
    "gather_rows",
    "reduce_sum",
    "reduce_mean",
    "softmax",
    "conv2d",
    "maxpool2d",
    "upsample_nearest2d",
    "crop_pad2d",
    "batchnorm2d",
    "dropout",
    "backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


_DTYPE = np.float32
_GRAD_ENABLED = True


def current_dtype():
    return _DTYPE


@contextlib.contextmanager
def use_dtype(dtype):
    """Temporarily change the element type of newly created tensors.

    Only the finite-difference oracles in the test suite should use
    this (with float64); production code runs float32 throughout.
    """
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (cheap frozen forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class TapeNode:
    """One recorded primitive: its inputs and the gradient callback."""

    __slots__ = ("inputs", "grad_fn")

    def __init__(self, inputs: tuple, grad_fn: Callable):
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tensor:
    """N-dimensional float array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node: Optional[TapeNode] = None

    @property
    def shape(self) -> tuple:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A new leaf sharing this tensor's values, cut off from the tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.node = None
        return out

    def backward(self) -> None:
        backward(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axes=None) -> "Tensor":
        return reduce_sum(self, axes)

    def mean(self, axes=None) -> "Tensor":
        return reduce_mean(self, axes)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Topologically ordered record of the ops reachable from a root.

    Entries list every grad-tracked tensor with inputs before outputs,
    so replaying gradients in reverse touches each edge exactly once.
    """

    def __init__(self, entries: list):
        self.entries = entries

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        entries: list = []
        seen: set = set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                entries.append(t)
                continue
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for inp in t.node.inputs:
                    stack.append((inp, False))
        return cls(entries)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: tuple, grad_fn: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(i.requires_grad for i in inputs):
        out.requires_grad = True
        out.node = TapeNode(inputs, grad_fn)
    else:
        out.requires_grad = False
        out.node = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(
            f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


# ---------------------------------------------------------------------------
# elementwise primitives
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")
    ash, bsh = a.data.shape, b.data.shape
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(g, bsh)),
    )


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")
    ash, bsh = a.data.shape, b.data.shape
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, ash), _unbroadcast(-g, bsh)),
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    return _make(
        ad / bd,
        (a, b),
        lambda g: (
            _unbroadcast(g / bd, ad.shape),
            _unbroadcast(-g * ad / (bd * bd), bd.shape),
        ),
    )


def _unary(x, data: np.ndarray, dgrad: Callable) -> Tensor:
    return _make(data, (x,), lambda g: (dgrad(g),))


def neg(x) -> Tensor:
    x = _lift(x)
    return _unary(x, -x.data, lambda g: -g)


def log(x) -> Tensor:
    x = _lift(x)
    xd = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(xd)
    return _unary(x, out, lambda g: g / xd)


def exp(x) -> Tensor:
    x = _lift(x)
    out = np.exp(x.data)
    return _unary(x, out, lambda g: g * out)


def relu(x) -> Tensor:
    x = _lift(x)
    mask = x.data > 0
    return _unary(x, np.where(mask, x.data, 0).astype(x.data.dtype), lambda g: g * mask)


def sigmoid(x) -> Tensor:
    x = _lift(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1.0 + e)
    return _unary(x, out, lambda g: g * out * (1.0 - out))


def square(x) -> Tensor:
    x = _lift(x)
    xd = x.data
    return _unary(x, xd * xd, lambda g: g * (2.0 * xd))


def absval(x) -> Tensor:
    x = _lift(x)
    xd = x.data
    return _unary(x, np.abs(xd), lambda g: g * np.sign(xd))


def sqrt(x) -> Tensor:
    x = _lift(x)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _unary(x, out, lambda g: g * (0.5 / out))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "log": log,
    "exp": exp,
    "relu": relu,
    "sigmoid": sigmoid,
    "square": square,
    "abs": absval,
    "sqrt": sqrt,
}

_BINARY_KINDS = {"add", "sub", "mul", "div"}


def elementwise(kind: str, a, b=None) -> Tensor:
    """Dispatch an elementwise op by name (binary ops require ``b``)."""
    if kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {kind!r}")
    if kind in _BINARY_KINDS:
        if b is None:
            raise ValueError(f"{kind} needs two operands")
        return _ELEMENTWISE[kind](a, b)
    if b is not None:
        raise ValueError(f"{kind} takes a single operand")
    return _ELEMENTWISE[kind](a)


# ---------------------------------------------------------------------------
# linear algebra / structure
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose2d(a) -> Tensor:
    a = _lift(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose2d needs a 2-d operand, got shape {a.shape}")
    return _make(np.ascontiguousarray(a.data.T), (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}") from None
    src_shape = a.data.shape
    return _make(data, (a,), lambda g: (g.reshape(src_shape),))


def gather_rows(a, indices) -> Tensor:
    """Select rows along the leading axis; gradient scatter-adds back."""
    a = _lift(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows needs a 1-d index list, got shape {idx.shape}")
    n = a.data.shape[0] if a.ndim > 0 else 0
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows index out of range for leading extent {n}")
    src_shape = a.data.shape

    def grad_fn(g):
        gz = np.zeros(src_shape, dtype=g.dtype)
        np.add.at(gz, idx, g)
        return (gz,)

    return _make(a.data[idx], (a,), grad_fn)


# ---------------------------------------------------------------------------
# reductions and softmax
# ---------------------------------------------------------------------------


def _norm_axes(axes, ndim: int):
    if axes is None:
        return None
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(int(ax) for ax in axes)
    for ax in axes:
        if ax < -ndim or ax >= ndim:
            raise ShapeError(f"invalid axis {ax} for {ndim}-d tensor")
    return tuple(sorted(ax % ndim for ax in axes))


def reduce_sum(x, axes=None) -> Tensor:
    x = _lift(x)
    axes = _norm_axes(axes, x.ndim)
    data = np.asarray(x.data.sum(axis=axes), dtype=x.data.dtype)
    src_shape = x.data.shape

    def grad_fn(g):
        if axes is None:
            return (np.broadcast_to(g, src_shape).astype(g.dtype, copy=True),)
        keep = list(src_shape)
        for ax in axes:
            keep[ax] = 1
        return (np.broadcast_to(g.reshape(keep), src_shape).astype(g.dtype, copy=True),)

    return _make(data, (x,), grad_fn)


def reduce_mean(x, axes=None) -> Tensor:
    x = _lift(x)
    axes = _norm_axes(axes, x.ndim)
    if axes is None:
        count = x.data.size
    else:
        count = 1
        for ax in axes:
            count *= x.data.shape[ax]
    if count == 0:
        raise ShapeError(f"mean over zero elements, shape {x.shape}")
    data = np.asarray(x.data.mean(axis=axes), dtype=x.data.dtype)
    src_shape = x.data.shape
    inv = 1.0 / count

    def grad_fn(g):
        if axes is None:
            return (np.broadcast_to(g * inv, src_shape).astype(g.dtype, copy=True),)
        keep = list(src_shape)
        for ax in axes:
            keep[ax] = 1
        gk = (g * inv).reshape(keep)
        return (np.broadcast_to(gk, src_shape).astype(g.dtype, copy=True),)

    return _make(data, (x,), grad_fn)


def softmax(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    axes = _norm_axes(axis, x.ndim)
    ax = axes[0]
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=ax, keepdims=True)

    def grad_fn(g):
        dot = (g * out).sum(axis=ax, keepdims=True)
        return ((g - dot) * out,)

    return _make(out, (x,), grad_fn)


# ---------------------------------------------------------------------------
# spatial ops (NCHW layout)
# ---------------------------------------------------------------------------


def conv2d(x, w, bias, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d convolution (cross-correlation) over an NCHW batch.

    ``w`` has shape (filters, channels, kh, kw); output extents follow
    floor((H + 2*pad - kh) / stride) + 1.
    """
    x, w, bias = _lift(x), _lift(w), _lift(bias)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d needs 4-d input/kernel, got {x.shape} and {w.shape}")
    n, c, h, ww_ = x.shape
    f, cw, kh, kw = w.shape
    if bias.shape != (f,):
        raise ShapeError(f"conv2d bias shape {bias.shape} does not match filters {f}")
    if c != cw:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {cw}")
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if pad < 0:
        raise ValueError(f"conv2d pad must be >= 0, got {pad}")
    hp, wp = h + 2 * pad, ww_ + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(
            f"conv2d kernel ({kh}x{kw}) larger than padded input ({hp}x{wp})"
        )
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d non-positive output extent {ho}x{wo}")

    xd = x.data
    if pad:
        xp = np.zeros((n, c, hp, wp), dtype=xd.dtype)
        xp[:, :, pad : pad + h, pad : pad + ww_] = xd
    else:
        xp = xd

    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xd.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    cols2 = cols.reshape(n, c * kh * kw, ho * wo)
    wrow = w.data.reshape(f, c * kh * kw)
    out = np.matmul(wrow[None], cols2).reshape(n, f, ho, wo)
    out += bias.data.reshape(1, f, 1, 1)

    def grad_fn(g):
        g2 = g.reshape(n, f, ho * wo)
        gb = g.sum(axis=(0, 2, 3))
        gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        gcols = np.matmul(wrow.T[None], g2).reshape(n, c, kh, kw, ho, wo)
        gxp = np.zeros((n, c, hp, wp), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, :, i, j]
        gx = gxp[:, :, pad : pad + h, pad : pad + ww_] if pad else gxp
        return (np.ascontiguousarray(gx), gw, gb)

    return _make(out, (x, w, bias), grad_fn)


def maxpool2d(x, k: int, stride: Optional[int] = None) -> Tensor:
    x = _lift(x)
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d needs a 4-d input, got shape {x.shape}")
    if k < 1:
        raise ValueError(f"maxpool2d window must be >= 1, got {k}")
    stride = k if stride is None else stride
    if stride < 1:
        raise ValueError(f"maxpool2d stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeError(f"pooling window {k} larger than input {h}x{w}")
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1

    xd = x.data
    wins = np.empty((n, c, ho, wo, k * k), dtype=xd.dtype)
    for i in range(k):
        for j in range(k):
            wins[:, :, :, :, i * k + j] = xd[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    out = wins.max(axis=-1)
    arg = wins.argmax(axis=-1)

    def grad_fn(g):
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                sel = (arg == (i * k + j)) * g
                gx[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += sel
        return (gx,)

    return _make(out, (x,), grad_fn)


def upsample_nearest2d(x, factor: int) -> Tensor:
    x = _lift(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest2d needs a 4-d input, got {x.shape}")
    if factor < 1:
        raise ValueError(f"upsample factor must be >= 1, got {factor}")
    n, c, h, w = x.shape
    out = x.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def grad_fn(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return _make(out, (x,), grad_fn)


def crop_pad2d(x, out_h: int, out_w: int) -> Tensor:
    """Center-crop or zero-pad the spatial extents to exactly (out_h, out_w)."""
    x = _lift(x)
    if x.ndim != 4:
        raise ShapeError(f"crop_pad2d needs a 4-d input, got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"crop_pad2d target must be positive, got {out_h}x{out_w}")
    n, c, h, w = x.shape
    pt = max(0, (out_h - h) // 2)
    pb = max(0, out_h - h - pt)
    pl = max(0, (out_w - w) // 2)
    pr = max(0, out_w - w - pl)
    data = x.data
    if pt or pb or pl or pr:
        data = np.pad(data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hc, wc = data.shape[2], data.shape[3]
    st = (hc - out_h) // 2
    sl = (wc - out_w) // 2
    out = np.ascontiguousarray(data[:, :, st : st + out_h, sl : sl + out_w])

    def grad_fn(g):
        gp = np.zeros((n, c, hc, wc), dtype=g.dtype)
        gp[:, :, st : st + out_h, sl : sl + out_w] = g
        return (np.ascontiguousarray(gp[:, :, pt : pt + h, pl : pl + w]),)

    return _make(out, (x,), grad_fn)


def batchnorm2d(
    x,
    gamma,
    beta,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over an NCHW batch.

    Training mode normalizes with batch statistics and updates the
    running buffers in place; eval mode reads the buffers and leaves
    them untouched.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    if x.ndim != 4:
        raise ShapeError(f"batchnorm2d needs a 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"batchnorm2d scale/shift shape {gamma.shape}/{beta.shape} does not match {c} channels"
        )
    xd = x.data
    if training:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu[None, :, None, None]) * ivar[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    m = n * h * w
    gd = gamma.data

    def grad_fn(g):
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        dxhat = g * gd[None, :, None, None]
        if training:
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (ivar[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        else:
            dx = dxhat * ivar[None, :, None, None]
        return (dx, dgamma, dbeta)

    return _make(out, (x, gamma, beta), grad_fn)


def dropout(x, rate: float, training: bool, seed: int = 0, layer_id: int = 0, step: int = 0) -> Tensor:
    """Inverted dropout with a counter-based random stream.

    The mask is a pure function of (seed, layer_id, step), so runs are
    reproducible regardless of call order elsewhere in the program.
    Identity in eval mode.
    """
    x = _lift(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    key = np.random.SeedSequence(
        [int(seed) & 0x7FFFFFFFFFFFFFFF, int(layer_id) & 0x7FFFFFFF, int(step) & 0x7FFFFFFFFFFFFFFF]
    )
    gen = np.random.Generator(np.random.Philox(key))
    mask = (gen.random(x.shape) >= rate).astype(x.data.dtype)
    mask *= 1.0 / (1.0 - rate)
    return _unary(x, x.data * mask, lambda g: g * mask)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

    Calling twice without zeroing accumulates, by design.
    """
    if not isinstance(loss, Tensor):
        raise TypeError(f"backward expects a Tensor, got {type(loss).__name__}")
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = Tape.trace(loss)
    if not tape.entries:
        raise ValueError("backward on a tensor with no recorded operations")
    grads: dict = {id(loss): np.ones_like(loss.data)}
    for t in reversed(tape.entries):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            t.grad = g.astype(t.data.dtype, copy=True) if t.grad is None else t.grad + g
            continue
        inputs = t.node.inputs
        gins = t.node.grad_fn(g)
        for inp, gi in zip(inputs, gins):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
