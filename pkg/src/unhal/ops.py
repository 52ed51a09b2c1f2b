"""Differentiable tensor operations.

Each op validates shapes, computes the forward value with numpy, and
registers a closure producing parent gradients. The ``OP_REGISTRY`` maps op
kind names to their callables so harnesses can enumerate every kind;
``apply_op`` dispatches through it.

All ops are deterministic: the same inputs give bit-identical outputs
regardless of caller concurrency. Convolutions are evaluated through
sliding-window views plus BLAS contractions.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, make_node

OP_REGISTRY: dict = {}


def _register(name):
    def deco(fn):
        OP_REGISTRY[name] = fn
        return fn
    return deco


def apply_op(kind: str, *inputs, **attrs) -> Tensor:
    """Dispatch ``kind`` through the op registry."""
    if kind not in OP_REGISTRY:
        raise ShapeError(f"unknown op kind {kind!r}")
    return OP_REGISTRY[kind](*inputs, **attrs)


def _check_same_dtype(op, *tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(
                f"{op}: mixed dtypes {dt} and {t.data.dtype}; cast inputs "
                "to a common precision first")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape))
                 if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------


@_register("add")
def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("add", a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not "
                         "broadcast") from None

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_node("add", data, (a, b), grad_fn)


@_register("sub")
def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("sub", a, b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} do not "
                         "broadcast") from None

    def grad_fn(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return make_node("sub", data, (a, b), grad_fn)


@_register("mul")
def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype("mul", a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not "
                         "broadcast") from None

    def grad_fn(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return make_node("mul", data, (a, b), grad_fn)


@_register("relu")
def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0)

    def grad_fn(g):
        return (g * (x.data > 0),)

    return make_node("relu", data, (x,), grad_fn)


@_register("sine")
def sine(x: Tensor) -> Tensor:
    data = np.sin(x.data)

    def grad_fn(g):
        return (g * np.cos(x.data),)

    return make_node("sine", data, (x,), grad_fn)


# -- dense layers ------------------------------------------------------


@_register("linear")
def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Matmul plus bias: ``x (N,D) @ w (D,O) + b (O,)``."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ShapeError(
            f"linear: expected x (N,D), w (D,O), b (O,); got {x.shape}, "
            f"{w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(
            f"linear: dims disagree, x {x.shape} w {w.shape} b {b.shape}")
    _check_same_dtype("linear", x, w, b)
    data = x.data @ w.data + b.data

    def grad_fn(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return make_node("linear", data, (x, w, b), grad_fn)


# -- convolutions ------------------------------------------------------


def _conv_patches(xp: np.ndarray, kh: int, kw: int, stride: int):
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    if stride != 1:
        view = view[:, :, ::stride, ::stride, :, :]
    return view  # (B, C, Ho, Wo, kh, kw)


@_register("conv2d")
def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1,
           padding: int = 0) -> Tensor:
    """2-D convolution, NCHW layout, zero padding.

    ``x (B,C,H,W)``, ``w (O,C,kh,kw)``, ``b (O,)``. A 1x1 kernel with unit
    stride is the spec's "1x1 conv".
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected x (B,C,H,W) and w (O,C,kh,kw); "
                         f"got {x.shape} and {w.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = w.shape
    if Cw != C:
        raise ShapeError(f"conv2d: input has {C} channels but kernel "
                         f"expects {Cw}")
    if b.shape != (O,):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({O},)")
    if H + 2 * padding < kh or W + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel ({kh}x{kw}) larger than padded "
                         f"input ({H + 2 * padding}x{W + 2 * padding})")
    _check_same_dtype("conv2d", x, w, b)

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding),
                             (padding, padding)))
    else:
        xp = x.data
    view = _conv_patches(xp, kh, kw, stride)
    Ho, Wo = view.shape[2], view.shape[3]
    out = np.tensordot(view, w.data, axes=([1, 4, 5], [1, 2, 3]))
    data = np.ascontiguousarray(np.moveaxis(out, 3, 1)) + \
        b.data[None, :, None, None]

    def grad_fn(g):
        db = g.sum(axis=(0, 2, 3))
        dw = np.tensordot(g, view, axes=([0, 2, 3], [0, 2, 3]))
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w.data[:, :, i, j],
                                       axes=([1], [0]))
                dxp[:, :, i:i + stride * (Ho - 1) + 1:stride,
                    j:j + stride * (Wo - 1) + 1:stride] += \
                    np.moveaxis(contrib, 3, 1)
        if padding:
            dx = dxp[:, :, padding:padding + H, padding:padding + W]
        else:
            dx = dxp
        return dx, dw, db

    return make_node("conv2d", data, (x, w, b), grad_fn)


@_register("depthwise_conv2d")
def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor,
                     padding: int = 1) -> Tensor:
    """Depthwise convolution: one ``(kh,kw)`` kernel per channel, stride 1.

    ``x (B,C,H,W)``, ``w (C,kh,kw)``, ``b (C,)``.
    """
    if x.ndim != 4 or w.ndim != 3:
        raise ShapeError(f"depthwise_conv2d: expected x (B,C,H,W) and "
                         f"w (C,kh,kw); got {x.shape} and {w.shape}")
    B, C, H, W = x.shape
    Cw, kh, kw = w.shape
    if Cw != C or b.shape != (C,):
        raise ShapeError(f"depthwise_conv2d: channel mismatch, x has {C} "
                         f"channels, w {Cw}, b {b.shape}")
    _check_same_dtype("depthwise_conv2d", x, w, b)

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding),
                         (padding, padding))) if padding else x.data
    view = _conv_patches(xp, kh, kw, 1)
    Ho, Wo = view.shape[2], view.shape[3]
    data = np.einsum("bchwij,cij->bchw", view, w.data,
                     optimize=True) + b.data[None, :, None, None]

    def grad_fn(g):
        db = g.sum(axis=(0, 2, 3))
        dw = np.einsum("bchwij,bchw->cij", view, g, optimize=True)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + Ho, j:j + Wo] += \
                    g * w.data[None, :, i, j, None, None]
        dx = dxp[:, :, padding:padding + H, padding:padding + W] \
            if padding else dxp
        return dx, dw, db

    return make_node("depthwise_conv2d", data, (x, w, b), grad_fn)


# -- normalization and gating -----------------------------------------


@_register("layer_norm_channels")
def layer_norm_channels(x: Tensor, gamma: Tensor, beta: Tensor,
                        eps: float = 1e-6) -> Tensor:
    """Layer norm over the channel axis at each spatial location.

    ``x (B,C,H,W)`` with learnable per-channel ``gamma``/``beta`` of shape
    ``(C,)``.
    """
    if x.ndim != 4:
        raise ShapeError(f"layer_norm_channels: expected (B,C,H,W), got "
                         f"{x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"layer_norm_channels: scale/bias must be ({C},), "
                         f"got {gamma.shape} and {beta.shape}")
    _check_same_dtype("layer_norm_channels", x, gamma, beta)

    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    data = xh * gamma.data[None, :, None, None] + \
        beta.data[None, :, None, None]

    def grad_fn(g):
        dgamma = (g * xh).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        gx = g * gamma.data[None, :, None, None]
        dx = inv * (gx - gx.mean(axis=1, keepdims=True)
                    - xh * (gx * xh).mean(axis=1, keepdims=True))
        return dx, dgamma, dbeta

    return make_node("layer_norm_channels", data, (x, gamma, beta), grad_fn)


@_register("batch_norm2d")
def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                 running_mean: np.ndarray, running_var: np.ndarray,
                 training: bool, momentum: float = 0.1,
                 eps: float = 1e-5) -> Tensor:
    """Batch normalization over (B,H,W) per channel.

    ``running_mean``/``running_var`` are plain arrays mutated in place when
    ``training`` is true (biased variance normalizes, unbiased updates the
    running buffer).
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm2d: expected (B,C,H,W), got {x.shape}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeError(f"batch_norm2d: scale/bias must be ({C},)")
    _check_same_dtype("batch_norm2d", x, gamma, beta)

    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        n = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        if momentum:
            unbiased = var * n / max(n - 1, 1)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)

    inv = 1.0 / np.sqrt(var + eps)
    xh = (x.data - mu[None, :, None, None]) * inv[None, :, None, None]
    data = xh * gamma.data[None, :, None, None] + \
        beta.data[None, :, None, None]

    def grad_fn(g):
        dgamma = (g * xh).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        gx = g * gamma.data[None, :, None, None]
        if training:
            m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
            dx = inv[None, :, None, None] * (
                gx - gx.mean(axis=(0, 2, 3), keepdims=True)
                - xh * (gx * xh).mean(axis=(0, 2, 3), keepdims=True))
            del m
        else:
            dx = gx * inv[None, :, None, None]
        return dx, dgamma, dbeta

    return make_node("batch_norm2d", data, (x, gamma, beta), grad_fn)


@_register("simple_gate")
def simple_gate(x: Tensor) -> Tensor:
    """Channel-split gating: halve the channels, multiply the halves."""
    if x.ndim != 4 or x.shape[1] % 2:
        raise ShapeError(f"simple_gate: needs (B,2c,H,W) with even channel "
                         f"count, got {x.shape}")
    c = x.shape[1] // 2
    x1 = x.data[:, :c]
    x2 = x.data[:, c:]
    data = x1 * x2

    def grad_fn(g):
        return (np.concatenate([g * x2, g * x1], axis=1),)

    return make_node("simple_gate", data, (x,), grad_fn)


@_register("global_avg_pool")
def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean: ``(B,C,H,W) -> (B,C,1,1)``."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected (B,C,H,W), got "
                         f"{x.shape}")
    data = x.data.mean(axis=(2, 3), keepdims=True)
    area = x.shape[2] * x.shape[3]

    def grad_fn(g):
        return (np.broadcast_to(g / area, x.shape),)

    return make_node("global_avg_pool", data, (x,), grad_fn)


@_register("pixel_shuffle")
def pixel_shuffle(x: Tensor, factor: int = 2) -> Tensor:
    """Rearrange ``(B, C*r^2, H, W)`` to ``(B, C, r*H, r*W)``.

    Channel ``c*r^2 + i*r + j`` lands at spatial offset ``(i, j)`` inside
    each upsampled cell, so channels [a,b,c,d] at one pixel become the 2x2
    block [[a,b],[c,d]].
    """
    r = factor
    if x.ndim != 4 or x.shape[1] % (r * r):
        raise ShapeError(f"pixel_shuffle: channels {x.shape} not divisible "
                         f"by factor^2={r * r}")
    B, C4, H, W = x.shape
    C = C4 // (r * r)
    data = (x.data.reshape(B, C, r, r, H, W)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(B, C, H * r, W * r))

    def grad_fn(g):
        dx = (g.reshape(B, C, H, r, W, r)
              .transpose(0, 1, 3, 5, 2, 4)
              .reshape(B, C4, H, W))
        return (dx,)

    return make_node("pixel_shuffle", data, (x,), grad_fn)


# -- structural --------------------------------------------------------


@_register("concat")
def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    _check_same_dtype("concat", *tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from None
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, offsets, axis=axis))

    return make_node("concat", data, tuple(tensors), grad_fn)


@_register("reshape")
def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") \
            from None

    def grad_fn(g):
        return (g.reshape(x.shape),)

    return make_node("reshape", data, (x,), grad_fn)


@_register("transpose")
def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for ndim {x.ndim}")
    data = x.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inverse),)

    return make_node("transpose", data, (x,), grad_fn)


@_register("gather_rows")
def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows of ``x`` by integer index; gradients scatter-add back."""
    idx = np.asarray(idx)
    if idx.ndim != 1 or not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError("gather_rows: idx must be a 1-D integer array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} "
                         "rows")
    data = x.data[idx]

    def grad_fn(g):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, g)
        return (dx,)

    return make_node("gather_rows", data, (x,), grad_fn)


@_register("pad2d")
def pad2d(x: Tensor, bottom: int = 0, right: int = 0) -> Tensor:
    """Zero-pad the last two axes on the bottom/right edges."""
    if x.ndim < 2 or bottom < 0 or right < 0:
        raise ShapeError(f"pad2d: invalid pad ({bottom},{right}) for shape "
                         f"{x.shape}")
    width = [(0, 0)] * (x.ndim - 2) + [(0, bottom), (0, right)]
    data = np.pad(x.data, width)
    H, W = x.shape[-2], x.shape[-1]

    def grad_fn(g):
        return (g[..., :H, :W],)

    return make_node("pad2d", data, (x,), grad_fn)


@_register("crop2d")
def crop2d(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left ``height x width`` window of the last two axes."""
    if x.ndim < 2 or height > x.shape[-2] or width > x.shape[-1]:
        raise ShapeError(f"crop2d: window ({height},{width}) exceeds "
                         f"{x.shape}")
    data = np.ascontiguousarray(x.data[..., :height, :width])
    pads = [(0, 0)] * (x.ndim - 2) + \
        [(0, x.shape[-2] - height), (0, x.shape[-1] - width)]

    def grad_fn(g):
        return (np.pad(g, pads),)

    return make_node("crop2d", data, (x,), grad_fn)


# -- reductions --------------------------------------------------------


@_register("mean_all")
def mean_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.mean(), dtype=x.data.dtype)
    n = x.size

    def grad_fn(g):
        return (np.broadcast_to(g / n, x.shape),)

    return make_node("mean_all", data, (x,), grad_fn)


@_register("sum_all")
def sum_all(x: Tensor) -> Tensor:
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def grad_fn(g):
        return (np.broadcast_to(g, x.shape),)

    return make_node("sum_all", data, (x,), grad_fn)
