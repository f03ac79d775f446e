"""Differentiable operations.

Each op computes its forward value with numpy and records a closure that maps
the output gradient to input gradients. Broadcasting is deliberately narrow:
operands must share rank and may differ only where one side has extent 1
(batch broadcast, per-channel bias), or one side may be a scalar.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    ConfigurationError,
    DimensionError,
    Tensor,
    as_tensor,
    make_result,
)


def _is_scalar(shape) -> bool:
    return len(shape) == 0 or all(s == 1 for s in shape) and len(shape) <= 1


def _broadcast_shape(a: tuple, b: tuple) -> tuple:
    if a == b:
        return a
    if _is_scalar(a):
        return b
    if _is_scalar(b):
        return a
    if len(a) != len(b) or any(x != y and x != 1 and y != 1 for x, y in zip(a, b)):
        raise DimensionError(f"cannot broadcast shapes {a} and {b}")
    return tuple(max(x, y) for x, y in zip(a, b))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum(), dtype=g.dtype)
    if len(shape) != g.ndim:
        return np.asarray(g.sum(), dtype=g.dtype).reshape(shape)
    axes = tuple(i for i, (s, gs) in enumerate(zip(shape, g.shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(out, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(out, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    out = a.data * b.data

    def back(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), back, "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    out = a.data * c

    def back(g):
        return (g * c,)

    return make_result(out, (a,), back, "scale")


def leaky_relu(x, alpha: float = 0.2) -> Tensor:
    x = as_tensor(x)
    neg = x.data < 0
    out = np.where(neg, x.data * x.data.dtype.type(alpha), x.data)

    def back(g):
        return (np.where(neg, g * g.dtype.type(alpha), g),)

    return make_result(out, (x,), back, "leaky_relu")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def back(g):
        return (g * (1 - out * out),)

    return make_result(out, (x,), back, "tanh")


def softplus(x) -> Tensor:
    """ln(1 + e^x), evaluated as max(x, 0) + ln(1 + e^-|x|)."""
    x = as_tensor(x)
    d = x.data
    out = np.maximum(d, 0) + np.log1p(np.exp(-np.abs(d)))

    def back(g):
        # sigmoid(x) without overflow
        e = np.exp(-np.abs(d))
        sig = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(d.dtype)
        return (g * sig,)

    return make_result(out, (x,), back, "softplus")


# -- reductions and reshaping ----------------------------------------------

def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims), dtype=x.data.dtype)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype),)

    return make_result(out, (x,), back, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def back(g):
        return (g.reshape(x.shape),)

    return make_result(out, (x,), back, "reshape")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return make_result(out, tuple(tensors), back, "concat")


def index_rows(x, rows) -> Tensor:
    """Select rows along axis 0 (gather); rows may repeat."""
    x = as_tensor(x)
    rows = np.asarray(rows, dtype=np.int64)
    out = x.data[rows]

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, rows, g)
        return (full,)

    return make_result(out, (x,), back, "index_rows")


# -- linear algebra ----------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), back, "matmul")


def embedding(table, index) -> Tensor:
    """Row lookup. An int index gives a vector, an index array a matrix."""
    table = as_tensor(table)
    idx = np.asarray(index)
    if not np.issubdtype(idx.dtype, np.integer):
        raise IndexError(f"embedding index must be integral, got {idx.dtype}")
    k = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise IndexError(f"embedding index out of range [0, {k}): {idx.tolist()}")
    out = table.data[idx]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(out, (table,), back, "embedding")


# -- spatial ops (NCHW) -------------------------------------------------------

def conv2d(x, weight, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D cross-correlation via im2col; weight is (C_out, C_in, k, k)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and weight, got {x.shape}, {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, c_w, k, k2 = weight.shape
    if k != k2 or k not in (1, 3):
        raise ConfigurationError(f"conv2d supports square 1x1 or 3x3 kernels, got {k}x{k2}")
    if c_w != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, weight {weight.shape}")
    if stride < 1 or pad < 0:
        raise ConfigurationError(f"invalid stride {stride} / pad {pad}")
    span_h, span_w = h + 2 * pad - k, w + 2 * pad - k
    if span_h < 0 or span_w < 0 or span_h % stride or span_w % stride:
        raise ConfigurationError(
            f"conv2d output size not integral for input {h}x{w}, k={k}, stride={stride}, pad={pad}"
        )
    oh, ow = span_h // stride + 1, span_w // stride + 1

    if k == 1 and stride == 1 and pad == 0:
        wmat = weight.data.reshape(c_out, c_in)
        out = np.einsum("oc,nchw->nohw", wmat, x.data, optimize=True)

        def back1(g):
            gx = np.einsum("oc,nohw->nchw", wmat, g, optimize=True) if x.requires_grad else None
            gw = (
                np.einsum("nohw,nchw->oc", g, x.data, optimize=True).reshape(weight.shape)
                if weight.requires_grad
                else None
            )
            return gx, gw

        return make_result(out.astype(x.data.dtype, copy=False), (x, weight), back1, "conv2d")

    if stride == 1 and c_in > c_out:
        return _conv2d_output_shift(x, weight, pad, oh, ow)

    # im2col in channel-last layout: rows are output pixels, columns (i, j, c)
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c_in), dtype=x.data.dtype)
    xp[:, pad : pad + h, pad : pad + w, :] = x.data.transpose(0, 2, 3, 1)
    cols = np.empty((n, oh, ow, k, k, c_in), dtype=x.data.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :]
    cols2 = cols.reshape(n * oh * ow, k * k * c_in)
    wmat = np.ascontiguousarray(weight.data.transpose(0, 2, 3, 1)).reshape(c_out, k * k * c_in)
    out = cols2 @ wmat.T
    out = np.ascontiguousarray(out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2))

    def back(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, c_out)
        gw = None
        if weight.requires_grad:
            gw = (g2.T @ cols2).reshape(c_out, k, k, c_in).transpose(0, 3, 1, 2)
            gw = np.ascontiguousarray(gw)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, oh, ow, k, k, c_in)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += dcols[
                        :, :, :, i, j, :
                    ]
            gx = np.ascontiguousarray(gxp[:, pad : pad + h, pad : pad + w, :].transpose(0, 3, 1, 2))
        return gx, gw

    return make_result(out, (x, weight), back, "conv2d")


def _conv2d_output_shift(x: Tensor, weight: Tensor, pad: int, oh: int, ow: int) -> Tensor:
    """Stride-1 convolution as one matmul over padded pixels, then k*k shifted sums.

    Cheaper than im2col when C_in > C_out because only the (narrower)
    per-offset outputs are copied around.
    """
    n, c_in, h, w = x.shape
    c_out, _, k, _ = weight.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((n, hp, wp, c_in), dtype=x.data.dtype)
    xp[:, pad : pad + h, pad : pad + w, :] = x.data.transpose(0, 2, 3, 1)
    xflat = xp.reshape(-1, c_in)
    wbig = np.ascontiguousarray(weight.data.transpose(1, 2, 3, 0)).reshape(c_in, k * k * c_out)
    y = (xflat @ wbig).reshape(n, hp, wp, k, k, c_out)
    out = np.zeros((n, oh, ow, c_out), dtype=x.data.dtype)
    for i in range(k):
        for j in range(k):
            out += y[:, i : i + oh, j : j + ow, i, j, :]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def back(g):
        gy = np.zeros((n, hp, wp, k, k, c_out), dtype=xp.dtype)
        gt = g.transpose(0, 2, 3, 1)
        for i in range(k):
            for j in range(k):
                gy[:, i : i + oh, j : j + ow, i, j, :] = gt
        gy = gy.reshape(-1, k * k * c_out)
        gw = None
        if weight.requires_grad:
            gw = (xflat.T @ gy).reshape(c_in, k, k, c_out).transpose(3, 0, 1, 2)
            gw = np.ascontiguousarray(gw)
        gx = None
        if x.requires_grad:
            gxp = (gy @ wbig.T).reshape(n, hp, wp, c_in)
            gx = np.ascontiguousarray(gxp[:, pad : pad + h, pad : pad + w, :].transpose(0, 3, 1, 2))
        return gx, gw

    return make_result(out, (x, weight), back, "conv2d")


def upsample_nearest(x, factor: int = 2) -> Tensor:
    x = as_tensor(x)
    if factor < 2:
        raise ConfigurationError(f"upsample factor must be >= 2, got {factor}")
    if x.ndim != 4:
        raise DimensionError(f"upsample_nearest expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    out = np.broadcast_to(
        x.data[:, :, :, None, :, None], (n, c, h, factor, w, factor)
    ).reshape(n, c, h * factor, w * factor)

    def back(g):
        return (g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)),)

    return make_result(np.ascontiguousarray(out), (x,), back, "upsample_nearest")


def avg_pool2d(x, factor: int = 2) -> Tensor:
    """Non-overlapping average pooling; spatial dims must divide by factor."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"avg_pool2d expects NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    if factor < 2 or h % factor or w % factor:
        raise ConfigurationError(f"avg_pool2d factor {factor} does not divide {h}x{w}")
    oh, ow = h // factor, w // factor
    inv = x.data.dtype.type(1.0 / (factor * factor))
    out = x.data.reshape(n, c, oh, factor, ow, factor).sum(axis=(3, 5)) * inv

    def back(g):
        gx = np.broadcast_to(g[:, :, :, None, :, None] * inv, (n, c, oh, factor, ow, factor))
        return (np.ascontiguousarray(gx).reshape(n, c, h, w),)

    return make_result(out, (x,), back, "avg_pool2d")


def linear(x, weight, bias=None) -> Tensor:
    """x @ weight.T + bias, weight stored as (out, in)."""
    y = matmul(x, transpose(weight))
    if bias is not None:
        y = add(y, reshape(bias, (1, -1)))
    return y


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {x.shape}")
    out = x.data.T

    def back(g):
        return (g.T,)

    return make_result(np.ascontiguousarray(out), (x,), back, "transpose")


def index_cols(x, lo: int, hi: int) -> Tensor:
    """Columns lo:hi of a matrix."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"index_cols expects a matrix, got {x.shape}")
    out = np.ascontiguousarray(x.data[:, lo:hi])

    def back(g):
        full = np.zeros_like(x.data)
        full[:, lo:hi] = g
        return (full,)

    return make_result(out, (x,), back, "index_cols")


def logsumexp(x) -> Tensor:
    """Row-wise log(sum(exp(x))) for a 2-D input, shifted for stability."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"logsumexp expects a 2-D input, got {x.shape}")
    top = x.data.max(axis=1, keepdims=True)
    e = np.exp(x.data - top)
    s = e.sum(axis=1, keepdims=True)
    out = (np.log(s) + top)[:, 0]

    def back(g):
        return (g[:, None] * e / s,)

    return make_result(out, (x,), back, "logsumexp")
