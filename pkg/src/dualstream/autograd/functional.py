"""Differentiable ops over :class:`Tensor`.

Image tensors are NCHW.  Convolution uses an im2col view built with
``sliding_window_view``; the input gradient is scattered back one kernel
offset at a time.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericError
from .tensor import Tensor, as_tensor, check_finite


def _out_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _check_conv_args(x: Tensor, k: int, stride: int, padding: int) -> None:
    if x.ndim != 4:
        raise ValueError(f"expected NCHW input, got shape {x.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if padding < 0:
        raise ValueError("padding must be >= 0")
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ValueError(f"kernel {k} larger than padded input {x.shape[2:]}")


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(out, (a, b), backward, "add")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(out, (a, b), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    out = x.data * x.data.dtype.type(c)
    return Tensor.from_op(out, (x,), lambda g: (g * x.data.dtype.type(c),), "scale")


def total(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return Tensor.from_op(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


_kink_watchers: list[dict] = []


@contextmanager
def kink_watch() -> Iterator[dict]:
    """Track the smallest distance of any relu/relu6 input to a kink.

    Finite-difference checks use this to reject inputs that sit so close to
    a kink that the perturbation would cross it.
    """
    w = {"min_distance": np.inf}
    _kink_watchers.append(w)
    try:
        yield w
    finally:
        _kink_watchers.remove(w)


def _watch(dist: np.ndarray) -> None:
    if _kink_watchers and dist.size:
        d = float(dist.min())
        for w in _kink_watchers:
            w["min_distance"] = min(w["min_distance"], d)


def relu(x: Tensor) -> Tensor:
    _watch(np.abs(x.data))
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def relu6(x: Tensor) -> Tensor:
    # subgradient is 0 at both kinks
    _watch(np.minimum(np.abs(x.data), np.abs(x.data - 6)))
    mask = (x.data > 0) & (x.data < 6)
    out = np.clip(x.data, 0, 6)
    return Tensor.from_op(out, (x,), lambda g: (g * mask,), "relu6")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


# -- convolution -------------------------------------------------------------


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an (O, C, k, k) kernel."""
    _check_conv_args(x, weight.shape[-1], stride, padding)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"expected square (O, C, k, k) kernel, got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    check_finite(x.data, "conv2d input")

    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    ho, wo = _out_size(h, k, stride, padding), _out_size(w, k, stride, padding)
    xp = _pad(x.data, padding)
    # (N, C, Ho, Wo, k, k)
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = np.tensordot(g, weight.data, axes=([1], [0]))  # (N, Ho, Wo, C, k, k)
            gxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d")


def depthwise_conv2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel convolution; ``weight`` is (C, 1, k, k)."""
    _check_conv_args(x, weight.shape[-1], stride, padding)
    if weight.ndim != 4 or weight.shape[1] != 1 or weight.shape[0] != x.shape[1]:
        raise ValueError(f"depthwise kernel must be ({x.shape[1]}, 1, k, k), got {weight.shape}")
    check_finite(x.data, "depthwise_conv2d input")

    n, c, h, w = x.shape
    k = weight.shape[-1]
    ho, wo = _out_size(h, k, stride, padding), _out_size(w, k, stride, padding)
    xp = _pad(x.data, padding)
    kern = weight.data[:, 0]
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            out += xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] * kern[None, :, i, j, None, None]

    def backward(g):
        gw = np.zeros_like(weight.data) if weight.requires_grad else None
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for i in range(k):
            for j in range(k):
                win = (slice(None), slice(None), slice(i, i + stride * ho, stride), slice(j, j + stride * wo, stride))
                if gw is not None:
                    gw[:, 0, i, j] = (g * xp[win]).sum(axis=(0, 2, 3))
                if gxp is not None:
                    gxp[win] += g * kern[None, :, i, j, None, None]
        gx = None
        if gxp is not None:
            gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        return gx, gw

    return Tensor.from_op(out, (x, weight), backward, "depthwise_conv2d")


# -- normalisation -----------------------------------------------------------


@dataclass
class BatchNormState:
    """Running statistics of one batch-norm layer."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    num_batches: int = field(default=0)

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Batch normalisation over (N, H, W) per channel.

    In training mode the batch statistics are used and the running
    statistics are updated in place (running variance is unbiased).
    """
    if x.ndim != 4:
        raise ValueError(f"expected NCHW input, got shape {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},)")
    eps = x.dtype.type(state.eps)
    g4 = gamma.data[None, :, None, None]
    if not training:
        inv = 1.0 / np.sqrt(state.running_var.astype(x.dtype) + eps)
        xhat = (x.data - state.running_mean.astype(x.dtype)[None, :, None, None]) * inv[None, :, None, None]
        out = xhat * g4 + beta.data[None, :, None, None]

        def backward_eval(g):
            return (
                g * g4 * inv[None, :, None, None],
                (g * xhat).sum(axis=(0, 2, 3)),
                g.sum(axis=(0, 2, 3)),
            )

        return Tensor.from_op(out, (x, gamma, beta), backward_eval, "batchnorm2d_eval")

    if x.shape[0] < 2:
        raise ValueError("batchnorm2d in training mode needs a batch of at least 2")
    m = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=(0, 2, 3))
    centered = x.data - mean[None, :, None, None]
    var = (centered ** 2).mean(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv[None, :, None, None]
    out = xhat * g4 + beta.data[None, :, None, None]

    mom = state.momentum
    state.running_mean = ((1 - mom) * state.running_mean + mom * mean).astype(state.running_mean.dtype)
    unbiased = var * (m / (m - 1)) if m > 1 else var
    state.running_var = ((1 - mom) * state.running_var + mom * unbiased).astype(state.running_var.dtype)
    state.num_batches += 1

    def backward(g):
        gxhat = g * g4
        gx = (inv[None, :, None, None] / m) * (
            m * gxhat
            - gxhat.sum(axis=(0, 2, 3), keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        )
        return gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return Tensor.from_op(out, (x, gamma, beta), backward, "batchnorm2d")


# -- pooling / reshaping -----------------------------------------------------


def global_avg_pool(x: Tensor) -> Tensor:
    """NCHW -> NC mean over the spatial grid."""
    if x.ndim != 4:
        raise ValueError(f"expected NCHW input, got shape {x.shape}")
    hw = x.shape[2] * x.shape[3]
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / hw, x.shape).astype(x.dtype),)

    return Tensor.from_op(out, (x,), backward, "global_avg_pool")


def avg_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping ``size`` x ``size`` average pooling (trailing rows/cols dropped)."""
    n, c, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ValueError(f"input {h}x{w} too small for {size}x{size} pooling")
    crop = x.data[:, :, :ho * size, :wo * size]
    out = crop.reshape(n, c, ho, size, wo, size).mean(axis=(3, 5))

    def backward(g):
        gx = np.zeros_like(x.data)
        up = np.repeat(np.repeat(g, size, axis=2), size, axis=3) / (size * size)
        gx[:, :, :ho * size, :wo * size] = up
        return (gx,)

    return Tensor.from_op(out, (x,), backward, "avg_pool2d")


def concat_channels(*xs: Tensor) -> Tensor:
    """Concatenate along axis 1 (channels for NCHW, features for NC)."""
    if len(xs) < 2:
        raise ValueError("concat_channels needs at least two tensors")
    ref = xs[0].shape
    for t in xs:
        if t.ndim != len(ref) or t.ndim < 2:
            raise ValueError("all inputs must have the same rank >= 2")
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ValueError(f"non-channel dims differ: {ref} vs {t.shape}")
        if t.shape[1] == 0:
            raise ValueError("cannot concatenate an empty-channel tensor")
    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return Tensor.from_op(out, xs, backward, "concat")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` with x (N, F), weight (G, F), bias (G,)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: incompatible shapes {x.shape} and {weight.shape}")
    check_finite(x.data, "linear input")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "linear")


# -- loss --------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} disagree")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    check_finite(logits.data, "logits")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    nll = logsum - z[np.arange(n), labels]
    loss = np.asarray(nll.mean(), dtype=logits.dtype)
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")

    def backward(g):
        grad = softmax(logits.data)
        grad[np.arange(n), labels] -= 1
        return (grad * (g / n),)

    return Tensor.from_op(loss, (logits,), backward, "softmax_cross_entropy")
