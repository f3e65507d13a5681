"""Differentiable image and activation operations on ``C×H×W`` tensors."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .tensor import Tensor, make_op, mean, reshape, take

PADDING_MODES = ("replicate", "zeros")

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``0.5·x·(1 + erf(x/√2))``."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd * _INV_SQRT2))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * xd * xd)
        return (g * (cdf + xd * pdf),)

    return make_op(xd * cdf, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"softmax: axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_op(y, (x,), backward)


def layer_norm(
    x: Tensor,
    axis: int = -1,
    weight: Tensor | None = None,
    bias: Tensor | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Normalize each slice along ``axis`` to zero mean and unit variance.

    ``weight`` and ``bias`` are 1-D with length ``x.shape[axis]`` and are
    applied along that axis.
    """
    if not -x.ndim <= axis < x.ndim:
        raise ValueError(f"layer_norm: axis {axis} out of range for shape {x.shape}")
    axis %= x.ndim
    n = x.shape[axis]
    xd = x.data
    mu = xd.mean(axis=axis, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    bshape = [1] * x.ndim
    bshape[axis] = n
    w = weight.data.reshape(bshape) if weight is not None else None
    out = xhat * w if w is not None else xhat.copy()
    if bias is not None:
        out = out + bias.data.reshape(bshape)
    reduce_axes = tuple(i for i in range(x.ndim) if i != axis)

    def backward(g):
        gx_hat = g * w if w is not None else g
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=axis, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=axis, keepdims=True)
        )
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=reduce_axes))
        if bias is not None:
            grads.append(g.sum(axis=reduce_axes))
        return grads

    parents = [t for t in (x, weight, bias) if t is not None]
    return make_op(out, parents, backward)


def _pad_index(n: int, pad_before: int, pad_after: int) -> np.ndarray:
    return np.clip(np.arange(-pad_before, n + pad_after), 0, n - 1)


def pad2d(x: Tensor, pad: int | tuple[int, int, int, int], mode: str = "replicate") -> Tensor:
    """Pad the two trailing axes. ``pad`` is ``p`` or ``(top, bottom, left, right)``."""
    if isinstance(pad, int):
        pad = (pad, pad, pad, pad)
    top, bottom, left, right = pad
    if mode == "replicate":
        h, w = x.shape[-2:]
        out = take(x, _pad_index(h, top, bottom), axis=x.ndim - 2)
        return take(out, _pad_index(w, left, right), axis=x.ndim - 1)
    if mode == "zeros":
        widths = [(0, 0)] * (x.ndim - 2) + [(top, bottom), (left, right)]
        h, w = x.shape[-2:]

        def backward(g):
            return (g[..., top : top + h, left : left + w],)

        return make_op(np.pad(x.data, widths), (x,), backward)
    raise ValueError(f"unknown padding mode {mode!r}; expected one of {PADDING_MODES}")


def _conv2d_valid(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    cin, hp, wp = x.shape
    cout, _, k, _ = weight.shape
    h, w = hp - k + 1, wp - k + 1
    win = sliding_window_view(x.data, (k, k), axis=(1, 2))  # cin, h, w, k, k
    cols = win.transpose(0, 3, 4, 1, 2).reshape(cin * k * k, h * w)
    w2 = weight.data.reshape(cout, cin * k * k)
    out = w2 @ cols
    if bias is not None:
        out += bias.data[:, None]

    def backward(g):
        g2 = g.reshape(cout, h * w)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gcols = (w2.T @ g2).reshape(cin, k, k, h, w)
        gx = np.zeros((cin, hp, wp))
        for a in range(k):
            for b in range(k):
                gx[:, a : a + h, b : b + w] += gcols[:, a, b]
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_op(out.reshape(cout, h, w), parents, backward)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    padding: str = "replicate",
) -> Tensor:
    """Same-size 2-D cross-correlation of a ``C_in×H×W`` tensor.

    ``weight`` is ``C_out×C_in×k×k`` with odd ``k``; the output is
    ``C_out×H×W``.
    """
    if x.ndim != 3:
        raise ValueError(f"conv2d expects a C×H×W input, got shape {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d expects a square C_out×C_in×k×k kernel, got {weight.shape}")
    k = weight.shape[2]
    if k % 2 == 0:
        raise ValueError(f"conv2d kernel size must be odd, got {k}")
    if weight.shape[1] != x.shape[0]:
        raise ValueError(
            f"conv2d channel mismatch: input has {x.shape[0]} channels, kernel expects {weight.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"conv2d bias shape {bias.shape} != ({weight.shape[0]},)")
    r = k // 2
    xp = pad2d(x, r, padding) if r else x
    return _conv2d_valid(xp, weight, bias)


def avg_pool2(x: Tensor) -> Tensor:
    """2×2 average pooling; odd sizes are first replicate-padded at the end."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        x = pad2d(x, (0, h % 2, 0, w % 2), "replicate")
        c, h, w = x.shape
    blocks = reshape(x, (c, h // 2, 2, w // 2, 2))
    return mean(blocks, axis=(2, 4))


def nearest_upsample2(x: Tensor) -> Tensor:
    _, h, w = x.shape
    out = take(x, np.arange(2 * h) // 2, axis=1)
    return take(out, np.arange(2 * w) // 2, axis=2)


def channel_mean(x: Tensor) -> Tensor:
    """Mean over channels, kept as a ``1×H×W`` tensor."""
    c, h, w = x.shape
    return reshape(mean(x, axis=0), (1, h, w))

