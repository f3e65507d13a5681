"""Training objectives: supervised L1 and the unsupervised multi-focus loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, getitem, mean, mul, square, sub, tabs, add

HF_SIZE = 5
HF_SIGMA = 1.0


def l1_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"l1_loss: shape mismatch {pred.shape} vs {target.shape}")
    return mean(tabs(sub(pred, target)))


def gaussian_kernel(size: int = HF_SIZE, sigma: float = HF_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian of odd ``size``."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = np.arange(size) - size // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _channels(img) -> np.ndarray:
    arr = np.asarray(img.data if isinstance(img, Tensor) else img, dtype=np.float64)
    if arr.ndim == 2:
        return arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected H×W or C×H×W image, got shape {arr.shape}")
    return arr


def high_frequency(img, size: int = HF_SIZE, sigma: float = HF_SIGMA) -> np.ndarray:
    """``Σ_c |img − G * img|`` with a replicate-padded Gaussian; returns ``H×W``."""
    x = _channels(img)
    k = gaussian_kernel(size, sigma)
    r = size // 2
    _, h, w = x.shape
    padded = np.pad(x, ((0, 0), (r, r), (r, r)), mode="edge")
    # weighted sum of differences, so flat regions give exact zeros
    detail = np.zeros_like(x)
    for dy in range(size):
        for dx in range(size):
            detail += k[dy, dx] * (x - padded[:, dy:dy + h, dx:dx + w])
    return np.abs(detail).sum(axis=0)


@dataclass
class FocusMasks:
    s1: np.ndarray
    s2: np.ndarray


def focus_masks(I1, I2, size: int = HF_SIZE, sigma: float = HF_SIGMA) -> FocusMasks:
    """``s1 = 1`` where ``I1`` has strictly more high-frequency energy; ties go to ``I2``."""
    a, b = _channels(I1), _channels(I2)
    if a.shape != b.shape:
        raise ValueError(f"focus_masks: shape mismatch {a.shape} vs {b.shape}")
    s1 = (high_frequency(a, size, sigma) > high_frequency(b, size, sigma)).astype(np.float64)
    return FocusMasks(s1, 1.0 - s1)


def _masked_sq(x: Tensor, ref: np.ndarray, mask: np.ndarray) -> Tensor:
    w = Tensor(np.broadcast_to(mask, ref.shape).copy())
    return mean(mul(square(sub(x, Tensor(ref))), w))


def _dx(x):
    return getitem(x, (slice(None), slice(None), slice(1, None))) - getitem(x, (slice(None), slice(None), slice(0, -1)))


def _dy(x):
    return getitem(x, (slice(None), slice(1, None), slice(None))) - getitem(x, (slice(None), slice(0, -1), slice(None)))


def mfif_loss(Q_out: Tensor, I1, I2, masks: FocusMasks | None = None) -> Tensor:
    """Mask-selected squared error on values plus on forward-difference gradients.

    Each term is a mean over its elements; gradient differences are weighted
    by the mask at their left/top pixel. Masks are constants.
    """
    a, b = _channels(I1), _channels(I2)
    if Q_out.shape != a.shape or a.shape != b.shape:
        raise ValueError(f"mfif_loss: shape mismatch {Q_out.shape}, {a.shape}, {b.shape}")
    m = masks or focus_masks(a, b)
    ta, tb = Tensor(a), Tensor(b)
    value = add(_masked_sq(Q_out, a, m.s1), _masked_sq(Q_out, b, m.s2))
    loss = value
    if a.shape[2] > 1:
        qx = _dx(Q_out)
        loss = add(loss, add(_masked_sq(qx, _dx(ta).data, m.s1[:, :-1]), _masked_sq(qx, _dx(tb).data, m.s2[:, :-1])))
    if a.shape[1] > 1:
        qy = _dy(Q_out)
        loss = add(loss, add(_masked_sq(qy, _dy(ta).data, m.s1[:-1]), _masked_sq(qy, _dy(tb).data, m.s2[:-1])))
    return loss
