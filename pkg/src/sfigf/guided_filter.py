"""Classical guided filter.

The fast path uses integral images for every windowed statistic; the naive
path solves the ridge-regularized line fit of each window directly and is the
reference used in tests. Windows near the border shrink to their intersection
with the image.

Degenerate windows (zero guide variance with ``eps == 0``) take the
minimum-norm solution ``a = 0, b = mean(P)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

DEFAULT_EPS = 1e-4


@dataclass(frozen=True)
class GuidedFilterConfig:
    radius: int = 2
    epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass
class GFCoefficients:
    """Window-averaged coefficient maps; the output is ``A * I + B``."""

    A: np.ndarray
    B: np.ndarray

    def apply(self, guide: np.ndarray) -> np.ndarray:
        return self.A * guide + self.B


def _as_image(x, name: str) -> np.ndarray:
    arr = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D image, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _window_bounds(n: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(n)
    return np.clip(idx - r, 0, n), np.clip(idx + r + 1, 0, n)


class _Box:
    """Integral-image window sums for one image size and radius."""

    def __init__(self, shape: tuple[int, int], radius: int):
        h, w = shape
        self.r0, self.r1 = _window_bounds(h, radius)
        self.c0, self.c1 = _window_bounds(w, radius)
        self.count = ((self.r1 - self.r0)[:, None] * (self.c1 - self.c0)[None, :]).astype(np.float64)
        self._table = np.zeros((h + 1, w + 1))

    def sum(self, img: np.ndarray) -> np.ndarray:
        t = self._table
        t[1:, 1:] = img.cumsum(axis=0).cumsum(axis=1)
        rows_hi, rows_lo = t[self.r1], t[self.r0]
        return (rows_hi[:, self.c1] - rows_lo[:, self.c1]) - (rows_hi[:, self.c0] - rows_lo[:, self.c0])

    def mean(self, img: np.ndarray) -> np.ndarray:
        return self.sum(img) / self.count


def box_sum(img, radius: int) -> np.ndarray:
    """Windowed sums over ``(2r+1)²`` windows clipped to the image, O(1) per pixel."""
    img = _as_image(img, "image")
    return _Box(img.shape, radius).sum(img)


def box_mean(img, radius: int) -> np.ndarray:
    """Windowed mean with the shrinking-window boundary rule."""
    img = _as_image(img, "image")
    return _Box(img.shape, radius).mean(img)


box_stats = box_mean


def guided_filter(guide, src, cfg: GuidedFilterConfig = GuidedFilterConfig()):
    """Filter ``src`` (P) with ``guide`` (I); returns ``(Q, GFCoefficients)``."""
    I = _as_image(guide, "guide")
    P = _as_image(src, "input")
    if I.shape != P.shape:
        raise ValueError(f"guide shape {I.shape} != input shape {P.shape}")
    r, eps = cfg.radius, cfg.epsilon
    box = _Box(I.shape, r)
    count = box.count

    # centering keeps the variance subtraction well conditioned
    mean_i_global, mean_p_global = I.mean(), P.mean()
    I0, P0 = I - mean_i_global, P - mean_p_global
    I0sq = I0 * I0

    mu = box.mean(I0)
    p_bar = box.mean(P0)
    var = box.mean(I0sq) - mu * mu
    cov = box.mean(I0 * P0) - mu * p_bar

    roundoff = 8 * np.finfo(float).eps * I0sq.sum() / count
    flat = (count == 1) | (var <= roundoff)
    var = np.where(flat, 0.0, var)
    cov = np.where(flat, 0.0, cov)
    denom = var + eps
    degenerate = denom == 0.0
    a = np.where(degenerate, 0.0, cov / np.where(degenerate, 1.0, denom))
    b = p_bar - a * mu

    A = box.mean(a)
    B = box.mean(b) + mean_p_global - A * mean_i_global
    return A * I + B, GFCoefficients(A, B)


def _window_gather(shape: tuple[int, int], radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat pixel indices of every window, padded, plus a validity mask."""
    h, w = shape
    offs = np.arange(-radius, radius + 1)
    rows = np.arange(h)[:, None, None, None] + offs[None, None, :, None]
    cols = np.arange(w)[None, :, None, None] + offs[None, None, None, :]
    rows, cols = np.broadcast_arrays(rows, cols)
    valid = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    flat = np.clip(rows, 0, h - 1) * w + np.clip(cols, 0, w - 1)
    k = (2 * radius + 1) ** 2
    return flat.reshape(h * w, k), valid.reshape(h * w, k)


def naive_guided_filter(guide, src, cfg: GuidedFilterConfig = GuidedFilterConfig()):
    """Reference filter solving each window's regularized fit explicitly.

    For every window the problem ``min Σ (a·I_j + b − P_j)² + ε·a²`` is written
    as a stacked least-squares system and solved with a pseudo-inverse (which
    yields the minimum-norm answer for degenerate windows). Coefficients are
    then averaged over every window containing each pixel.
    """
    I = _as_image(guide, "guide")
    P = _as_image(src, "input")
    if I.shape != P.shape:
        raise ValueError(f"guide shape {I.shape} != input shape {P.shape}")
    h, w = I.shape
    r, eps = cfg.radius, cfg.epsilon
    index, valid = _window_gather(I.shape, r)
    m = valid.astype(np.float64)
    n = m.sum(axis=1)

    iw = I.reshape(-1)[index] * m
    pw = P.reshape(-1)[index] * m
    mu = iw.sum(axis=1) / n
    centered = (iw - mu[:, None]) * m

    # rows: one per window pixel (zeros where outside), plus the ridge row
    design = np.zeros((h * w, index.shape[1] + 1, 2))
    design[:, :-1, 0] = centered
    design[:, :-1, 1] = m
    design[:, -1, 0] = np.sqrt(n * eps)
    target = np.zeros((h * w, index.shape[1] + 1))
    target[:, :-1] = pw
    # normal equations of the stacked system; pinv drops the null direction
    normal = np.einsum("nki,nkj->nij", design, design)
    rhs = np.einsum("nki,nk->ni", design, target)
    sol = np.einsum("nij,nj->ni", np.linalg.pinv(normal), rhs)
    a = sol[:, 0]
    b = sol[:, 1] - a * mu

    a_bar = (a[index] * m).sum(axis=1) / n
    b_bar = (b[index] * m).sum(axis=1) / n
    A, B = a_bar.reshape(h, w), b_bar.reshape(h, w)
    return A * I + B, GFCoefficients(A, B)


def guided_filter_color(guide, src, cfg: GuidedFilterConfig = GuidedFilterConfig(),
                        naive: bool = False) -> np.ndarray:
    """Three-channel guide: mean of the three single-channel filter outputs."""
    G = np.asarray(guide.data if isinstance(guide, Tensor) else guide, dtype=np.float64)
    if G.ndim != 3 or G.shape[0] != 3:
        raise ValueError(f"color guide must be 3×H×W, got shape {G.shape}")
    fn = naive_guided_filter if naive else guided_filter
    outs = [fn(G[c], src, cfg)[0] for c in range(3)]
    return (outs[0] + outs[1] + outs[2]) / 3.0


def filter_image(guide: np.ndarray, src: np.ndarray, cfg: GuidedFilterConfig = GuidedFilterConfig(),
                 naive: bool = False) -> tuple[np.ndarray, GFCoefficients | None]:
    """Filter every channel of a ``C×H×W`` input.

    A one-channel guide uses the scalar filter and also returns its
    coefficients (stacked per input channel); a three-channel guide uses
    :func:`guided_filter_color` and returns no coefficients.
    """
    if guide.ndim == 2:
        guide = guide[None]
    if src.ndim == 2:
        src = src[None]
    if guide.shape[1:] != src.shape[1:]:
        raise ValueError(f"guide {guide.shape} and input {src.shape} are not spatially aligned")
    fn = naive_guided_filter if naive else guided_filter
    if guide.shape[0] == 1:
        results = [fn(guide[0], src[c], cfg) for c in range(src.shape[0])]
        out = np.stack([q for q, _ in results])
        coef = GFCoefficients(np.stack([c.A for _, c in results]), np.stack([c.B for _, c in results]))
        return out, coef
    if guide.shape[0] == 3:
        return np.stack([guided_filter_color(guide, src[c], cfg, naive) for c in range(src.shape[0])]), None
    raise ValueError(f"guide must have 1 or 3 channels, got {guide.shape[0]}")
