"""Image-quality metrics on ``C×H×W`` (or ``H×W``) arrays.

Arguments are ``(pred, ref)``; only ERGAS is asymmetric (band means come from
``ref``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage

from .tensor import Tensor

PSNR_CAP = 99.0
CSV_FIELDS = ("path", "rmse", "psnr", "ssim", "sam", "ergas", "scc")


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    y = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"metric inputs differ in shape: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise ValueError(f"expected H×W or C×H×W images, got shape {x.shape}")
    return x, y


def rmse(a, b) -> float:
    x, y = _pair(a, b)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def psnr(a, b, peak: float = 1.0) -> float:
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    err = rmse(a, b)
    if err == 0:
        return PSNR_CAP
    return 20.0 * math.log10(peak / err)


def _gaussian_1d(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - size // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    out = ndimage.correlate1d(img, g, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, g, axis=1, mode="nearest")
    return out[r: img.shape[0] - r, r: img.shape[1] - r]


def ssim(a, b, peak: float = 1.0, window: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over fully-inside Gaussian windows, averaged over channels.

    Images smaller than the window use the largest odd window that fits.
    """
    x, y = _pair(a, b)
    size = min(window, *(s if s % 2 else s - 1 for s in x.shape[1:]))
    g = _gaussian_1d(size, sigma)
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    scores = []
    for xc, yc in zip(x, y):
        mx, my = _filter_valid(xc, g), _filter_valid(yc, g)
        sxx = _filter_valid(xc * xc, g) - mx * mx
        syy = _filter_valid(yc * yc, g) - my * my
        sxy = _filter_valid(xc * yc, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def sam(a, b) -> float:
    """Mean per-pixel spectral angle in radians; 0 where either spectrum is zero."""
    x, y = _pair(a, b)
    nx, ny = np.linalg.norm(x, axis=0), np.linalg.norm(y, axis=0)
    zero = (nx == 0) | (ny == 0)
    ux = x / np.where(zero, 1.0, nx)
    uy = y / np.where(zero, 1.0, ny)
    # half-angle form stays accurate near 0 and π where arccos loses digits
    angle = 2.0 * np.arctan2(np.linalg.norm(ux - uy, axis=0), np.linalg.norm(ux + uy, axis=0))
    return float(np.mean(np.where(zero, 0.0, angle)))


def ergas(a, b, ratio: float = 4.0) -> float:
    x, y = _pair(a, b)
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    terms = []
    for band, (xc, yc) in enumerate(zip(x, y)):
        mu = yc.mean()
        if mu == 0:
            warnings.warn(f"ergas: skipping band {band} with zero mean", RuntimeWarning, stacklevel=2)
            continue
        terms.append((np.sqrt(np.mean((xc - yc) ** 2)) / mu) ** 2)
    if not terms:
        return 0.0
    return float(100.0 / ratio * np.sqrt(np.mean(terms)))


def scc(a, b) -> float:
    """Correlation of Laplacian-filtered bands, averaged over bands."""
    x, y = _pair(a, b)
    vals = []
    for xc, yc in zip(x, y):
        lx = ndimage.laplace(xc, mode="nearest").ravel()
        ly = ndimage.laplace(yc, mode="nearest").ravel()
        if np.array_equal(lx, ly):
            vals.append(1.0)
            continue
        dx, dy = lx - lx.mean(), ly - ly.mean()
        denom = np.sqrt(np.dot(dx, dx) * np.dot(dy, dy))
        vals.append(0.0 if denom == 0 else float(np.dot(dx, dy) / denom))
    return float(np.mean(vals))


@dataclass
class MetricReport:
    rmse: float
    psnr: float
    ssim: float
    sam: float
    ergas: float
    scc: float

    @classmethod
    def compute(cls, pred, ref, peak: float = 1.0, ratio: float = 4.0) -> "MetricReport":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            e = ergas(pred, ref, ratio)
        return cls(rmse(pred, ref), psnr(pred, ref, peak), ssim(pred, ref, peak), sam(pred, ref), e,
                   scc(pred, ref))

    @classmethod
    def mean(cls, reports: list["MetricReport"]) -> "MetricReport":
        if not reports:
            raise ValueError("no reports to aggregate")
        return cls(**{f.name: float(np.mean([getattr(r, f.name) for r in reports])) for f in fields(cls)})

    def csv_row(self, path: str) -> str:
        vals = asdict(self)
        return ",".join([path] + [f"{vals[k]:.10g}" for k in CSV_FIELDS[1:]])
