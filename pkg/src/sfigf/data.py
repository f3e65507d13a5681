"""Image files, bicubic resampling, and synthetic GDSR / MFIF scenes."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .girt import FormatError, read_girt, write_girt

TASKS = ("gdsr", "mfif", "pansharpen", "lrie")

# ---------------------------------------------------------------- netpbm / GIRT

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_netpbm(raw: bytes, path) -> tuple[bytes, int, int, int, int]:
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(raw, pos)
        if not m:
            raise FormatError(f"{path}: malformed netpbm header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: unsupported netpbm magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed netpbm header") from None
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad image size {width}×{height}")
    if not 1 <= maxval <= 65535:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    if pos >= len(raw) or not raw[pos:pos + 1].isspace():
        raise FormatError(f"{path}: malformed netpbm header")
    channels = 3 if magic == b"P6" else 1
    return raw[pos + 1:], width, height, maxval, channels


def read_image(path) -> np.ndarray:
    """Read a P5/P6 netpbm file (scaled to [0,1]) or a GIRT tensor, as ``C×H×W``."""
    path = Path(path)
    if path.suffix.lower() == ".girt":
        arr = read_girt(path)
        return arr[None] if arr.ndim == 2 else arr
    body, w, h, maxval, c = _parse_netpbm(path.read_bytes(), path)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * c * dtype.itemsize
    if len(body) < need:
        raise FormatError(f"{path}: truncated pixel data ({len(body)} of {need} bytes)")
    pix = np.frombuffer(body[:need], dtype=dtype).astype(np.float64).reshape(h, w, c)
    return np.transpose(pix, (2, 0, 1)) / maxval


def write_image(img, path, bits: int = 8) -> None:
    """Write ``C×H×W`` (or ``H×W``) data; ``.girt`` keeps raw f64, netpbm quantizes."""
    path = Path(path)
    arr = np.asarray(img, dtype=np.float64)
    if path.suffix.lower() == ".girt":
        write_girt(path, arr)
        return
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"netpbm output needs 1 or 3 channels, got shape {arr.shape}")
    if bits not in (8, 16):
        raise ValueError(f"bits must be 8 or 16, got {bits}")
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval)
    pix = np.transpose(q, (1, 2, 0)).astype(">u2" if bits == 16 else "u1")
    c, h, w = arr.shape
    header = f"{'P6' if c == 3 else 'P5'}\n{w} {h}\n{maxval}\n".encode("ascii")
    path.write_bytes(header + pix.tobytes())


# ---------------------------------------------------------------- bicubic

def cubic(x: np.ndarray, a: float = -0.5) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def resize_matrix(n_in: int, n_out: int, scale: float, antialias: bool = True) -> np.ndarray:
    """``n_out×n_in`` interpolation matrix with replicate boundary.

    Downscaling stretches the kernel by ``1/scale`` so it also low-passes.
    """
    stretch = 1.0 / scale if (antialias and scale < 1) else 1.0
    support = 2.0 * stretch
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    left = np.floor(centers - support).astype(int) + 1
    taps = int(math.ceil(2 * support)) + 1
    idx = left[:, None] + np.arange(taps)[None, :]
    w = cubic((centers[:, None] - idx) / stretch) / stretch
    w /= w.sum(axis=1, keepdims=True)
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.repeat(np.arange(n_out), taps), np.clip(idx, 0, n_in - 1).ravel()), w.ravel())
    return m


def bicubic_resize(img, scale: float, size: tuple[int, int] | None = None) -> np.ndarray:
    """Separable bicubic resampling (a = −0.5) of ``H×W`` or ``C×H×W`` data."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    arr = np.asarray(img, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    _, h, w = arr.shape
    oh, ow = size if size is not None else (max(1, round(h * scale)), max(1, round(w * scale)))
    rows = resize_matrix(h, oh, scale)
    cols = resize_matrix(w, ow, scale)
    out = np.einsum("oh,chw,pw->cop", rows, arr, cols)
    return out[0] if squeeze else out


# ---------------------------------------------------------------- synthetic scenes

@dataclass
class ImagePair:
    guide: np.ndarray
    target: np.ndarray
    ground_truth: np.ndarray | None = None
    task: str = "gdsr"
    focus_mask: np.ndarray | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.guide.shape[1:] != self.target.shape[1:]:
            raise ValueError(f"guide {self.guide.shape} and target {self.target.shape} are not aligned")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    size: int = 64
    shapes: int = 6
    depth_levels: int = 4
    texture: float = 0.05
    noise: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"size must be at least 2, got {self.size}")
        if self.shapes < 1 or self.depth_levels < 1:
            raise ValueError("need at least one shape and one depth level")


def _shape_labels(spec: SyntheticSceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Label map: 0 background, k for the k-th drawn shape (later shapes on top)."""
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    labels = np.zeros((n, n), dtype=int)
    for k in range(1, spec.shapes + 1):
        cy, cx = rng.uniform(0.15 * n, 0.85 * n, 2)
        hy, hx = rng.uniform(0.1 * n, 0.3 * n, 2)
        if k % 2:
            inside = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        else:
            inside = ((yy - cy) / hy) ** 2 + ((xx - cx) / hx) ** 2 <= 1.0
        labels[inside] = k
    return labels


def make_gdsr_pair(spec: SyntheticSceneSpec = SyntheticSceneSpec(), sr_scale: int = 4) -> ImagePair:
    """Piecewise-constant depth, an RGB guide sharing its edges, and a degraded depth input."""
    if sr_scale < 1 or spec.size % sr_scale:
        raise ValueError(f"size {spec.size} is not divisible by scale {sr_scale}")
    rng = np.random.default_rng(spec.seed)
    labels = _shape_labels(spec, rng)
    levels = np.linspace(0.1, 0.9, spec.depth_levels)
    shape_depth = np.concatenate([[levels[0]], rng.choice(levels[1:] if spec.depth_levels > 1 else levels,
                                                          spec.shapes)])
    depth = shape_depth[labels]

    colors = rng.uniform(0.15, 0.85, (spec.shapes + 1, 3))
    n = spec.size
    yy, xx = np.mgrid[0:n, 0:n] / n
    freq = rng.uniform(4, 10, 3)
    texture = np.stack([np.sin(2 * np.pi * (f * xx + 0.7 * f * yy)) for f in freq])
    guide = np.transpose(colors[labels], (2, 0, 1)) + spec.texture * texture
    guide = guide + rng.normal(0.0, spec.noise, guide.shape)
    guide = np.clip(guide, 0.0, 1.0)

    low = bicubic_resize(depth, 1.0 / sr_scale)
    target = np.clip(bicubic_resize(low, float(sr_scale), size=depth.shape), 0.0, 1.0)
    return ImagePair(guide, target[None], depth[None], "gdsr")


def edge_overlap(pair: ImagePair) -> float:
    """Fraction of depth-discontinuity pixels where the guide also changes."""
    d = pair.ground_truth[0]
    g = pair.guide
    d_edge = np.zeros(d.shape, dtype=bool)
    g_edge = np.zeros(d.shape, dtype=bool)
    d_edge[:, :-1] |= d[:, 1:] != d[:, :-1]
    d_edge[:-1, :] |= d[1:, :] != d[:-1, :]
    g_edge[:, :-1] |= np.any(g[:, :, 1:] != g[:, :, :-1], axis=0)
    g_edge[:-1, :] |= np.any(g[:, 1:, :] != g[:, :-1, :], axis=0)
    if not d_edge.any():
        return 1.0
    return float(np.mean(g_edge[d_edge]))


def make_mfif_pair(spec: SyntheticSceneSpec = SyntheticSceneSpec(), blur_sigma: float = 2.0) -> ImagePair:
    """Near/far focus pair from a textured sharp scene.

    ``guide`` (I1) is sharp on the near mask and blurred elsewhere; ``target``
    (I2) is the opposite. ``focus_mask`` is 1 on the near region.
    """
    rng = np.random.default_rng(spec.seed)
    labels = _shape_labels(spec, rng)
    base = rng.uniform(0.3, 0.7, spec.shapes + 1)[labels]
    amp = max(spec.texture, 1e-3) * 4
    sharp = np.clip(base + amp * rng.uniform(-1.0, 1.0, base.shape), 0.0, 1.0)
    near = (labels % 2 == 1).astype(np.float64)
    if near.all() or not near.any():
        near[:, : spec.size // 2] = 1.0 - near[0, 0]
    blurred = ndimage.gaussian_filter(sharp, blur_sigma, mode="nearest")
    I1 = near * sharp + (1 - near) * blurred
    I2 = (1 - near) * sharp + near * blurred
    return ImagePair(I1[None], I2[None], sharp[None], "mfif", near)


def boundary_band(mask: np.ndarray, width: int = 3) -> np.ndarray:
    """Pixels within ``width`` (chessboard distance) of a mask transition."""
    m = mask.astype(bool)
    structure = np.ones((2 * width + 1, 2 * width + 1), dtype=bool)
    grown = ndimage.binary_dilation(m, structure)
    shrunk = ndimage.binary_erosion(m, structure, border_value=1)
    return grown & ~shrunk


def mask_agreement(detected: np.ndarray, truth: np.ndarray, band: int = 3) -> float:
    keep = ~boundary_band(truth, band)
    return float(np.mean((detected.astype(bool) == truth.astype(bool))[keep]))
