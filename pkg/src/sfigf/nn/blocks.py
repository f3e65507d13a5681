"""Convolutional and attention blocks used by the fusion network."""

from __future__ import annotations

import numpy as np

from .. import functional as F
from ..tensor import (
    Tensor,
    add,
    broadcast_to,
    concat,
    mean,
    mul,
    reshape,
    sigmoid,
    split,
    transpose,
)
from .attention import AttentionWeights, NeighborhoodSpec, cross_attention, self_attention
from .module import Conv2d, LayerNorm, Module, Rng


def to_tokens(x: Tensor) -> Tensor:
    """``C×H×W`` feature map to an ``HW×C`` token matrix."""
    c, h, w = x.shape
    return transpose(reshape(x, (c, h * w)))


def from_tokens(t: Tensor, height: int, width: int) -> Tensor:
    n, c = t.shape
    return reshape(transpose(t), (c, height, width))


class GICABlock(Module):
    """Cross-attention whose skip term is a learned guided-filter-style offset.

    ``b = SA(LN(Cat[p, i])) + p`` and ``q = CA(p, i) + b``: queries come from
    the filtering-input features ``p``, keys and values from the guidance
    features ``i``. With all projections zero this is the identity on ``p``.
    """

    def __init__(self, channels: int, rng: Rng, window: int | None = 7):
        c = channels
        self.channels = c
        self.ca = AttentionWeights(c, c, rng)
        self.norm = LayerNorm(2 * c)
        self.sa = AttentionWeights(2 * c, c, rng, value_features=c)
        self.spec = NeighborhoodSpec(window) if window is not None else None

    def forward(self, p: Tensor, i: Tensor) -> tuple[Tensor, Tensor]:
        if p.shape != i.shape:
            raise ValueError(f"GICA inputs differ in shape: p {p.shape}, i {i.shape}")
        if p.shape[0] != self.channels:
            raise ValueError(f"GICA block built for {self.channels} channels, got {p.shape[0]}")
        _, h, w = p.shape
        grid = (h, w)
        pt, it = to_tokens(p), to_tokens(i)
        z = self.norm(concat([pt, it], axis=1))
        b = add(self_attention(z, self.sa, self.spec, grid), pt)
        q = add(cross_attention(pt, it, self.ca, self.spec, grid), b)
        return from_tokens(q, h, w), from_tokens(b, h, w)


class NAFBlock(Module):
    """Simplified NAF-style gated block.

    channel LayerNorm → 3×3 conv to ``2·out`` → GELU → simple gate (product of
    the two channel halves) → 1×1 conv. The input is added back when
    ``in_channels == out_channels``.
    """

    def __init__(self, in_channels: int, rng: Rng, out_channels: int | None = None):
        out_channels = in_channels if out_channels is None else out_channels
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.norm = LayerNorm(in_channels, axis=0)
        self.expand = Conv2d(in_channels, 2 * out_channels, 3, rng)
        self.project = Conv2d(out_channels, out_channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = F.gelu(self.expand(self.norm(x)))
        first, second = split(y, [self.out_channels, self.out_channels], axis=0)
        y = self.project(mul(first, second))
        return add(y, x) if self.in_channels == self.out_channels else y


class CPA(Module):
    """Concatenation followed by a channel gate and a spatial gate."""

    def __init__(self, channels_a: int, channels_b: int, rng: Rng):
        c = channels_a + channels_b
        self.channels = (channels_a, channels_b)
        self.channel_fc = Conv2d(c, c, 1, rng)
        self.spatial_conv = Conv2d(1, 1, 3, rng)

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1:] != b.shape[1:]:
            raise ValueError(f"CPA inputs differ spatially: {a.shape} vs {b.shape}")
        x = concat([a, b], axis=0)
        c, h, w = x.shape
        pooled = reshape(mean(x, axis=(1, 2)), (c, 1, 1))
        channel_gate = sigmoid(self.channel_fc(pooled))
        spatial_gate = sigmoid(self.spatial_conv(F.channel_mean(x)))
        x = mul(x, broadcast_to(channel_gate, x.shape))
        return mul(x, broadcast_to(spatial_gate, x.shape))


class UpsampleBlock(Module):
    """Nearest ×2 upsampling, then a 3×3 conv halving the channels, then GELU."""

    def __init__(self, in_channels: int, rng: Rng):
        if in_channels % 2:
            raise ValueError(f"upsample block needs an even channel count, got {in_channels}")
        self.conv = Conv2d(in_channels, in_channels // 2, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.gelu(self.conv(F.nearest_upsample2(x)))


class ConvStack(Module):
    """3×3 convolutions with GELU between consecutive layers (none after the last)."""

    def __init__(self, widths: list[int], rng: Rng):
        self.layers = [Conv2d(a, b, 3, rng) for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        for j, layer in enumerate(self.layers):
            x = layer(x)
            if j < len(self.layers) - 1:
                x = F.gelu(x)
        return x


def zero_parameters(module: Module) -> None:
    for p in module.parameters():
        p.data = np.zeros_like(p.data)
