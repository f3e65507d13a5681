"""Layers, blocks and attention built on the tensor engine."""

from .attention import AttentionMap, AttentionWeights, NeighborhoodSpec, cross_attention, self_attention
from .blocks import CPA, ConvStack, GICABlock, NAFBlock, UpsampleBlock
from .module import Conv2d, LayerNorm, Module, Parameter, Rng

__all__ = [
    "AttentionMap", "AttentionWeights", "NeighborhoodSpec", "cross_attention", "self_attention",
    "CPA", "ConvStack", "GICABlock", "NAFBlock", "UpsampleBlock",
    "Conv2d", "LayerNorm", "Module", "Parameter", "Rng",
]
