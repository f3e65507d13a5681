"""Guided image restoration: classical guided filter and a learned fusion network."""

from .guided_filter import GFCoefficients, GuidedFilterConfig
from .network import FusionResult, MFIFNet, SFIGF, SFIGFConfig, load_checkpoint, save_checkpoint
from .tensor import Tensor, no_grad

__all__ = [
    "GFCoefficients", "GuidedFilterConfig",
    "FusionResult", "MFIFNet", "SFIGF", "SFIGFConfig", "load_checkpoint", "save_checkpoint",
    "Tensor", "no_grad",
]
__version__ = "0.1.0"
