"""Parameter containers, seeded initialization, and the basic layers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .. import functional as F
from ..tensor import Tensor


class Rng:
    """Seeded random source (PCG64); same seed, same draws on every platform."""

    def __init__(self, seed: int = 0):
        if seed < 0:
            raise ValueError(f"seed must be nonnegative, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def spawn(self) -> "Rng":
        """Independent child stream, derived deterministically from this one."""
        return Rng(int(self._gen.integers(0, 2**63 - 1)))


class Parameter(Tensor):
    """A leaf tensor that always requires gradients."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def fan_in_uniform(rng: Rng, shape, fan_in: int) -> Parameter:
    bound = 1.0 / math.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, shape))


class Module:
    """Base class; parameters and submodules are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        for name, p in params.items():
            if name not in state:
                raise KeyError(f"missing parameter {name!r}")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(
                    f"parameter {name!r}: stored shape {value.shape} != expected {p.shape}"
                )
        extra = sorted(set(state) - set(params))
        if extra:
            raise KeyError(f"unexpected parameter {extra[0]!r}")
        for name, p in params.items():
            p.data = np.array(state[name], dtype=np.float64)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: Rng,
                 padding: str = "replicate", bias: bool = True):
        if kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = fan_in_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in)
        self.bias = Parameter(np.zeros(out_channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.padding)


class LayerNorm(Module):
    def __init__(self, features: int, axis: int = -1, eps: float = 1e-5):
        self.axis = axis
        self.eps = eps
        self.weight = Parameter(np.ones(features))
        self.bias = Parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.axis, self.weight, self.bias, self.eps)
