"""Deterministic training loops for the guided-restoration and multi-focus tasks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .data import ImagePair
from .losses import HF_SIGMA, HF_SIZE, focus_masks, l1_loss, mfif_loss
from .network import MFIFNet, SFIGF
from .optim import Adam
from .tensor import Tensor, no_grad

DEFAULT_LR = 2e-3


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_finite: float):
        super().__init__(f"loss became non-finite at step {step}; last finite loss {last_finite:.6g}")
        self.step = step
        self.last_finite = last_finite


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    final_loss: float = math.nan

    @property
    def initial_loss(self) -> float:
        return self.losses[0] if self.losses else self.final_loss


def make_objective(net, pair: ImagePair, hf_size: int = HF_SIZE,
                   hf_sigma: float = HF_SIGMA) -> Callable[[], Tensor]:
    """The scalar training loss of ``net`` on ``pair``."""
    if isinstance(net, MFIFNet):
        masks = focus_masks(pair.guide, pair.target, hf_size, hf_sigma)
        return lambda: mfif_loss(net(pair.guide, pair.target)[0], pair.guide, pair.target, masks)
    if isinstance(net, SFIGF):
        if pair.ground_truth is None:
            raise ValueError("supervised training needs a ground truth")
        return lambda: l1_loss(net(pair.guide, pair.target).Q_Out, pair.ground_truth)
    raise TypeError(f"cannot train {type(net).__name__}")


def train(net, pair: ImagePair, steps: int, lr: float = DEFAULT_LR,
          log: Callable[[int, float], None] | None = None, log_every: int = 50,
          hf_size: int = HF_SIZE, hf_sigma: float = HF_SIGMA) -> TrainResult:
    """Adam on a single pair; ``losses[k]`` is the loss before update ``k``."""
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    objective = make_objective(net, pair, hf_size, hf_sigma)
    opt = Adam(net.parameters(), lr=lr)
    result = TrainResult()
    last = math.nan
    for step in range(steps):
        opt.zero_grad()
        loss = objective()
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step, last)
        result.losses.append(value)
        last = value
        if log is not None and step % log_every == 0:
            log(step, value)
        loss.backward()
        opt.step()
    with no_grad():
        result.final_loss = objective().item()
    if not math.isfinite(result.final_loss):
        raise TrainingDiverged(steps, last)
    if log is not None:
        log(steps, result.final_loss)
    return result
