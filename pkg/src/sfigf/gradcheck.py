"""Central finite-difference audit of recorded gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .nn.module import Module, Parameter
from .tensor import Tensor, no_grad

REL_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    """``|a − n| / max(|a|, |n|, floor)``; the floor keeps near-zero gradients meaningful."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradcheckReport:
    errors: dict[str, list[float]] = field(default_factory=dict)
    seconds: float = 0.0
    tolerance: float = 1e-4

    def max_error(self, group: str | None = None) -> float:
        groups = [group] if group else list(self.errors)
        vals = [e for g in groups for e in self.errors[g]]
        return max(vals) if vals else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error() < self.tolerance

    def summary(self) -> str:
        lines = [f"{g}: {len(v)} samples, max rel err {max(v):.3e}" for g, v in self.errors.items()]
        lines.append(f"overall max rel err {self.max_error():.3e} ({self.seconds:.1f}s)")
        return "\n".join(lines)


def sample_scalars(params: list[Parameter], count: int, rng: np.random.Generator):
    """``count`` distinct (parameter, flat index) pairs drawn uniformly over all scalars."""
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    picks = rng.choice(total, size=min(count, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    out = []
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        out.append((params[k], int(flat - offsets[k])))
    return out


def check_gradients(
    loss_fn: Callable[[], Tensor],
    groups: dict[str, list[Parameter]],
    samples_per_group: int = 20,
    h: float = 1e-5,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> GradcheckReport:
    """Compare backprop gradients of ``loss_fn()`` with central differences."""
    start = time.perf_counter()
    all_params = [p for ps in groups.values() for p in ps]
    for p in all_params:
        p.grad = None
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    report = GradcheckReport(tolerance=tolerance)
    with no_grad():
        for name, params in groups.items():
            errs = []
            for p, idx in sample_scalars(params, samples_per_group, rng):
                analytic = 0.0 if p.grad is None else float(p.grad.reshape(-1)[idx])
                flat = p.data.reshape(-1)
                orig = flat[idx]
                flat[idx] = orig + h
                up = loss_fn().item()
                flat[idx] = orig - h
                down = loss_fn().item()
                flat[idx] = orig
                errs.append(relative_error(analytic, (up - down) / (2 * h)))
            report.errors[name] = errs
    report.seconds = time.perf_counter() - start
    return report


def projection_loss(output_fn: Callable[[], Tensor], shape, seed: int = 0) -> Callable[[], Tensor]:
    """Smooth scalar ``Σ out ∘ R`` for a fixed random ``R``."""
    from .tensor import mul, tsum

    weights = Tensor(np.random.default_rng(seed).standard_normal(shape))
    return lambda: tsum(mul(output_fn(), weights))


def network_gradcheck(
    base_channels: int = 4,
    num_scales: int = 2,
    size: int = 16,
    samples_per_group: int = 20,
    h: float = 1e-5,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> GradcheckReport:
    """Audit the full fusion network per submodule on a toy configuration."""
    from .network import SFIGF, SFIGFConfig, module_groups

    cfg = SFIGFConfig(base_channels=base_channels, num_scales=num_scales, seed=seed)
    net = SFIGF(cfg)
    rng = np.random.default_rng(seed + 1)
    I = rng.random((cfg.in_channels_i, size, size))
    P = rng.random((cfg.in_channels_p, size, size))
    loss = projection_loss(lambda: net(I, P).Q_Out, (cfg.out_channels, size, size), seed + 2)
    groups = {name: m.parameters() for name, m in module_groups(net).items()}
    return check_gradients(loss, groups, samples_per_group, h, seed, tolerance)


def module_gradcheck(module: Module, forward: Callable[[], Tensor], out_shape, **kwargs) -> GradcheckReport:
    loss = projection_loss(forward, out_shape, kwargs.pop("loss_seed", 0))
    return check_gradients(loss, {type(module).__name__: module.parameters()}, **kwargs)
