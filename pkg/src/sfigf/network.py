"""The fusion network: feature pyramid, feature/image-level guided fusion, output head.

Layer widths follow a base channel count ``n``; scale ``t`` (0-based, full
resolution at ``t = 0``) carries ``n·2^t`` channels at ``ceil(H/2^t)`` rows.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import functional as F
from .girt import FormatError, read_container, write_container
from .nn.blocks import CPA, ConvStack, GICABlock, NAFBlock, UpsampleBlock
from .nn.module import Conv2d, Module, Rng
from .tensor import Tensor, add, as_tensor, concat, getitem, mul

CONFIG_KEYS = ("base_channels", "num_scales", "window", "in_channels_p", "in_channels_i",
               "out_channels", "seed")


@dataclass(frozen=True)
class SFIGFConfig:
    base_channels: int = 8
    num_scales: int = 2
    window: int = 7
    in_channels_p: int = 1
    in_channels_i: int = 3
    out_channels: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be positive, got {self.base_channels}")
        if not 1 <= self.num_scales <= 4:
            raise ValueError(f"num_scales must be in [1, 4], got {self.num_scales}")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")
        for name in ("in_channels_p", "in_channels_i", "out_channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def channels(self, scale: int) -> int:
        return self.base_channels * 2**scale

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "SFIGFConfig":
        unknown = sorted(set(values) - set(CONFIG_KEYS))
        if unknown:
            raise ValueError(f"unknown config key {unknown[0]!r}")
        try:
            kwargs = {k: int(v) for k, v in values.items()}
        except ValueError as exc:
            raise ValueError(f"config values must be integers: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "SFIGFConfig":
        from .girt import parse_header

        return cls.from_mapping(parse_header(text))

    @classmethod
    def load(cls, path) -> "SFIGFConfig":
        return cls.from_text(Path(path).read_text())


@dataclass
class MultiScaleFeatures:
    i: list[Tensor]
    p: list[Tensor]
    ip: list[Tensor]

    @property
    def num_scales(self) -> int:
        return len(self.i)


@dataclass
class FusionResult:
    Q_Im: Tensor
    q_Fe: Tensor
    Q_Out: Tensor
    A_Im: Tensor
    B_Im: Tensor
    I_reduced: Tensor
    features: MultiScaleFeatures | None = None
    q: list[Tensor] = field(default_factory=list)
    b: list[Tensor] = field(default_factory=list)


def _crop(x: Tensor, height: int, width: int) -> Tensor:
    if x.shape[1:] == (height, width):
        return x
    return getitem(x, (slice(None), slice(0, height), slice(0, width)))


class CMFEBlock(Module):
    """One scale of the coupled extractor: per-source NAF paths plus a shared path."""

    def __init__(self, channels: int, rng: Rng):
        c = channels
        self.naf_i = NAFBlock(2 * c, rng, out_channels=c)
        self.naf_p = NAFBlock(2 * c, rng, out_channels=c)
        self.shared = Conv2d(2 * c, c, 3, rng)

    def forward(self, i: Tensor, p: Tensor, ip: Tensor):
        i_out = add(self.naf_i(concat([i, ip], axis=0)), i)
        p_out = add(self.naf_p(concat([p, ip], axis=0)), p)
        ip_out = F.gelu(self.shared(concat([i, p], axis=0)))
        return i_out, p_out, ip_out


class Downsample(Module):
    """3×3 conv doubling the channels, then 2×2 average pooling."""

    def __init__(self, channels: int, rng: Rng):
        self.conv = Conv2d(channels, 2 * channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return F.avg_pool2(self.conv(x))


class CMFE(Module):
    def __init__(self, cfg: SFIGFConfig, rng: Rng):
        n = cfg.base_channels
        self.init_i = Conv2d(cfg.in_channels_i, n, 3, rng)
        self.init_p = Conv2d(cfg.in_channels_p, n, 3, rng)
        self.init_ip = Conv2d(cfg.in_channels_i + cfg.in_channels_p, n, 3, rng)
        self.blocks = [CMFEBlock(cfg.channels(t), rng) for t in range(cfg.num_scales)]
        self.down_i = [Downsample(cfg.channels(t), rng) for t in range(cfg.num_scales - 1)]
        self.down_p = [Downsample(cfg.channels(t), rng) for t in range(cfg.num_scales - 1)]
        self.down_ip = [Downsample(cfg.channels(t), rng) for t in range(cfg.num_scales - 1)]

    def forward(self, I: Tensor, P: Tensor) -> MultiScaleFeatures:
        if I.shape[1:] != P.shape[1:]:
            raise ValueError(f"guide {I.shape} and input {P.shape} are not spatially aligned")
        i = F.gelu(self.init_i(I))
        p = F.gelu(self.init_p(P))
        ip = F.gelu(self.init_ip(concat([I, P], axis=0)))
        feats = MultiScaleFeatures([], [], [])
        for t, block in enumerate(self.blocks):
            i, p, ip = block(i, p, ip)
            feats.i.append(i)
            feats.p.append(p)
            feats.ip.append(ip)
            if t < len(self.down_i):
                i, p, ip = self.down_i[t](i), self.down_p[t](p), self.down_ip[t](ip)
        return feats


class FeGF(Module):
    """GICA fusion at every scale, aggregated coarse to fine.

    The incoming coarser tensor (``Cat[i, p]`` at the coarsest scale, the
    previous upsample output elsewhere) carries ``2·c_t`` channels and is
    projected to ``c_t`` by a 1×1 bridge before the attention concatenation.
    """

    def __init__(self, cfg: SFIGFConfig, rng: Rng):
        n = cfg.base_channels
        scales = range(cfg.num_scales)
        self.gica = [GICABlock(cfg.channels(t), rng, cfg.window) for t in scales]
        self.bridge = [Conv2d(2 * cfg.channels(t), cfg.channels(t), 1, rng) for t in scales]
        self.cpa = [CPA(cfg.channels(t), cfg.channels(t), rng) for t in scales]
        self.upsample = [UpsampleBlock(2 * cfg.channels(t), rng) for t in range(1, cfg.num_scales)]
        self.head = ConvStack([2 * n, n, n], rng)

    def forward(self, feats: MultiScaleFeatures):
        if not (len(feats.i) == len(feats.p) == len(self.gica)):
            raise ValueError(
                f"pyramid has {len(feats.i)}/{len(feats.p)} scales, module expects {len(self.gica)}"
            )
        qs, bs = [], []
        for t, block in enumerate(self.gica):
            q, b = block(feats.p[t], feats.i[t])
            qs.append(q)
            bs.append(b)
        top = len(qs) - 1
        carry = concat([feats.i[top], feats.p[top]], axis=0)
        for t in range(top, -1, -1):
            x = self.cpa[t](qs[t], self.bridge[t](carry))
            if t == 0:
                return self.head(x), qs, bs
            _, h, w = qs[t - 1].shape
            carry = _crop(self.upsample[t - 1](x), h, w)
        raise AssertionError("unreachable")


class ImGF(Module):
    """Image-level fusion ``Q = A ∘ I_reduced + B`` with learned coefficient maps."""

    def __init__(self, cfg: SFIGFConfig, rng: Rng):
        n, ci, cp, co = cfg.base_channels, cfg.in_channels_i, cfg.in_channels_p, cfg.out_channels
        self.f_a = ConvStack([2 * n + ci, n, n, co], rng)
        self.f_b = ConvStack([co + cp + ci, n, n, co], rng)
        self.guide_proj = Conv2d(ci, co, 1, rng) if ci != co else None

    def forward(self, I: Tensor, P: Tensor, feats: MultiScaleFeatures):
        A = self.f_a(concat([feats.i[0], feats.p[0], I], axis=0))
        B = self.f_b(concat([A, P, I], axis=0))
        I_red = self.guide_proj(I) if self.guide_proj is not None else I
        return add(mul(A, I_red), B), A, B, I_red


class OutputHead(Module):
    def __init__(self, image_channels: int, feature_channels: int, out_channels: int, rng: Rng):
        c = image_channels + feature_channels
        self.gate = CPA(image_channels, feature_channels, rng)
        self.conv1 = Conv2d(c, c, 3, rng)
        self.conv2 = Conv2d(c, out_channels, 3, rng)

    def forward(self, Q_im: Tensor, q_fe: Tensor) -> Tensor:
        return self.conv2(F.gelu(self.conv1(self.gate(Q_im, q_fe))))


class SFIGF(Module):
    """Guided restoration of ``P`` (``C_P×H×W``) with guidance ``I`` (``C_I×H×W``)."""

    kind = "sfigf"

    def __init__(self, cfg: SFIGFConfig = SFIGFConfig(), rng: Rng | None = None):
        self.config = cfg
        rng = Rng(cfg.seed) if rng is None else rng
        self.cmfe = CMFE(cfg, rng)
        self.fegf = FeGF(cfg, rng)
        self.imgf = ImGF(cfg, rng)
        self.head = OutputHead(cfg.out_channels, cfg.base_channels, cfg.out_channels, rng)

    def forward(self, I, P) -> FusionResult:
        I, P = as_tensor(I), as_tensor(P)
        cfg = self.config
        if I.ndim != 3 or I.shape[0] != cfg.in_channels_i:
            raise ValueError(f"guide must be {cfg.in_channels_i}×H×W, got {I.shape}")
        if P.ndim != 3 or P.shape[0] != cfg.in_channels_p:
            raise ValueError(f"input must be {cfg.in_channels_p}×H×W, got {P.shape}")
        feats = self.cmfe(I, P)
        q_fe, qs, bs = self.fegf(feats)
        Q_im, A, B, I_red = self.imgf(I, P, feats)
        Q_out = self.head(Q_im, q_fe)
        return FusionResult(Q_im, q_fe, Q_out, A, B, I_red, feats, qs, bs)


class MFIFNet(Module):
    """Two independently parameterized branches that guide each other."""

    kind = "mfif"

    def __init__(self, cfg: SFIGFConfig, rng: Rng | None = None):
        self.config = cfg
        rng = Rng(cfg.seed) if rng is None else rng
        self.branch1 = SFIGF(cfg, rng.spawn())
        self.branch2 = SFIGF(cfg, rng.spawn())
        self.fuse = Conv2d(2 * cfg.out_channels, cfg.out_channels, 3, rng)

    def forward(self, I1, I2) -> tuple[Tensor, Tensor, Tensor]:
        I1, I2 = as_tensor(I1), as_tensor(I2)
        if I1.shape != I2.shape:
            raise ValueError(f"MFIF inputs differ in shape: {I1.shape} vs {I2.shape}")
        q1 = self.branch1(I1, I2).Q_Out
        q2 = self.branch2(I2, I1).Q_Out
        return self.fuse(concat([q1, q2], axis=0)), q1, q2

    def swapped(self) -> "MFIFNet":
        """Copy with the branches exchanged and the fusion kernel's input halves swapped."""
        other = MFIFNet(self.config)
        state = self.state_dict()
        new_state = {}
        for name, value in state.items():
            if name.startswith("branch1."):
                new_state["branch2." + name[len("branch1."):]] = value
            elif name.startswith("branch2."):
                new_state["branch1." + name[len("branch2."):]] = value
            else:
                new_state[name] = value
        co = self.config.out_channels
        w = new_state["fuse.weight"]
        new_state["fuse.weight"] = np.concatenate([w[:, co:], w[:, :co]], axis=1)
        other.load_state_dict(new_state)
        return other


MODEL_KINDS = {"sfigf": SFIGF, "mfif": MFIFNet}


def build_model(kind: str, cfg: SFIGFConfig) -> Module:
    try:
        return MODEL_KINDS[kind](cfg)
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None


def save_checkpoint(net: Module, path) -> None:
    header = {"model": net.kind, **asdict(net.config)}
    write_container(path, header, dict(net.state_dict()))


def load_checkpoint(path) -> Module:
    header, tensors = read_container(path)
    kind = header.pop("model", None)
    if kind is None:
        raise FormatError(f"{path}: checkpoint header has no model kind")
    net = build_model(kind, SFIGFConfig.from_mapping(header))
    net.load_state_dict(tensors)
    return net


def load_checkpoint_into(net: Module, path) -> None:
    """Load parameters into an existing network, checking every name and shape."""
    _, tensors = read_container(path)
    net.load_state_dict(tensors)


def module_groups(net: SFIGF) -> dict[str, Module]:
    return {"cmfe": net.cmfe, "fegf": net.fegf, "imgf": net.imgf, "head": net.head}


def config_fields() -> list[str]:
    return [f.name for f in fields(SFIGFConfig)]


@dataclass(frozen=True)
class AuditRow:
    row: str
    expected: tuple[int, int]
    actual: tuple[int, int]

    @property
    def ok(self) -> bool:
        return self.expected == self.actual


def _conv_io(w) -> tuple[int, int]:
    return int(w.shape[1]), int(w.shape[0])


def channel_audit(net: SFIGF) -> list[AuditRow]:
    """Compare constructed layer widths with the published channel schedule.

    Block rows are 1-based. ``C_in`` in the output rows is the channel count
    of ``Q_Im``. Each row reads the (input, output) width off the parameters
    that realize it.
    """
    cfg = net.config
    n, cq = cfg.base_channels, cfg.out_channels
    rows = [
        AuditRow("Initial conv layer (I)", (cfg.in_channels_i, n), _conv_io(net.cmfe.init_i.weight)),
        AuditRow("Initial conv layer (P)", (cfg.in_channels_p, n), _conv_io(net.cmfe.init_p.weight)),
    ]
    for t, block in enumerate(net.cmfe.blocks):
        c = cfg.channels(t)
        # per-source width in and out; the NAF input is that width concatenated with ip
        actual_in = block.naf_i.expand.weight.shape[1] // 2
        rows.append(AuditRow(f"CMFE Block {t + 1}", (c, c), (int(actual_in), int(block.naf_i.project.weight.shape[0]))))
        rows.append(AuditRow(f"CMFE Block {t + 1} (p)", (c, c),
                             (int(block.naf_p.expand.weight.shape[1] // 2), int(block.naf_p.project.weight.shape[0]))))
        rows.append(AuditRow(f"CMFE Block {t + 1} (ip)", (2 * c, c), _conv_io(block.shared.weight)))
    for t, down in enumerate(net.cmfe.down_i):
        c = cfg.channels(t)
        rows.append(AuditRow(f"Downsample {t + 1}", (c, 2 * c), _conv_io(down.conv.weight)))
    for t, block in enumerate(net.fegf.gica):
        c = cfg.channels(t)
        rows.append(AuditRow(f"FeGF Block {t + 1}", (2 * c, c), tuple(int(s) for s in block.sa.wv.shape)))
    for t, up in enumerate(net.fegf.upsample, start=1):
        c = cfg.channels(t)
        rows.append(AuditRow(f"Upsample Block {t + 1}", (c * 2, c), _conv_io(up.conv.weight)))
    rows.append(AuditRow("Output conv1", (cq + n, cq + n), _conv_io(net.head.conv1.weight)))
    rows.append(AuditRow("Output conv2", (cq + n, cfg.out_channels), _conv_io(net.head.conv2.weight)))
    return rows
