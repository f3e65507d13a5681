"""Oracle checks runnable from the command line and from the test suite.

Checks tagged with a criterion number form the acceptance gate; the rest
cross-check individual components against independent references.
"""

from __future__ import annotations

import io
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import data, losses, metrics
from .guided_filter import (
    GuidedFilterConfig, box_mean, filter_image, guided_filter, guided_filter_color, naive_guided_filter,
)
from .gradcheck import check_gradients, network_gradcheck, projection_loss, relative_error
from .network import MFIFNet, SFIGF, SFIGFConfig, channel_audit, load_checkpoint, save_checkpoint
from .nn.attention import AttentionWeights, NeighborhoodSpec, cross_attention, self_attention
from .nn.module import Rng
from .tensor import Tensor, no_grad
from .train import DEFAULT_LR, train

Outcome = tuple[bool, str]


@dataclass
class Check:
    name: str
    criterion: int | None
    fn: Callable[[], Outcome]
    slow: bool = False
    known_gap: bool = False


@dataclass
class CheckResult:
    name: str
    criterion: int | None
    passed: bool
    detail: str
    seconds: float
    known_gap: bool = False

    def line(self) -> str:
        tag = f"[{self.criterion}] " if self.criterion else ""
        status = "PASS" if self.passed else ("GAP " if self.known_gap else "FAIL")
        return f"{status} {tag}{self.name}: {self.detail} ({self.seconds:.2f}s)"


CHECKS: list[Check] = []


def check(name: str, criterion: int | None = None, slow: bool = False, known_gap: bool = False):
    """Register an oracle; ``known_gap`` marks a target measured but not met."""
    def register(fn):
        CHECKS.append(Check(name, criterion, fn, slow, known_gap))
        return fn
    return register


def get_check(name: str) -> Check:
    for c in CHECKS:
        if c.name == name:
            return c
    raise KeyError(f"no check named {name!r}")


def run_check(c: Check) -> CheckResult:
    start = time.perf_counter()
    try:
        passed, detail = c.fn()
    except Exception as exc:  # a crashing oracle is a failed oracle
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return CheckResult(c.name, c.criterion, bool(passed), detail, time.perf_counter() - start, c.known_gap)


def run_selftest(names: list[str] | None = None, skip_slow: bool = False,
                 log: Callable[[str], None] | None = print) -> list[CheckResult]:
    chosen = [get_check(n) for n in names] if names else [c for c in CHECKS if not (skip_slow and c.slow)]
    results = []
    for c in chosen:
        r = run_check(c)
        if log is not None:
            log(r.line())
        results.append(r)
    return results


# ------------------------------------------------------------------ acceptance

GF_RADII = (0, 1, 2, 4)
GF_EPSILONS = (0.0, 1e-4, 1e-2, 1.0)


@check("gf-fast-vs-naive", criterion=1)
def gf_fast_vs_naive(pairs: int = 100, size: int = 16) -> Outcome:
    rng = np.random.default_rng(1)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(pairs):
        I, P = rng.random((size, size)), rng.random((size, size))
        for r in GF_RADII:
            for eps in GF_EPSILONS:
                cfg = GuidedFilterConfig(r, eps)
                fast, _ = guided_filter(I, P, cfg)
                slow, _ = naive_guided_filter(I, P, cfg)
                worst = max(worst, float(np.abs(fast - slow).max()))
    elapsed = time.perf_counter() - start
    return worst < 1e-9 and elapsed < 5.0, f"max abs err {worst:.2e}, {elapsed:.2f}s over {pairs} pairs × 16 settings"


@check("gf-identities", criterion=2)
def gf_identities() -> Outcome:
    rng = np.random.default_rng(2)
    P = rng.random((16, 16))
    q, _ = guided_filter(P, P, GuidedFilterConfig(2, 0.0))
    err_a = float(np.abs(q - P).max())
    I = np.full((16, 16), 0.37)
    cfg = GuidedFilterConfig(2, 1e-3)
    q, _ = guided_filter(I, P, cfg)
    # every window has a = 0 and b = its mean of P; averaging b over windows gives the box mean twice
    expected = box_mean(box_mean(P, 2), 2)
    err_b = float(np.abs(q - expected).max())
    return err_a < 1e-12 and err_b < 1e-12, f"I=P: {err_a:.1e}; constant I: {err_b:.1e}"


@check("attention", criterion=3)
def attention_checks() -> Outcome:
    rng = Rng(3)
    w = AttentionWeights(6, 4, rng)
    gen = np.random.default_rng(3)
    x = Tensor(gen.standard_normal((64, 6)))
    y = Tensor(gen.standard_normal((64, 6)))
    worst_row = 0.0
    for spec in (None, NeighborhoodSpec(3), NeighborhoodSpec(7)):
        _, amap = cross_attention(x, y, w, spec, (8, 8), return_attention=True)
        worst_row = max(worst_row, float(np.abs(amap.weights.sum(axis=1) - 1).max()))
    one_x, one_y = Tensor(gen.standard_normal((1, 6))), Tensor(gen.standard_normal((1, 6)))
    single = cross_attention(one_x, one_y, w).data
    single_ok = np.array_equal(single, one_y.data @ w.wv.data)
    glob = self_attention(x, w).data
    covered = self_attention(x, w, NeighborhoodSpec(9), (8, 8)).data
    bitwise = np.array_equal(glob, covered)
    ok = worst_row < 1e-12 and single_ok and bitwise
    return ok, f"row-sum err {worst_row:.1e}; single token exact={single_ok}; covering window bitwise={bitwise}"


@check("network-gradcheck", criterion=4, slow=True)
def network_gradient_audit() -> Outcome:
    rep = network_gradcheck(base_channels=4, num_scales=2, size=16, samples_per_group=20)
    per = ", ".join(f"{k} {max(v):.1e}" for k, v in rep.errors.items())
    ok = rep.passed and rep.seconds < 60 and all(len(v) >= 20 for v in rep.errors.values())
    return ok, f"max rel err {rep.max_error():.2e} ({per}); {rep.seconds:.1f}s"


def overfit_run(steps: int = 300, size: int = 32, lr: float = DEFAULT_LR, seed: int = 0):
    pair = data.make_gdsr_pair(data.SyntheticSceneSpec(size=size, seed=seed), 4)
    net = SFIGF(SFIGFConfig(seed=seed))
    return net, pair, train(net, pair, steps, lr)


_overfit_cache: dict[str, tuple] = {}


def _timed_overfit() -> tuple:
    # the first run is shared with the checkpoint-consistency check
    if "run" not in _overfit_cache:
        start = time.perf_counter()
        run = overfit_run()
        _overfit_cache["run"] = (*run, time.perf_counter() - start)
    return _overfit_cache["run"]


@check("overfit", criterion=5, slow=True)
def overfit_smoke() -> Outcome:
    _, _, first, elapsed = _timed_overfit()
    _, _, second = overfit_run()
    ratio = first.final_loss / first.initial_loss
    same = first.losses == second.losses and first.final_loss == second.final_loss
    ok = ratio < 0.1 and same and elapsed < 300
    return ok, (f"L1 {first.initial_loss:.4f} -> {first.final_loss:.4f} (ratio {ratio:.3f}); "
                f"repeat identical={same}; {elapsed:.1f}s per run")


@check("mfif-masks", criterion=6)
def mfif_masks() -> Outcome:
    rng = np.random.default_rng(6)
    partition = True
    for _ in range(50):
        a, b = rng.random((1, 24, 24)), rng.random((1, 24, 24))
        m = losses.focus_masks(a, b)
        partition &= bool(np.all(m.s1 + m.s2 == 1) and np.all(m.s1 * m.s2 == 0))
    agreements = []
    for seed in range(10):
        pair = data.make_mfif_pair(data.SyntheticSceneSpec(size=64, seed=seed))
        m = losses.focus_masks(pair.guide, pair.target)
        agreements.append(data.mask_agreement(m.s1, pair.focus_mask, band=3))
    worst = min(agreements)
    return partition and worst >= 0.9, f"partition holds={partition}; worst agreement {worst:.3f} over 10 scenes"


@check("metric-analytic", criterion=7)
def metric_analytic() -> Outcome:
    rng = np.random.default_rng(7)
    a = rng.random((3, 32, 32))
    s = metrics.ssim(a, a)
    b = rng.uniform(0.0, 0.9, (1, 32, 32))
    p = metrics.psnr(b + 0.1, b, peak=1.0)
    u = np.zeros((2, 8, 8))
    v = np.zeros((2, 8, 8))
    u[0], v[1] = 1.0, 1.0
    angle = metrics.sam(u, v)
    ok = abs(s - 1) <= 1e-12 and abs(p - 20.0) <= 1e-9 and abs(angle - math.pi / 2) <= 1e-12
    return ok, f"ssim(a,a)-1 {s - 1:.1e}; psnr {p:.12f}; sam-π/2 {angle - math.pi / 2:.1e}"


@check("channel-schedule", criterion=8)
def channel_schedule() -> Outcome:
    bad = []
    rows = 0
    for n in (4, 8, 16):
        audit = channel_audit(SFIGF(SFIGFConfig(base_channels=n, num_scales=4)))
        rows += len(audit)
        bad += [f"n={n} {r.row}: {r.actual} != {r.expected}" for r in audit if not r.ok]
    return not bad, f"{rows} rows checked" + (f"; {bad[0]}" if bad else "")


@check("imgf-reconstruction", criterion=9)
def imgf_reconstruction() -> Outcome:
    worst = 0.0
    gen = np.random.default_rng(9)
    for seed, (ci, co) in enumerate([(3, 1), (1, 1), (3, 3)]):
        cfg = SFIGFConfig(base_channels=4, in_channels_i=ci, in_channels_p=co, out_channels=co, seed=seed)
        net = SFIGF(cfg)
        with no_grad():
            r = net(gen.random((ci, 12, 12)), gen.random((co, 12, 12)))
        worst = max(worst, float(np.abs(r.Q_Im.data - (r.A_Im.data * r.I_reduced.data + r.B_Im.data)).max()))
    return worst == 0.0, f"max |Q_Im - (A∘I + B)| = {worst}"


# ------------------------------------------------------------------ component oracles

@check("box-mean-double-loop")
def box_mean_double_loop() -> Outcome:
    img = np.random.default_rng(11).random((16, 16))
    r = 2
    ref = np.empty_like(img)
    for y in range(16):
        for x in range(16):
            win = img[max(0, y - r): y + r + 1, max(0, x - r): x + r + 1]
            ref[y, x] = win.sum() / win.size
    err = float(np.abs(box_mean(img, r) - ref).max())
    return err < 1e-10, f"max abs err {err:.1e}"


def windowed_least_squares(I: np.ndarray, P: np.ndarray, r: int, eps: float) -> np.ndarray:
    """Solve every window's ridge line fit with lstsq, then average per pixel."""
    h, w = I.shape
    a = np.zeros((h, w))
    b = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            sl = (slice(max(0, y - r), y + r + 1), slice(max(0, x - r), x + r + 1))
            iw, pw = I[sl].ravel(), P[sl].ravel()
            design = np.column_stack([iw, np.ones_like(iw)])
            design = np.vstack([design, [math.sqrt(iw.size * eps), 0.0]])
            sol = np.linalg.lstsq(design, np.append(pw, 0.0), rcond=None)[0]
            a[y, x], b[y, x] = sol
    A, B = box_mean(a, r), box_mean(b, r)
    return A * I + B


@check("gf-window-least-squares")
def gf_window_least_squares() -> Outcome:
    gen = np.random.default_rng(12)
    I, P = gen.random((8, 8)), gen.random((8, 8))
    ref = windowed_least_squares(I, P, 1, 0.01)
    fast, _ = guided_filter(I, P, GuidedFilterConfig(1, 0.01))
    err = float(np.abs(fast - ref).max())
    return err < 1e-10, f"max abs err {err:.1e}"


@check("gf-color-composition")
def gf_color_composition() -> Outcome:
    gen = np.random.default_rng(13)
    G, P = gen.random((3, 12, 12)), gen.random((12, 12))
    cfg = GuidedFilterConfig(2, 1e-3)
    outs = [guided_filter(G[c], P, cfg)[0] for c in range(3)]
    same = np.array_equal(guided_filter_color(G, P, cfg), (outs[0] + outs[1] + outs[2]) / 3.0)
    return same, f"exact match={same}"


@check("gf-filter-paths")
def gf_filter_paths() -> Outcome:
    gen = np.random.default_rng(14)
    G, P = gen.random((3, 20, 20)), gen.random((1, 20, 20))
    cfg = GuidedFilterConfig(2, 1e-4)
    fast, _ = filter_image(G, P, cfg)
    slow, _ = filter_image(G, P, cfg, naive=True)
    err = float(np.abs(fast - slow).max())
    return err < 1e-9, f"max abs err {err:.1e}"


@check("l1-gradient")
def l1_gradient() -> Outcome:
    gen = np.random.default_rng(15)
    target = gen.random((2, 5, 5))
    pred = Tensor(target + gen.choice([-1.0, 1.0], target.shape) * gen.uniform(0.1, 0.5, target.shape),
                  requires_grad=True)
    losses.l1_loss(pred, target).backward()
    analytic = np.sign(pred.data - target) / target.size
    h = 1e-6
    worst = 0.0
    for idx in np.ndindex(target.shape):
        d = np.zeros_like(target)
        d[idx] = h
        up = losses.l1_loss(Tensor(pred.data + d), target).item()
        down = losses.l1_loss(Tensor(pred.data - d), target).item()
        worst = max(worst, relative_error(pred.grad[idx], (up - down) / (2 * h)))
    exact = np.array_equal(pred.grad, analytic)
    return worst < 1e-6 and exact, f"max rel err {worst:.1e}; sign/N exact={exact}"


@check("hf-kernel-sum")
def hf_kernel_sum() -> Outcome:
    total = float(losses.gaussian_kernel().sum())
    return abs(total - 1) < 1e-12, f"sum - 1 = {total - 1:.1e}"


@check("mfif-loss-gradient")
def mfif_loss_gradient() -> Outcome:
    gen = np.random.default_rng(16)
    I1, I2 = gen.random((1, 10, 10)), gen.random((1, 10, 10))
    q = Tensor(gen.random((1, 10, 10)), requires_grad=True)
    rep = check_gradients(lambda: losses.mfif_loss(q, I1, I2), {"Q_out": [q]}, samples_per_group=30)
    return rep.passed, f"max rel err {rep.max_error():.1e}"


@check("bicubic-ramp")
def bicubic_ramp() -> Outcome:
    ramp = np.tile(0.3 + 0.02 * np.arange(32.0), (32, 1))
    down = data.bicubic_resize(ramp, 0.5)
    x_in = (np.arange(16) + 0.5) * 2 - 0.5
    expected = np.tile(0.3 + 0.02 * x_in, (16, 1))
    err = float(np.abs(down - expected)[3:-3, 3:-3].max())
    return err < 1e-10, f"interior max abs err {err:.1e}"


@check("gdsr-edge-overlap")
def gdsr_edge_overlap() -> Outcome:
    worst = min(data.edge_overlap(data.make_gdsr_pair(data.SyntheticSceneSpec(seed=s))) for s in range(10))
    return worst >= 0.8, f"worst overlap {worst:.3f} over 10 scenes"


@check("girt-bytes")
def girt_bytes() -> Outcome:
    from .girt import read_girt_stream, write_girt_stream

    arr = np.random.default_rng(17).standard_normal((2, 3, 5))
    arr[0, 0, 0] = -0.0
    buf = io.BytesIO()
    write_girt_stream(buf, arr)
    back = read_girt_stream(io.BytesIO(buf.getvalue()))
    same = back.tobytes() == arr.tobytes()
    return same, f"f64 bytes preserved={same}"


@check("checkpoint-bytes")
def checkpoint_bytes() -> Outcome:
    net = SFIGF(SFIGFConfig(base_channels=4))
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a.girc"), Path(tmp, "b.girc")
        save_checkpoint(net, a)
        save_checkpoint(net, b)
        same = a.read_bytes() == b.read_bytes()
    return same, f"two saves byte-identical={same}"


@check("mfif-swap")
def mfif_swap() -> Outcome:
    cfg = SFIGFConfig(base_channels=4, in_channels_i=1, in_channels_p=1, out_channels=1, seed=5)
    net = MFIFNet(cfg)
    other = net.swapped()
    gen = np.random.default_rng(18)
    I1, I2 = gen.random((1, 12, 12)), gen.random((1, 12, 12))
    with no_grad():
        q, _, _ = net(I1, I2)
        q_swap, _, _ = other(I2, I1)
    err = float(np.abs(q.data - q_swap.data).max())
    return err < 1e-12, f"max abs diff {err:.1e}"


@check("mfif-fusion-gradcheck")
def mfif_fusion_gradcheck() -> Outcome:
    cfg = SFIGFConfig(base_channels=4, in_channels_i=1, in_channels_p=1, out_channels=1, seed=4)
    net = MFIFNet(cfg)
    gen = np.random.default_rng(19)
    I1, I2 = gen.random((1, 8, 8)), gen.random((1, 8, 8))
    loss = projection_loss(lambda: net(I1, I2)[0], (1, 8, 8))
    rep = check_gradients(loss, {"fuse": net.fuse.parameters()}, samples_per_group=19)
    return rep.passed, f"max rel err {rep.max_error():.1e} over {len(rep.errors['fuse'])} scalars"


@check("cmfe-gradcheck")
def cmfe_gradcheck() -> Outcome:
    cfg = SFIGFConfig(base_channels=4, num_scales=2)
    net = SFIGF(cfg)
    gen = np.random.default_rng(20)
    I, P = gen.random((3, 8, 8)), gen.random((1, 8, 8))
    weights = [Tensor(gen.standard_normal((4 * 2**t, 8 >> t, 8 >> t))) for t in range(2)]

    def loss():
        from .tensor import add, mul, tsum
        feats = net.cmfe(Tensor(I), Tensor(P))
        total = None
        for t in range(2):
            for f in (feats.i[t], feats.p[t], feats.ip[t]):
                term = tsum(mul(f, weights[t]))
                total = term if total is None else add(total, term)
        return total

    rep = check_gradients(loss, {"cmfe": net.cmfe.parameters()}, samples_per_group=30)
    return rep.passed, f"max rel err {rep.max_error():.1e}"


@check("overfit-infer-rmse", slow=True, known_gap=True)
def overfit_infer_rmse() -> Outcome:
    net, pair, _, _ = _timed_overfit()
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "overfit.ckpt"
        save_checkpoint(net, path)
        restored = load_checkpoint(path)
    with no_grad():
        q = restored(pair.guide, pair.target).Q_Out.data
    err = metrics.rmse(q, pair.ground_truth)
    base = metrics.rmse(pair.target, pair.ground_truth)
    return err < 0.02, f"rmse {err:.4f} vs target 0.02 (degraded input {base:.4f})"
