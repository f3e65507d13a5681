import math

import numpy as np
import pytest

from sfigf import data
from sfigf.network import MFIFNet, SFIGF, SFIGFConfig
from sfigf.selftest import get_check, run_check
from sfigf.tensor import no_grad
from sfigf.train import TrainingDiverged, make_objective, train

SMALL = SFIGFConfig(base_channels=4, num_scales=1)


def gdsr(size=16, seed=0):
    return data.make_gdsr_pair(data.SyntheticSceneSpec(size=size, seed=seed), 4)


def test_trace_is_reproducible():
    runs = [train(SFIGF(SMALL), gdsr(), 5) for _ in range(2)]
    assert runs[0].losses == runs[1].losses
    assert runs[0].final_loss == runs[1].final_loss


def test_losses_recorded_before_each_update():
    net, pair = SFIGF(SMALL), gdsr()
    with no_grad():
        before = make_objective(net, pair)().item()
    res = train(net, pair, 3)
    assert len(res.losses) == 3
    assert res.losses[0] == before
    assert res.initial_loss == before


def test_zero_steps_reports_current_loss():
    res = train(SFIGF(SMALL), gdsr(), 0)
    assert res.losses == []
    assert math.isfinite(res.final_loss) and res.initial_loss == res.final_loss


def test_short_training_reduces_loss():
    res = train(SFIGF(SMALL), gdsr(), 20)
    assert res.final_loss < res.initial_loss


def test_divergence_is_reported():
    pair = gdsr()
    pair.target[0, 0, 0] = np.nan
    with pytest.raises(TrainingDiverged) as exc:
        train(SFIGF(SMALL), pair, 3)
    assert exc.value.step == 0


def test_supervised_needs_ground_truth():
    pair = gdsr()
    pair.ground_truth = None
    with pytest.raises(ValueError):
        train(SFIGF(SMALL), pair, 1)


def test_mfif_training_runs():
    pair = data.make_mfif_pair(data.SyntheticSceneSpec(size=16, seed=1))
    cfg = SFIGFConfig(base_channels=4, num_scales=1, in_channels_i=1)
    res = train(MFIFNet(cfg), pair, 3)
    assert len(res.losses) == 3 and math.isfinite(res.final_loss)


def test_negative_steps_rejected():
    with pytest.raises(ValueError):
        train(SFIGF(SMALL), gdsr(), -1)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="300 steps do not reach a reconstruction RMSE below 0.02")
def test_overfit_checkpoint_reaches_target_rmse():
    result = run_check(get_check("overfit-infer-rmse"))
    print(result.line())
    assert result.passed
