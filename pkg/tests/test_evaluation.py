import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgenet.checkpoint import save_checkpoint
from bridgenet.errors import CheckpointError, ConfigError, DataError
from bridgenet.evaluation import (EvalResult, bicubic_predictor, evaluate_model, evaluate_samples,
                                  export_visuals, format_eval, mad, model_predictor,
                                  read_prediction, rmse, write_json)
from bridgenet.synthetic import make_sample
from bridgenet.training import TrainConfig, Trainer
from conftest import TINY
from oracles import l1_oracle, rmse_oracle


def test_metric_cases(rng):
    gt = rng.random((4, 4))
    assert mad(gt, gt) == 0.0 and rmse(gt, gt) == 0.0
    assert mad(gt + 1 / 255, gt, native_scale=255.0) == pytest.approx(1.0)
    assert rmse(gt + 0.3, gt) == pytest.approx(0.3)
    p = rng.random((4, 4))
    assert mad(p, gt) == pytest.approx(l1_oracle(p, gt), abs=1e-12)
    assert rmse(p, gt) == pytest.approx(rmse_oracle(p, gt), abs=1e-12)
    with pytest.raises(DataError):
        mad(p, gt, np.zeros((4, 4), bool))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mad_not_above_rmse_and_mask_respected(seed):
    r = np.random.default_rng(seed)
    p, g = r.random((6, 5)), r.random((6, 5))
    mask = r.random((6, 5)) > 0.3
    mask[0, 0] = True
    assert mad(p, g, mask) <= rmse(p, g, mask) + 1e-12
    flipped = p.copy()
    flipped[~mask] = r.random((~mask).sum())
    assert mad(flipped, g, mask) == mad(p, g, mask)
    assert rmse(flipped, g, mask) == rmse(p, g, mask)


def test_average_over_images():
    res = EvalResult("MAD", 8, [("a", 0.2), ("b", 0.4)])
    assert res.average == pytest.approx(0.3)
    assert res.to_dict("full")["average"] == pytest.approx(0.3)


def _samples(n=2, size=64):
    return [make_sample(size, size, seed=50 + k, sample_id=f"t{k}") for k in range(n)]


def test_perfect_prediction_scores_zero():
    res = evaluate_samples(lambda s, scale: s.depth_hr, _samples(), 4)
    assert [v for _, v in res["MAD"].per_image] == [0.0, 0.0]
    assert res["MAD"].average == 0.0


def test_evaluation_is_idempotent_and_sorted():
    samples = _samples(3)[::-1]
    a = evaluate_samples(bicubic_predictor, samples, 4)
    b = evaluate_samples(bicubic_predictor, samples, 4)
    assert format_eval(a) == format_eval(b)
    assert [sid for sid, _ in a["MAD"].per_image] == ["t0", "t1", "t2"]


def test_checkpoint_scale_mismatch(tmp_path):
    tr = Trainer(TrainConfig(scale=4, model=TINY))
    path = save_checkpoint(tr, tmp_path / "c.ckpt")
    with pytest.raises(CheckpointError):
        evaluate_model(path, _samples(1), 8)
    res = evaluate_model(path, _samples(1), 4)
    # An untrained model (zero output conv on the global residual) is exactly bicubic.
    ref = evaluate_samples(bicubic_predictor, _samples(1), 4)
    assert res["MAD"].average == pytest.approx(ref["MAD"].average, abs=1e-4)


def test_export_round_trip(tmp_path):
    tr = Trainer(TrainConfig(scale=4, model=TINY))
    predict = model_predictor(tr.model)
    samples = _samples(2)
    paths, logged = export_visuals(predict, samples, 4, tmp_path)
    assert len(paths) == 3 * len(samples)
    assert sorted(p.name for p in (tmp_path / "4").iterdir()) == sorted(p.name for p in paths)
    for s in samples:
        pred = read_prediction(tmp_path / "4" / f"{s.sample_id}_pred.png")
        again = mad(pred, s.depth_hr, s.valid_mask, s.native_scale)
        assert abs(again - logged[s.sample_id]) <= s.native_scale / 65535


def test_export_empty_split_warns(tmp_path):
    with pytest.warns(UserWarning):
        paths, _ = export_visuals(bicubic_predictor, [], 4, tmp_path)
    assert paths == [] and not (tmp_path / "4").exists()


def test_write_json_fields(tmp_path):
    res = evaluate_samples(bicubic_predictor, _samples(1), 4)
    write_json(tmp_path / "r.json", [r.to_dict("bicubic") for r in res.values()])
    rows = json.loads((tmp_path / "r.json").read_text())
    assert set(rows[0]) == {"variant", "scale", "metric", "per_image", "average"}


def test_indivisible_image_rejected():
    s = make_sample(40, 40, seed=1)
    with pytest.raises(ConfigError):
        bicubic_predictor(s, 16)
