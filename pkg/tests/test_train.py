import csv

import numpy as np
import pytest

from nasaswin import checkpoint
from nasaswin import fusion
from nasaswin.errors import TrainingError
from nasaswin.evaluate import evaluate_arrays
from nasaswin.model import NasaSwin
from nasaswin.train import TrainConfig, epoch_order, total_steps, train_arrays


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    return rng.uniform(-1, 1, (6, 6, 32, 32)), np.array([0, 1, 0, 1, 1, 0])


def test_lr_zero_leaves_parameters_bit_identical(data):
    x, y = data
    m = NasaSwin(seed=1)
    before = {k: v.copy() for k, v in m.state_dict().items()}
    train_arrays(m, x, y, TrainConfig(lr=0.0, batch=2, max_steps=7))
    after = m.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_single_sample_overfits_in_200_steps():
    x = np.random.default_rng(2).uniform(-1, 1, (1, 6, 32, 32))
    m = NasaSwin(seed=0)
    train_arrays(m, x, np.array([1]), TrainConfig(batch=1, max_steps=200, cms_enabled=False))
    assert evaluate_arrays(m, x, [1], ["s"]).overall == 1.0


def test_identical_seeds_identical_curves_and_checkpoints(data, tmp_path):
    x, y = data
    cfg = TrainConfig(lr=0.01, batch=4, epochs=2, seed=5)
    a = train_arrays(NasaSwin(seed=5), x, y, cfg, tmp_path / "a")
    b = train_arrays(NasaSwin(seed=5), x, y, cfg, tmp_path / "b")
    assert a.losses == b.losses
    assert (tmp_path / "a" / "loss_curve.csv").read_bytes() == (tmp_path / "b" / "loss_curve.csv").read_bytes()
    for pa, pb in zip(a.checkpoints, b.checkpoints):
        assert pa.read_bytes() == pb.read_bytes()


def test_artifacts_per_epoch(data, tmp_path):
    x, y = data
    r = train_arrays(NasaSwin(seed=0), x, y, TrainConfig(batch=4, epochs=3), tmp_path)
    assert [p.name for p in r.checkpoints] == ["epoch_000.nsw", "epoch_001.nsw", "epoch_002.nsw", "final.nsw"]
    assert r.steps == 6 == total_steps(TrainConfig(batch=4, epochs=3), 6)
    with open(tmp_path / "loss_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6 and [int(r["epoch"]) for r in rows] == [0, 0, 1, 1, 2, 2]
    assert [float(r["loss"]) for r in rows] == r.losses
    restored = NasaSwin.from_state(checkpoint.load(tmp_path / "final.nsw"))
    assert np.array_equal(restored(x).data, r.model(x).data)


def test_max_steps_stops_mid_epoch(data, tmp_path):
    x, y = data
    r = train_arrays(NasaSwin(seed=0), x, y, TrainConfig(batch=4, max_steps=3), tmp_path)
    assert r.steps == 3
    assert [p.name for p in r.checkpoints] == ["epoch_000.nsw", "final.nsw"]


def test_cms_draws_only_while_training(data):
    x, y = data
    before = fusion.mask_draw_count()
    m = NasaSwin(seed=0)
    train_arrays(m, x, y, TrainConfig(batch=3, max_steps=2))
    assert fusion.mask_draw_count() == before + 6
    mid = fusion.mask_draw_count()
    evaluate_arrays(m, x, y, ["s"] * 6)
    assert fusion.mask_draw_count() == mid


def test_cms_disabled_draws_nothing(data):
    x, y = data
    before = fusion.mask_draw_count()
    train_arrays(NasaSwin(seed=0), x, y, TrainConfig(batch=3, max_steps=2, cms_enabled=False))
    assert fusion.mask_draw_count() == before


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_step(data):
    x, y = data
    m = NasaSwin(seed=0)
    m.head.bias.data[:] = np.inf
    with pytest.raises(TrainingError, match="step 0"):
        train_arrays(m, x, y, TrainConfig(batch=2, max_steps=3))


def test_epoch_order_is_seeded_permutation():
    a = epoch_order(3, 1, 10)
    assert sorted(a.tolist()) == list(range(10))
    assert np.array_equal(a, epoch_order(3, 1, 10))
    assert not np.array_equal(a, epoch_order(3, 2, 10))


@pytest.mark.parametrize("kwargs", [{"lr": -1.0}, {"batch": 0}, {"epochs": 0}, {"max_steps": -1}, {"cms_max_subset": 7}])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs).validate()


def test_train_config_roundtrip():
    cfg = TrainConfig(lr=0.5, batch=3, max_steps=11, cms_enabled=False, momentum=0.9)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_train_rejects_empty_and_mismatched():
    m = NasaSwin(seed=0)
    with pytest.raises(TrainingError):
        train_arrays(m, np.zeros((0, 6, 32, 32)), np.zeros(0), TrainConfig())
    with pytest.raises(TrainingError):
        train_arrays(m, np.zeros((2, 6, 32, 32)), np.zeros(3), TrainConfig())
