import math

import numpy as np
import pytest

from dunp.autodiff import Tensor
from dunp.data import generate_synthetic
from dunp.errors import ConfigurationError, TrainingDiverged
from dunp.model import DoubleUNetPlus, NetworkConfig
from dunp.nn import Parameter
from dunp.train import (
    ABLATION_CSV_HEADER,
    ABLATION_GRID,
    Adam,
    EPOCH_CSV_HEADER,
    EpochLog,
    ReduceOnPlateau,
    TrainConfig,
    ablation_csv,
    epochs_csv,
    evaluate,
    train,
)


def _tiny_cfg(**over):
    base = dict(levels=2, base_channels=4, input_size=(16, 16), in_channels=1,
                seed=0)
    base.update(over)
    return NetworkConfig(**base)


def _corpus(n, seed=0):
    return generate_synthetic(n, size=16, channels=1, seed=seed)


# -------------------------------------------------------------------- adam

def _adam_reference(g_seq, lr, p0=1.0):
    # independent scalar transcription of the update rule
    p, m, v = p0, 0.0, 0.0
    for t, g in enumerate(g_seq, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mhat = m / (1.0 - 0.9 ** t)
        vhat = v / (1.0 - 0.999 ** t)
        p -= lr * mhat / (math.sqrt(vhat) + 1e-8)
    return p


def test_adam_matches_scalar_reference():
    p = Parameter(np.array([1.0]))
    opt = Adam([("p", p)], lr=0.01)
    gs = [0.5, -0.3, 0.8, 0.8, -0.1]
    for g in gs:
        p.grad = np.array([g])
        opt.step()
    assert p.data[0] == pytest.approx(_adam_reference(gs, 0.01), rel=1e-12)


def test_adam_first_step_magnitude_near_lr():
    # with constant gradient the bias-corrected step is ~lr * sign(g)
    p = Parameter(np.array([2.0]))
    opt = Adam([("p", p)], lr=0.05)
    p.grad = np.array([3.7])
    opt.step()
    assert abs((2.0 - p.data[0]) - 0.05) < 1e-8


def test_adam_none_grad_leaves_parameter_unchanged():
    p = Parameter(np.arange(4, dtype=np.float64))
    before = p.data.copy()
    opt = Adam([("p", p)], lr=0.1)
    p.grad = None
    opt.step()
    assert np.array_equal(p.data, before)


def test_adam_preserves_dtype():
    p = Parameter(np.ones(3, dtype=np.float32))
    opt = Adam([("p", p)], lr=0.01)
    p.grad = np.full(3, 0.2, dtype=np.float32)
    opt.step()
    assert p.data.dtype == np.float32


def test_adam_nonfinite_gradient_raises_with_name():
    p = Parameter(np.ones(2))
    opt = Adam([("net1.enc.w", p)], lr=0.01)
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(TrainingDiverged, match="net1.enc.w"):
        opt.step()


def test_adam_zero_grad():
    p = Parameter(np.ones(2))
    opt = Adam([("p", p)], lr=0.01)
    p.grad = np.ones(2)
    opt.zero_grad()
    assert p.grad is None


# --------------------------------------------------------------- scheduler

def test_plateau_flat_from_start_reduces_after_patience():
    sch = ReduceOnPlateau(1e-4, factor=0.1, patience=10)
    for _ in range(9):
        assert sch.step(0.5) == pytest.approx(1e-4)
    assert sch.step(0.5) == pytest.approx(1e-5)


def test_plateau_improvement_resets_counter():
    sch = ReduceOnPlateau(1e-3, factor=0.5, patience=3)
    sch.step(1.0)           # wait 1
    sch.step(0.99)          # wait 2 (within default tol? 0.01 > 1e-8, improves)
    assert sch.wait == 0
    sch.step(0.99)          # tie, wait 1
    sch.step(0.99)          # wait 2
    assert sch.lr == pytest.approx(1e-3)
    sch.step(0.99)          # wait 3 -> reduce
    assert sch.lr == pytest.approx(5e-4)
    assert sch.wait == 0


def test_plateau_after_improvement_needs_full_patience_again():
    sch = ReduceOnPlateau(1.0, factor=0.1, patience=10)
    sch.step(2.0)
    sch.step(1.0)           # improvement, wait 0
    for _ in range(9):
        sch.step(1.0)
        assert sch.lr == pytest.approx(1.0)
    sch.step(1.0)           # 10th flat epoch since the improvement
    assert sch.lr == pytest.approx(0.1)


def test_plateau_tie_at_tol_boundary_not_improvement():
    sch = ReduceOnPlateau(1.0, factor=0.1, patience=2, tol=1e-3)
    sch.step(1.0)
    sch.step(1.0 - 1e-3)    # exactly best - tol: still a tie
    assert sch.lr == pytest.approx(0.1)
    sch2 = ReduceOnPlateau(1.0, factor=0.1, patience=2, tol=1e-3)
    sch2.step(1.0)
    sch2.step(1.0 - 1.1e-3)  # strictly below best - tol: improvement
    assert sch2.lr == pytest.approx(1.0)
    assert sch2.wait == 0


def test_plateau_reductions_compound():
    sch = ReduceOnPlateau(1.0, factor=0.1, patience=5)
    for _ in range(20):
        sch.step(3.0)
    assert sch.lr == pytest.approx(1e-4)


def test_plateau_constructor_rejects():
    with pytest.raises(ConfigurationError):
        ReduceOnPlateau(1.0, factor=1.0)
    with pytest.raises(ConfigurationError):
        ReduceOnPlateau(1.0, factor=0.5, patience=0)


# ------------------------------------------------------------------ config

def test_train_config_validation():
    TrainConfig().validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(lr0=0.0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(plateau_factor=1.5).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(patience=0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ConfigurationError):
        TrainConfig(max_epochs=0).validate()


# --------------------------------------------------------------------- csv

def test_epoch_csv_layout():
    log = [EpochLog(0, 1e-4, 0.9, 0.8, 0.1, 0.05, 0.2, 0.3),
           EpochLog(1, 1e-4, 0.7, 0.6, 0.2, 0.11, 0.25, 0.35)]
    text = epochs_csv(log)
    lines = text.strip().split("\n")
    assert lines[0] == EPOCH_CSV_HEADER
    assert lines[0] == "epoch,lr,train_loss,val_loss,val_dsc,val_iou,val_precision,val_recall"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "0"
    assert float(row[1]) == pytest.approx(1e-4)
    assert float(row[2]) == pytest.approx(0.9)


def test_ablation_csv_layout():
    rows = [{"config": "full", "mkrc_on": True, "tam_on": True, "tag_on": True,
             "params": 1234, "best_val_loss": 0.5, "precision": 0.9,
             "recall": 0.8, "dsc": 0.85, "iou": 0.74}]
    text = ablation_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == ABLATION_CSV_HEADER
    assert lines[1].split(",")[:5] == ["full", "1", "1", "1", "1234"]


def test_ablation_grid_rows():
    names = [name for name, _ in ABLATION_GRID]
    assert names == ["baseline", "wo_mkrc", "wo_tam", "wo_tag",
                     "wo_tam_mkrc", "wo_tam_mkrc_tag", "full"]
    assert ABLATION_GRID[1][1] == {"mkrc_on": False, "tam_on": True, "tag_on": True}
    assert ABLATION_GRID[4][1] == {"mkrc_on": False, "tam_on": False, "tag_on": True}
    assert ABLATION_GRID[6][1] == {"mkrc_on": True, "tam_on": True, "tag_on": True}


# ---------------------------------------------------------------- training

def test_train_smoke_and_result_shape():
    model = DoubleUNetPlus(_tiny_cfg())
    cfg = TrainConfig(lr0=1e-3, batch_size=2, max_epochs=2, seed=0)
    result = train(model, _corpus(4), _corpus(2, seed=1), cfg)
    assert [e.epoch for e in result.log] == [0, 1]
    assert result.log[0].lr == pytest.approx(1e-3)
    assert result.best_epoch in (0, 1)
    assert result.best_val_loss == pytest.approx(
        min(e.val_loss for e in result.log))
    for e in result.log:
        assert np.isfinite([e.train_loss, e.val_loss, e.val_dsc, e.val_iou,
                            e.val_precision, e.val_recall]).all()
        assert 0.0 <= e.val_dsc <= 1.0


def test_train_leaves_model_at_best_state():
    model = DoubleUNetPlus(_tiny_cfg())
    cfg = TrainConfig(lr0=1e-3, batch_size=2, max_epochs=3, seed=0)
    result = train(model, _corpus(4), _corpus(2, seed=1), cfg)
    now = model.state_arrays()
    assert set(now) == set(result.best_state)
    for k, v in result.best_state.items():
        assert np.array_equal(now[k], v), k
    # the stored state is a copy, not a view into the live model
    first = next(iter(result.best_state))
    model.state_arrays()[first][...] += 1.0
    assert not np.array_equal(model.state_arrays()[first], result.best_state[first])


def test_train_loss_decreases_on_tiny_overfit():
    model = DoubleUNetPlus(_tiny_cfg())
    data = _corpus(2, seed=3)
    cfg = TrainConfig(lr0=3e-3, batch_size=2, max_epochs=12, seed=0)
    result = train(model, data, data, cfg)
    assert result.log[-1].train_loss < result.log[0].train_loss


def test_train_epoch0_deterministic():
    losses = []
    for _ in range(2):
        model = DoubleUNetPlus(_tiny_cfg(seed=5))
        cfg = TrainConfig(lr0=1e-3, batch_size=2, max_epochs=1, seed=7)
        result = train(model, _corpus(4, seed=2), _corpus(2, seed=9), cfg)
        losses.append((result.log[0].train_loss, result.log[0].val_loss))
    assert losses[0] == losses[1]


def test_train_divergence_attaches_best_state():
    model = DoubleUNetPlus(_tiny_cfg())
    name, p = next(iter(model.named_parameters()))
    p.data[...] = np.nan
    cfg = TrainConfig(lr0=1e-3, batch_size=2, max_epochs=2, seed=0)
    with pytest.raises(TrainingDiverged) as exc:
        train(model, _corpus(2), _corpus(2, seed=1), cfg)
    err = exc.value
    assert err.epoch == 0
    assert isinstance(err.best_state, dict)
    assert set(err.best_state) == set(model.state_arrays())


def test_train_rejects_empty_sets():
    model = DoubleUNetPlus(_tiny_cfg())
    with pytest.raises(ConfigurationError):
        train(model, [], _corpus(1), TrainConfig())
    with pytest.raises(ConfigurationError):
        train(model, _corpus(1), [], TrainConfig())


def test_evaluate_row_per_sample_with_augment_tags():
    from dunp.data import AugmentOp, augment
    model = DoubleUNetPlus(_tiny_cfg())
    base = _corpus(2)
    samples = base + [augment(base[0], AugmentOp("hflip"))]
    report = evaluate(model, samples, batch_size=2)
    ids = [r.sample_id for r in report.per_sample]
    assert ids == [base[0].id, base[1].id, f"{base[0].id}+hflip"]


def test_evaluate_rejects_empty():
    model = DoubleUNetPlus(_tiny_cfg())
    with pytest.raises(ConfigurationError):
        evaluate(model, [])


def test_lr_column_reflects_rate_during_epoch():
    # patience 1 with flat-ish validation forces a cut after epoch 0;
    # row 0 must still show lr0 and row 1 the reduced rate
    model = DoubleUNetPlus(_tiny_cfg())
    data = _corpus(2, seed=4)
    cfg = TrainConfig(lr0=1e-3, plateau_factor=0.1, patience=1, batch_size=2,
                      max_epochs=2, seed=0)
    result = train(model, data, data, cfg)
    assert result.log[0].lr == pytest.approx(1e-3)
    assert result.log[1].lr == pytest.approx(1e-4)
