import math

import numpy as np
import pytest

from dunp import losses
from dunp.autodiff import Tensor, backward
from dunp.errors import ConfigurationError

from oracles import fd_grad


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def test_bce_at_half_is_ln2():
    p = t64(np.full((2, 1, 8, 8), 0.5))
    for y in (np.zeros((2, 1, 8, 8)), np.ones((2, 1, 8, 8)),
              (np.random.default_rng(0).random((2, 1, 8, 8)) > 0.5).astype(float)):
        assert losses.bce(p, t64(y)).item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_bce_matches_direct_formula():
    rng = np.random.default_rng(1)
    p = rng.uniform(0.01, 0.99, size=(3, 1, 6, 6))
    y = (rng.random((3, 1, 6, 6)) > 0.5).astype(float)
    want = -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()
    assert losses.bce(t64(p), t64(y)).item() == pytest.approx(want, rel=1e-14)


def test_bce_clamps_saturated_predictions():
    p = t64(np.array([[[[0.0, 1.0]]]]))
    y = t64(np.array([[[[1.0, 0.0]]]]))
    v = losses.bce(p, y).item()
    assert np.isfinite(v)
    assert v == pytest.approx(-math.log(losses.CLAMP), rel=1e-6)


def test_dice_zero_for_exact_binary_match():
    rng = np.random.default_rng(2)
    y = (rng.random((2, 1, 8, 8)) > 0.4).astype(float)
    assert losses.dice(t64(y), t64(y)).item() == 0.0


def test_dice_zero_for_empty_empty():
    z = t64(np.zeros((1, 1, 4, 4)))
    assert losses.dice(z, t64(np.zeros((1, 1, 4, 4)))).item() == 0.0


def test_dice_matches_direct_formula():
    rng = np.random.default_rng(3)
    p = rng.uniform(0, 1, size=(2, 1, 5, 5))
    y = (rng.random((2, 1, 5, 5)) > 0.5).astype(float)
    want = 1 - (2 * (p * y).sum() + 1.0) / ((p * p).sum() + (y * y).sum() + 1.0)
    assert losses.dice(t64(p), t64(y)).item() == pytest.approx(want, rel=1e-14)


def test_dice_near_one_for_disjoint_masks():
    p = np.zeros((1, 1, 10, 10))
    y = np.zeros((1, 1, 10, 10))
    p[0, 0, :5] = 1.0
    y[0, 0, 5:] = 1.0
    v = losses.dice(t64(p), t64(y)).item()
    assert v == pytest.approx(1 - 1.0 / 101.0, rel=1e-12)


def test_hybrid_is_sum_of_parts():
    rng = np.random.default_rng(4)
    p = rng.uniform(0.01, 0.99, size=(2, 1, 8, 8))
    y = (rng.random((2, 1, 8, 8)) > 0.5).astype(float)
    total = losses.hybrid(t64(p), t64(y)).item()
    parts = losses.bce(t64(p), t64(y)).item() + losses.dice(t64(p), t64(y)).item()
    assert abs(total - parts) < 1e-12


def test_total_loss_weighting():
    rng = np.random.default_rng(5)
    m1 = rng.uniform(0.01, 0.99, size=(1, 1, 4, 4))
    m2 = rng.uniform(0.01, 0.99, size=(1, 1, 4, 4))
    y = (rng.random((1, 1, 4, 4)) > 0.5).astype(float)
    h1 = losses.hybrid(t64(m1), t64(y)).item()
    h2 = losses.hybrid(t64(m2), t64(y)).item()
    for lam in (0.0, 0.5, 1.0, 2.0):
        got = losses.total_loss(t64(m1), t64(m2), t64(y), lam).item()
        assert got == pytest.approx(h2 + lam * h1, rel=1e-12)


def test_shape_mismatch_rejected():
    with pytest.raises(ConfigurationError, match="shape"):
        losses.bce(t64(np.zeros((1, 1, 4, 4))), t64(np.zeros((1, 1, 4, 5))))
    with pytest.raises(ConfigurationError, match="shape"):
        losses.dice(t64(np.zeros((1, 1, 4, 4))), t64(np.zeros((2, 1, 4, 4))))


@pytest.mark.parametrize("fn", [losses.bce, losses.dice, losses.hybrid])
def test_loss_gradients_match_fd(fn):
    rng = np.random.default_rng(6)
    p = rng.uniform(0.05, 0.95, size=(2, 1, 4, 4))
    y = (rng.random((2, 1, 4, 4)) > 0.5).astype(float)
    tp = t64(p, grad=True)
    backward(fn(tp, t64(y)))
    g = fd_grad(lambda: fn(t64(p), t64(y)).item(), p)
    np.testing.assert_allclose(tp.grad, g, rtol=1e-6, atol=1e-9)


def test_gradient_flows_through_both_masks_in_total_loss():
    rng = np.random.default_rng(7)
    m1 = t64(rng.uniform(0.2, 0.8, size=(1, 1, 4, 4)), grad=True)
    m2 = t64(rng.uniform(0.2, 0.8, size=(1, 1, 4, 4)), grad=True)
    y = t64((rng.random((1, 1, 4, 4)) > 0.5).astype(float))
    backward(losses.total_loss(m1, m2, y, lam=1.0))
    assert m1.grad is not None and np.abs(m1.grad).max() > 0
    assert m2.grad is not None and np.abs(m2.grad).max() > 0
