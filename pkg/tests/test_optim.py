import numpy as np
import pytest

from moarm.optim import (
    EmaState,
    NonFiniteGradientError,
    OptimizerState,
    PlateauScheduler,
    clip_global_norm,
    optimizer_step,
)


def test_zero_grads_no_decay_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.zeros(2)}
    state = OptimizerState(lr=1e-3)
    optimizer_step(params, grads, state)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_first_step_moves_by_lr():
    # bias-corrected first step with g=1 moves a scalar by ~lr
    params = {"w": np.array([0.5])}
    grads = {"w": np.array([1.0])}
    state = OptimizerState(lr=4e-4)
    optimizer_step(params, grads, state)
    assert params["w"][0] == pytest.approx(0.5 - 4e-4, rel=1e-6)


def test_clip_scales_by_global_norm():
    grads = {"a": np.array([6.0]), "b": np.array([8.0])}  # norm 10
    norm = clip_global_norm(grads, 1.0)
    assert norm == pytest.approx(10.0)
    assert grads["a"][0] == pytest.approx(0.6)
    assert grads["b"][0] == pytest.approx(0.8)


def test_clip_leaves_small_grads():
    grads = {"a": np.array([0.3])}
    clip_global_norm(grads, 1.0)
    assert grads["a"][0] == 0.3


def test_nan_gradient_aborts():
    grads = {"a": np.array([np.nan])}
    with pytest.raises(NonFiniteGradientError):
        clip_global_norm(grads, 1.0)


def test_groupwise_clip_is_independent():
    grads = {"bb.w": np.array([6.0, 8.0]), "mh.w": np.array([0.3])}
    clip_global_norm(grads, 1.0, groups=("bb.", "mh."))
    np.testing.assert_allclose(grads["bb.w"], [0.6, 0.8])
    assert grads["mh.w"][0] == 0.3  # its own norm was already below the cap


def test_weight_decay_is_decoupled():
    params = {"w": np.array([2.0])}
    grads = {"w": np.array([0.0])}
    state = OptimizerState(lr=0.1, weight_decay=0.5)
    optimizer_step(params, grads, state, clip_norm=0.0)
    # zero gradient: the only movement is -lr * wd * p
    assert params["w"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_ema_updates():
    params = {"w": np.array([1.0])}
    ema = EmaState.from_params({"w": np.array([0.0])}, decay=0.999)
    ema.update(params)
    assert ema.shadow["w"][0] == pytest.approx(0.001)
    ema_zero = EmaState.from_params({"w": np.array([5.0])}, decay=0.0)
    ema_zero.update(params)
    assert ema_zero.shadow["w"][0] == 1.0
    fixed = EmaState.from_params(params, decay=0.9)
    fixed.update(params)
    assert fixed.shadow["w"][0] == pytest.approx(1.0)


def test_ema_decay_range():
    with pytest.raises(ValueError):
        EmaState.from_params({"w": np.zeros(1)}, decay=1.0)


def test_plateau_decays_after_patience():
    state = OptimizerState(lr=1.0)
    sched = PlateauScheduler(factor=0.9, patience=2)
    sched.step(1.0, state)
    for _ in range(2):
        sched.step(1.0, state)
    assert state.lr == 1.0
    sched.step(1.0, state)  # third bad epoch exceeds patience
    assert state.lr == pytest.approx(0.9)
    sched.step(0.5, state)  # improvement resets the counter
    assert sched.bad_epochs == 0
