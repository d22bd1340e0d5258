import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covihawkes.data_model import ModelConfig
from covihawkes.errors import DayRangeError, ShapeError
from covihawkes.repro_net import (
    LstmParams,
    LstmState,
    ReproHead,
    build_features,
    feature_windows,
    init_lstm,
    lstm_forward,
    reproduction,
)

from conftest import make_record
from oracles import lstm_reference


def test_zero_inputs_give_zero_features():
    rec = make_record(np.zeros(40, dtype=int))
    assert not build_features(rec, 40, ModelConfig(lag=7, delta=3)).any()


def test_feature_index_arithmetic():
    mob = np.arange(1, 7)[:, None] * np.ones((6, 6))  # m(t) = t in every column
    rec = make_record([10, 20, 30, 40, 50, 60], mobility=mob, population=1000)
    x = build_features(rec, 4, ModelConfig(lag=2, delta=1, d_m=6))
    scale = math.log(1001)
    assert x.shape == (2, 7)
    # oldest step first: (m(1), C(2)) then (m(2), C(3))
    np.testing.assert_allclose(x[0], [0.01] * 6 + [math.log(21) / scale])
    np.testing.assert_allclose(x[1], [0.02] * 6 + [math.log(31) / scale])


def test_count_feature_saturates_at_one():
    rec = make_record([0, 0, 0, 500], population=500)
    x = feature_windows(rec.cases, rec.mobility, 500, [5], lag=1, delta=0)
    assert x[0, 0, -1] == 1.0


def test_insufficient_history():
    rec = make_record(np.ones(20, dtype=int))
    with pytest.raises(DayRangeError):
        build_features(rec, 10, ModelConfig(lag=7, delta=3))


def _params(rng, n_in=7, d=5, scale=0.5):
    return LstmParams(
        rng.normal(0, scale, (4 * d, n_in)), rng.normal(0, scale, (4 * d, d)), rng.normal(0, scale, 4 * d)
    )


def test_all_zero_weights_give_zero_state():
    p = LstmParams(np.zeros((16, 7)), np.zeros((16, 4)), np.zeros(16))
    window = np.random.default_rng(0).normal(size=(10, 7))
    assert not lstm_forward(window, p).h.any()


def test_zero_window_and_bias_give_zero_state():
    p = _params(np.random.default_rng(1))
    p.b[:] = 0.0
    assert not lstm_forward(np.zeros((10, 7)), p).h.any()


def test_matches_scalar_reference():
    rng = np.random.default_rng(42)
    p = _params(rng)
    window = rng.normal(size=(12, 7))
    state = lstm_forward(window, p)
    h, c = lstm_reference(window.tolist(), p.W.tolist(), p.U.tolist(), p.b.tolist())
    np.testing.assert_allclose(state.h, h, rtol=0, atol=1e-10)
    np.testing.assert_allclose(state.c, c, rtol=0, atol=1e-10)


def test_batched_matches_single():
    rng = np.random.default_rng(5)
    p = _params(rng)
    windows = rng.normal(size=(3, 6, 7))
    batched = lstm_forward(windows, p)
    for k in range(3):
        np.testing.assert_allclose(batched.h[k], lstm_forward(windows[k], p).h, rtol=0, atol=1e-14)


def test_deterministic():
    rng = np.random.default_rng(6)
    p = _params(rng)
    window = rng.normal(size=(8, 7))
    assert np.array_equal(lstm_forward(window, p).h, lstm_forward(window, p).h)


@given(st.integers(0, 2**31), st.floats(0.1, 20))
def test_hidden_state_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    h = lstm_forward(rng.normal(0, scale, (10, 7)), _params(rng, scale=scale)).h
    assert np.all(np.abs(h) <= 1.0)
    assert np.all(np.isfinite(h))


def test_shape_errors():
    p = _params(np.random.default_rng(0))
    with pytest.raises(ShapeError):
        lstm_forward(np.zeros((5, 6)), p)
    with pytest.raises(ShapeError):
        lstm_forward(np.zeros((5, 7)), LstmParams(p.W, p.U[:, :3], p.b))


def test_init_forget_bias_and_range():
    p = init_lstm(np.random.default_rng(0), 7, 8)
    np.testing.assert_array_equal(p.b[8:16], 1.0)
    k = 1 / math.sqrt(8)
    assert np.abs(p.W).max() <= k and np.abs(p.U).max() <= k


@pytest.mark.parametrize(
    "a, expected, tol",
    [(0.0, math.log(2), 1e-12), (20.0, 20.0, 1e-8), (-20.0, math.log1p(math.exp(-20)), 1e-20)],
)
def test_reproduction_softplus(a, expected, tol):
    state = LstmState(np.array([1.0, 0.0]), np.zeros(2))
    r = reproduction(state, ReproHead(np.array([a, 3.0]), 0.0))
    assert r == pytest.approx(expected, abs=tol)
    assert r > 0


def test_reproduction_minus_twenty_value():
    state = LstmState(np.zeros(3), np.zeros(3))
    assert reproduction(state, ReproHead(np.ones(3), -20.0)) == pytest.approx(2.06115e-9, rel=1e-5)


@given(st.floats(-50, 50), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_reproduction_positive(b, h):
    state = LstmState(np.array(h), np.zeros(3))
    assert reproduction(state, ReproHead(np.ones(3), b)) > 0
