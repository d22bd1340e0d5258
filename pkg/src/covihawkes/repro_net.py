"""Reproduction-number network: lagged feature windows, LSTM, softplus head.

The LSTM consumes one window per day as a sequence of ``L`` steps (oldest
first). Each step is the ``d_m`` mobility values ``Delta`` days further back,
scaled by 1/100, followed by ``ln(1 + C) / ln(1 + population)``. The state is
reset to zero for each window.

Gate rows in the stacked weights are ordered input, forget, candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import ModelConfig, RegionRecord
from .errors import DayRangeError, ShapeError
from .hawkes_core import sigmoid, softplus

MOBILITY_SCALE = 100.0


@dataclass
class LstmParams:
    W: np.ndarray  # (4d, n_in)
    U: np.ndarray  # (4d, d)
    b: np.ndarray  # (4d,)

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    def check(self):
        d = self.hidden
        if self.U.shape != (4 * d, d) or self.W.shape[0] != 4 * d or self.b.shape != (4 * d,):
            raise ShapeError(
                f"inconsistent LSTM shapes W={self.W.shape} U={self.U.shape} b={self.b.shape}"
            )


@dataclass
class ReproHead:
    w: np.ndarray
    b: float


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden, batch=()):
        shape = (*batch, hidden)
        return cls(np.zeros(shape), np.zeros(shape))


def init_lstm(rng: np.random.Generator, n_in: int, hidden: int) -> LstmParams:
    k = 1.0 / np.sqrt(hidden)
    W = rng.uniform(-k, k, size=(4 * hidden, n_in))
    U = rng.uniform(-k, k, size=(4 * hidden, hidden))
    b = rng.uniform(-k, k, size=4 * hidden)
    b[hidden : 2 * hidden] = 1.0
    return LstmParams(W, U, b)


def init_head(rng: np.random.Generator, hidden: int) -> ReproHead:
    k = 1.0 / np.sqrt(hidden)
    return ReproHead(rng.uniform(-k, k, size=hidden), 0.0)


def feature_windows(cases, mobility, population, days, lag, delta):
    """Feature windows for several days at once, shape ``(len(days), lag, d_m + 1)``.

    ``days`` are 1-based; ``cases`` and ``mobility`` are 0-based arrays that
    must reach back to day ``t - lag - delta`` for every requested ``t``.
    """
    days = np.atleast_1d(np.asarray(days, dtype=int))
    mobility = np.asarray(mobility, dtype=float)
    cases = np.asarray(cases, dtype=float)
    if days.size and days.min() - lag - delta < 1:
        raise DayRangeError(
            f"day {days.min()} needs {lag + delta} days of history (lag={lag}, delta={delta})"
        )
    # step j (oldest first) looks back i = lag - j days
    back = np.arange(lag, 0, -1)
    count_idx = days[:, None] - back[None, :] - 1
    mob_idx = count_idx - delta
    if days.size and count_idx.max() >= len(cases):
        raise DayRangeError(f"day {days.max()} needs counts beyond the {len(cases)} supplied")
    if days.size and mob_idx.max() >= len(mobility):
        raise DayRangeError(f"day {days.max()} needs mobility beyond the {len(mobility)} supplied")
    counts = np.log1p(cases[count_idx]) / np.log1p(population)
    return np.concatenate([mobility[mob_idx] / MOBILITY_SCALE, counts[..., None]], axis=-1)


def build_features(record: RegionRecord, t: int, config: ModelConfig) -> np.ndarray:
    """Feature window of day ``t``: ``config.lag`` steps of ``d_m + 1`` values."""
    return feature_windows(
        record.cases, record.mobility, record.population, [t], config.lag, config.delta
    )[0]


def _step(x, h, c, params):
    d = params.hidden
    z = x @ params.W.T + h @ params.U.T + params.b
    i = sigmoid(z[..., :d])
    f = sigmoid(z[..., d : 2 * d])
    g = np.tanh(z[..., 2 * d : 3 * d])
    o = sigmoid(z[..., 3 * d :])
    c = f * c + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, g, o, tc)


def lstm_forward(window, params: LstmParams, init: LstmState | None = None) -> LstmState:
    """Run the LSTM over ``window`` of shape ``(..., L, n_in)``; returns the final state."""
    window = np.asarray(window, dtype=float)
    params.check()
    if window.ndim < 2 or window.shape[-1] != params.n_in:
        raise ShapeError(f"window shape {window.shape} does not match n_in={params.n_in}")
    batch = window.shape[:-2]
    state = init if init is not None else LstmState.zeros(params.hidden, batch)
    h, c = state.h, state.c
    for k in range(window.shape[-2]):
        h, c, _ = _step(window[..., k, :], h, c, params)
    return LstmState(h, c)


def lstm_forward_cached(windows, params: LstmParams):
    """Batched forward from a zero state, keeping what the backward pass needs."""
    params.check()
    n, L, _ = windows.shape
    d = params.hidden
    h = np.zeros((n, d))
    c = np.zeros((n, d))
    cache = []
    for k in range(L):
        h_prev, c_prev = h, c
        h, c, gates = _step(windows[:, k, :], h_prev, c_prev, params)
        cache.append((windows[:, k, :], h_prev, c_prev, gates))
    return h, cache


def lstm_backward(dh, cache, params: LstmParams) -> LstmParams:
    """Backpropagation through time; returns gradients shaped like ``params``."""
    dW = np.zeros_like(params.W)
    dU = np.zeros_like(params.U)
    db = np.zeros_like(params.b)
    dc = np.zeros_like(dh)
    for x, h_prev, c_prev, (i, f, g, o, tc) in reversed(cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc**2)
        dz = np.concatenate(
            [
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=-1,
        )
        dW += dz.T @ x
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh = dz @ params.U
        dc = dc * f
    return LstmParams(dW, dU, db)


def head_activation(h, head: ReproHead):
    return h @ head.w + head.b


def reproduction(state: LstmState, head: ReproHead) -> float:
    """``softplus(w . h + b)``; vectorises over a batch of states."""
    r = softplus(head_activation(state.h, head))
    return float(r) if np.ndim(r) == 0 else r
