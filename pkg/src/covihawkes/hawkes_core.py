"""Discrete-time Hawkes intensity, susceptible-fraction discount and Poisson NLL.

Lag weights are indexed 0..L-1 and ``w[L - i]`` multiplies the count ``i``
days back, so ``w[L - 1]`` weights the most recent day.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

LAMBDA_FLOOR = 1e-8


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 30.0, y, np.log(np.expm1(np.maximum(y, 1e-300))))


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = np.exp(z - z.max())
    return z / z.sum()


@dataclass
class LagWeights:
    logits: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)

    def __len__(self):
        return len(self.logits)


@dataclass
class BaseRate:
    raw: float

    @property
    def mu(self) -> float:
        return float(softplus(self.raw))


def _as_weights(weights):
    return weights.weights if isinstance(weights, LagWeights) else np.asarray(weights, dtype=float)


def intensity(mu, weights, r_window, c_window) -> float:
    """Hawkes intensity ``mu + sum_i w[L-i] R(t-i) C(t-i)``.

    ``r_window[i-1]`` and ``c_window[i-1]`` hold the values ``i`` days back
    (most recent first).
    """
    w = _as_weights(weights)
    r = np.asarray(r_window, dtype=float)
    c = np.asarray(c_window, dtype=float)
    if r.shape != w.shape or c.shape != w.shape:
        raise ShapeError(f"windows must have length {len(w)}, got {r.shape} and {c.shape}")
    return float(mu + np.dot(w[::-1], r * c))


def discount(lam, n_prev, v_prev, pop) -> float:
    """Scale ``lam`` by the susceptible fraction ``1 - (n_prev + v_prev) / pop``."""
    if pop <= 0:
        raise DomainError("population must be positive")
    removed = n_prev + v_prev
    if removed < 0 or removed > pop:
        raise DomainError(f"infected+vaccinated={removed} outside [0, {pop}]")
    return (1.0 - removed / pop) * lam


def poisson_nll(lambda_tilde, count):
    """Poisson negative log-likelihood without the ``ln(c!)`` constant.

    The rate is floored at ``LAMBDA_FLOOR`` first. Works elementwise on arrays.
    """
    lt = np.maximum(lambda_tilde, LAMBDA_FLOOR)
    out = lt - np.asarray(count, dtype=float) * np.log(lt)
    return float(out) if np.ndim(out) == 0 else out


def excitation(weights, r_times_c, days):
    """Vectorised excitation term for each 0-based day index in ``days``.

    ``r_times_c`` is the daily product ``R(s) C(s)``; each index needs ``L``
    earlier entries.
    """
    w = _as_weights(weights)
    L = len(w)
    days = np.asarray(days)
    if days.size and days.min() < L:
        raise ShapeError(f"day index {days.min()} has fewer than {L} days of history")
    z = np.asarray(r_times_c, dtype=float)
    windows = np.lib.stride_tricks.sliding_window_view(z, L)
    return windows[days - L] @ w
