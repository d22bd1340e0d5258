"""Maximum-likelihood training of every model parameter.

The loss is the Poisson negative log-likelihood of the observed counts under
the discounted intensity, summed over scored days (see
``ModelConfig.first_scored_day``). Gradients are exact and computed by
backpropagation through the intensity, the softplus head and the LSTM.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import ModelConfig, RegionRecord
from .errors import DayRangeError, DomainError, TrainingDivergedError
from .hawkes_core import LAMBDA_FLOOR, excitation, inv_softplus, sigmoid, softmax, softplus
from .repro_net import (
    LstmParams,
    ReproHead,
    feature_windows,
    head_activation,
    init_head,
    init_lstm,
    lstm_backward,
    lstm_forward_cached,
)

log = logging.getLogger(__name__)

MODEL_FORMAT = "covihawkes-model-v1"
ARRAY_KEYS = ("base_raw", "logits", "W", "U", "b", "head_w", "head_b")
GROUPS = {
    "base": ("base_raw",),
    "lags": ("logits",),
    "lstm": ("W", "U", "b"),
    "head": ("head_w", "head_b"),
}


@dataclass
class HawkesParams:
    """All learnable parameters, stored unconstrained.

    The same container also carries gradients (``gradient`` returns one).
    """

    base_raw: float
    logits: np.ndarray
    lstm: LstmParams
    head: ReproHead

    @property
    def mu(self) -> float:
        return float(softplus(self.base_raw))

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.logits)

    @property
    def lag(self) -> int:
        return len(self.logits)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "base_raw": np.array([self.base_raw], dtype=float),
            "logits": np.array(self.logits, dtype=float),
            "W": np.array(self.lstm.W, dtype=float),
            "U": np.array(self.lstm.U, dtype=float),
            "b": np.array(self.lstm.b, dtype=float),
            "head_w": np.array(self.head.w, dtype=float),
            "head_b": np.array([self.head.b], dtype=float),
        }

    @classmethod
    def from_arrays(cls, a: dict[str, np.ndarray]) -> HawkesParams:
        return cls(
            base_raw=float(np.asarray(a["base_raw"]).reshape(-1)[0]),
            logits=np.array(a["logits"], dtype=float),
            lstm=LstmParams(
                np.array(a["W"], dtype=float), np.array(a["U"], dtype=float), np.array(a["b"], dtype=float)
            ),
            head=ReproHead(np.array(a["head_w"], dtype=float), float(np.asarray(a["head_b"]).reshape(-1)[0])),
        )

    def copy(self) -> HawkesParams:
        return HawkesParams.from_arrays(self.to_arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.to_arrays().values()])

    def with_flat(self, vec) -> HawkesParams:
        arrays, pos = {}, 0
        for key, val in self.to_arrays().items():
            arrays[key] = np.asarray(vec[pos : pos + val.size], dtype=float).reshape(val.shape)
            pos += val.size
        return HawkesParams.from_arrays(arrays)


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> HawkesParams:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    lstm = init_lstm(rng, config.d_m + 1, config.hidden)
    head = init_head(rng, config.hidden)
    return HawkesParams(base_raw=0.0, logits=np.zeros(config.lag), lstm=lstm, head=head)


def constant_r_params(config: ModelConfig, mu: float, r: float, weights=None) -> HawkesParams:
    """Parameters whose network outputs the constant ``r`` for every window.

    Zeroed LSTM weights keep the hidden state at zero, so the head bias alone
    sets the reproduction number.
    """
    d, n_in = config.hidden, config.d_m + 1
    logits = np.zeros(config.lag) if weights is None else np.log(np.maximum(np.asarray(weights, dtype=float), 1e-300))
    return HawkesParams(
        base_raw=float(inv_softplus(mu)),
        logits=logits,
        lstm=LstmParams(np.zeros((4 * d, n_in)), np.zeros((4 * d, d)), np.zeros(4 * d)),
        head=ReproHead(np.zeros(d), float(inv_softplus(r))),
    )


def _check_length(record: RegionRecord, config: ModelConfig):
    need = config.first_scored_day
    if record.n_days < need:
        raise DayRangeError(
            f"{record.region.id}: {record.n_days} days is too short; at least {need} "
            f"are needed (2*lag + delta + 1)"
        )


def susceptible_fraction(record: RegionRecord) -> np.ndarray:
    """``1 - (N(t-1) + V(t-1)) / population`` for every day ``t``."""
    cases = record.cases.astype(float)
    n_prev = np.concatenate([[0.0], np.cumsum(cases)[:-1]])
    v_prev = np.concatenate([[0.0], record.vaccinated[:-1].astype(float)])
    removed = n_prev + v_prev
    if np.any(removed > record.population):
        raise DomainError(f"{record.region.id}: infected+vaccinated exceeds population")
    return 1.0 - removed / record.population


def _forward(params: HawkesParams, record: RegionRecord, config: ModelConfig):
    _check_length(record, config)
    L = config.lag
    T = record.n_days
    cases = record.cases.astype(float)
    r_days = np.arange(config.first_r_day, T)  # R is never needed for the last day
    windows = feature_windows(cases, record.mobility, record.population, r_days, L, config.delta)
    h, cache = lstm_forward_cached(windows, params.lstm)
    a = head_activation(h, params.head)
    R = softplus(a)
    z = np.zeros(T)
    z[r_days - 1] = R * cases[r_days - 1]
    scored = np.arange(config.first_scored_day - 1, T)  # 0-based
    w = params.weights
    lam = params.mu + excitation(w, z, scored)
    D = susceptible_fraction(record)[scored]
    lt = D * lam
    ltf = np.maximum(lt, LAMBDA_FLOOR)
    c = cases[scored]
    nll_terms = ltf - c * np.log(ltf)
    return dict(
        r_days=r_days, h=h, cache=cache, a=a, R=R, z=z, scored=scored, w=w,
        lam=lam, D=D, lt=lt, ltf=ltf, c=c, nll_terms=nll_terms, cases=cases,
    )


def per_day_nll(params: HawkesParams, record: RegionRecord, config: ModelConfig):
    """``(days, nll)`` for every scored day; days are 1-based."""
    f = _forward(params, record, config)
    return f["scored"] + 1, f["nll_terms"]


def total_nll(params: HawkesParams, record: RegionRecord, config: ModelConfig) -> float:
    return float(_forward(params, record, config)["nll_terms"].sum())


def nll_and_gradient(params: HawkesParams, record: RegionRecord, config: ModelConfig):
    f = _forward(params, record, config)
    L = config.lag
    scored, w = f["scored"], f["w"]
    # d nll / d lambda_tilde is zero where the floor is active
    g = np.where(f["lt"] > LAMBDA_FLOOR, 1.0 - f["c"] / f["ltf"], 0.0)
    gl = g * f["D"]

    d_base = gl.sum() * sigmoid(params.base_raw)
    Z = np.lib.stride_tricks.sliding_window_view(f["z"], L)[scored - L]
    dw = Z.T @ gl
    d_logits = w * (dw - np.dot(w, dw))

    dz = np.zeros_like(f["z"])
    lo, hi = scored[0], scored[-1] + 1
    for j in range(L):
        dz[lo - L + j : hi - L + j] += gl * w[j]
    r_idx = f["r_days"] - 1
    dR = dz[r_idx] * f["cases"][r_idx]
    da = dR * sigmoid(f["a"])
    d_head = ReproHead(f["h"].T @ da, float(da.sum()))
    dh = np.outer(da, params.head.w)
    d_lstm = lstm_backward(dh, f["cache"], params.lstm)
    grad = HawkesParams(float(d_base), d_logits, d_lstm, d_head)
    return float(f["nll_terms"].sum()), grad


def gradient(params: HawkesParams, record: RegionRecord, config: ModelConfig) -> HawkesParams:
    """Exact gradient of ``total_nll`` with respect to every unconstrained parameter."""
    return nll_and_gradient(params, record, config)[1]


class Adam:
    """Adam with step rejection.

    ``propose`` computes a candidate without committing it; ``accept`` commits
    the moments. ``reject`` drops the moment history and halves the step, so the
    retry from the same point moves along ``-sign(grad)``, a descent direction.
    Accepted steps grow the step size back towards ``lr`` by ``regrow``.
    """

    def __init__(self, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8, regrow=1.1):
        self.base_lr = lr
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.regrow = regrow
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0
        self._pending = None

    def propose(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        t = self.t + 1
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        out = dict(params)
        m_new, v_new = {}, {}
        for k, g in grads.items():
            m = self.m.get(k, np.zeros_like(g))
            v = self.v.get(k, np.zeros_like(g))
            m_new[k] = self.beta1 * m + (1.0 - self.beta1) * g
            v_new[k] = self.beta2 * v + (1.0 - self.beta2) * g * g
            out[k] = params[k] - self.lr * (m_new[k] / bc1) / (np.sqrt(v_new[k] / bc2) + self.eps)
        self._pending = (t, m_new, v_new)
        return out

    def accept(self):
        self.t, self.m, self.v = self._pending
        self.lr = min(self.base_lr, self.lr * self.regrow)

    def reject(self):
        self.t, self.m, self.v = 0, {}, {}
        self.lr *= 0.5


@dataclass
class TrainReport:
    nll_trace: list[float]
    iterations_run: int
    converged: bool
    final_params: HawkesParams
    best_nll: float = field(default=float("nan"))


def _frozen_keys(frozen) -> set[str]:
    keys = set()
    for name in frozen:
        if name in GROUPS:
            keys.update(GROUPS[name])
        elif name in ARRAY_KEYS:
            keys.add(name)
        else:
            raise ValueError(f"unknown parameter group {name!r}")
    return keys


def fit(
    record: RegionRecord,
    config: ModelConfig,
    init: HawkesParams | None = None,
    frozen=(),
    callback=None,
) -> TrainReport:
    """Fit by full-batch Adam until ``max_iter`` or convergence.

    Steps that would raise the NLL are rejected, so the recorded trace never
    increases and the returned parameters are the best seen.

    Convergence: over the last ``patience`` iterations the best NLL improved by
    less than ``tol`` relative to its excess over the saturated minimum
    ``sum(c - c ln c)`` (half the Poisson deviance). The raw NLL drops the
    ``ln c!`` constant, so its own magnitude is not a meaningful scale.
    ``frozen`` names parameter groups ("base", "lags", "lstm", "head") or
    array keys left untouched. ``callback(iteration, params)`` runs after each
    optimizer step.
    """
    _check_length(record, config)
    if record.n_days < config.first_scored_day + 1:
        raise DayRangeError(f"{record.region.id}: fitting needs at least {config.first_scored_day + 1} days")
    params = init.copy() if init is not None else init_params(config)
    skip = _frozen_keys(frozen)
    opt = Adam(lr=config.step_size)
    c = record.cases[config.first_scored_day - 1 :].astype(float)
    pos = c > 0
    saturated = float(np.sum(c[pos] - c[pos] * np.log(c[pos])))

    def evaluate(arrays, it):
        nll, grad = nll_and_gradient(HawkesParams.from_arrays(arrays), record, config)
        g = {k: v for k, v in grad.to_arrays().items() if k not in skip}
        if not np.isfinite(nll) or not all(np.all(np.isfinite(v)) for v in g.values()):
            raise TrainingDivergedError(it)
        return nll, g

    arrays = params.to_arrays()
    nll, grads = evaluate(arrays, 0)
    trace: list[float] = []
    converged = False
    for it in range(config.max_iter):
        trace.append(nll)
        if it >= config.patience:
            old = trace[it - config.patience]
            if old - nll <= config.tol * max(nll - saturated, 1e-12):
                converged = True
                break
        candidate = opt.propose(arrays, grads)
        cand_nll, cand_grads = evaluate(candidate, it + 1)
        if cand_nll <= nll:
            opt.accept()
            arrays, nll, grads = candidate, cand_nll, cand_grads
        else:
            opt.reject()
        if callback is not None:
            callback(it, HawkesParams.from_arrays(arrays))
    best_nll = nll
    best = HawkesParams.from_arrays(arrays)
    iterations = len(trace)
    log.debug("%s: %d iterations, best nll %.6f", record.region.id, iterations, best_nll)
    return TrainReport(trace, iterations, converged, best.copy(), float(best_nll))


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(float)


def dump_model(params: HawkesParams, config: ModelConfig, region_id: str | None = None) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "region_id": region_id,
        "seed": config.seed,
        "config": config.to_dict(),
        "arrays": {k: _encode(v) for k, v in params.to_arrays().items()},
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def save_model(path, params: HawkesParams, config: ModelConfig, region_id: str | None = None) -> None:
    Path(path).write_text(dump_model(params, config, region_id) + "\n", encoding="utf-8")


def load_model(path) -> tuple[HawkesParams, ModelConfig, str | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file (format={doc.get('format')!r})")
    config = ModelConfig.from_dict(doc["config"])
    params = HawkesParams.from_arrays({k: _decode(v) for k, v in doc["arrays"].items()})
    return params, config, doc.get("region_id")
