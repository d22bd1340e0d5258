"""Long-horizon forecasts under lockdown scenarios.

Unobserved mobility is replaced by per-weekday averages taken from a
historical interval; unobserved counts are the model's own predictions fed
back as history. Weekday index 1 is Sunday, 7 is Saturday.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import ModelConfig, RegionRecord
from .errors import DayRangeError
from .hawkes_core import discount, softplus
from .repro_net import feature_windows, head_activation, lstm_forward
from .synth import poisson_variate
from .trainer import HawkesParams

log = logging.getLogger(__name__)

MEAN_PATH = "mean_path"
SAMPLED = "sampled"

PRESETS = {
    "strict": (dt.date(2020, 3, 25), dt.date(2020, 4, 14)),
    "unlock7": (dt.date(2020, 12, 13), dt.date(2020, 12, 19)),
    "none": (dt.date(2020, 2, 15), dt.date(2020, 3, 3)),
    "current": (dt.date(2021, 8, 13), dt.date(2021, 8, 19)),
}


def weekday_index(date: dt.date) -> int:
    """1 = Sunday ... 7 = Saturday."""
    return (date.weekday() + 1) % 7 + 1


def builtin_presets() -> list[tuple[str, tuple[dt.date, dt.date]]]:
    return list(PRESETS.items())


@dataclass
class ScenarioTable:
    name: str
    weekday_mobility: np.ndarray  # (7, d_m); row 0 is Sunday
    source_interval: tuple[dt.date, dt.date]

    def for_date(self, date: dt.date) -> np.ndarray:
        return self.weekday_mobility[weekday_index(date) - 1]

    def average(self) -> np.ndarray:
        return self.weekday_mobility.mean(axis=0)


def weekday_mobility(record: RegionRecord, start: dt.date, end: dt.date, name: str = "custom") -> ScenarioTable:
    """Average the record's mobility by weekday over ``[start, end]`` inclusive.

    A weekday absent from the interval takes the mean over all its days.
    """
    if end < start:
        raise ValueError(f"interval end {end} precedes start {start}")
    first, last = record.day_of(start), record.day_of(end)
    if first < 1 or last > record.n_days:
        missing = [
            d.isoformat()
            for d in (start + dt.timedelta(days=k) for k in range((end - start).days + 1))
            if not 1 <= record.day_of(d) <= record.n_days
        ]
        shown = missing if len(missing) <= 6 else [*missing[:3], "...", *missing[-2:]]
        raise DayRangeError(
            f"scenario {name!r} needs mobility for {len(missing)} dates outside "
            f"{record.start_date}..{record.end_date}: {', '.join(shown)}"
        )
    rows = record.mobility[first - 1 : last]
    idx = np.array([weekday_index(start + dt.timedelta(days=k)) for k in range(len(rows))])
    table = np.empty((7, rows.shape[1]))
    for i in range(1, 8):
        sel = rows[idx == i]
        if len(sel):
            table[i - 1] = sel.mean(axis=0)
        else:
            log.warning("scenario %r: weekday %d absent from %s..%s, using the interval mean", name, i, start, end)
            table[i - 1] = rows.mean(axis=0)
    return ScenarioTable(name, table, (start, end))


def preset_table(record: RegionRecord, name: str) -> ScenarioTable:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return weekday_mobility(record, *PRESETS[name], name=name)


@dataclass
class LongForecast:
    scenario: str
    mode: str
    horizon: int
    seed: int | None
    dates: list[dt.date]
    lambda_tilde: np.ndarray
    predicted: np.ndarray
    r_values: np.ndarray = field(repr=False, default=None)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.predicted)


def _network_r(params: HawkesParams, config: ModelConfig, cases, mobility, population, days):
    windows = feature_windows(cases, mobility, population, days, config.lag, config.delta)
    state = lstm_forward(windows, params.lstm)
    return softplus(head_activation(state.h, params.head))


def roll_forward(
    params: HawkesParams,
    config: ModelConfig,
    cases,
    mobility,
    vaccinated,
    population: int,
    horizon: int,
    mode: str = MEAN_PATH,
    rng: np.random.Generator | None = None,
    r_fn=None,
):
    """Extend ``cases`` (observed days ``1..n_obs``) by ``horizon`` days.

    ``mobility`` and ``vaccinated`` must already cover ``n_obs + horizon``
    days. ``r_fn(day)`` replaces the network's reproduction number when given.
    Returns ``(lambda_tilde, predicted, r)`` over the horizon, where ``r``
    holds ``R(s)`` for ``s = n_obs - L + 1 .. n_obs + horizon - 1``.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if mode not in (MEAN_PATH, SAMPLED):
        raise ValueError(f"mode must be {MEAN_PATH!r} or {SAMPLED!r}")
    if mode == SAMPLED and rng is None:
        raise ValueError("sampled mode needs an rng")
    L = config.lag
    n_obs = len(cases)
    total = n_obs + horizon
    if len(mobility) < total or len(vaccinated) < total:
        raise DayRangeError(f"mobility and vaccination must cover {total} days")
    first_needed = n_obs - L + 1
    if r_fn is None and first_needed < config.first_r_day:
        raise DayRangeError(
            f"warm start needs {config.first_scored_day - 1} observed days, got {n_obs}"
        )
    w_rev = params.weights[::-1]
    mu = params.mu
    c = np.zeros(total)
    c[:n_obs] = cases
    vacc = np.asarray(vaccinated, dtype=float)
    R = np.zeros(total + 1)  # R[s] for 1-based day s

    def r_of(days):
        if r_fn is not None:
            return np.array([r_fn(int(s)) for s in days], dtype=float)
        return _network_r(params, config, c, mobility, population, days)

    warm = np.arange(max(first_needed, 1), n_obs + 1)
    R[warm] = r_of(warm)
    n_prev = float(c[:n_obs].sum())
    lam_t = np.zeros(horizon)
    pred = np.zeros(horizon)
    for k in range(horizon):
        t = n_obs + k + 1
        if t - 1 > n_obs:
            R[t - 1] = r_of([t - 1])[0]
        back = np.arange(t - 1, t - L - 1, -1)  # days t-1 .. t-L
        valid = back >= 1
        lam = mu + np.dot(w_rev[valid], R[back[valid]] * c[back[valid] - 1])
        v_prev = vacc[t - 2] if t >= 2 else 0.0
        v_prev = min(v_prev, population - n_prev)
        lt = discount(lam, n_prev, v_prev, population)
        room = max(0.0, population - n_prev - min(vacc[t - 1], population - n_prev))
        if mode == MEAN_PATH:
            ct = min(lt, room)
        else:
            ct = float(min(poisson_variate(lt, rng), np.floor(room)))
        lam_t[k] = lt
        pred[k] = ct
        c[t - 1] = ct
        n_prev += ct
    return lam_t, pred, R[first_needed if first_needed >= 1 else 1 : total]


def long_forecast(
    params: HawkesParams,
    config: ModelConfig,
    record: RegionRecord,
    table: ScenarioTable,
    horizon: int,
    mode: str = MEAN_PATH,
    seed: int | None = None,
    r_fn=None,
) -> LongForecast:
    """Forecast ``horizon`` days past the end of ``record`` under ``table``.

    Vaccination is held at its last observed value.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if mode == SAMPLED and seed is None:
        raise ValueError("sampled mode needs a seed")
    dates = [record.end_date + dt.timedelta(days=k + 1) for k in range(horizon)]
    future_mob = np.array([table.for_date(d) for d in dates])
    mobility = np.vstack([record.mobility, future_mob])
    vacc = np.concatenate([record.vaccinated, np.full(horizon, record.vaccinated[-1])])
    rng = np.random.default_rng(seed) if mode == SAMPLED else None
    lam_t, pred, r = roll_forward(
        params, config, record.cases, mobility, vacc, record.population, horizon, mode, rng, r_fn
    )
    return LongForecast(table.name, mode, horizon, seed if mode == SAMPLED else None, dates, lam_t, pred, r)


FORECAST_HEADER = ["date", "scenario", "lambda_tilde", "predicted_count", "cumulative_predicted"]
PLOT_HEADER = ["date", "value"]


def write_forecast_csv(path, forecast: LongForecast) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for d, lt, c, cum in zip(forecast.dates, forecast.lambda_tilde, forecast.predicted, forecast.cumulative):
            w.writerow([d.isoformat(), forecast.scenario, f"{lt:.6f}", f"{c:.6f}", f"{cum:.6f}"])


def write_plot_csv(path, forecast: LongForecast) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_HEADER)
        for d, c in zip(forecast.dates, forecast.predicted):
            w.writerow([d.isoformat(), f"{c:.6f}"])
