"""Rolling-origin validation of short-term forecasts.

The validation span starting at day ``t_s`` is cut into windows of ``w`` days
starting every 7 days. For each window a fresh model is fitted on all data
before the window, the window is forecast with bootstrapped counts, and the
interval-summed absolute percentage error is recorded.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import ModelConfig, RegionRecord
from .errors import DayRangeError, DomainError
from .scenario import MEAN_PATH, roll_forward
from .trainer import fit

log = logging.getLogger(__name__)

STRIDE = 7


class UndefinedMapeError(DomainError, ZeroDivisionError):
    pass


def make_intervals(t_s: int, span: int, w: int) -> list[range]:
    """Windows ``{t_s + 7(i-1) + k : k < w}`` that fit inside ``span`` days."""
    if w < 1 or span < 1:
        raise ValueError("span and window must be positive")
    if w > span:
        raise ValueError(f"window {w} is longer than the validation span {span}")
    n = (span - w) // STRIDE + 1
    return [range(t_s + STRIDE * i, t_s + STRIDE * i + w) for i in range(n)]


def mape(actual, predicted) -> float:
    """``|sum(actual) - sum(predicted)| / sum(actual) * 100``."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ValueError(f"length mismatch: {actual.shape} vs {predicted.shape}")
    total = math.fsum(actual)
    if total <= 0:
        raise UndefinedMapeError("actual counts sum to zero; MAPE is undefined")
    return abs(total - math.fsum(predicted)) / total * 100.0


@dataclass(frozen=True)
class ValidationPlan:
    t_s: int
    span: int
    w: int

    @property
    def intervals(self) -> list[range]:
        return make_intervals(self.t_s, self.span, self.w)


@dataclass(frozen=True)
class IntervalScore:
    index: int
    start: int
    end: int
    actual_sum: float
    predicted_sum: float
    mape: float | None  # None: skipped, actual sum was zero


@dataclass(frozen=True)
class ValidationReport:
    window: int
    per_interval: list[IntervalScore]
    aggregate: float

    @property
    def skipped(self) -> list[int]:
        return [s.index for s in self.per_interval if s.mape is None]


def fit_and_forecast(record: RegionRecord, start: int, horizon: int, config: ModelConfig) -> np.ndarray:
    """Train on days before ``start``; mean-path forecast of the next ``horizon`` days.

    Mobility and vaccination inside the window come from the record.
    """
    train = record.head(start - 1)
    params = fit(train, config).final_params
    end = start - 1 + horizon
    _, pred, _ = roll_forward(
        params,
        config,
        train.cases,
        record.mobility[:end],
        record.vaccinated[:end],
        record.population,
        horizon,
        MEAN_PATH,
    )
    return pred


def replay_actuals(record: RegionRecord, start: int, horizon: int, config: ModelConfig) -> np.ndarray:
    """Perfect forecaster: returns the observed counts. Diagnostic seam."""
    return record.cases[start - 1 : start - 1 + horizon].astype(float)


def _run(forecaster, record, config, interval):
    return forecaster(record, interval.start, len(interval), config)


def score_interval(index: int, interval: range, actual, predicted) -> IntervalScore:
    a, p = math.fsum(actual), math.fsum(predicted)
    try:
        psi = mape(actual, predicted)
    except UndefinedMapeError:
        log.warning("interval %d (days %d-%d) has no cases; excluded", index, interval.start, interval[-1])
        psi = None
    return IntervalScore(index, interval.start, interval[-1], a, p, psi)


def rolling_validate(
    record: RegionRecord,
    config: ModelConfig,
    plan: ValidationPlan,
    forecaster=fit_and_forecast,
    workers: int = 1,
) -> ValidationReport:
    """Score every interval of ``plan``; intervals with zero actual cases are excluded from E(w).

    ``forecaster(record, start_day, horizon, config)`` returns predicted counts
    and must only use counts before ``start_day``.
    """
    intervals = plan.intervals
    if intervals[-1][-1] > record.n_days:
        raise DayRangeError(f"validation ends on day {intervals[-1][-1]} but the record has {record.n_days}")
    if forecaster is fit_and_forecast and plan.t_s - 1 < config.first_scored_day + 1:
        raise DayRangeError(
            f"training before day {plan.t_s} gives {plan.t_s - 1} days; "
            f"at least {config.first_scored_day + 1} are needed"
        )
    job = functools.partial(_run, forecaster, record, config)
    if workers > 1 and len(intervals) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            preds = list(pool.map(job, intervals))
    else:
        preds = [job(iv) for iv in intervals]
    scores = [
        score_interval(i + 1, iv, record.cases[iv.start - 1 : iv[-1]], pred)
        for i, (iv, pred) in enumerate(zip(intervals, preds))
    ]
    kept = [s.mape for s in scores if s.mape is not None]
    aggregate = float(np.mean(kept)) if kept else float("nan")
    return ValidationReport(plan.w, scores, aggregate)


REPORT_HEADER = ["window", "interval_index", "start_day", "end_day", "actual_sum", "predicted_sum", "mape"]


def write_report_csv(path, reports: list[ValidationReport]) -> None:
    """One row per interval plus a ``summary`` row per window carrying E(w)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for rep in reports:
            for s in rep.per_interval:
                psi = "skipped" if s.mape is None else f"{s.mape:.6f}"
                w.writerow([rep.window, s.index, s.start, s.end, f"{s.actual_sum:.6f}", f"{s.predicted_sum:.6f}", psi])
            iv = rep.per_interval
            w.writerow([
                rep.window,
                "summary",
                iv[0].start,
                iv[-1].end,
                f"{sum(s.actual_sum for s in iv):.6f}",
                f"{sum(s.predicted_sum for s in iv):.6f}",
                f"{rep.aggregate:.6f}",
            ])
