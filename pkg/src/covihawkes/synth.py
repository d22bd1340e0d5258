"""Synthetic data drawn from the generative count model, for recovery tests and demos."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data_model import MOBILITY_COLUMNS, Level, RegionId, RegionRecord
from .ingest import DatasetBundle, aggregate_up

NORMAL_APPROX_ABOVE = 30.0


def poisson_variate(lam: float, rng: np.random.Generator) -> int:
    """One Poisson draw: CDF inversion below 30, rounded normal approximation above."""
    if lam <= 0:
        return 0
    if lam >= NORMAL_APPROX_ABOVE:
        return max(0, int(round(lam + np.sqrt(lam) * rng.standard_normal())))
    u = rng.random()
    k = 0
    p = np.exp(-lam)
    cdf = p
    while u > cdf:
        k += 1
        p *= lam / k
        cdf += p
        if p == 0.0:  # u fell in the lost tail mass
            break
    return k


@dataclass
class SynthSpec:
    mu_true: float
    weights_true: np.ndarray
    r_schedule: np.ndarray | float
    population: int
    horizon: int
    seed: int = 0
    vaccinated: np.ndarray | None = None
    mobility: np.ndarray | None = None
    initial_counts: np.ndarray | None = None
    region: RegionId = RegionId("SYN", Level.NATION)
    start_date: dt.date = dt.date(2020, 3, 2)

    def __post_init__(self):
        w = np.asarray(self.weights_true, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights_true must be a non-negative vector summing to 1")
        self.weights_true = w
        r = np.broadcast_to(np.asarray(self.r_schedule, dtype=float), (self.horizon,))
        if np.any(r < 0):
            raise ValueError("r_schedule must be non-negative")
        self.r_schedule = np.array(r)
        if self.mu_true < 0 or self.population <= 0 or self.horizon < 1:
            raise ValueError("need mu_true >= 0, population > 0, horizon >= 1")


def generate(spec: SynthSpec) -> RegionRecord:
    """Simulate ``spec.horizon`` days of counts forward from an empty history.

    ``initial_counts`` (if given) fixes the first days instead of sampling them.
    Draws are truncated so infected plus vaccinated never exceeds the population.
    """
    rng = np.random.default_rng(spec.seed)
    T, L = spec.horizon, len(spec.weights_true)
    w_rev = spec.weights_true[::-1]  # w_rev[i-1] = w[L-i]
    vacc = np.zeros(T, dtype=np.int64) if spec.vaccinated is None else np.asarray(spec.vaccinated, dtype=np.int64)
    mob = np.zeros((T, len(MOBILITY_COLUMNS))) if spec.mobility is None else np.asarray(spec.mobility, dtype=float)
    fixed = np.asarray([] if spec.initial_counts is None else spec.initial_counts, dtype=np.int64)
    rc = np.zeros(T)
    cases = np.zeros(T, dtype=np.int64)
    n_prev = 0
    for k in range(T):
        v_prev = vacc[k - 1] if k else 0
        if k < len(fixed):
            c = int(fixed[k])
        else:
            back = min(L, k)
            lam = spec.mu_true + np.dot(w_rev[:back], rc[k - 1 :: -1][:back]) if back else spec.mu_true
            lam_t = (1.0 - (n_prev + v_prev) / spec.population) * lam
            c = poisson_variate(lam_t, rng)
        c = min(c, max(0, spec.population - n_prev - int(vacc[k])))
        cases[k] = c
        rc[k] = spec.r_schedule[k] * c
        n_prev += c
    return RegionRecord(spec.region, cases, mob, vacc, spec.population, spec.start_date)


def mobility_pattern(days: int, rng: np.random.Generator, start_date: dt.date) -> np.ndarray:
    """Plausible mobility: weekday cycle, a lockdown trough and a slow recovery."""
    t = np.arange(days, dtype=float)
    weekday = np.array([(start_date + dt.timedelta(days=int(k))).weekday() for k in range(days)])
    weekend = (weekday >= 5).astype(float)
    trough = -45.0 * np.exp(-0.5 * ((t - 60.0) / 25.0) ** 2)
    wave = -15.0 * np.exp(-0.5 * ((t - 0.7 * days) / 30.0) ** 2)
    level = trough + wave + 5.0 * np.sin(2 * np.pi * t / 180.0)
    sign = np.array([1.0, 1.0, 1.3, 1.0, 1.0, -0.5])  # residential moves opposite
    base = level[:, None] * sign[None, :]
    base[:, 2] += 10.0 * weekend
    base[:, 4] -= 20.0 * weekend
    base[:, 5] += 5.0 * weekend
    return np.round(base + rng.normal(0.0, 2.0, size=base.shape), 6)


def r_from_mobility(mobility: np.ndarray, r0: float = 1.05, sensitivity: float = 1.2) -> np.ndarray:
    activity = mobility[:, [0, 1, 3, 4]].mean(axis=1) / 100.0
    return r0 * np.exp(sensitivity * activity)


def synthetic_world(
    n_districts: int = 3,
    days: int = 600,
    seed: int = 0,
    mu: float = 2.0,
    lag: int = 28,
    population: int = 2_000_000,
    start_date: dt.date = dt.date(2020, 2, 15),
    weights: np.ndarray | None = None,
) -> DatasetBundle:
    """A nation with one state and ``n_districts`` simulated districts.

    District reproduction numbers follow their mobility; the state and nation
    records are aggregated from the districts.
    """
    if weights is None:
        weights = np.exp(-0.5 * ((np.arange(lag) - (lag - 6)) / 3.0) ** 2)
        weights /= weights.sum()
    nation = RegionId("IN", Level.NATION)
    state = RegionId("ST01", Level.STATE, "IN")
    districts = []
    for k in range(n_districts):
        sub = np.random.default_rng([seed, k])
        mob = mobility_pattern(days, sub, start_date)
        vacc_rate = population * 0.0015
        start_v = days // 2
        vacc = np.concatenate([np.zeros(start_v), np.cumsum(np.full(days - start_v, vacc_rate))]).astype(np.int64)
        spec = SynthSpec(
            mu_true=mu,
            weights_true=weights,
            r_schedule=r_from_mobility(mob),
            population=population,
            horizon=days,
            seed=int(sub.integers(2**31)),
            vaccinated=vacc,
            mobility=mob,
            region=RegionId(f"D{k + 1:02d}", Level.DISTRICT, state.id),
            start_date=start_date,
        )
        districts.append(generate(spec))

    def placeholder(region):
        first = districts[0]
        return RegionRecord(region, np.zeros(days), first.mobility, np.zeros(days), 1, start_date)

    records = {r.region.id: r for r in districts}
    records[state.id] = placeholder(state)
    records[nation.id] = placeholder(nation)
    end = start_date + dt.timedelta(days=days - 1)
    bundle = DatasetBundle(records, (start_date, end))
    bundle = aggregate_up(bundle, Level.STATE)
    return aggregate_up(bundle, Level.NATION)
