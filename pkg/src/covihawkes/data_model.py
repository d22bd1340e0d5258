"""Core domain types: region hierarchy, aligned daily series, model configuration.

Days are 1-based ordinals counted from ``RegionRecord.start_date``. Arrays are
stored 0-based, so day ``t`` lives at index ``t - 1``.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DataConsistencyError, DayRangeError, ShapeError

MOBILITY_COLUMNS = (
    "retail_recreation",
    "grocery_pharmacy",
    "parks",
    "transit",
    "workplaces",
    "residential",
)


class Level(str, enum.Enum):
    NATION = "nation"
    STATE = "state"
    DISTRICT = "district"

    @property
    def child(self) -> Level | None:
        return {Level.NATION: Level.STATE, Level.STATE: Level.DISTRICT}.get(self)


@dataclass(frozen=True)
class RegionId:
    id: str
    level: Level
    parent: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "level", Level(self.level))
        if self.level is Level.NATION and self.parent:
            raise DataConsistencyError(f"nation {self.id!r} cannot have a parent")
        if self.level is not Level.NATION and not self.parent:
            raise DataConsistencyError(f"{self.level.value} {self.id!r} needs a parent")


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RegionRecord:
    """One region's daily cases, mobility, cumulative vaccinations and population.

    Construction validates the invariants: equal series lengths, non-negative
    counts, non-decreasing vaccinations and ``N(t) + V(t) <= population``.
    """

    region: RegionId
    cases: np.ndarray
    mobility: np.ndarray
    vaccinated: np.ndarray
    population: int
    start_date: dt.date

    def __post_init__(self):
        cases = _frozen(self.cases, np.int64)
        mobility = _frozen(self.mobility, np.float64)
        vaccinated = _frozen(self.vaccinated, np.int64)
        if mobility.ndim == 1:
            mobility = _frozen(mobility.reshape(-1, 1), np.float64)
        object.__setattr__(self, "cases", cases)
        object.__setattr__(self, "mobility", mobility)
        object.__setattr__(self, "vaccinated", vaccinated)
        object.__setattr__(self, "population", int(self.population))

        n = len(cases)
        if cases.ndim != 1 or mobility.ndim != 2 or vaccinated.ndim != 1:
            raise ShapeError("cases and vaccinated must be 1-D, mobility 2-D")
        if len(mobility) != n or len(vaccinated) != n:
            raise ShapeError(
                f"{self.region.id}: series lengths differ "
                f"(cases={n}, mobility={len(mobility)}, vaccinated={len(vaccinated)})"
            )
        if self.population <= 0:
            raise DataConsistencyError(f"{self.region.id}: population must be positive")
        if n and cases.min() < 0:
            day = int(np.argmax(cases < 0)) + 1
            raise DataConsistencyError(f"{self.region.id}: negative count on {self._where(day)}")
        if n and vaccinated.min() < 0:
            day = int(np.argmax(vaccinated < 0)) + 1
            raise DataConsistencyError(f"{self.region.id}: negative vaccinated on {self._where(day)}")
        drops = np.flatnonzero(np.diff(vaccinated) < 0)
        if drops.size:
            day = int(drops[0]) + 2
            raise DataConsistencyError(
                f"{self.region.id}: cumulative vaccinated decreases on {self._where(day)}"
            )
        over = np.flatnonzero(np.cumsum(cases) + vaccinated > self.population)
        if over.size:
            day = int(over[0]) + 1
            raise DataConsistencyError(
                f"{self.region.id}: infected plus vaccinated exceeds population "
                f"{self.population} on {self._where(day)}"
            )

    def _where(self, day):
        return f"day {day} ({self.date_of(day).isoformat()})"

    @property
    def n_days(self) -> int:
        return len(self.cases)

    @property
    def d_m(self) -> int:
        return self.mobility.shape[1]

    @property
    def end_date(self) -> dt.date:
        return self.date_of(self.n_days)

    def date_of(self, day: int) -> dt.date:
        return self.start_date + dt.timedelta(days=day - 1)

    def day_of(self, date: dt.date) -> int:
        return (date - self.start_date).days + 1

    def dates(self) -> list[dt.date]:
        return [self.date_of(t) for t in range(1, self.n_days + 1)]

    def head(self, n_days: int) -> RegionRecord:
        """The first ``n_days`` days of this record."""
        if not 1 <= n_days <= self.n_days:
            raise DayRangeError(f"cannot take {n_days} days of a {self.n_days}-day record")
        return replace(
            self,
            cases=self.cases[:n_days],
            mobility=self.mobility[:n_days],
            vaccinated=self.vaccinated[:n_days],
        )


def cumulative_infected(record: RegionRecord, t: int) -> int:
    """Total cases reported strictly before day ``t``; valid for ``1 <= t <= n_days + 1``."""
    if not 1 <= t <= record.n_days + 1:
        raise DayRangeError(f"day {t} outside 1..{record.n_days + 1}")
    return int(record.cases[: t - 1].sum())


@dataclass(frozen=True)
class ModelConfig:
    lag: int = 28
    delta: int = 14
    d_m: int = 6
    hidden: int = 32
    step_size: float = 1e-2
    max_iter: int = 2000
    tol: float = 1e-6
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.lag < 1 or self.hidden < 1 or self.d_m < 1:
            raise ValueError("lag, hidden and d_m must be >= 1")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.max_iter < 0 or self.patience < 1:
            raise ValueError("max_iter must be >= 0 and patience >= 1")

    @property
    def first_r_day(self) -> int:
        """Earliest day whose feature window is fully observed."""
        return self.lag + self.delta + 1

    @property
    def first_scored_day(self) -> int:
        """Earliest day whose intensity only uses fully observed reproduction numbers."""
        return 2 * self.lag + self.delta + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})
