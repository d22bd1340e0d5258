import datetime as dt

import numpy as np
import pytest

from covihawkes.data_model import Level, ModelConfig, RegionId, cumulative_infected
from covihawkes.errors import DataConsistencyError, DayRangeError, ShapeError

from conftest import make_record


@pytest.mark.parametrize("t, expected", [(1, 0), (2, 5), (3, 8), (4, 10)])
def test_cumulative_infected(t, expected):
    assert cumulative_infected(make_record([5, 3, 2]), t) == expected


@pytest.mark.parametrize("t", [0, 5])
def test_cumulative_infected_out_of_range(t):
    with pytest.raises(DayRangeError):
        cumulative_infected(make_record([5, 3, 2]), t)


def test_cumulative_infected_increments_by_daily_count():
    rec = make_record(np.random.default_rng(0).poisson(4, 40))
    prev = cumulative_infected(rec, 1)
    for t in range(1, rec.n_days + 1):
        nxt = cumulative_infected(rec, t + 1)
        assert nxt - prev == rec.cases[t - 1]
        assert nxt >= prev
        prev = nxt


def test_region_hierarchy_rules():
    RegionId("IN", Level.NATION)
    RegionId("KA", "state", "IN")
    with pytest.raises(DataConsistencyError):
        RegionId("IN", Level.NATION, "X")
    with pytest.raises(DataConsistencyError):
        RegionId("BLR", Level.DISTRICT)


def test_record_rejects_decreasing_vaccination():
    with pytest.raises(DataConsistencyError, match="day 3"):
        make_record([1, 1, 1, 1], vaccinated=[0, 5, 4, 6])


def test_record_rejects_overfull_population():
    with pytest.raises(DataConsistencyError, match="2020-03-03"):
        make_record([5, 5, 5], vaccinated=[0, 6, 6], population=10)


def test_record_shape_checks_and_immutability():
    with pytest.raises(ShapeError):
        make_record([1, 2, 3], mobility=np.zeros((2, 6)))
    rec = make_record([1, 2, 3])
    with pytest.raises(ValueError):
        rec.cases[0] = 4


def test_record_dates_and_head():
    rec = make_record([1, 2, 3, 4], start=dt.date(2021, 1, 30))
    assert rec.end_date == dt.date(2021, 2, 2)
    assert rec.day_of(dt.date(2021, 2, 1)) == 3
    assert list(rec.head(2).cases) == [1, 2]


def test_config_defaults():
    c = ModelConfig()
    assert (c.lag, c.delta, c.d_m, c.hidden) == (28, 14, 6, 32)
    assert c.first_r_day == 43 and c.first_scored_day == 71
    assert ModelConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        ModelConfig(lag=0)
