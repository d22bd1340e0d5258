"""CSV ingestion into aligned ``RegionRecord``s, plus aggregation up the hierarchy.

Input files (UTF-8, one header row):

* ``cases.csv``        ``date,region_id,count``
* ``mobility.csv``     ``date,region_id,`` + the six ``MOBILITY_COLUMNS``
* ``vaccination.csv``  ``date,region_id,cumulative_vaccinated``
* ``population.csv``   ``region_id,population``
* ``regions.csv``      ``region_id,level,parent_id``
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data_model import MOBILITY_COLUMNS, Level, RegionId, RegionRecord
from .errors import (
    DataConsistencyError,
    EmptyAggregationError,
    ParseError,
    UnknownRegionError,
)

log = logging.getLogger(__name__)

FILE_NAMES = {
    "cases": "cases.csv",
    "mobility": "mobility.csv",
    "vaccination": "vaccination.csv",
    "population": "population.csv",
    "regions": "regions.csv",
}
HEADERS = {
    "cases": ["date", "region_id", "count"],
    "mobility": ["date", "region_id", *MOBILITY_COLUMNS],
    "vaccination": ["date", "region_id", "cumulative_vaccinated"],
    "population": ["region_id", "population"],
    "regions": ["region_id", "level", "parent_id"],
}


@dataclass(frozen=True)
class DatasetBundle:
    records: dict[str, RegionRecord]
    date_range: tuple[dt.date, dt.date]

    def __post_init__(self):
        for rid, rec in self.records.items():
            if (rec.start_date, rec.end_date) != tuple(self.date_range):
                raise DataConsistencyError(f"{rid} does not span {self.date_range}")
            parent = rec.region.parent
            if parent is not None and parent not in self.records:
                raise UnknownRegionError(f"{rid} references missing parent {parent!r}")

    def at_level(self, level) -> list[RegionRecord]:
        level = Level(level)
        return [r for r in self.records.values() if r.region.level is level]

    def children(self, region_id: str) -> list[RegionRecord]:
        return [r for r in self.records.values() if r.region.parent == region_id]


def _rows(path, kind):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADERS[kind]:
            raise ParseError(path, 1, f"expected header {','.join(HEADERS[kind])}, got {header}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(HEADERS[kind]):
                raise ParseError(path, reader.line_num, f"expected {len(HEADERS[kind])} fields, got {len(row)}")
            yield reader.line_num, [cell.strip() for cell in row]


def _parse(path, line, fn, text, what):
    try:
        return fn(text)
    except ValueError:
        raise ParseError(path, line, f"bad {what} {text!r}") from None


def _int(text):
    # tolerate "12.0" style integers produced by spreadsheets
    value = float(text)
    if not value.is_integer():
        raise ValueError(text)
    return int(value)


def _read_dated(path, kind, regions, n_values, convert):
    series: dict[str, dict[dt.date, object]] = {}
    for line, row in _rows(path, kind):
        date = _parse(path, line, dt.date.fromisoformat, row[0], "date")
        rid = row[1]
        if rid not in regions:
            raise UnknownRegionError(f"{path}:{line}: region {rid!r} is not listed in the regions file")
        values = [_parse(path, line, convert, v, "value") for v in row[2 : 2 + n_values]]
        by_date = series.setdefault(rid, {})
        if date in by_date:
            raise ParseError(path, line, f"duplicate row for {rid} on {date}")
        by_date[date] = values[0] if n_values == 1 else values
    return series


def _read_regions(path):
    regions = {}
    for line, (rid, level, parent) in _rows(path, "regions"):
        if rid in regions:
            raise ParseError(path, line, f"duplicate region {rid!r}")
        try:
            regions[rid] = RegionId(rid, Level(level), parent or None)
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    for rid, reg in regions.items():
        if reg.parent is None:
            continue
        if reg.parent not in regions:
            raise UnknownRegionError(f"{path}: parent {reg.parent!r} of {rid!r} is not listed")
        if regions[reg.parent].level.child is not reg.level:
            raise DataConsistencyError(
                f"{rid} ({reg.level.value}) cannot have a {regions[reg.parent].level.value} parent"
            )
    return regions


def _interp_mobility(known: dict[dt.date, list[float]], days: list[dt.date], rid: str) -> np.ndarray:
    ords = np.array([d.toordinal() for d in days], dtype=float)
    have = sorted(d for d in known if days[0] <= d <= days[-1])
    if not have:
        raise DataConsistencyError(f"{rid}: no mobility observations inside {days[0]}..{days[-1]}")
    x = np.array([d.toordinal() for d in have], dtype=float)
    y = np.array([known[d] for d in have], dtype=float)
    missing = len(days) - len(have)
    if missing:
        log.warning("%s: %d missing mobility days filled by interpolation", rid, missing)
    # np.interp extends endpoints with the nearest observed value
    return np.column_stack([np.interp(ords, x, y[:, k]) for k in range(y.shape[1])])


def load_bundle(cases_path, mobility_path, vaccination_path, population_path, regions_path) -> DatasetBundle:
    """Read the five CSVs and align every region onto the common date range."""
    regions = _read_regions(regions_path)
    cases = _read_dated(cases_path, "cases", regions, 1, _int)
    mobility = _read_dated(mobility_path, "mobility", regions, len(MOBILITY_COLUMNS), float)
    vacc = _read_dated(vaccination_path, "vaccination", regions, 1, _int)
    population = {}
    for line, (rid, pop) in _rows(population_path, "population"):
        if rid not in regions:
            raise UnknownRegionError(f"{population_path}:{line}: region {rid!r} is not listed in the regions file")
        population[rid] = _parse(population_path, line, _int, pop, "population")

    for name, data in (("cases", cases), ("mobility", mobility), ("vaccination", vacc), ("population", population)):
        absent = sorted(set(regions) - set(data))
        if absent:
            raise DataConsistencyError(f"no {name} data for regions {absent}")

    first = max(min(s) for data in (cases, mobility, vacc) for s in data.values())
    last = min(max(s) for data in (cases, mobility, vacc) for s in data.values())
    if first > last:
        raise DataConsistencyError(f"series share no common dates (latest start {first}, earliest end {last})")
    days = [first + dt.timedelta(days=k) for k in range((last - first).days + 1)]

    records = {}
    for rid in sorted(regions):
        c = np.empty(len(days), dtype=np.int64)
        missing = 0
        for k, d in enumerate(days):
            value = cases[rid].get(d)
            if value is None:
                missing += 1
                value = 0
            elif value < 0:
                log.warning("%s: negative count %d on %s clamped to 0", rid, value, d)
                value = 0
            c[k] = value
        if missing:
            log.warning("%s: %d missing case days filled with 0", rid, missing)

        v = np.empty(len(days), dtype=np.int64)
        prev, prev_date = None, None
        earlier = [d for d in vacc[rid] if d < first]
        if earlier:
            prev_date = max(earlier)
            prev = vacc[rid][prev_date]
        for k, d in enumerate(days):
            value = vacc[rid].get(d)
            if value is None:
                value = prev if prev is not None else 0
            elif prev is not None and value < prev:
                raise DataConsistencyError(
                    f"{rid}: cumulative vaccinated decreases on day {k + 1} ({d}): {prev} -> {value}"
                )
            v[k] = value
            prev = value

        m = _interp_mobility(mobility[rid], days, rid)
        n_t = np.cumsum(c)
        over = np.flatnonzero(n_t + v > population[rid])
        if over.size:
            k = int(over[0])
            raise DataConsistencyError(
                f"{rid}: infected {n_t[k]} + vaccinated {v[k]} exceeds population "
                f"{population[rid]} on day {k + 1} ({days[k]})"
            )
        records[rid] = RegionRecord(regions[rid], c, m, v, population[rid], first)
    return DatasetBundle(records, (first, last))


def load_bundle_dir(directory) -> DatasetBundle:
    d = Path(directory)
    return load_bundle(*(d / FILE_NAMES[k] for k in ("cases", "mobility", "vaccination", "population", "regions")))


def aggregate_records(region: RegionId, children: list[RegionRecord]) -> RegionRecord:
    """Sum counts, vaccinations and population; population-weighted mean mobility."""
    if not children:
        raise EmptyAggregationError(f"{region.id} has no children to aggregate")
    pops = np.array([r.population for r in children], dtype=float)
    mob = np.tensordot(pops / pops.sum(), np.stack([r.mobility for r in children]), axes=1)
    return RegionRecord(
        region,
        np.sum([r.cases for r in children], axis=0),
        mob,
        np.sum([r.vaccinated for r in children], axis=0),
        int(pops.sum()),
        children[0].start_date,
    )


def aggregate_up(bundle: DatasetBundle, level) -> DatasetBundle:
    """Rebuild every record at ``level`` from its children one level down."""
    level = Level(level)
    if level.child is None:
        raise EmptyAggregationError(f"{level.value} level has no children")
    targets = bundle.at_level(level)
    if not targets:
        raise EmptyAggregationError(f"bundle has no {level.value} regions")
    records = dict(bundle.records)
    built = 0
    for rec in targets:
        kids = [r for r in bundle.children(rec.region.id) if r.region.level is level.child]
        if kids:
            records[rec.region.id] = aggregate_records(rec.region, kids)
            built += 1
    if not built:
        raise EmptyAggregationError(f"no {level.child.value} children present for level {level.value}")
    return replace(bundle, records=records)


def _fmt(x):
    return f"{x:.6f}"


def write_bundle(bundle: DatasetBundle, directory) -> dict[str, Path]:
    """Write ``bundle`` as the five ingest CSVs; returns the paths by kind."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in FILE_NAMES.items()}
    recs = [bundle.records[k] for k in sorted(bundle.records)]
    with paths["regions"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS["regions"])
        for r in recs:
            w.writerow([r.region.id, r.region.level.value, r.region.parent or ""])
    with paths["population"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS["population"])
        for r in recs:
            w.writerow([r.region.id, r.population])
    for kind in ("cases", "mobility", "vaccination"):
        with paths[kind].open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADERS[kind])
            for r in recs:
                for k, d in enumerate(r.dates()):
                    if kind == "cases":
                        w.writerow([d.isoformat(), r.region.id, int(r.cases[k])])
                    elif kind == "vaccination":
                        w.writerow([d.isoformat(), r.region.id, int(r.vaccinated[k])])
                    else:
                        w.writerow([d.isoformat(), r.region.id, *map(_fmt, r.mobility[k])])
    return paths
