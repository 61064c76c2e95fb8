"""Descriptive statistics over parsed violation records."""

from __future__ import annotations

import calendar
import enum
import logging
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, time
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateInput,
    EmptyInput,
    IncompleteMonth,
    MissingCensus,
    UnknownCity,
    UnknownDimension,
    UnknownFlag,
    ZeroPopulation,
)
from .ingest import (
    BOOLEAN_FIELDS,
    DEFAULT_PRECISION,
    DEFAULT_YEAR,
    CityCensus,
    ContextLabel,
    Dataset,
    ViolationRecord,
    WeatherDay,
    city_key,
)

log = logging.getLogger(__name__)

DEFAULT_HOTSPOT_THRESHOLD = 10
DEFAULT_MIN_PROMINENCE = 0.5
DEFAULT_NIGHT_FALLBACK = (time(20, 0), time(6, 0))

MONTHS = tuple(calendar.month_abbr[1:])
WEEKDAYS = tuple(calendar.day_abbr)
AXIS_SIZES = {"hour": 24, "weekday": 7, "month": 12}


def normalize_description(text: str) -> str:
    """Collapse whitespace and sentence-case, so exports in caps match the printed table."""
    text = " ".join(text.split()).lower()
    return text[:1].upper() + text[1:]


# Ten most frequent 2017 violations with their reference totals.
TABLE1_TOP10 = (
    ("Driver failure to obey properly placed traffic control device instructions", 16057),
    ("Failure to display registration card upon demand by police officer", 8779),
    ("Driver using hands to use handheld telephone while motor vehicle is in motion", 5904),
    ("Displaying expired registration plate issued by any state", 5004),
    ("Failure of individual driving on highway to display license to uniformed police on demand", 4957),
    ("Driving vehicle on highway with suspended registration", 4405),
    ("Driver failure to stop at stop sign line", 3986),
    ("Failure to obey stop light signal", 3473),
    ("Driving vehicle on highway without current registration plates and validation tabs", 3602),
    ("Exceeding the posted speed limit of 40 mph", 3323),
)


class Category(str, enum.Enum):
    CATEGORY1 = "Category1"  # road-rule disrespect
    CATEGORY2 = "Category2"  # missing equipment or documents
    UNCATEGORIZED = "Uncategorized"


DEFAULT_CATEGORY_MAP = {
    normalize_description(desc): (Category.CATEGORY1 if rank in (1, 3, 7, 8, 10) else Category.CATEGORY2)
    for rank, (desc, _) in enumerate(TABLE1_TOP10, start=1)
}

PHONE_EVENT = TABLE1_TOP10[2][0]


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    median: float
    variance: float
    std: float

    def rounded(self, digits: int = 1) -> dict:
        return {k: round(getattr(self, k), digits) for k in ("mean", "median", "variance", "std")}

    def as_dict(self) -> dict:
        return {"mean": self.mean, "median": self.median, "variance": self.variance, "std": self.std}


@dataclass(frozen=True)
class FrequencyTable:
    rows: tuple[tuple[str, int], ...]
    scope_size: int = 0

    def percent(self, key: str) -> float:
        if not self.scope_size:
            return 0.0
        return 100.0 * dict(self.rows).get(key, 0) / self.scope_size

    def with_percent(self) -> list[tuple[str, int, float]]:
        return [(k, c, self.percent(k)) for k, c in self.rows]

    def __getitem__(self, key):
        return dict(self.rows)[key]

    def keys(self):
        return [k for k, _ in self.rows]


@dataclass(frozen=True)
class CrossTab:
    dimensions: tuple[str, ...]
    cells: Mapping[tuple[bool, ...], int]

    @property
    def total(self) -> int:
        return sum(self.cells.values())


@dataclass(frozen=True)
class Histogram:
    axis: str
    bins: tuple[int, ...]

    def __post_init__(self):
        if AXIS_SIZES.get(self.axis) != len(self.bins):
            raise ValueError(f"{self.axis} histogram needs {AXIS_SIZES.get(self.axis)} bins")

    @property
    def labels(self) -> tuple[str, ...]:
        if self.axis == "hour":
            return tuple(str(h) for h in range(24))
        return WEEKDAYS if self.axis == "weekday" else MONTHS


@dataclass(frozen=True)
class HotspotCell:
    location_key: tuple[float, float]
    count: int
    context_label: ContextLabel | None = None


@dataclass(frozen=True)
class NightSeries:
    counts: tuple[int, ...]
    uncovered: int = 0  # events whose date had no weather row


@dataclass(frozen=True)
class ProfileConfig:
    analysis_year: int = DEFAULT_YEAR
    precision: int = DEFAULT_PRECISION
    hotspot_threshold: int = DEFAULT_HOTSPOT_THRESHOLD
    night_fallback: tuple[time, time] = DEFAULT_NIGHT_FALLBACK


@dataclass(frozen=True)
class CityProfile:
    city: str
    violation_count: int
    violation_share: float
    top_event: str | None
    second_event: str | None
    night_stats: SummaryStats
    location_stats: SummaryStats
    light_truck_pct: float
    cars_under_10y_pct: float
    injury_count: int
    accident_count: int
    belt_count: int
    census: CityCensus
    hotspots: tuple[HotspotCell, ...] = field(default=())

    @property
    def context_label(self) -> ContextLabel | None:
        """Most frequent annotation among the city's hotspots (ties: label name)."""
        labels = Counter(c.context_label for c in self.hotspots if c.context_label is not None)
        if not labels:
            return None
        return min(labels.items(), key=lambda kv: (-kv[1], kv[0].value))[0]


def summary_stats(values: Iterable[float], quantity: str = "values") -> SummaryStats:
    """Mean, median, population variance (divide by n) and its square root."""
    data = list(values)
    if not data:
        raise EmptyInput(f"summary_stats: no {quantity}")
    variance = float(statistics.pvariance(data))
    return SummaryStats(
        mean=statistics.fmean(data),
        median=float(statistics.median(data)),
        variance=variance,
        std=math.sqrt(variance),
    )


def _frequency(keys: Iterable[str], top_k: int | None = None, scope_size: int | None = None) -> FrequencyTable:
    counts = Counter(keys)
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if top_k is not None:
        rows = rows[:top_k]
    return FrequencyTable(tuple(rows), sum(counts.values()) if scope_size is None else scope_size)


def rank_violations(records: Iterable[ViolationRecord], top_k: int | None = 10) -> FrequencyTable:
    if top_k is not None and top_k < 1:
        raise ValueError("top_k must be >= 1")
    return _frequency((normalize_description(r.description) for r in records), top_k)


def categorize_violation(description: str, category_map: Mapping[str, Category] | None = None) -> Category:
    category_map = DEFAULT_CATEGORY_MAP if category_map is None else category_map
    return category_map.get(normalize_description(description), Category.UNCATEGORIZED)


def filter_scope(records: Iterable[ViolationRecord], scope: str = "all",
                 category_map: Mapping[str, Category] | None = None) -> list[ViolationRecord]:
    """``all``, ``category1``, ``category2``, or ``event:<description>``."""
    records = list(records)
    if scope == "all":
        return records
    if scope in ("category1", "category2"):
        want = Category.CATEGORY1 if scope == "category1" else Category.CATEGORY2
        return [r for r in records if categorize_violation(r.description, category_map) is want]
    if scope.startswith("event:"):
        target = normalize_description(scope[len("event:"):])
        return [r for r in records if normalize_description(r.description) == target]
    raise ValueError(f"unknown scope {scope!r}")


_FLAG_ALIASES = {"accident": "contributed_to_accident"}


def crosstab(records: Iterable[ViolationRecord], flags: Sequence[str]) -> CrossTab:
    names = tuple(_FLAG_ALIASES.get(f, f) for f in flags)
    for name in names:
        if name not in BOOLEAN_FIELDS:
            raise UnknownFlag(name)
    counts = Counter(tuple(getattr(r, n) for n in names) for r in records)
    return CrossTab(names, dict(sorted(counts.items())))


DIMENSIONS = ("gender", "race", "vehicle_type", "make", "color", "violation_type")


def _dimension_value(record, dimension):
    value = getattr(record, dimension)
    return value.value if isinstance(value, enum.Enum) else str(value)


def dimension_breakdown(records: Iterable[ViolationRecord], dimension: str) -> FrequencyTable:
    if dimension not in DIMENSIONS:
        raise UnknownDimension(dimension)
    records = list(records)
    keys = (_dimension_value(r, dimension) for r in records)
    if dimension == "vehicle_type":
        keys = (vehicle_category(k) for k in keys)
    return _frequency(keys, None, len(records))


def vehicle_category(vehicle_type: str) -> str:
    """Strip the numeric code the export prefixes, e.g. ``"02 - Automobile"`` -> ``"Automobile"``."""
    head, sep, tail = vehicle_type.partition(" - ")
    if sep and head.strip().isdigit():
        return tail.strip()
    return vehicle_type.strip()


def _bin_index(record: ViolationRecord, axis: str) -> int:
    ts = record.timestamp
    if axis == "hour":
        return ts.hour
    if axis == "weekday":
        return ts.weekday()
    return ts.month - 1


def temporal_histogram(records: Iterable[ViolationRecord], axis: str) -> Histogram:
    if axis not in AXIS_SIZES:
        raise ValueError(f"unknown axis {axis!r}")
    bins = [0] * AXIS_SIZES[axis]
    for r in records:
        bins[_bin_index(r, axis)] += 1
    return Histogram(axis, tuple(bins))


def detect_peaks(hist, min_prominence: float = DEFAULT_MIN_PROMINENCE, cyclic: bool | None = None) -> list[int]:
    """Indices of strict local maxima exceeding ``min_prominence`` of the tallest bin.

    ``hist`` may be a Histogram (the hour axis wraps around) or a plain
    sequence. On a non-cyclic axis the end bins are compared with their
    single neighbour.
    """
    if isinstance(hist, Histogram):
        bins = hist.bins
        if cyclic is None:
            cyclic = hist.axis == "hour"
    else:
        bins = tuple(hist)
    if not bins:
        raise EmptyInput("detect_peaks: empty histogram")
    if not 0 < min_prominence < 1:
        raise ValueError("min_prominence must be in (0, 1)")
    n = len(bins)
    floor = min_prominence * max(bins)
    peaks = []
    for i, value in enumerate(bins):
        neighbours = []
        if i > 0 or cyclic:
            neighbours.append(bins[(i - 1) % n])
        if i < n - 1 or cyclic:
            neighbours.append(bins[(i + 1) % n])
        if n > 1 and all(value > v for v in neighbours) and value > floor:
            peaks.append(i)
    return peaks


def location_counts(records: Iterable[ViolationRecord], precision: int = DEFAULT_PRECISION):
    """Events per rounded location, plus the number of records without coordinates."""
    counts: Counter = Counter()
    skipped = 0
    for r in records:
        key = r.location_key(precision)
        if key is None:
            skipped += 1
        else:
            counts[key] += 1
    return counts, skipped


def hotspot_detect(records: Iterable[ViolationRecord], threshold: int = DEFAULT_HOTSPOT_THRESHOLD,
                   precision: int = DEFAULT_PRECISION, annotations=None) -> list[HotspotCell]:
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    counts, skipped = location_counts(records, precision)
    if skipped:
        log.info("hotspot_detect: %d records without coordinates skipped", skipped)
    cells = [
        HotspotCell(key, n, annotations.get(key) if annotations is not None else None)
        for key, n in counts.items() if n > threshold
    ]
    cells.sort(key=lambda c: (-c.count, c.location_key))
    return cells


def city_records(records: Iterable[ViolationRecord], city: str) -> list[ViolationRecord]:
    key = city_key(city)
    return [r for r in records if city_key(r.city) == key]


def location_distribution_stats(records: Iterable[ViolationRecord], city: str,
                                precision: int = DEFAULT_PRECISION) -> SummaryStats:
    scoped = city_records(records, city)
    if not scoped:
        raise UnknownCity(city)
    counts, _ = location_counts(scoped, precision)
    return summary_stats(counts.values(), f"located events in {city}")


def is_night(moment: time, sunrise: time, sunset: time) -> bool:
    return moment > sunset or moment < sunrise


def night_series(records: Iterable[ViolationRecord], weather: Mapping[date, WeatherDay],
                 city: str | None = None,
                 fallback_window: tuple[time, time] = DEFAULT_NIGHT_FALLBACK) -> NightSeries:
    """Monthly counts of events after sunset or before sunrise.

    Dates absent from ``weather`` use ``fallback_window`` as (sunset, sunrise)
    and are tallied in ``uncovered``.
    """
    if city is not None:
        records = city_records(records, city)
    counts = [0] * 12
    uncovered = 0
    fallback_sunset, fallback_sunrise = fallback_window
    for r in records:
        day = weather.get(r.timestamp.date())
        if day is None:
            uncovered += 1
            sunrise, sunset = fallback_sunrise, fallback_sunset
        else:
            sunrise, sunset = day.sunrise, day.sunset
        if is_night(r.timestamp.time(), sunrise, sunset):
            counts[r.timestamp.month - 1] += 1
    if uncovered:
        log.warning("night_series: %d events on dates without weather rows", uncovered)
    return NightSeries(tuple(counts), uncovered)


def night_duration_series(weather: Mapping[date, WeatherDay], require_complete: bool = True) -> list[float | None]:
    """Mean night length in hours per month; ``None`` for months with no rows.

    With ``require_complete`` a month that has some but not all of its days
    raises :class:`IncompleteMonth`.
    """
    by_month: dict[tuple[int, int], list[float]] = {}
    for day in weather.values():
        by_month.setdefault((day.date.year, day.date.month), []).append(day.night_hours)
    if require_complete:
        for (year, month), nights in by_month.items():
            if len(nights) != calendar.monthrange(year, month)[1]:
                raise IncompleteMonth(f"{year}-{month:02d}: {len(nights)} days of weather")
    series: list[float | None] = [None] * 12
    pooled: dict[int, list[float]] = {}
    for (_, month), nights in by_month.items():
        pooled.setdefault(month, []).extend(nights)
    for month, nights in pooled.items():
        series[month - 1] = statistics.fmean(nights)
    return series


def pearson_correlation(xs: Sequence[float], ys: Sequence[float], exclude: Iterable[int] = ()) -> float:
    if len(xs) != len(ys):
        raise DegenerateInput("series differ in length")
    drop = set(exclude)
    kept = [(x, y) for i, (x, y) in enumerate(zip(xs, ys)) if i not in drop]
    if len(kept) < 3:
        raise DegenerateInput("need at least 3 retained points")
    a, b = zip(*kept)
    try:
        r = statistics.correlation(a, b)
    except statistics.StatisticsError as exc:
        raise DegenerateInput(str(exc)) from None
    return max(-1.0, min(1.0, r))


def per_capita_ratio(event_count: int, population: int) -> float:
    if population <= 0:
        raise ZeroPopulation("population must be positive")
    return 100.0 * event_count / population


def is_light_truck(vehicle_type: str) -> bool:
    return "light duty truck" in vehicle_category(vehicle_type).lower()


def city_profile(dataset: Dataset, city: str, config: ProfileConfig = ProfileConfig()) -> CityProfile:
    scoped = city_records(dataset.violations, city)
    if not scoped:
        raise UnknownCity(city)
    census = dataset.census.get(city_key(city))
    if census is None:
        raise MissingCensus(city)

    ranking = rank_violations(scoped, top_k=2).keys()
    night = night_series(scoped, dataset.weather, None, config.night_fallback)
    years = [r.vehicle_year for r in scoped if r.vehicle_year is not None]
    recent = sum(1 for y in years if y > config.analysis_year - 10)
    n = len(scoped)
    return CityProfile(
        city=census.city,
        violation_count=n,
        violation_share=100.0 * n / len(dataset.violations),
        top_event=ranking[0],
        second_event=ranking[1] if len(ranking) > 1 else None,
        night_stats=summary_stats(night.counts, "monthly night counts"),
        location_stats=location_distribution_stats(scoped, city, config.precision),
        light_truck_pct=100.0 * sum(is_light_truck(r.vehicle_type) for r in scoped) / n,
        cars_under_10y_pct=100.0 * recent / len(years) if years else 0.0,
        injury_count=sum(r.personal_injury for r in scoped),
        accident_count=sum(r.contributed_to_accident for r in scoped),
        belt_count=sum(r.belts for r in scoped),
        census=census,
        hotspots=tuple(hotspot_detect(scoped, config.hotspot_threshold, config.precision,
                                      dataset.annotations)),
    )
