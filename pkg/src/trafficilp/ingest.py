"""CSV ingestion for violations, daily weather, census and location annotations."""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    DuplicateCity,
    DuplicateDate,
    EmptyInput,
    MalformedCoordinate,
    MalformedRow,
    MalformedTime,
    MissingColumn,
    NegativePopulation,
    ParseAbort,
    PercentOutOfRange,
    UnknownLabel,
)

log = logging.getLogger(__name__)

DEFAULT_PRECISION = 4
DEFAULT_YEAR = 2017

# logical field -> CSV header of the Montgomery County "Traffic Violations" export
DEFAULT_MAPPING = {
    "record_id": "SeqID",
    "date": "Date Of Stop",
    "time": "Time Of Stop",
    "description": "Description",
    "type": "Violation Type",
    "charge": "Charge",
    "latitude": "Latitude",
    "longitude": "Longitude",
    "belts": "Belts",
    "personal_injury": "Personal Injury",
    "property_damage": "Property Damage",
    "accident": "Contributed To Accident",
    "alcohol": "Alcohol",
    "commercial_vehicle": "Commercial Vehicle",
    "work_zone": "Work Zone",
    "gender": "Gender",
    "race": "Race",
    "vehicle_type": "VehicleType",
    "year": "Year",
    "make": "Make",
    "color": "Color",
    "city": "Driver City",
}

REQUIRED_FIELDS = ("date", "time", "description", "type", "latitude", "longitude", "city")

# logical flag name -> ViolationRecord attribute
_FLAG_FIELDS = {
    "belts": "belts",
    "personal_injury": "personal_injury",
    "property_damage": "property_damage",
    "accident": "contributed_to_accident",
    "alcohol": "alcohol",
    "commercial_vehicle": "commercial_vehicle",
    "work_zone": "work_zone",
}

BOOLEAN_FIELDS = tuple(_FLAG_FIELDS.values())


class ViolationType(str, enum.Enum):
    CITATION = "Citation"
    WARNING = "Warning"
    ESERO = "ESERO"


class Gender(str, enum.Enum):
    F = "F"
    M = "M"
    U = "U"


class Race(str, enum.Enum):
    WHITE = "White"
    BLACK = "Black"
    HISPANIC = "Hispanic"
    ASIAN = "Asian"
    NATIVE_AMERICAN = "NativeAmerican"
    OTHER = "Other"


class ContextLabel(str, enum.Enum):
    INTERSECTION = "intersection"
    COMMUNITY_AREA = "community_area"
    GREEN_AREA = "green_area"
    MAIN_ROAD = "main_road"
    ATHLETIC_CENTER = "athletic_center"
    SHOPPING_AREA = "shopping_area"
    OTHER = "other"


def _squash(text):
    return "".join(ch for ch in text.upper() if ch.isalnum())


_TYPES = {_squash(v.value): v for v in ViolationType}
_RACES = {_squash(v.value): v for v in Race}
_GENDERS = {v.value: v for v in Gender}


def location_key(lat: float, lon: float, precision: int = DEFAULT_PRECISION) -> tuple[float, float]:
    """Rounded coordinate cell used for every "same location" comparison."""
    return (round(lat, precision) + 0.0, round(lon, precision) + 0.0)


def city_key(name: str) -> str:
    return " ".join(name.split()).casefold()


@dataclass(frozen=True)
class ViolationRecord:
    record_id: str
    timestamp: datetime
    city: str
    latitude: float | None
    longitude: float | None
    description: str
    violation_type: ViolationType
    charge: str = ""
    belts: bool = False  # True = driver was NOT wearing a belt
    personal_injury: bool = False
    property_damage: bool = False
    contributed_to_accident: bool = False
    alcohol: bool = False
    commercial_vehicle: bool = False
    work_zone: bool = False
    gender: Gender = Gender.U
    race: Race = Race.OTHER
    vehicle_type: str = ""
    vehicle_year: int | None = None
    make: str = ""
    color: str = ""

    @property
    def has_location(self) -> bool:
        return self.latitude is not None

    def location_key(self, precision: int = DEFAULT_PRECISION):
        if self.latitude is None:
            return None
        return location_key(self.latitude, self.longitude, precision)

    def validate(self, window: tuple[date, date] | None = None) -> None:
        """Raise ValueError if a type invariant does not hold."""
        if (self.latitude is None) != (self.longitude is None):
            raise ValueError("latitude and longitude must both be present or both absent")
        if self.latitude is not None:
            if not -90.0 <= self.latitude <= 90.0:
                raise ValueError("latitude out of range")
            if not -180.0 <= self.longitude <= 180.0:
                raise ValueError("longitude out of range")
        if window is not None and not window[0] <= self.timestamp.date() <= window[1]:
            raise ValueError("timestamp outside analysis window")
        if not isinstance(self.violation_type, ViolationType):
            raise ValueError("unknown violation type")


@dataclass
class ParseReport:
    source: str
    accepted: int = 0
    rejected: int = 0
    rejections: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejections": [{"line": ln, "reason": r} for ln, r in self.rejections],
        }


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (bytes, bytearray)):
        return io.TextIOWrapper(io.BytesIO(bytes(source)), encoding="utf-8-sig", newline="")
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _source_name(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        return os.path.basename(os.fspath(source))
    return getattr(source, "name", "<stream>")


def _reader(source):
    text = _open_text(source)
    reader = csv.DictReader(text)
    if reader.fieldnames is None:
        raise EmptyInput(f"{_source_name(source)}: no header row")
    reader.fieldnames = [h.strip() for h in reader.fieldnames]
    return reader


def _parse_bool(raw: str, name: str) -> bool:
    value = raw.strip().lower()
    if value == "yes":
        return True
    if value == "no":
        return False
    raise ValueError(f"{name}: expected Yes/No, got {raw!r}")


def _parse_date(raw: str) -> date:
    raw = raw.strip()
    for fmt in ("%m/%d/%Y", "%Y-%m-%d"):
        try:
            return datetime.strptime(raw, fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unparseable date {raw!r}")


def _parse_clock(raw: str) -> time:
    raw = raw.strip()
    for fmt in ("%H:%M:%S", "%H:%M"):
        try:
            return datetime.strptime(raw, fmt).time().replace(second=0)
        except ValueError:
            pass
    raise ValueError(f"unparseable time {raw!r}")


def _parse_float(raw: str, name: str) -> float | None:
    raw = raw.strip()
    if not raw:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{name}: not a number {raw!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"{name}: not finite")
    return value


def _violation_from_row(row: Mapping[str, str], mapping: Mapping[str, str], line: int,
                        window) -> ViolationRecord:
    def get(logical, default=""):
        header = mapping.get(logical)
        if header is None or header not in row or row[header] is None:
            return default
        return row[header]

    description = " ".join(get("description").split())
    if not description:
        raise ValueError("empty description")
    vtype = _TYPES.get(_squash(get("type")))
    if vtype is None:
        raise ValueError(f"unknown violation type {get('type')!r}")
    lat = _parse_float(get("latitude"), "latitude")
    lon = _parse_float(get("longitude"), "longitude")

    gender_raw = get("gender").strip().upper() or "U"
    gender = _GENDERS.get(gender_raw)
    if gender is None:
        raise ValueError(f"unknown gender {gender_raw!r}")
    race_raw = get("race").strip()
    race = _RACES.get(_squash(race_raw)) if race_raw else Race.OTHER
    if race is None:
        raise ValueError(f"unknown race {race_raw!r}")

    year_raw = get("year").strip()
    vehicle_year = None
    if year_raw:
        try:
            vehicle_year = int(year_raw)
        except ValueError:
            raise ValueError(f"year: not an integer {year_raw!r}") from None

    flags = {}
    for logical, attr in _FLAG_FIELDS.items():
        raw = get(logical, None)
        flags[attr] = False if raw is None or not raw.strip() else _parse_bool(raw, logical)

    record = ViolationRecord(
        record_id=get("record_id").strip() or f"L{line}",
        timestamp=datetime.combine(_parse_date(get("date")), _parse_clock(get("time"))),
        city=" ".join(get("city").split()),
        latitude=lat,
        longitude=lon,
        description=description,
        violation_type=vtype,
        charge=get("charge").strip(),
        gender=gender,
        race=race,
        vehicle_type=get("vehicle_type").strip(),
        vehicle_year=vehicle_year,
        make=get("make").strip(),
        color=get("color").strip(),
        **flags,
    )
    record.validate(window)
    return record


def analysis_window(year: int | None) -> tuple[date, date] | None:
    if year is None:
        return None
    return (date(year, 1, 1), date(year, 12, 31))


def parse_violations_csv(source, mapping: Mapping[str, str] | None = None, strict: bool = False,
                         year: int | None = DEFAULT_YEAR):
    """Parse a traffic-violations export.

    Returns ``(records, report)``. In lenient mode bad rows are tallied in the
    report; in strict mode the first bad row raises :class:`ParseAbort`.
    ``year=None`` disables the analysis-window check.
    """
    mapping = {**DEFAULT_MAPPING, **(mapping or {})}
    reader = _reader(source)
    headers = set(reader.fieldnames)
    for logical in REQUIRED_FIELDS:
        if mapping[logical] not in headers:
            raise MissingColumn(mapping[logical], logical)

    window = analysis_window(year)
    report = ParseReport(_source_name(source))
    records = []
    for row in reader:
        line = reader.line_num
        try:
            if None in row:
                raise ValueError("too many fields")
            records.append(_violation_from_row(row, mapping, line, window))
            report.accepted += 1
        except ValueError as exc:
            if strict:
                raise ParseAbort(line, str(exc)) from None
            report.rejected += 1
            report.rejections.append((line, str(exc)))
    if report.total == 0:
        raise EmptyInput(f"{report.source}: no data rows")
    if report.rejected:
        log.warning("%s: rejected %d of %d rows", report.source, report.rejected, report.total)
    return records, report


def write_violations_csv(records: Iterable[ViolationRecord], sink,
                         mapping: Mapping[str, str] | None = None) -> None:
    """Serialize records so that :func:`parse_violations_csv` reproduces them."""
    mapping = {**DEFAULT_MAPPING, **(mapping or {})}
    writer = csv.writer(sink, lineterminator="\n")
    fields = list(DEFAULT_MAPPING)
    writer.writerow([mapping[f] for f in fields])
    for r in records:
        values = {
            "record_id": r.record_id,
            "date": r.timestamp.strftime("%Y-%m-%d"),
            "time": r.timestamp.strftime("%H:%M"),
            "description": r.description,
            "type": r.violation_type.value,
            "charge": r.charge,
            "latitude": "" if r.latitude is None else repr(r.latitude),
            "longitude": "" if r.longitude is None else repr(r.longitude),
            "gender": r.gender.value,
            "race": r.race.value,
            "vehicle_type": r.vehicle_type,
            "year": "" if r.vehicle_year is None else str(r.vehicle_year),
            "make": r.make,
            "color": r.color,
            "city": r.city,
        }
        for logical, attr in _FLAG_FIELDS.items():
            values[logical] = "Yes" if getattr(r, attr) else "No"
        writer.writerow([values[f] for f in fields])


# -- weather ----------------------------------------------------------------

@dataclass(frozen=True)
class WeatherDay:
    date: date
    sunrise: time
    sunset: time
    mean_temp: float | None = None
    precipitation: float | None = None

    @property
    def daylight(self) -> timedelta:
        return datetime.combine(self.date, self.sunset) - datetime.combine(self.date, self.sunrise)

    @property
    def night_hours(self) -> float:
        return 24.0 - self.daylight.total_seconds() / 3600.0


def _strict_clock(raw: str, line: int, what: str) -> time:
    try:
        return datetime.strptime(raw.strip(), "%H:%M").time()
    except ValueError:
        raise MalformedTime(line, f"{what}: expected HH:MM, got {raw!r}") from None


def parse_weather_csv(source) -> dict[date, WeatherDay]:
    """Parse ``date,sunrise,sunset,mean_temp,precipitation`` into a date-indexed table."""
    reader = _reader(source)
    for col in ("date", "sunrise", "sunset"):
        if col not in reader.fieldnames:
            raise MissingColumn(col)
    table: dict[date, WeatherDay] = {}
    for row in reader:
        line = reader.line_num
        try:
            day = datetime.strptime(row["date"].strip(), "%Y-%m-%d").date()
        except ValueError:
            raise MalformedRow(line, f"bad date {row['date']!r}") from None
        sunrise = _strict_clock(row["sunrise"], line, "sunrise")
        sunset = _strict_clock(row["sunset"], line, "sunset")
        if not sunrise < sunset:
            raise MalformedTime(line, "sunrise must precede sunset")
        if day in table:
            raise DuplicateDate(line, f"duplicate date {day.isoformat()}")
        try:
            temp = _parse_float(row.get("mean_temp") or "", "mean_temp")
            precip = _parse_float(row.get("precipitation") or "", "precipitation")
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        table[day] = WeatherDay(day, sunrise, sunset, temp, precip)
    if not table:
        raise EmptyInput(f"{_source_name(source)}: no data rows")
    return dict(sorted(table.items()))


# -- census -----------------------------------------------------------------

@dataclass(frozen=True)
class CityCensus:
    city: str
    population: int
    density: float
    education_pct: float
    median_income: float
    poverty_pct: float
    age_band_pct: float
    land_area: float
    water_area: float
    schools: int
    hospitals: int
    main_road: str


CENSUS_FIELDS = tuple(CityCensus.__dataclass_fields__)
_PERCENT_FIELDS = ("education_pct", "poverty_pct", "age_band_pct")


def parse_census_csv(source) -> dict[str, CityCensus]:
    """Parse one row per city; keys are case-folded, whitespace-trimmed city names."""
    reader = _reader(source)
    for col in CENSUS_FIELDS:
        if col not in reader.fieldnames:
            raise MissingColumn(col)
    table: dict[str, CityCensus] = {}
    for row in reader:
        line = reader.line_num
        key = city_key(row["city"])
        if not key:
            raise MalformedRow(line, "empty city")
        if key in table:
            raise DuplicateCity(line, f"duplicate city {key!r}")
        values = {}
        try:
            for name in CENSUS_FIELDS[1:-1]:
                kind = CityCensus.__dataclass_fields__[name].type
                values[name] = int(row[name]) if kind == "int" else float(row[name])
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        if values["population"] <= 0:
            raise NegativePopulation(line, "population must be positive")
        for name in _PERCENT_FIELDS:
            if not 0.0 <= values[name] <= 100.0:
                raise PercentOutOfRange(line, f"{name} = {values[name]} outside [0, 100]")
        for name in ("land_area", "water_area", "density"):
            if values[name] < 0:
                raise MalformedRow(line, f"{name} must be non-negative")
        table[key] = CityCensus(city=key, main_road=row["main_road"].strip(), **values)
    if not table:
        raise EmptyInput(f"{_source_name(source)}: no data rows")
    return dict(sorted(table.items()))


# -- location annotations ---------------------------------------------------

@dataclass
class AnnotationTable:
    precision: int = DEFAULT_PRECISION
    labels: dict[tuple[float, float], ContextLabel] = field(default_factory=dict)
    duplicates: int = 0

    def get(self, key):
        return self.labels.get(key)

    def __len__(self):
        return len(self.labels)

    def __contains__(self, key):
        return key in self.labels


def parse_context_annotations(source, precision: int = DEFAULT_PRECISION) -> AnnotationTable:
    reader = _reader(source)
    for col in ("latitude", "longitude", "label"):
        if col not in reader.fieldnames:
            raise MissingColumn(col)
    table = AnnotationTable(precision)
    for row in reader:
        line = reader.line_num
        try:
            lat = float(row["latitude"])
            lon = float(row["longitude"])
        except (TypeError, ValueError):
            raise MalformedCoordinate(line, "coordinates must be decimal degrees") from None
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise MalformedCoordinate(line, "coordinates out of range")
        raw = (row["label"] or "").strip().lower()
        try:
            label = ContextLabel(raw)
        except ValueError:
            raise UnknownLabel(line, f"unknown context label {raw!r}") from None
        key = location_key(lat, lon, precision)
        if key in table.labels:
            table.duplicates += 1
            log.warning("line %d: duplicate annotation for %s ignored", line, key)
            continue
        table.labels[key] = label
    return table


# -- dataset ----------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    violations: tuple[ViolationRecord, ...]
    weather: Mapping[date, WeatherDay] = MappingProxyType({})
    census: Mapping[str, CityCensus] = MappingProxyType({})
    annotations: AnnotationTable = field(default_factory=AnnotationTable)
    parse_report: Mapping[str, ParseReport] = MappingProxyType({})


def load_dataset(violations, weather=None, census=None, annotations=None, *,
                 mapping=None, strict=False, year=DEFAULT_YEAR,
                 precision=DEFAULT_PRECISION) -> Dataset:
    records, report = parse_violations_csv(violations, mapping, strict=strict, year=year)
    return Dataset(
        violations=tuple(records),
        weather=MappingProxyType(parse_weather_csv(weather) if weather else {}),
        census=MappingProxyType(parse_census_csv(census) if census else {}),
        annotations=(parse_context_annotations(annotations, precision)
                     if annotations else AnnotationTable(precision)),
        parse_report=MappingProxyType({"violations": report}),
    )
