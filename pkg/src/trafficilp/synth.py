"""Deterministic synthetic Montgomery-County-like inputs for tests and demos.

    python -m trafficilp.synth OUT_DIR [--records 1000] [--seed 2017]

writes ``violations.csv``, ``weather.csv``, ``census.csv`` and
``annotations.csv`` in the formats the ingest module reads.
"""

from __future__ import annotations

import argparse
import csv
import math
import random
from datetime import date, datetime, time, timedelta
from pathlib import Path

from .analytics import TABLE1_TOP10
from .ingest import DEFAULT_MAPPING, CENSUS_FIELDS

# College Park Airport, MD
STATION = (38.9806, -76.9223)

CITIES = {
    # name: (centre lat, centre lon, main road, census row without city/main_road)
    "BETHESDA": (38.9847, -77.0947, "I-495",
                 dict(population=60858, density=1624, education_pct=83.7, median_income=154559,
                      poverty_pct=2.8, age_band_pct=64.8, land_area=13.1, water_area=0.1,
                      schools=18, hospitals=3)),
    "GAITHERSBURG": (39.1434, -77.2014, "I-270",
                     dict(population=59933, density=2571, education_pct=53.3, median_income=85773,
                          poverty_pct=9.5, age_band_pct=58.3, land_area=26.72, water_area=0.3,
                          schools=25, hospitals=0)),
    "ROCKVILLE": (39.0840, -77.1528, "MD-355",
                  dict(population=66940, density=1840, education_pct=68.0, median_income=102000,
                       poverty_pct=7.1, age_band_pct=61.0, land_area=35.0, water_area=0.2,
                       schools=20, hospitals=2)),
    "SILVER SPRING": (38.9907, -77.0261, "US-29",
                      dict(population=79750, density=3880, education_pct=58.9, median_income=81000,
                           poverty_pct=10.6, age_band_pct=65.2, land_area=20.5, water_area=0.1,
                           schools=22, hospitals=1)),
}
CITY_WEIGHTS = {"BETHESDA": 3, "GAITHERSBURG": 4, "ROCKVILLE": 3, "SILVER SPRING": 2}

OTHER_EVENTS = (
    "Failure to control vehicle speed on highway to avoid collision",
    "Person driving motor vehicle on highway or public use property on suspended license",
    "Driving while impaired by alcohol",
    "Failure to yield right of way",
)

VEHICLES = (("02 - Automobile", 80), ("05 - Light Duty Truck", 8), ("28 - Other", 3),
            ("03 - Station Wagon", 3), ("01 - Motorcycle", 2), ("06 - Heavy Duty Truck", 2),
            ("04 - Recreational Vehicle", 2))
MAKES = (("TOYOTA", 20), ("HONDA", 18), ("FORD", 14), ("NISSAN", 10), ("CHEVROLET", 8),
         ("HYUNDAI", 6), ("BMW", 4), ("SUBARU", 4))
COLORS = (("BLACK", 25), ("SILVER", 22), ("WHITE", 18), ("GRAY", 12), ("BLUE", 10), ("RED", 8))
RACES = (("WHITE", 36), ("BLACK", 27), ("HISPANIC", 20), ("ASIAN", 8), ("NATIVE AMERICAN", 1), ("OTHER", 8))
# rush hours and a late-evening peak
HOUR_WEIGHTS = (6, 4, 3, 2, 2, 3, 8, 16, 18, 14, 9, 8, 8, 8, 9, 12, 16, 15, 10, 9, 12, 17, 22, 12)
MONTH_WEIGHTS = (8, 11, 11, 10, 10, 8, 7, 10, 11, 11, 8, 7)


def _pick(rng, table):
    items, weights = zip(*table)
    return rng.choices(items, weights=weights)[0]


def _eastern_offset(day: date) -> int:
    """UTC offset in hours under the US daylight-saving rule."""
    march = date(day.year, 3, 8)
    dst_start = march + timedelta(days=(6 - march.weekday()) % 7)
    november = date(day.year, 11, 1)
    dst_end = november + timedelta(days=(6 - november.weekday()) % 7)
    return -4 if dst_start <= day < dst_end else -5


def sun_times(day: date, lat: float = STATION[0], lon: float = STATION[1]) -> tuple[time, time]:
    """Approximate local sunrise and sunset (declination + equation-of-time model)."""
    n = day.timetuple().tm_yday
    b = math.radians(360.0 / 365.0 * (n - 81))
    decl = math.radians(23.44) * math.sin(b)
    eot = 9.87 * math.sin(2 * b) - 7.53 * math.cos(b) - 1.5 * math.sin(b)
    phi = math.radians(lat)
    cos_w = (math.sin(math.radians(-0.833)) - math.sin(phi) * math.sin(decl)) / (math.cos(phi) * math.cos(decl))
    half_day = math.degrees(math.acos(max(-1.0, min(1.0, cos_w)))) * 4.0  # minutes
    noon = 720.0 - 4.0 * lon - eot + 60.0 * _eastern_offset(day)

    def clock(minutes):
        minutes = int(round(minutes))
        return time(minutes // 60, minutes % 60)

    return clock(noon - half_day), clock(noon + half_day)


def weather_rows(year: int):
    rng = random.Random(year)
    day = date(year, 1, 1)
    while day.year == year:
        sunrise, sunset = sun_times(day)
        season = math.cos(2 * math.pi * (day.timetuple().tm_yday - 200) / 365.0)
        yield {
            "date": day.isoformat(),
            "sunrise": sunrise.strftime("%H:%M"),
            "sunset": sunset.strftime("%H:%M"),
            "mean_temp": f"{13.0 + 12.0 * season + rng.gauss(0, 3):.1f}",
            "precipitation": f"{max(0.0, rng.gauss(-2, 6)):.1f}",
        }
        day += timedelta(days=1)


def _city_spots(rng, name, centre):
    """Location cells for one city; the first few are heavy hotspots."""
    spots = []
    for k in range(24):
        lat = round(centre[0] + rng.uniform(-0.02, 0.02), 4)
        lon = round(centre[1] + rng.uniform(-0.02, 0.02), 4)
        spots.append(((lat, lon), 1.0 / (k + 1) ** 1.1))
    return spots


SPOT_LABELS = {
    "BETHESDA": ("athletic_center", "intersection", "community_area", "shopping_area"),
    "GAITHERSBURG": ("main_road", "shopping_area", "main_road", "community_area"),
    "ROCKVILLE": ("intersection", "main_road", "green_area", "shopping_area"),
    "SILVER SPRING": ("shopping_area", "intersection", "community_area", "other"),
}


def generate(out_dir, records: int = 1000, seed: int = 2017, year: int = 2017) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    spots = {name: _city_spots(rng, name, info[:2]) for name, info in CITIES.items()}

    with open(out / "annotations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["latitude", "longitude", "label"])
        for name, labels in SPOT_LABELS.items():
            for ((lat, lon), _), label in zip(spots[name], labels):
                w.writerow([f"{lat:.4f}", f"{lon:.4f}", label])

    with open(out / "census.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(CENSUS_FIELDS), lineterminator="\n")
        w.writeheader()
        for name, (_, _, road, row) in CITIES.items():
            w.writerow({"city": name.title(), "main_road": road, **row})

    with open(out / "weather.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["date", "sunrise", "sunset", "mean_temp", "precipitation"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(weather_rows(year))

    events = [(d, 10 - i if i < 10 else 1) for i, (d, _) in enumerate(TABLE1_TOP10)]
    events += [(d, 2) for d in OTHER_EVENTS]
    city_names = list(CITY_WEIGHTS)
    fields = list(DEFAULT_MAPPING)
    with open(out / "violations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([DEFAULT_MAPPING[f] for f in fields])
        for i in range(records):
            city = rng.choices(city_names, weights=[CITY_WEIGHTS[c] for c in city_names])[0]
            spot_idx = rng.choices(range(24), weights=[wt for _, wt in spots[city]])[0]
            (lat, lon) = spots[city][spot_idx][0]
            month = rng.choices(range(1, 13), weights=MONTH_WEIGHTS)[0]
            day = rng.randint(1, 28)
            hour = rng.choices(range(24), weights=HOUR_WEIGHTS)[0]
            stamp = datetime(year, month, day, hour, rng.randint(0, 59), rng.randint(0, 59))
            hot_main_road = city == "GAITHERSBURG" and SPOT_LABELS[city][spot_idx:spot_idx + 1] == ("main_road",)
            belts = rng.random() < (0.7 if hot_main_road else 0.05)
            desc_weights = [wt * (3 if (city == "BETHESDA" and "telephone" in d)
                                  or (city == "GAITHERSBURG" and "speed limit" in d) else 1)
                            for d, wt in events]
            description = rng.choices([d for d, _ in events], weights=desc_weights)[0].upper()
            accident = rng.random() < 0.03
            row = {
                "record_id": f"{seed}-{i:05d}",
                "date": stamp.strftime("%m/%d/%Y"),
                "time": stamp.strftime("%H:%M:%S"),
                "description": description,
                "type": rng.choices(["Citation", "Warning", "ESERO"], weights=[50, 45, 5])[0],
                "charge": f"21-{rng.randint(100, 999)}",
                "latitude": "" if rng.random() < 0.02 else f"{lat + rng.uniform(-4e-5, 4e-5):.6f}",
                "belts": "Yes" if belts else "No",
                "personal_injury": "Yes" if accident and rng.random() < 0.5 else "No",
                "property_damage": "Yes" if accident and rng.random() < 0.6 else "No",
                "accident": "Yes" if accident else "No",
                "alcohol": "Yes" if rng.random() < 0.005 else "No",
                "commercial_vehicle": "Yes" if rng.random() < 0.03 else "No",
                "work_zone": "Yes" if rng.random() < 0.01 else "No",
                "gender": rng.choices(["F", "M", "U"], weights=[38, 61, 1])[0],
                "race": _pick(rng, RACES),
                "vehicle_type": _pick(rng, VEHICLES),
                "year": "" if rng.random() < 0.02 else str(rng.randint(1996, 2018)),
                "make": _pick(rng, MAKES),
                "color": _pick(rng, COLORS),
                "city": city,
            }
            row["longitude"] = "" if not row["latitude"] else f"{lon + rng.uniform(-4e-5, 4e-5):.6f}"
            w.writerow([row[f] for f in fields])
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python -m trafficilp.synth", description=__doc__.splitlines()[0])
    parser.add_argument("out_dir")
    parser.add_argument("--records", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=2017)
    parser.add_argument("--year", type=int, default=2017)
    args = parser.parse_args(argv)
    generate(args.out_dir, args.records, args.seed, args.year)


if __name__ == "__main__":
    main()
