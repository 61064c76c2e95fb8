from datetime import datetime
from pathlib import Path

import pytest

from trafficilp.ingest import DEFAULT_MAPPING, ViolationRecord, ViolationType

FIXTURES = Path(__file__).parent / "fixtures"
MC2017 = FIXTURES / "mc2017"

VIOLATION_HEADER = ",".join(DEFAULT_MAPPING[f] for f in DEFAULT_MAPPING)


def make_record(i=0, when="2017-03-01T12:00", city="BETHESDA", lat=39.0, lon=-77.0,
                description="Failure to obey traffic control device", **kw):
    """A valid record with sensible defaults; override any field by keyword."""
    return ViolationRecord(
        record_id=kw.pop("record_id", f"r{i}"),
        timestamp=datetime.fromisoformat(when),
        city=city,
        latitude=lat,
        longitude=lon,
        description=description,
        violation_type=kw.pop("violation_type", ViolationType.CITATION),
        **kw,
    )


def violation_row(**overrides):
    """One CSV data line in the default column layout."""
    row = {f: "" for f in DEFAULT_MAPPING}
    row.update(record_id="1", date="03/01/2017", time="12:00:00", description="SPEEDING",
               type="Citation", latitude="39.0", longitude="-77.0", belts="No",
               personal_injury="No", property_damage="No", accident="No", alcohol="No",
               commercial_vehicle="No", work_zone="No", gender="M", race="WHITE",
               city="BETHESDA")
    row.update(overrides)
    return ",".join(row[f] for f in DEFAULT_MAPPING)


@pytest.fixture
def mc2017():
    return MC2017


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
