"""Ground-fact knowledge base: schema, discretization, compilation and text I/O."""

from __future__ import annotations

import bisect
import calendar
import hashlib
import io
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .analytics import CityProfile, normalize_description
from .errors import ArityMismatch, FactSyntaxError, InputError, SealedError, UnknownPredicate
from .ingest import DEFAULT_PRECISION, AnnotationTable, CityCensus, ContextLabel, ViolationRecord, city_key
from .syntax import parse_statements
from .terms import Atom, Var, render_term

log = logging.getLogger(__name__)

TYPE_TAGS = frozenset({"city", "event", "event_type", "road", "band", "number", "context",
                       "boolean_attr", "location", "any"})

TARGET_PREFIX = "is_event_in"


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int
    arg_types: tuple[str, ...]

    def __post_init__(self):
        if len(self.arg_types) != self.arity:
            raise ValueError(f"{self.name}/{self.arity}: {len(self.arg_types)} argument types")
        bad = set(self.arg_types) - TYPE_TAGS
        if bad:
            raise ValueError(f"unknown type tags {sorted(bad)}")

    @property
    def key(self):
        return (self.name, self.arity)


def _p(name, *types):
    return Predicate(name, len(types), tuple(types))


# location_context/2 is shared by city-level facts (city, label) and event-level
# facts (event, label); the first position is tagged "event" for both.
BACKGROUND_PREDICATES = (
    _p("night_hours", "city", "number", "number", "number", "number"),
    _p("location_distribution", "city", "number", "number", "number"),
    _p("location_context", "event", "context"),
    _p("location_context", "city", "location", "context"),
    _p("event_previous_occurrence", "event", "band"),
    _p("driver_characteristics", "event", "boolean_attr"),
    _p("vehicle_year", "event", "band"),
    _p("main_road", "event", "road"),
    _p("population_density", "city", "number"),
    _p("median_income", "city", "band"),
    _p("education", "city", "band"),
    _p("poverty", "city", "band"),
    _p("density", "city", "band"),
    _p("event_time", "event", "band"),
    _p("event_period_of_year", "event", "band"),
    _p("event_type", "event", "event_type"),
    _p("past_event_probability", "event", "band"),
    _p("safe_location", "location", "city"),
    _p("event_happen", "event", "city"),
)


def target_predicate(city: str) -> str:
    """``"Silver Spring"`` -> ``"is_event_insilverspring"``."""
    return TARGET_PREFIX + re.sub(r"[^a-z0-9]", "", city_key(city))


class Schema:
    """Registered predicates keyed by (name, arity).

    Any ``is_event_in<city>/1`` is accepted as a labelled-example predicate
    without prior registration. An open schema registers unknown predicates
    on first use with untyped arguments.
    """

    def __init__(self, predicates: Iterable[Predicate] = (), open: bool = False):
        self.predicates: dict[tuple[str, int], Predicate] = {}
        self.open = open
        for p in predicates:
            self.register(p)

    def register(self, predicate: Predicate) -> None:
        existing = self.predicates.get(predicate.key)
        if existing is not None and existing != predicate:
            raise ValueError(f"conflicting declarations for {predicate.name}/{predicate.arity}")
        self.predicates[predicate.key] = predicate

    def lookup(self, name: str, arity: int) -> Predicate:
        pred = self.predicates.get((name, arity))
        if pred is not None:
            return pred
        if name.startswith(TARGET_PREFIX) and len(name) > len(TARGET_PREFIX) and arity == 1:
            return Predicate(name, 1, ("event",))
        if self.open:
            pred = Predicate(name, arity, ("any",) * arity)
            self.predicates[pred.key] = pred
            return pred
        if any(n == name for n, _ in self.predicates):
            raise ArityMismatch(f"{name}/{arity} is not declared with that arity")
        raise UnknownPredicate(f"{name}/{arity}")

    def __contains__(self, key):
        name, arity = key
        if key in self.predicates or self.open:
            return True
        return name.startswith(TARGET_PREFIX) and len(name) > len(TARGET_PREFIX) and arity == 1

    def __iter__(self):
        return iter(sorted(self.predicates.values(), key=lambda p: p.key))

    def copy(self) -> "Schema":
        return Schema(self.predicates.values(), self.open)


def default_schema(cities: Iterable[str] = ("bethesda", "gaithersburg")) -> Schema:
    schema = Schema(BACKGROUND_PREDICATES)
    for city in cities:
        schema.register(Predicate(target_predicate(city), 1, ("event",)))
    return schema


def _check_types(fact: Atom, pred: Predicate) -> None:
    for value, tag in zip(fact.args, pred.arg_types):
        numeric = not isinstance(value, str)
        if tag == "number" and not numeric:
            raise InputError(f"{fact}: expected a number, got {render_term(value)}")
        if tag not in ("number", "any") and numeric:
            raise InputError(f"{fact}: expected a symbol for {tag}, got {render_term(value)}")


class KnowledgeBase:
    """A set of ground facts over a schema, with lookup indexes.

    Equality compares the fact sets only.
    """

    def __init__(self, schema: Schema | None = None, facts: Iterable[Atom] = (), source: str | None = None):
        self.schema = schema if schema is not None else Schema(open=True)
        self.facts: set[Atom] = set()
        self.provenance: dict[Atom, str] = {}
        self.sealed = False
        self._by_pred: dict | None = None
        self._by_arg: dict | None = None
        for f in facts:
            self.add(f, source)

    def add(self, fact: Atom, source: str | None = None) -> None:
        if self.sealed:
            raise SealedError("knowledge base is sealed")
        if not fact.is_ground:
            raise InputError(f"{fact}: facts must be ground")
        _check_types(fact, self.schema.lookup(fact.name, fact.arity))
        if fact not in self.facts:
            self.facts.add(fact)
            if source is not None:
                self.provenance[fact] = source
            self._by_pred = self._by_arg = None

    def update(self, other: "KnowledgeBase") -> None:
        for f in sorted(other.facts, key=Atom.sort_key):
            self.add(f, other.provenance.get(f))

    def seal(self) -> "KnowledgeBase":
        self.sealed = True
        self._build_index()
        return self

    def _build_index(self):
        by_pred: dict = {}
        by_arg: dict = {}
        for f in sorted(self.facts, key=Atom.sort_key):
            by_pred.setdefault(f.key, []).append(f)
            for i, a in enumerate(f.args):
                by_arg.setdefault((f.key, i, a), []).append(f)
        self._by_pred, self._by_arg = by_pred, by_arg

    def matching(self, key: tuple[str, int], bound: Mapping[int, object] | None = None) -> list[Atom]:
        """Facts of predicate ``key`` whose arguments equal ``bound`` at the given positions."""
        if self._by_pred is None:
            self._build_index()
        if not bound:
            return self._by_pred.get(key, [])
        best = None
        for i, value in bound.items():
            candidates = self._by_arg.get((key, i, value), [])
            if best is None or len(candidates) < len(best):
                best = candidates
                if not best:
                    return []
        return [f for f in best if all(f.args[i] == v for i, v in bound.items())]

    def constants_at(self, key: tuple[str, int], position: int) -> Counter:
        return Counter(f.args[position] for f in self.matching(key))

    def predicates(self) -> list[tuple[str, int]]:
        return sorted({f.key for f in self.facts})

    def digest(self) -> str:
        buf = io.BytesIO()
        emit_facts(self, buf)
        return hashlib.sha256(buf.getvalue()).hexdigest()

    def __contains__(self, fact):
        return fact in self.facts

    def __iter__(self):
        return iter(sorted(self.facts, key=Atom.sort_key))

    def __len__(self):
        return len(self.facts)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self.facts == other.facts

    __hash__ = None


# -- discretization ---------------------------------------------------------

def _fmt_cut(value) -> str:
    return render_term(Decimal(str(value))).replace("-", "m").replace(".", "_")


@dataclass(frozen=True)
class DiscretizationSpec:
    """Named intervals; a value equal to a cut point falls in the upper band."""

    quantity: str
    cut_points: tuple[float, ...]
    band_names: tuple[str, ...]

    def __post_init__(self):
        cuts = tuple(self.cut_points)
        object.__setattr__(self, "cut_points", cuts)
        object.__setattr__(self, "band_names", tuple(self.band_names))
        if any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"{self.quantity}: cut points must be strictly ascending")
        if len(self.band_names) != len(cuts) + 1:
            raise ValueError(f"{self.quantity}: need {len(cuts) + 1} band names")
        if len(set(self.band_names)) != len(self.band_names):
            raise ValueError(f"{self.quantity}: band names must be distinct")

    @classmethod
    def from_cuts(cls, quantity: str, cuts: Sequence[float], suffix: str = "") -> "DiscretizationSpec":
        """Default names: ``lt_<c0>``, ``band_<ci>_<ci+1>``, ``gt_<cN>`` plus ``suffix``."""
        cuts = tuple(cuts)
        if not cuts:
            raise ValueError("at least one cut point")
        names = [f"lt_{_fmt_cut(cuts[0])}{suffix}"]
        names += [f"band_{_fmt_cut(a)}_{_fmt_cut(b)}{suffix}" for a, b in zip(cuts, cuts[1:])]
        names.append(f"gt_{_fmt_cut(cuts[-1])}{suffix}")
        return cls(quantity, cuts, tuple(names))

    def band_index(self, value: float) -> int:
        return bisect.bisect_right(self.cut_points, value)


def discretize(value: float, spec: DiscretizationSpec) -> str:
    return spec.band_names[spec.band_index(value)]


DEFAULT_SPECS: dict[str, DiscretizationSpec] = {
    # the [10, 20) band is named gt_10 so rule constants such as ">10" exist in the data
    "occurrence": DiscretizationSpec("occurrence", (5, 10, 20), ("lt_5", "band_5_10", "gt_10", "gt_20")),
    "income": DiscretizationSpec.from_cuts("income", (75000, 150000)),
    "education": DiscretizationSpec.from_cuts("education", (50, 80), "pct"),
    "poverty": DiscretizationSpec.from_cuts("poverty", (3,), "pct"),
    "density": DiscretizationSpec.from_cuts("density", (2000,)),
    "vehicle_year": DiscretizationSpec.from_cuts("vehicle_year", (2009,)),
    "past_event_probability": DiscretizationSpec(
        "past_event_probability", (2, 4), ("lt_2pct", "band_3pct", "gt_4pct")),
}


def with_overrides(overrides: Mapping[str, Sequence[float]] | None) -> dict[str, DiscretizationSpec]:
    """Replace default cut points; band names are regenerated with the default scheme."""
    specs = dict(DEFAULT_SPECS)
    for quantity, cuts in (overrides or {}).items():
        if quantity not in specs:
            raise InputError(f"unknown discretization quantity {quantity!r}")
        suffix = "pct" if quantity in ("education", "poverty", "past_event_probability") else ""
        specs[quantity] = DiscretizationSpec.from_cuts(quantity, cuts, suffix)
    return specs


# -- constants --------------------------------------------------------------

def one_decimal(value: float) -> Decimal:
    return Decimal(repr(float(value))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)


def number_constant(value: float):
    if float(value).is_integer():
        return int(value)
    return one_decimal(value)


def road_constant(road: str) -> str:
    """``"I-270"`` -> ``"i270"``."""
    return re.sub(r"[^a-z0-9]", "", road.lower()) or "unknown_road"


def context_constant(label: ContextLabel) -> str:
    # rules and the background table use the plural "community areas"
    return "community_areas" if label is ContextLabel.COMMUNITY_AREA else label.value


def location_constant(key: tuple[float, float], precision: int = DEFAULT_PRECISION) -> str:
    def part(v):
        return f"{v:.{precision}f}".replace("-", "m").replace(".", "_")
    return f"loc_{part(key[0])}_{part(key[1])}"


def city_constant(city: str) -> str:
    return city_key(city)


def hour_constant(hour: int) -> str:
    return f"h{hour}"


def month_constant(month: int) -> str:
    return calendar.month_name[month].lower()


def belt_constant(not_wearing: bool) -> str:
    return "belt_no" if not_wearing else "belt_yes"


# -- compilation ------------------------------------------------------------

def compile_city_facts(profiles: Iterable[CityProfile], specs: Mapping[str, DiscretizationSpec] | None = None,
                       precision: int = DEFAULT_PRECISION, schema: Schema | None = None) -> KnowledgeBase:
    """Per-city background facts: statistics, demographics (banded) and context."""
    specs = {**DEFAULT_SPECS, **(specs or {})}
    kb = KnowledgeBase(schema or default_schema(()))
    src = "compile_city_facts"
    for prof in profiles:
        c = city_constant(prof.city)
        n, loc, census = prof.night_stats, prof.location_stats, prof.census
        kb.add(Atom("night_hours", (c, one_decimal(n.mean), one_decimal(n.median),
                                    one_decimal(n.variance), one_decimal(n.std))), src)
        kb.add(Atom("location_distribution", (c, one_decimal(loc.mean), one_decimal(loc.variance),
                                              one_decimal(loc.std))), src)
        label = prof.context_label
        if label is None:
            log.warning("no annotated hotspot for %s; location_context omitted", prof.city)
        else:
            kb.add(Atom("location_context", (c, context_constant(label))), src)
        for cell in prof.hotspots:
            if cell.context_label is not None:
                kb.add(Atom("location_context", (c, location_constant(cell.location_key, precision),
                                                 context_constant(cell.context_label))), src)
        kb.add(Atom("population_density", (c, number_constant(census.density))), src)
        kb.add(Atom("median_income", (c, discretize(census.median_income, specs["income"]))), src)
        kb.add(Atom("education", (c, discretize(census.education_pct, specs["education"]))), src)
        kb.add(Atom("poverty", (c, discretize(census.poverty_pct, specs["poverty"]))), src)
        kb.add(Atom("density", (c, discretize(census.density, specs["density"]))), src)
        if census.main_road:
            kb.add(Atom("main_road", (c, road_constant(census.main_road))), src)
    return kb


def prior_occurrences(records: Sequence[ViolationRecord], precision: int = DEFAULT_PRECISION) -> list[int | None]:
    """For each record, how many earlier events share its rounded location."""
    order = sorted(
        (i for i, r in enumerate(records) if r.has_location),
        key=lambda i: (records[i].location_key(precision), records[i].timestamp, i),
    )
    result: list[int | None] = [None] * len(records)
    prev_key, run = None, 0
    for i in order:
        key = records[i].location_key(precision)
        run = run + 1 if key == prev_key else 0
        result[i] = run
        prev_key = key
    return result


def event_constant(index: int) -> str:
    return f"e{index + 1}"


def compile_event_facts(records: Sequence[ViolationRecord], specs: Mapping[str, DiscretizationSpec] | None = None,
                        annotations: AnnotationTable | None = None,
                        census: Mapping[str, CityCensus] | None = None,
                        target_cities: Iterable[str] | None = None,
                        precision: int = DEFAULT_PRECISION, schema: Schema | None = None) -> KnowledgeBase:
    """Per-event facts plus the ``is_event_in<city>`` label of each event.

    Events are named ``e1..eN`` in record order. Labels are emitted only for
    ``target_cities`` (all cities when ``None``).
    """
    specs = {**DEFAULT_SPECS, **(specs or {})}
    census = census or {}
    targets = None if target_cities is None else {city_key(c) for c in target_cities}
    kb = KnowledgeBase(schema or default_schema(()))
    prior = prior_occurrences(records, precision)
    for i, r in enumerate(records):
        e = event_constant(i)
        src = f"compile_event_facts:{r.record_id}"
        kb.add(Atom("event_type", (e, normalize_description(r.description))), src)
        kb.add(Atom("event_time", (e, hour_constant(r.timestamp.hour))), src)
        kb.add(Atom("event_period_of_year", (e, month_constant(r.timestamp.month))), src)
        kb.add(Atom("driver_characteristics", (e, belt_constant(r.belts))), src)
        if r.vehicle_year is not None:
            kb.add(Atom("vehicle_year", (e, discretize(r.vehicle_year, specs["vehicle_year"]))), src)
        if prior[i] is not None:
            kb.add(Atom("event_previous_occurrence", (e, discretize(prior[i], specs["occurrence"]))), src)
            label = annotations.get(r.location_key(precision)) if annotations is not None else None
            if label is not None:
                kb.add(Atom("location_context", (e, context_constant(label))), src)
                info = census.get(city_key(r.city))
                if label is ContextLabel.MAIN_ROAD and info is not None and info.main_road:
                    kb.add(Atom("main_road", (e, road_constant(info.main_road))), src)
        ck = city_key(r.city)
        if ck and (targets is None or ck in targets):
            kb.add(Atom(target_predicate(ck), (e,)), src)
    return kb


# -- text format ------------------------------------------------------------

def fact_lines(kb: KnowledgeBase) -> list[str]:
    return sorted(f.render() + "." for f in kb.facts)


def emit_facts(kb: KnowledgeBase, sink) -> int:
    """Write one fact per line, sorted, UTF-8, LF. Returns the byte count."""
    data = "".join(line + "\n" for line in fact_lines(kb)).encode("utf-8")
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return len(data)


def _read_source(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_facts(source, schema: Schema | None = None) -> KnowledgeBase:
    """Parse a fact file. ``source`` is bytes, a text string, a path or a stream.

    Without a schema every predicate is accepted (open schema).
    """
    kb = KnowledgeBase(schema.copy() if schema is not None else Schema(open=True))
    for line, col, clause in parse_statements(_read_source(source)):
        if clause.body or not clause.head.is_ground:
            raise FactSyntaxError(line, col, "expected a ground fact")
        kb.add(clause.head, f"parse_facts:{line}")
    return kb
