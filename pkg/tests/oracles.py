"""Slow, obviously-correct reimplementations used as test oracles.

Nothing here imports the code under test beyond plain data types.
"""

import itertools
import math
import random
from datetime import datetime, time, timedelta

from trafficilp.ingest import ViolationRecord, ViolationType
from trafficilp.terms import Atom, Clause, Var

# -- statistics -------------------------------------------------------------


def stats(values):
    xs = sorted(values)
    n = len(xs)
    mean = sum(xs) / n
    median = xs[n // 2] if n % 2 else (xs[n // 2 - 1] + xs[n // 2]) / 2
    variance = sum((x - mean) ** 2 for x in xs) / n
    return mean, median, variance, math.sqrt(variance)


def normalize(text):
    words = text.split()
    s = " ".join(words).lower()
    return s[:1].upper() + s[1:]


def ranking(records, top_k):
    counts = {}
    for r in records:
        key = normalize(r.description)
        counts[key] = counts.get(key, 0) + 1
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return rows[:top_k]


def crosstab(records, flags):
    cells = {}
    for r in records:
        key = tuple(getattr(r, f) for f in flags)
        cells[key] = cells.get(key, 0) + 1
    return cells


def histogram(records, axis):
    size = {"hour": 24, "weekday": 7, "month": 12}[axis]
    bins = [0] * size
    for r in records:
        if axis == "hour":
            bins[r.timestamp.hour] += 1
        elif axis == "weekday":
            bins[(r.timestamp.date().toordinal() - 1) % 7] += 1  # 0001-01-01 was a Monday
        else:
            bins[r.timestamp.month - 1] += 1
    return bins


def cell(r, precision):
    scale = 10 ** precision
    # round half to even on the decimal grid, matching float round()
    return (round(r.latitude * scale) / scale + 0.0, round(r.longitude * scale) / scale + 0.0)


def hotspots(records, threshold, precision):
    counts = {}
    for r in records:
        if r.latitude is None:
            continue
        k = cell(r, precision)
        counts[k] = counts.get(k, 0) + 1
    hot = [(k, n) for k, n in counts.items() if n > threshold]
    return sorted(hot, key=lambda kn: (-kn[1], kn[0]))


def location_stats(records, city, precision):
    counts = {}
    for r in records:
        if r.city.strip().lower() == city.strip().lower() and r.latitude is not None:
            k = cell(r, precision)
            counts[k] = counts.get(k, 0) + 1
    return stats(list(counts.values()))


def night(records, weather, fallback=(time(20), time(6))):
    months = [0] * 12
    for r in records:
        day = weather.get(r.timestamp.date())
        rise, sett = (day.sunrise, day.sunset) if day else (fallback[1], fallback[0])
        t = r.timestamp.time()
        if not (rise <= t <= sett):
            months[r.timestamp.month - 1] += 1
    return months


def random_records(rng, n, year=2017, cities=("BETHESDA", "GAITHERSBURG", "OLNEY")):
    spots = [(round(rng.uniform(38.9, 39.2), 4), round(rng.uniform(-77.3, -77.0), 4)) for _ in range(12)]
    out = []
    start = datetime(year, 1, 1)
    for i in range(n):
        stamp = start + timedelta(minutes=rng.randrange(365 * 24 * 60))
        located = rng.random() > 0.05
        lat, lon = rng.choice(spots) if located else (None, None)
        if located:
            lat += rng.choice([0.0, 0.00004, -0.00004, 0.00006])
            lon += rng.choice([0.0, 0.00004, -0.00004])
        out.append(ViolationRecord(
            record_id=str(i), timestamp=stamp, city=rng.choice(cities), latitude=lat, longitude=lon,
            description=rng.choice(["speeding", "SPEEDING", "no  registration", "Phone use", "Failure to yield"]),
            violation_type=rng.choice(list(ViolationType)),
            belts=rng.random() < 0.2, personal_injury=rng.random() < 0.1,
            property_damage=rng.random() < 0.1, contributed_to_accident=rng.random() < 0.15,
        ))
    return out


# -- logic ------------------------------------------------------------------


def _freshen(clause):
    """Give every anonymous variable its own name."""
    counter = itertools.count()

    def fix(lit):
        return Atom(lit.name, tuple(Var(f"_Anon{next(counter)}") if isinstance(a, Var) and a.name == "_" else a
                                    for a in lit.args))
    return fix(clause.head), [fix(b) for b in clause.body]


def brute_covers(clause, example, facts):
    """Try every assignment of every clause variable to every constant."""
    head, body = _freshen(clause)
    if head.name != example.name or len(head.args) != len(example.args):
        return False
    constants = sorted({a for f in facts for a in f.args} | set(example.args), key=repr)
    # a head variable can only take the example's value, so only the rest are enumerated
    fixed = {}
    for a, v in zip(head.args, example.args):
        if isinstance(a, Var):
            if fixed.setdefault(a, v) != v:
                return False
    variables = sorted({a for lit in body for a in lit.args if isinstance(a, Var)} - set(fixed),
                       key=lambda v: v.name)
    for values in itertools.product(constants, repeat=len(variables)):
        theta = dict(zip(variables, values))
        theta.update(fixed)

        def ground(lit):
            return Atom(lit.name, tuple(theta.get(a, a) if isinstance(a, Var) else a for a in lit.args))
        if ground(head) == example and all(ground(b) in facts for b in body):
            return True
    return False


def literal_cover(facts, events, name, const):
    return frozenset(e for e in events if Atom(name, (e, const)) in facts)


def perfect_clauses(facts, pos_events, neg_events, max_len=2, predicates=None):
    """All sets of (predicate, constant) body literals on the head variable, up to
    ``max_len`` long, covering every positive and no negative. Shortest first."""
    events = set(pos_events) | set(neg_events)
    pool = sorted({(f.name, f.args[1]) for f in facts
                   if len(f.args) == 2 and f.args[0] in events and (predicates is None or f.name in predicates)},
                  key=repr)
    covers = {lit: literal_cover(facts, events, *lit) for lit in pool}
    pos, neg = frozenset(pos_events), frozenset(neg_events)
    found = []
    for size in range(1, max_len + 1):
        for combo in itertools.combinations(pool, size):
            covered = frozenset(events)
            for lit in combo:
                covered &= covers[lit]
            if covered >= pos and not covered & neg:
                found.append(frozenset(combo))
        if found:
            return found
    return found


PLANT_POOLS = {
    "driver_characteristics": ["belt_no", "belt_yes"],
    "event_period_of_year": ["january", "march", "june", "august", "november"],
    "event_previous_occurrence": ["lt_5", "band_5_10", "gt_10", "gt_20"],
    "event_time": ["h7", "h8", "h16", "h17", "h20", "h22"],
    "event_type": ["Speeding", "Phone use", "No registration", "Failure to yield"],
    "location_context": ["intersection", "main_road", "athletic_center", "shopping_area"],
    "main_road": ["i270", "i495", "md355", "us29"],
    "vehicle_year": ["lt_2009", "gt_2009"],
}


def planted_kb(seed, n_literals, target="is_event_ingaithersburg", n_pos=20, n_neg=20, neg_split=None):
    """Events described by one fact per predicate in PLANT_POOLS.

    Positives satisfy every planted literal; each negative violates exactly
    one. Returns (facts, pos atoms, neg atoms, planted literal set).
    """
    rng = random.Random(seed)
    preds = rng.sample(sorted(PLANT_POOLS), n_literals)
    planted = {p: rng.choice(PLANT_POOLS[p]) for p in preds}
    facts, pos, neg = set(), [], []
    split = neg_split or [n_neg // n_literals + (1 if i < n_neg % n_literals else 0) for i in range(n_literals)]
    broken = [p for p, k in zip(preds, split) for _ in range(k)]
    for i in range(n_pos + n_neg):
        e = f"e{i + 1}"
        values = {p: rng.choice(pool) for p, pool in PLANT_POOLS.items()}
        values.update(planted)
        if i >= n_pos:
            p = broken[i - n_pos]
            values[p] = rng.choice([c for c in PLANT_POOLS[p] if c != planted[p]])
        for p, c in values.items():
            facts.add(Atom(p, (e, c)))
        (pos if i < n_pos else neg).append(Atom(target, (e,)))
        if i < n_pos:
            facts.add(Atom(target, (e,)))
        else:
            facts.add(Atom("is_event_inbethesda", (e,)))
    return facts, pos, neg, frozenset(planted.items())


def clause_literal_set(clause):
    return frozenset((b.name, b.args[1]) for b in clause.body)


def random_clause_kb(rng, n_constants=20, n_facts=60):
    """A small random KB over p/1, q/2, r/2, s/3 and a random clause t(X) :- ..."""
    consts = [f"c{i}" for i in range(rng.randint(2, n_constants))]
    preds = {"p": 1, "q": 2, "r": 2, "s": 3}
    facts = set()
    for _ in range(rng.randint(1, n_facts)):
        name = rng.choice(sorted(preds))
        facts.add(Atom(name, tuple(rng.choice(consts) for _ in range(preds[name]))))
    variables = [Var("X"), Var("Y"), Var("Z")]

    def term():
        return rng.choice(variables) if rng.random() < 0.7 else rng.choice(consts)

    body = []
    for _ in range(rng.randint(1, 4)):
        name = rng.choice(sorted(preds))
        body.append(Atom(name, tuple(term() for _ in range(preds[name]))))
    clause = Clause(Atom("t", (Var("X"),)), tuple(body))
    return consts, facts, clause
