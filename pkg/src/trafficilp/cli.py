"""Command-line pipeline: ingest -> analyze -> compile-facts -> learn -> eval -> report.

Every subcommand reads the raw inputs again (all steps are pure functions of
them) and writes its artifacts under ``--out``. Exit status: 0 success,
1 input error, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import warnings
from dataclasses import asdict, dataclass, field, replace
from datetime import time
from pathlib import Path

from . import analytics as an
from .errors import InputError, InvariantError, NoRulesLearned
from .ilp import (
    DEFAULT_MODES,
    LearnConfig,
    builtin_paper_rules,
    contrast_examples,
    emit_rules,
    evaluate_ruleset,
    explicit_examples,
    learn_ruleset,
    parse_rules,
)
from .ingest import DEFAULT_MAPPING, Dataset, load_dataset, write_violations_csv
from .kb import (
    TARGET_PREFIX,
    KnowledgeBase,
    compile_city_facts,
    compile_event_facts,
    default_schema,
    emit_facts,
    parse_facts,
    target_predicate,
    with_overrides,
)

log = logging.getLogger("trafficilp")

SUBCOMMANDS = ("ingest", "analyze", "compile-facts", "learn", "eval", "report", "all")
SCOPES = ("all", "category1", "category2")


@dataclass(frozen=True)
class PipelineConfig:
    violations: Path | None = None
    weather: Path | None = None
    census: Path | None = None
    annotations: Path | None = None
    out: Path = Path("out")
    year: int = 2017
    precision: int = 4
    hotspot_threshold: int = 10
    night_fallback: tuple[time, time] = an.DEFAULT_NIGHT_FALLBACK
    discretization: dict = field(default_factory=dict)
    learn: LearnConfig = field(default_factory=LearnConfig)
    targets: tuple[str, ...] = ("bethesda", "gaithersburg")
    scope: str = "all"
    target: str | None = None
    rules: str | None = None
    facts: Path | None = None
    negatives: Path | None = None
    strict: bool = False
    county_population: int | None = None
    mapping: dict = field(default_factory=dict)

    def validate(self):
        if not 1000 <= self.year <= 9999:
            raise InputError("year must have four digits")
        if self.precision < 0 or self.hotspot_threshold < 1:
            raise InputError("precision must be >= 0 and hotspot threshold >= 1")
        if not (self.scope in SCOPES or self.scope.startswith("event:")):
            raise InputError(f"unknown scope {self.scope!r}")
        for name in ("violations", "weather", "census", "annotations", "facts", "negatives"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise InputError(f"--{name}: no such file {str(path)!r}")

    @property
    def profile_config(self) -> an.ProfileConfig:
        return an.ProfileConfig(self.year, self.precision, self.hotspot_threshold, self.night_fallback)


# -- configuration ----------------------------------------------------------

def _parse_window(text: str) -> tuple[time, time]:
    start, _, end = text.partition("-")
    try:
        return (time.fromisoformat(start.strip()), time.fromisoformat(end.strip()))
    except ValueError:
        raise InputError(f"night window must look like 20:00-06:00, got {text!r}") from None


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


_SCALARS = {
    "violations": Path, "weather": Path, "census": Path, "annotations": Path, "out": Path,
    "facts": Path, "negatives": Path, "year": int, "precision": int, "hotspot_threshold": int,
    "scope": str, "target": str, "rules": str, "strict": _bool, "county_population": int,
    "targets": _csv_list, "night_fallback": _parse_window,
}
_LEARN_KEYS = {"max_body_literals": int, "min_coverage": int, "min_precision": float,
               "beam_width": int, "constant_pool_limit": int}


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments; keys may use dashes or underscores."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InputError(f"{path}:{lineno}: expected key = value")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_config(file_values: dict[str, str], flags: dict) -> PipelineConfig:
    """Merge with precedence flag > file > default."""
    merged: dict = {}
    for source in (file_values, {k: v for k, v in flags.items() if v is not None}):
        merged.update(source)
    kwargs: dict = {}
    learn: dict = {}
    mapping: dict = {}
    discretization: dict = {}
    try:
        for key, value in merged.items():
            if key in _SCALARS:
                kwargs[key] = value if not isinstance(value, str) else _SCALARS[key](value)
            elif key in _LEARN_KEYS:
                learn[key] = _LEARN_KEYS[key](value)
            elif key.startswith("mapping."):
                logical = key[len("mapping."):]
                if logical not in DEFAULT_MAPPING:
                    raise InputError(f"unknown mapping field {logical!r}")
                mapping[logical] = value
            elif key.startswith("discretize."):
                discretization[key[len("discretize."):]] = tuple(float(v) for v in _csv_list(value))
            elif key not in ("config", "command"):
                raise InputError(f"unknown configuration key {key!r}")
        config = PipelineConfig(**kwargs, learn=LearnConfig(**learn), mapping=mapping,
                                discretization=discretization)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    with_overrides(config.discretization)  # fail early on bad cuts
    return config


# -- output helpers ---------------------------------------------------------

def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n").encode("utf-8")


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode("utf-8")


def _emit_table(outdir: Path, stem: str, header, rows) -> None:
    rows = [list(r) for r in rows]
    write_atomic(outdir / f"{stem}.csv", _csv_bytes(header, rows))
    write_atomic(outdir / f"{stem}.json", _json_bytes([dict(zip(header, r)) for r in rows]))


# -- steps ------------------------------------------------------------------

def _load(config: PipelineConfig) -> Dataset:
    if config.violations is None:
        raise InputError("--violations is required")
    return load_dataset(config.violations, config.weather, config.census, config.annotations,
                        mapping=config.mapping, strict=config.strict, year=config.year,
                        precision=config.precision)


def step_ingest(config: PipelineConfig, dataset: Dataset) -> dict:
    out = config.out / "dataset"
    buf = io.StringIO()
    write_violations_csv(dataset.violations, buf, config.mapping)
    write_atomic(out / "violations.csv", buf.getvalue().encode("utf-8"))
    report = {name: r.as_dict() for name, r in dataset.parse_report.items()}
    report["weather_days"] = len(dataset.weather)
    report["census_cities"] = sorted(dataset.census)
    report["annotations"] = {"cells": len(dataset.annotations), "duplicates": dataset.annotations.duplicates}
    write_atomic(out / "parse_report.json", _json_bytes(report))
    return report


def _r(x, digits=6):
    return None if x is None else round(x, digits)


def _profiles(config: PipelineConfig, dataset: Dataset) -> list[an.CityProfile]:
    profiles = []
    for city in config.targets:
        try:
            profiles.append(an.city_profile(dataset, city, config.profile_config))
        except (an.UnknownCity, an.MissingCensus) as exc:
            log.warning("city profile skipped for %s: %s", city, type(exc).__name__)
    return profiles


def step_analyze(config: PipelineConfig, dataset: Dataset) -> dict:
    out = config.out / "analytics"
    records = an.filter_scope(dataset.violations, config.scope)
    summary: dict = {"scope": config.scope, "records_in_scope": len(records),
                     "records_total": len(dataset.violations)}

    top = an.rank_violations(records, top_k=10)
    _emit_table(out, "table1_top_violations", ["rank", "description", "count", "category"],
                [(i, k, c, an.categorize_violation(k).value) for i, (k, c) in enumerate(top.rows, start=1)])
    summary["top_violations"] = [{"description": k, "count": c} for k, c in top.rows]

    flags = ["property_damage", "contributed_to_accident", "personal_injury"]
    tab = an.crosstab(records, flags)
    _emit_table(out, "table2_consequences", flags + ["count"],
                [["Yes" if v else "No" for v in key] + [n] for key, n in tab.cells.items()])

    for dim in an.DIMENSIONS:
        table = an.dimension_breakdown(records, dim)
        _emit_table(out, f"breakdown_{dim}", [dim, "count", "percent"],
                    [(k, c, _r(p, 4)) for k, c, p in table.with_percent()])

    temporal_rows, peaks = [], {}
    for axis in ("hour", "weekday", "month"):
        hist = an.temporal_histogram(records, axis)
        temporal_rows += [(axis, label, n) for label, n in zip(hist.labels, hist.bins)]
        peaks[axis] = [hist.labels[i] for i in an.detect_peaks(hist)]
    _emit_table(out, "temporal", ["axis", "bin", "count"], temporal_rows)
    write_atomic(out / "peaks.json", _json_bytes(peaks))
    summary["peaks"] = peaks

    hotspots = an.hotspot_detect(records, config.hotspot_threshold, config.precision, dataset.annotations)
    _, skipped = an.location_counts(records, config.precision)
    _emit_table(out, "hotspots", ["latitude", "longitude", "count", "context_label"],
                [(c.location_key[0], c.location_key[1], c.count,
                  c.context_label.value if c.context_label else "") for c in hotspots])
    summary["hotspots"] = {"threshold": config.hotspot_threshold, "cells": len(hotspots),
                           "skipped_without_coordinates": skipped}

    night = an.night_series(records, dataset.weather, None, config.night_fallback)
    _emit_table(out, "night_series", ["axis", "bin", "count"],
                [("month", m, n) for m, n in zip(an.MONTHS, night.counts)])
    summary["night_series"] = {"counts": list(night.counts), "uncovered_events": night.uncovered}
    if dataset.weather:
        try:
            lengths = an.night_duration_series(dataset.weather)
        except an.IncompleteMonth as exc:
            log.warning("night duration: %s", exc)
            lengths = an.night_duration_series(dataset.weather, require_complete=False)
        _emit_table(out, "night_duration", ["month", "mean_night_hours"],
                    [(m, _r(v)) for m, v in zip(an.MONTHS, lengths)])
        kept = [i for i, v in enumerate(lengths) if v is not None]
        corr = {"excluded_months": ["Jun", "Jul"]}
        try:
            xs = [night.counts[i] for i in kept]
            ys = [lengths[i] for i in kept]
            excl = [k for k, i in enumerate(kept) if i in (5, 6)]
            corr["r"] = _r(an.pearson_correlation(xs, ys, excl))
            corr["r_all_months"] = _r(an.pearson_correlation(xs, ys))
        except an.DegenerateInput as exc:
            corr["error"] = str(exc)
        write_atomic(out / "night_correlation.json", _json_bytes(corr))
        summary["night_correlation"] = corr

    if config.county_population:
        summary["per_capita_pct"] = _r(an.per_capita_ratio(len(dataset.violations), config.county_population))

    profiles = _profiles(config, dataset)
    prof_rows = []
    for p in profiles:
        prof_rows.append(_profile_row(p))
        counts, _ = an.location_counts(an.city_records(dataset.violations, p.city), config.precision)
        _emit_table(out, f"location_counts_{target_predicate(p.city)[len(TARGET_PREFIX):]}",
                    ["latitude", "longitude", "count"],
                    [(k[0], k[1], n) for k, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))])
    if prof_rows:
        header = list(prof_rows[0])
        _emit_table(out, "city_profiles", header, [[row[h] for h in header] for row in prof_rows])
    summary["city_profiles"] = prof_rows
    write_atomic(out / "analytics.json", _json_bytes(summary))
    return summary


def _profile_row(p: an.CityProfile) -> dict:
    row = {
        "city": p.city,
        "violation_count": p.violation_count,
        "violation_share_pct": _r(p.violation_share, 4),
        "top_event": p.top_event,
        "second_event": p.second_event,
        "light_truck_pct": _r(p.light_truck_pct, 4),
        "cars_under_10y_pct": _r(p.cars_under_10y_pct, 4),
        "injury_count": p.injury_count,
        "accident_count": p.accident_count,
        "belt_count": p.belt_count,
        "hotspots": len(p.hotspots),
        "context_label": p.context_label.value if p.context_label else "",
        "per_capita_pct": _r(an.per_capita_ratio(p.violation_count, p.census.population), 4),
    }
    for prefix, stats in (("night", p.night_stats), ("location", p.location_stats)):
        for k, v in stats.as_dict().items():
            row[f"{prefix}_{k}"] = _r(v)
    for k, v in asdict(p.census).items():
        if k != "city":
            row[f"census_{k}"] = v
    return row


def compile_kb(config: PipelineConfig, dataset: Dataset) -> KnowledgeBase:
    specs = with_overrides(config.discretization)
    kb = KnowledgeBase(default_schema(config.targets))
    kb.update(compile_city_facts(_profiles(config, dataset), specs, config.precision, kb.schema))
    kb.update(compile_event_facts(dataset.violations, specs, dataset.annotations, dataset.census,
                                  config.targets, config.precision, kb.schema))
    return kb.seal()


def step_compile(config: PipelineConfig, dataset: Dataset) -> KnowledgeBase:
    kb = compile_kb(config, dataset)
    buf = io.BytesIO()
    emit_facts(kb, buf)
    write_atomic(config.out / "kb" / "facts.pl", buf.getvalue())
    return kb


def _load_kb(config: PipelineConfig) -> KnowledgeBase:
    path = config.facts or config.out / "kb" / "facts.pl"
    if not Path(path).is_file():
        raise InputError(f"no fact file at {str(path)!r}; run compile-facts or pass --facts")
    return parse_facts(Path(path)).seal()


def _targets(config: PipelineConfig, kb: KnowledgeBase) -> list[str]:
    if config.target:
        return [config.target]
    present = {name for name, arity in kb.predicates() if arity == 1 and name.startswith(TARGET_PREFIX)}
    return [t for t in (target_predicate(c) for c in config.targets) if t in present]


def _examples(config, kb, target):
    if config.negatives is not None:
        return explicit_examples(kb, target, parse_facts(Path(config.negatives)))
    return contrast_examples(kb, target)


def step_learn(config: PipelineConfig, kb: KnowledgeBase) -> dict:
    results = {}
    for target in _targets(config, kb):
        pos, neg = _examples(config, kb, target)
        if not pos:
            raise InputError(f"no positive examples for {target}")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NoRulesLearned)
            rules = learn_ruleset(pos, neg, kb, DEFAULT_MODES, config.learn, head_type="event")
        for w in caught:
            log.warning("%s", w.message)
        buf = io.BytesIO()
        emit_rules(rules, buf)
        write_atomic(config.out / "rules" / f"{target}.pl", buf.getvalue())
        write_atomic(config.out / "rules" / f"{target}.stats.json", rules.stats_json().encode("utf-8"))
        results[target] = {"clauses": [c.render() for c in rules.clauses],
                           "stats": [asdict(s) for s in rules.stats], **rules.metadata()}
    return results


def _rule_source(config: PipelineConfig):
    if config.rules == "builtin":
        return "builtin", builtin_paper_rules()
    if config.rules:
        path = Path(config.rules)
        if not path.is_file():
            raise InputError(f"--rules: no such file {config.rules!r}")
        return path.stem, parse_rules(path)
    files = sorted((config.out / "rules").glob("*.pl"))
    if not files:
        raise InputError("no learned rule files; run learn or pass --rules")
    clauses = []
    for f in files:
        clauses += parse_rules(f)
    return "learned", clauses


def step_eval(config: PipelineConfig, kb: KnowledgeBase) -> dict:
    label, clauses = _rule_source(config)
    heads = sorted({c.head.name for c in clauses})
    if config.target:
        heads = [h for h in heads if h == config.target]
    result = {"rules": label, "targets": {}}
    for head in heads:
        own = [c for c in clauses if c.head.name == head]
        labelled = head.startswith(TARGET_PREFIX) and own[0].head.arity == 1
        pos, neg = _examples(config, kb, head) if labelled else ([], [])
        if not pos and not neg:
            result["targets"][head] = {"evaluated": False, "reason": "no labelled examples",
                                       "clauses": [c.render() for c in own]}
            continue
        metrics = evaluate_ruleset(own, pos, neg, kb)
        result["targets"][head] = {"evaluated": True, "clauses": [c.render() for c in own],
                                   **metrics.as_dict()}
    write_atomic(config.out / "eval" / f"metrics_{label}.json", _json_bytes(result))
    return result


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8")) if path.is_file() else None


def step_report(config: PipelineConfig) -> dict:
    out = config.out
    facts = out / "kb" / "facts.pl"
    report = {
        "parse_report": _read_json(out / "dataset" / "parse_report.json"),
        "analytics": _read_json(out / "analytics" / "analytics.json"),
        "knowledge_base": None,
        "rules": {},
        "evaluation": {},
    }
    if facts.is_file():
        kb = parse_facts(facts)
        report["knowledge_base"] = {"facts": len(kb), "digest": kb.digest(),
                                    "predicates": [f"{n}/{a}" for n, a in kb.predicates()]}
    for f in sorted((out / "rules").glob("*.pl")):
        report["rules"][f.stem] = {"clauses": [c.render() for c in parse_rules(f)],
                                   "stats": _read_json(f.with_suffix(".stats.json"))}
    for f in sorted((out / "eval").glob("metrics_*.json")):
        report["evaluation"][f.stem[len("metrics_"):]] = _read_json(f)
    write_atomic(out / "report.json", _json_bytes(report))
    return report


def run(command: str, config: PipelineConfig) -> int:
    config.validate()
    if command in ("ingest", "analyze", "compile-facts", "all"):
        dataset = _load(config)
        if command in ("ingest", "all"):
            step_ingest(config, dataset)
        if command in ("analyze", "all"):
            step_analyze(config, dataset)
        if command in ("compile-facts", "all"):
            kb = step_compile(config, dataset)
        if command == "all":
            kb = _load_kb(config)  # learn from the file exactly as written
            step_learn(config, kb)
            step_eval(replace(config, rules=None), kb)
            step_eval(replace(config, rules="builtin"), kb)
            step_report(config)
    elif command == "learn":
        step_learn(config, _load_kb(config))
    elif command == "eval":
        step_eval(config, _load_kb(config))
    elif command == "report":
        step_report(config)
    else:
        raise InputError(f"unknown subcommand {command!r}")
    return 0


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--violations", help="traffic violations CSV")
    common.add_argument("--weather", help="daily sunrise/sunset CSV")
    common.add_argument("--census", help="per-city census CSV")
    common.add_argument("--annotations", help="location context labels CSV")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--year", type=int, help="analysis year (default 2017)")
    common.add_argument("--precision", type=int, help="coordinate rounding, decimal places (default 4)")
    common.add_argument("--hotspot-threshold", type=int, help="hotspot needs more than this many events")
    common.add_argument("--scope", help="all | category1 | category2 | event:<description>")
    common.add_argument("--targets", help="comma-separated cities to profile and label")
    common.add_argument("--target", help="target predicate, e.g. is_event_ingaithersburg")
    common.add_argument("--rules", help="rule file to evaluate, or 'builtin'")
    common.add_argument("--facts", help="fact file (default: OUT/kb/facts.pl)")
    common.add_argument("--negatives", help="fact file of explicit negative examples")
    common.add_argument("--strict", action="store_const", const="true", help="abort on the first bad row")
    common.add_argument("--county-population", type=int, help="population for the county per-capita ratio")
    common.add_argument("--night-fallback", help="night window where weather is missing (20:00-06:00)")
    common.add_argument("--max-body-literals", type=int)
    common.add_argument("--min-coverage", type=int)
    common.add_argument("--min-precision", type=float)
    common.add_argument("--beam-width", type=int)
    common.add_argument("--constant-pool-limit", type=int)

    parser = argparse.ArgumentParser(prog="trafficilp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("trafficilp: %(levelname)s: %(message)s"))
    root = logging.getLogger("trafficilp")
    root.addHandler(handler)
    root.setLevel(logging.WARNING)
    try:
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        file_values = read_config_file(args.config) if args.config else {}
        config = build_config(file_values, flags)
        return run(args.command, config)
    except InputError as exc:
        print(f"trafficilp: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"trafficilp: error: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, AssertionError) as exc:
        print(f"trafficilp: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        root.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
