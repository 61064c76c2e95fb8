"""FOIL-style top-down rule learning over a :class:`~trafficilp.kb.KnowledgeBase`."""

from __future__ import annotations

import itertools
import json
import math
import os
import re
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import InputError, NoRulesLearned, PredicateMismatch, SchemaMismatch
from .kb import TARGET_PREFIX, KnowledgeBase
from .syntax import parse_statements
from .terms import ANONYMOUS, Atom, Clause, Var, render_term

# -- coverage ---------------------------------------------------------------


def _match(literal: Atom, fact: Atom, theta: dict) -> dict | None:
    out = theta
    for term, value in zip(literal.args, fact.args):
        if isinstance(term, Var):
            if term.name == ANONYMOUS:
                continue
            bound = out.get(term, _UNBOUND)
            if bound is _UNBOUND:
                if out is theta:
                    out = dict(theta)
                out[term] = value
            elif bound != value:
                return None
        elif term != value:
            return None
    return out


_UNBOUND = object()


def _bound_positions(literal: Atom, theta: dict) -> dict[int, object]:
    bound = {}
    for i, term in enumerate(literal.args):
        if isinstance(term, Var):
            if term.name != ANONYMOUS and term in theta:
                bound[i] = theta[term]
        else:
            bound[i] = term
    return bound


def solve(body: Sequence[Atom], kb: KnowledgeBase, theta: dict | None = None):
    """Yield every substitution grounding all of ``body`` in ``kb`` (left to right, backtracking)."""
    theta = {} if theta is None else theta

    def walk(i, theta):
        if i == len(body):
            yield theta
            return
        literal = body[i]
        for fact in kb.matching(literal.key, _bound_positions(literal, theta)):
            extended = _match(literal, fact, theta)
            if extended is not None:
                yield from walk(i + 1, extended)

    return walk(0, theta)


def covers(clause: Clause, example: Atom, kb: KnowledgeBase) -> tuple[bool, dict | None]:
    """Return ``(covered, witness)`` where the witness grounds head and body."""
    if example.key != clause.head.key:
        raise PredicateMismatch(f"{example} does not match head {clause.head}")
    theta = _match(clause.head, example, {})
    if theta is None:
        return False, None
    for witness in solve(clause.body, kb, theta):
        return True, witness
    return False, None


@dataclass
class CoverageResult:
    covered: list[Atom]
    witnesses: dict[Atom, dict]


def coverage(clause: Clause, examples: Iterable[Atom], kb: KnowledgeBase) -> CoverageResult:
    result = CoverageResult([], {})
    for ex in examples:
        ok, witness = covers(clause, ex, kb)
        if ok:
            result.covered.append(ex)
            result.witnesses[ex] = witness
    return result


def _covered(clause, examples, kb) -> list[Atom]:
    return [ex for ex in examples if covers(clause, ex, kb)[0]]


def _covered_after(clause: Clause, literal: Atom, covered: Sequence[Atom], kb: KnowledgeBase) -> list[Atom]:
    """Examples in ``covered`` (those covered by ``clause``) still covered once ``literal`` is appended."""
    head_vars = set(clause.head.variables())
    lit_vars = {v for v in literal.variables() if v.name != ANONYMOUS}
    if lit_vars <= head_vars:
        # the literal only constrains head variables, so it is independent of the body witness
        out = []
        for ex in covered:
            theta = _match(clause.head, ex, {})
            ground = Atom(literal.name, tuple(theta[t] if isinstance(t, Var) and t.name != ANONYMOUS else t
                                              for t in literal.args))
            if ground.is_ground:
                if ground in kb.facts:
                    out.append(ex)
            elif kb.matching(ground.key, _bound_positions(ground, {})):
                out.append(ex)
        return out
    return _covered(clause.extend(literal), covered, kb)


# -- hypothesis space -------------------------------------------------------

_MODE_ARG_RE = re.compile(r"([+\-#])([a-z_][a-z0-9_]*)")


@dataclass(frozen=True)
class ModeDeclaration:
    """Per-argument search control: ``+type`` existing variable, ``-type`` new
    variable, ``#type`` ground constant."""

    predicate: str
    arg_modes: tuple[tuple[str, str], ...]

    @property
    def arity(self) -> int:
        return len(self.arg_modes)

    @property
    def key(self):
        return (self.predicate, self.arity)

    @classmethod
    def parse(cls, text: str) -> "ModeDeclaration":
        m = re.fullmatch(r"\s*([a-z][a-z0-9_]*)\((.*)\)\s*", text)
        if m is None:
            raise InputError(f"bad mode declaration {text!r}")
        args = []
        for part in m.group(2).split(","):
            am = _MODE_ARG_RE.fullmatch(part.strip())
            if am is None:
                raise InputError(f"bad mode argument {part!r} in {text!r}")
            args.append((am.group(1), am.group(2)))
        return cls(m.group(1), tuple(args))

    def __str__(self):
        return f"{self.predicate}({', '.join(k + t for k, t in self.arg_modes)})"


DEFAULT_MODES = tuple(ModeDeclaration.parse(m) for m in (
    "driver_characteristics(+event, #boolean_attr)",
    "event_period_of_year(+event, #band)",
    "event_previous_occurrence(+event, #band)",
    "event_time(+event, #band)",
    "event_type(+event, #event_type)",
    "location_context(+event, #context)",
    "main_road(+event, #road)",
    "vehicle_year(+event, #band)",
))


@dataclass(frozen=True)
class LearnConfig:
    max_body_literals: int = 6
    min_coverage: int = 2
    min_precision: float = 0.9
    beam_width: int = 1
    constant_pool_limit: int | None = None  # None = every constant seen at the position

    def __post_init__(self):
        if self.max_body_literals < 1 or self.min_coverage < 1 or self.beam_width < 1:
            raise ValueError("learner limits must be positive")
        if not 0 < self.min_precision <= 1:
            raise ValueError("min_precision must be in (0, 1]")
        if self.constant_pool_limit is not None and self.constant_pool_limit < 1:
            raise ValueError("constant_pool_limit must be positive")


def _variable_types(clause: Clause, modes: Sequence[ModeDeclaration], head_type: str) -> dict[Var, str]:
    types = {v: head_type for v in clause.head.variables() if v.name != ANONYMOUS}
    by_key = {m.key: m for m in modes}
    for lit in clause.body:
        mode = by_key.get(lit.key)
        if mode is None:
            continue
        for term, (_, typ) in zip(lit.args, mode.arg_modes):
            if isinstance(term, Var) and term.name != ANONYMOUS:
                types.setdefault(term, typ)
    return types


def _fresh_names(clause: Clause):
    used = {v.name for v in clause.variables()}
    for k in itertools.count():
        name = f"V{k}"
        if name not in used:
            yield Var(name)


def candidate_literals(partial: Clause, modes: Sequence[ModeDeclaration], kb: KnowledgeBase,
                       constant_pool_limit: int | None = None, head_type: str = "any") -> list[Atom]:
    """All literals the mode declarations allow as the next body literal, in a fixed order."""
    var_types = _variable_types(partial, modes, head_type)
    existing = set(partial.body)
    out: dict[Atom, None] = {}
    for mode in sorted(modes, key=lambda m: (m.predicate, m.arity, m.arg_modes)):
        if mode.predicate == partial.head.name:
            continue
        fresh = _fresh_names(partial)
        choices = []
        for pos, (kind, typ) in enumerate(mode.arg_modes):
            if kind == "+":
                choices.append([v for v, t in var_types.items() if t == typ or "any" in (t, typ)])
            elif kind == "-":
                choices.append([next(fresh)])
            else:
                counts = kb.constants_at(mode.key, pos)
                pool = sorted(counts, key=lambda c: (-counts[c], render_term(c)))
                if constant_pool_limit is not None:
                    pool = pool[:constant_pool_limit]
                choices.append(pool)
        for args in itertools.product(*choices):
            lit = Atom(mode.predicate, args)
            if lit not in existing:
                out.setdefault(lit)
    return sorted(out, key=Atom.sort_key)


# -- search -----------------------------------------------------------------


def foil_gain_counts(p0: int, n0: int, p1: int, n1: int) -> float:
    if p1 == 0:
        return 0.0
    if p0 == 0:
        raise ValueError("foil gain needs p0 > 0")
    return p1 * (math.log2(p1 / (p1 + n1)) - math.log2(p0 / (p0 + n0)))


def foil_gain(partial: Clause, literal: Atom, pos: Sequence[Atom], neg: Sequence[Atom], kb: KnowledgeBase) -> float:
    """Information gain of appending ``literal``; counts examples, not bindings."""
    p_before = _covered(partial, pos, kb)
    n_before = _covered(partial, neg, kb)
    p_after = _covered_after(partial, literal, p_before, kb)
    n_after = _covered_after(partial, literal, n_before, kb) if p_after else []
    return foil_gain_counts(len(p_before), len(n_before), len(p_after), len(n_after))


def _precision(p: int, n: int) -> float:
    return p / (p + n) if p + n else 0.0


@dataclass(frozen=True)
class LearnedClause:
    clause: Clause
    pos_covered: int
    neg_covered: int

    @property
    def precision(self) -> float:
        return _precision(self.pos_covered, self.neg_covered)


def head_for(example: Atom) -> Atom:
    names = ["X", "Y", "Z", "W"]
    if example.arity > len(names):
        names = [f"X{i}" for i in range(example.arity)]
    return Atom(example.name, tuple(Var(n) for n in names[:example.arity]))


@dataclass
class _State:
    clause: Clause
    pos: list
    neg: list

    def done(self, config):
        return (not self.neg
                or _precision(len(self.pos), len(self.neg)) >= config.min_precision
                or len(self.clause.body) >= config.max_body_literals)


def learn_clause(pos: Sequence[Atom], neg: Sequence[Atom], kb: KnowledgeBase,
                 modes: Sequence[ModeDeclaration] = DEFAULT_MODES, config: LearnConfig = LearnConfig(),
                 head_type: str = "any") -> LearnedClause | None:
    """Grow one clause greedily (or with a beam) by FOIL gain.

    Returns ``None`` when the best clause found misses ``min_coverage`` or
    ``min_precision``.
    """
    if not pos:
        raise ValueError("learn_clause needs positive examples")
    head = head_for(pos[0])
    start = Clause(head)
    beam = [_State(start, _covered(start, pos, kb), _covered(start, neg, kb))]
    finished: list[_State] = []
    while beam:
        scored = []
        for si, state in enumerate(beam):
            if state.done(config):
                finished.append(state)
                continue
            p0, n0 = len(state.pos), len(state.neg)
            grown = False
            for ci, lit in enumerate(candidate_literals(state.clause, modes, kb,
                                                        config.constant_pool_limit, head_type)):
                p1 = _covered_after(state.clause, lit, state.pos, kb)
                if not p1:
                    continue
                n1 = _covered_after(state.clause, lit, state.neg, kb)
                clause = state.clause.extend(lit)
                gain = foil_gain_counts(p0, n0, len(p1), len(n1))
                if gain > 0:
                    scored.append((-gain, si, ci, _State(clause, p1, n1)))
                    grown = True
            if not grown:
                finished.append(state)
        scored.sort(key=lambda t: t[:3])
        beam = [t[3] for t in scored[:config.beam_width]]

    def rank(state):
        p, n = len(state.pos), len(state.neg)
        return (-_precision(p, n), -p, len(state.clause.body))

    for state in sorted(finished, key=rank):
        p, n = len(state.pos), len(state.neg)
        if p >= config.min_coverage and _precision(p, n) >= config.min_precision:
            return LearnedClause(state.clause, p, n)
        if config.beam_width == 1:
            break
    return None


@dataclass(frozen=True)
class ClauseStats:
    clause_index: int
    pos_covered: int
    neg_covered: int
    precision: float


@dataclass
class LearnedRuleSet:
    clauses: list[Clause]
    stats: list[ClauseStats]
    target: str
    config: LearnConfig = field(default_factory=LearnConfig)
    kb_digest: str = ""

    def stats_json(self) -> str:
        return json.dumps([asdict(s) for s in self.stats], indent=2, sort_keys=True) + "\n"

    def metadata(self) -> dict:
        return {"target": self.target, "config": asdict(self.config), "kb_digest": self.kb_digest}


def clause_stats(clauses: Sequence[Clause], pos, neg, kb) -> list[ClauseStats]:
    out = []
    for i, c in enumerate(clauses):
        p = len(_covered(c, [e for e in pos if e.key == c.head.key], kb))
        n = len(_covered(c, [e for e in neg if e.key == c.head.key], kb))
        out.append(ClauseStats(i, p, n, _precision(p, n)))
    return out


def learn_ruleset(pos: Sequence[Atom], neg: Sequence[Atom], kb: KnowledgeBase,
                  modes: Sequence[ModeDeclaration] = DEFAULT_MODES, config: LearnConfig = LearnConfig(),
                  head_type: str = "any") -> LearnedRuleSet:
    """Sequential covering. Clause statistics refer to the full example sets.

    An empty result is returned with a :class:`NoRulesLearned` warning.
    """
    if not pos:
        raise ValueError("learn_ruleset needs positive examples")
    kb.seal()
    remaining = list(pos)
    clauses: list[Clause] = []
    while remaining and len(remaining) >= config.min_coverage:
        learned = learn_clause(remaining, neg, kb, modes, config, head_type)
        if learned is None:
            break
        covered = set(_covered(learned.clause, remaining, kb))
        if not covered:
            break
        clauses.append(learned.clause)
        remaining = [e for e in remaining if e not in covered]
    if not clauses:
        warnings.warn(NoRulesLearned(f"no clause for {pos[0].name} met the coverage/precision limits"),
                      stacklevel=2)
    return LearnedRuleSet(clauses, clause_stats(clauses, pos, neg, kb), pos[0].name, config, kb.digest())


# -- evaluation -------------------------------------------------------------


@dataclass
class EvaluationMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None  # None when nothing was predicted positive
    recall: float | None  # None when there are no positives
    coverage: int  # examples predicted positive
    per_clause: list[ClauseStats]

    def as_dict(self) -> dict:
        return asdict(self)


def _clauses_of(rules) -> list[Clause]:
    return list(rules.clauses) if isinstance(rules, LearnedRuleSet) else list(rules)


def evaluate_ruleset(rules, pos: Sequence[Atom], neg: Sequence[Atom], kb: KnowledgeBase) -> EvaluationMetrics:
    """Score a rule set; an example is predicted positive if any clause covers it."""
    clauses = _clauses_of(rules)
    for c in clauses:
        for lit in c.body:
            if lit.key not in kb.schema:
                raise SchemaMismatch(f"{lit.name}/{lit.arity} is not in the knowledge base schema")
    tp = sum(1 for e in pos if any(covers(c, e, kb)[0] for c in clauses if c.head.key == e.key))
    fp = sum(1 for e in neg if any(covers(c, e, kb)[0] for c in clauses if c.head.key == e.key))
    fn, tn = len(pos) - tp, len(neg) - fp
    return EvaluationMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / len(pos) if pos else None,
        coverage=tp + fp,
        per_clause=clause_stats(clauses, pos, neg, kb),
    )


# -- examples ---------------------------------------------------------------


def contrast_examples(kb: KnowledgeBase, target: str) -> tuple[list[Atom], list[Atom]]:
    """Closed-world pairwise contrast: events labelled with any other
    ``is_event_in*`` predicate become negatives of ``target``."""
    pos = sorted(kb.matching((target, 1)), key=Atom.sort_key)
    positive = {f.args[0] for f in pos}
    neg = {}
    for name, arity in kb.predicates():
        if arity == 1 and name.startswith(TARGET_PREFIX) and name != target:
            for f in kb.matching((name, 1)):
                if f.args[0] not in positive:
                    neg.setdefault(Atom(target, f.args))
    return pos, sorted(neg, key=Atom.sort_key)


def explicit_examples(kb: KnowledgeBase, target: str, negatives: KnowledgeBase) -> tuple[list[Atom], list[Atom]]:
    pos = sorted(kb.matching((target, 1)), key=Atom.sort_key)
    neg = sorted((f for f in negatives.facts if f.name == target), key=Atom.sort_key)
    return pos, neg


# -- rule files -------------------------------------------------------------


def rule_lines(clauses: Iterable[Clause]) -> list[str]:
    return [c.render() for c in clauses]


def emit_rules(clauses, sink) -> int:
    data = "".join(line + "\n" for line in rule_lines(_clauses_of(clauses))).encode("utf-8")
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return len(data)


def parse_rules(source) -> list[Clause]:
    if isinstance(source, os.PathLike):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        text = bytes(source).decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    return [c for _, _, c in parse_statements(text)]


# -- the four reference rules -----------------------------------------------


def builtin_paper_rules() -> list[Clause]:
    """The four hand-stated rules over the compiled vocabulary.

    The ``night_hours(Y, .)`` literal becomes ``night_hours(Y, _, _, _, _)``
    with anonymous variables.
    """
    X, Y, _ = Var("X"), Var("Y"), Var(ANONYMOUS)
    return [
        Clause(Atom("is_event_inbethesda", (X,)), (
            Atom("event_time", (X, "h20")),
            Atom("event_period_of_year", (X, "november")),
            Atom("location_context", (X, "athletic_center")),
            Atom("event_previous_occurrence", (X, "gt_10")),
            Atom("vehicle_year", (X, "gt_2009")),
            Atom("driver_characteristics", (X, "belt_yes")),
        )),
        Clause(Atom("is_event_ingaithersburg", (X,)), (
            Atom("main_road", (X, "i270")),
            Atom("event_previous_occurrence", (X, "gt_20")),
            Atom("driver_characteristics", (X, "belt_no")),
        )),
        Clause(Atom("safe_location", (Y, "bethesda")), (
            Atom("event_previous_occurrence", (Y, "lt_5")),
            Atom("location_context", ("bethesda", Y, "community_areas")),
            Atom("event_type", (X, Y)),
            Atom("night_hours", (Y, _, _, _, _)),
        )),
        Clause(Atom("event_happen", (X, Y)), (
            Atom("education", (Y, "gt_80pct")),
            Atom("median_income", (Y, "gt_150000")),
            Atom("poverty", (Y, "lt_3pct")),
            Atom("density", (Y, "lt_2000")),
            Atom("past_event_probability", (X, "band_3pct")),
        )),
    ]
