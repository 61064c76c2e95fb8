import io
import random
import time
import warnings

import pytest

from trafficilp.errors import NoRulesLearned, PredicateMismatch, SchemaMismatch
from trafficilp.ilp import (
    DEFAULT_MODES,
    LearnConfig,
    ModeDeclaration,
    builtin_paper_rules,
    candidate_literals,
    contrast_examples,
    coverage,
    covers,
    emit_rules,
    evaluate_ruleset,
    explicit_examples,
    foil_gain,
    foil_gain_counts,
    learn_clause,
    learn_ruleset,
    parse_rules,
)
from trafficilp.kb import KnowledgeBase, default_schema, parse_facts
from trafficilp.terms import Atom, Clause, Var, atom

import oracles
from conftest import FIXTURES

X, Y, L = Var("X"), Var("Y"), Var("L")
RULE_FIXTURES = FIXTURES / "rules"


def kb_of(*facts):
    return KnowledgeBase(facts=facts).seal()


def t(*body):
    return Clause(atom("t", X), tuple(body))


# -- coverage ---------------------------------------------------------------

def test_covers_single_step():
    kb = kb_of(atom("main_road", "e1", "i270"), atom("driver_characteristics", "e1", "belt_no"),
               atom("main_road", "e2", "i495"), atom("driver_characteristics", "e2", "belt_no"))
    clause = t(atom("main_road", X, "i270"), atom("driver_characteristics", X, "belt_no"))
    ok, witness = covers(clause, atom("t", "e1"), kb)
    assert ok and witness == {X: "e1"}
    assert covers(clause, atom("t", "e2"), kb) == (False, None)


def test_covers_chain_join():
    facts = {atom("loc", "e1", "l1"), atom("ctx", "l1", "shop"), atom("loc", "e2", "l2"), atom("ctx", "l2", "park")}
    kb = KnowledgeBase(facts=facts).seal()
    clause = t(atom("loc", X, L), atom("ctx", L, "shop"))
    for e in ("e1", "e2", "e3"):
        ok, witness = covers(clause, atom("t", e), kb)
        assert ok == oracles.brute_covers(clause, atom("t", e), facts)
        if ok:
            assert all(Atom(b.name, tuple(witness.get(a, a) for a in b.args)) in kb for b in clause.body)
    assert covers(clause, atom("t", "e1"), kb)[1] == {X: "e1", L: "l1"}


def test_covers_anonymous_and_repeated_variables():
    kb = kb_of(atom("night_hours", "c", 1, 2, 3, 4), atom("same", "a", "a"), atom("same", "a", "b"))
    assert covers(Clause(atom("t", X), (Atom("night_hours", (X, Var("_"), Var("_"), Var("_"), Var("_"))),)),
                  atom("t", "c"), kb)[0]
    same = Clause(atom("t", X), (atom("same", X, X),))
    assert covers(same, atom("t", "a"), kb)[0]
    kb2 = kb_of(atom("same", "a", "b"))
    assert not covers(same, atom("t", "a"), kb2)[0]


def test_covers_predicate_mismatch():
    with pytest.raises(PredicateMismatch):
        covers(t(), atom("u", "e1"), kb_of(atom("p", "a")))


def test_coverage_witnesses_replay():
    rng = random.Random(5)
    for _ in range(50):
        consts, facts, clause = oracles.random_clause_kb(rng)
        kb = KnowledgeBase(facts=facts).seal()
        result = coverage(clause, [atom("t", c) for c in consts], kb)
        for ex, theta in result.witnesses.items():
            assert clause.head.args[0] in theta and theta[clause.head.args[0]] == ex.args[0]
            for b in clause.body:
                grounded = Atom(b.name, tuple(theta.get(a, a) if isinstance(a, Var) else a for a in b.args))
                assert grounded in kb


# -- candidates and gain ----------------------------------------------------

def test_candidates_from_constants():
    kb = kb_of(atom("main_road", "e1", "i495"), atom("main_road", "e2", "i270"))
    modes = [ModeDeclaration.parse("main_road(+event, #road)")]
    assert candidate_literals(t(), modes, kb) == [atom("main_road", X, "i270"), atom("main_road", X, "i495")]
    assert candidate_literals(t(), [], kb) == []
    assert candidate_literals(t(atom("main_road", X, "i270")), modes, kb) == [atom("main_road", X, "i495")]


def test_candidates_fresh_and_existing_variables():
    kb = kb_of(atom("loc", "e1", "l1"), atom("ctx", "l1", "shop"))
    modes = [ModeDeclaration.parse("loc(+event, -place)"), ModeDeclaration.parse("ctx(+place, #context)")]
    first = candidate_literals(t(), modes, kb, head_type="event")
    assert first == [atom("loc", X, Var("V0"))]
    second = candidate_literals(t(first[0]), modes, kb, head_type="event")
    assert atom("ctx", Var("V0"), "shop") in second


def test_candidates_pool_limit():
    kb = kb_of(atom("p", "e1", "a"), atom("p", "e2", "b"), atom("p", "e3", "b"))
    modes = [ModeDeclaration.parse("p(+event, #band)")]
    assert candidate_literals(t(), modes, kb, constant_pool_limit=1) == [atom("p", X, "b")]


def test_mode_parse_errors():
    with pytest.raises(Exception):
        ModeDeclaration.parse("p(event)")
    assert str(ModeDeclaration.parse("p(+event, #band)")) == "p(+event, #band)"


def test_foil_gain_examples():
    assert foil_gain_counts(5, 5, 4, 0) == pytest.approx(4.0)
    assert foil_gain_counts(5, 5, 5, 5) == 0.0
    assert foil_gain_counts(5, 5, 0, 3) == 0.0


def test_foil_gain_on_kb():
    facts = [atom("p", f"e{i}", "yes" if i < 4 else "no") for i in range(10)]
    kb = kb_of(*facts)
    pos = [atom("t", f"e{i}") for i in range(5)]
    neg = [atom("t", f"e{i}") for i in range(5, 10)]
    assert foil_gain(t(), atom("p", X, "yes"), pos, neg, kb) == pytest.approx(4.0)
    assert foil_gain(t(), atom("q", X, "yes"), pos, neg, kb) == 0.0


# -- learning ---------------------------------------------------------------

def road_kb(n=4):
    facts = []
    for i in range(2 * n):
        facts.append(atom("main_road", f"e{i}", "i270" if i < n else "i495"))
        facts.append(atom("driver_characteristics", f"e{i}", "belt_no" if i % 2 else "belt_yes"))
    pos = [atom("t", f"e{i}") for i in range(n)]
    neg = [atom("t", f"e{i}") for i in range(n, 2 * n)]
    return kb_of(*facts), pos, neg


def test_learn_single_literal():
    kb, pos, neg = road_kb()
    learned = learn_clause(pos, neg, kb, DEFAULT_MODES, LearnConfig())
    assert learned.clause == t(atom("main_road", X, "i270"))
    assert (learned.pos_covered, learned.neg_covered) == (4, 0)
    assert oracles.perfect_clauses(kb.facts, [p.args[0] for p in pos], [n.args[0] for n in neg], 1) == \
        [frozenset({("main_road", "i270")})]


def test_learn_two_literals():
    facts, pos, neg, planted = oracles.planted_kb(11, 2, target="t", n_pos=10, n_neg=10, neg_split=[6, 4])
    kb = KnowledgeBase(facts=facts).seal()
    minimal = oracles.perfect_clauses(facts, [p.args[0] for p in pos], [n.args[0] for n in neg], 2)
    assert minimal == [planted]
    learned = learn_clause(pos, neg, kb, DEFAULT_MODES, LearnConfig())
    assert oracles.clause_literal_set(learned.clause) == planted
    assert learned.neg_covered == 0


def test_learn_indistinguishable():
    facts = [atom("main_road", f"e{i}", "i270") for i in range(6)]
    kb = kb_of(*facts)
    pos = [atom("t", f"e{i}") for i in range(3)]
    neg = [atom("t", f"e{i}") for i in range(3, 6)]
    assert learn_clause(pos, neg, kb, DEFAULT_MODES, LearnConfig()) is None
    with pytest.warns(NoRulesLearned):
        rules = learn_ruleset(pos, neg, kb)
    assert rules.clauses == [] and rules.stats == []


def test_ruleset_two_subpopulations():
    facts = []
    for i in range(12):
        facts.append(atom("main_road", f"e{i}", "i270" if i < 4 else "i495"))
        facts.append(atom("location_context", f"e{i}", "athletic_center" if 4 <= i < 8 else "shopping_area"))
    kb = kb_of(*facts)
    pos = [atom("t", f"e{i}") for i in range(8)]
    neg = [atom("t", f"e{i}") for i in range(8, 12)]
    rules = learn_ruleset(pos, neg, kb)
    assert len(rules.clauses) == 2
    covered = set()
    for c in rules.clauses:
        assert len(c.body) == 1
        covered |= {p for p in pos if oracles.brute_covers(c, p, kb.facts)}
    assert covered == set(pos)
    assert {s.pos_covered for s in rules.stats} == {4}


def test_ruleset_planted_single_clause():
    kb, pos, neg = road_kb(6)
    rules = learn_ruleset(pos, neg, kb)
    assert [c.render() for c in rules.clauses] == ["t(X) :- main_road(X, i270)."]
    assert rules.target == "t"
    assert rules.kb_digest == kb.digest()


def test_learned_stats_consistent_and_deterministic():
    facts, pos, neg, _ = oracles.planted_kb(3, 3, target="t")
    kb = KnowledgeBase(facts=facts).seal()
    cfg = LearnConfig(min_precision=0.8)
    first = learn_ruleset(pos, neg, kb, DEFAULT_MODES, cfg)
    second = learn_ruleset(pos, neg, KnowledgeBase(facts=sorted(facts, key=Atom.sort_key, reverse=True)).seal(),
                           DEFAULT_MODES, cfg)
    assert first.clauses == second.clauses and first.stats == second.stats
    for c, s in zip(first.clauses, first.stats):
        p = sum(covers(c, e, kb)[0] for e in pos)
        n = sum(covers(c, e, kb)[0] for e in neg)
        assert (s.pos_covered, s.neg_covered) == (p, n)
        assert p >= cfg.min_coverage and s.precision >= cfg.min_precision


def test_beam_search_finds_perfect_clause():
    facts, pos, neg, planted = oracles.planted_kb(21, 2, target="t")
    kb = KnowledgeBase(facts=facts).seal()
    learned = learn_clause(pos, neg, kb, DEFAULT_MODES, LearnConfig(beam_width=3))
    assert learned.neg_covered == 0 and learned.pos_covered == len(pos)


# -- evaluation -------------------------------------------------------------

def test_evaluate_perfect_and_empty():
    kb, pos, neg = road_kb()
    perfect = [t(atom("main_road", X, "i270"))]
    m = evaluate_ruleset(perfect, pos, neg, kb)
    assert (m.precision, m.recall, m.tp, m.fp) == (1.0, 1.0, 4, 0)
    empty = evaluate_ruleset([], pos, neg, kb)
    assert empty.recall == 0.0 and empty.precision is None and empty.coverage == 0


def test_evaluate_schema_mismatch():
    kb = KnowledgeBase(default_schema(), [atom("main_road", "e1", "i270")]).seal()
    with pytest.raises(SchemaMismatch):
        evaluate_ruleset([t(atom("moon_phase", X, "full"))], [atom("t", "e1")], [], kb)


def test_rule2_fixture_metrics():
    kb = parse_facts(RULE_FIXTURES / "rule2_facts.pl").seal()
    pos, neg = contrast_examples(kb, "is_event_ingaithersburg")
    assert len(pos) == 3 and len(neg) == 3
    m = evaluate_ruleset([builtin_paper_rules()[1]], pos, neg, kb)
    assert (m.tp, m.fn, m.fp) == (2, 1, 0)
    assert m.precision == 1.0 and m.recall == pytest.approx(2 / 3)


def test_rule1_covers_exactly_matching_events():
    kb = parse_facts(RULE_FIXTURES / "rule1_facts.pl").seal()
    rule1 = builtin_paper_rules()[0]
    events = sorted({f.args[0] for f in kb.facts}, key=lambda e: int(e[1:]))
    expected = {e for e in events
                if all(atom(b.name, e, b.args[1]) in kb for b in rule1.body)}
    got = {e for e in events if covers(rule1, atom("is_event_inbethesda", e), kb)[0]}
    assert got == expected == {"e1", "e2", "e9"}


def test_explicit_negatives():
    kb = parse_facts(RULE_FIXTURES / "rule2_facts.pl").seal()
    negatives = parse_facts("is_event_ingaithersburg(e4).\nis_event_ingaithersburg(e5).\n")
    pos, neg = explicit_examples(kb, "is_event_ingaithersburg", negatives)
    assert [n.args[0] for n in neg] == ["e4", "e5"]


# -- builtin rules and rule files -------------------------------------------

def test_builtin_rules_shape():
    rules = builtin_paper_rules()
    assert rules[0].head == atom("is_event_inbethesda", X) and len(rules[0].body) == 6
    assert atom("main_road", X, "i270") in rules[1].body
    assert rules[2].head == atom("safe_location", Y, "bethesda")
    assert rules[3].head == atom("event_happen", X, Y)


def test_builtin_rules_over_default_schema():
    schema = default_schema()
    for rule in builtin_paper_rules():
        for lit in (rule.head, *rule.body):
            assert lit.key in schema


def test_rule_file_round_trip():
    buf = io.BytesIO()
    emit_rules(builtin_paper_rules(), buf)
    text = buf.getvalue()
    assert parse_rules(text) == builtin_paper_rules()
    again = io.BytesIO()
    emit_rules(parse_rules(text.decode()), again)
    assert again.getvalue() == text


def test_rule_stats_json():
    kb, pos, neg = road_kb()
    rules = learn_ruleset(pos, neg, kb)
    assert '"clause_index": 0' in rules.stats_json()
    assert rules.metadata()["config"]["beam_width"] == 1


def test_anti_monotone_chains():
    rng = random.Random(17)
    for _ in range(100):
        consts, facts, clause = oracles.random_clause_kb(rng)
        kb = KnowledgeBase(facts=facts).seal()
        examples = [atom("t", c) for c in consts]
        previous = set(examples)
        for k in range(len(clause.body) + 1):
            prefix = Clause(clause.head, clause.body[:k])
            now = {e for e in examples if covers(prefix, e, kb)[0]}
            assert now <= previous
            previous = now


def test_learning_runtime_small():
    facts, pos, neg, _ = oracles.planted_kb(2, 3, target="t")
    kb = KnowledgeBase(facts=facts).seal()
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("error", NoRulesLearned)
        learn_ruleset(pos, neg, kb)
    assert time.perf_counter() - start < 1.0
