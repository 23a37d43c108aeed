"""Parser diagnostics, grounding enumeration oracle, search optimality."""

import heapq
import itertools
import math
from pathlib import Path

import pytest

from workbot.pddl import (ArityMismatch, NegativeCost, PddlSyntaxError, Plan,
                          UndeclaredObject, UndefinedFunctionValue,
                          UnknownPredicate, UnknownType, Unsolvable,
                          UnsupportedRequirement, format_plan, ground,
                          parse_domain, parse_plan_text, parse_problem, plan,
                          print_domain, print_problem, validate)

DATA = Path("src/workbot/data")


def transport():
    return parse_domain(DATA.joinpath("transport.pddl").read_text(),
                        path="transport.pddl")


def problem_file(name):
    domain = transport()
    text = DATA.joinpath(name).read_text()
    return domain, parse_problem(text, domain, path=name)


TOY_DOMAIN = """
(define (domain toy)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (clear ?b - block) (stacked ?a - block ?b - block))
  (:action stack
    :parameters (?a - block ?b - block)
    :precondition (and (clear ?a) (clear ?b))
    :effect (and (stacked ?a ?b) (not (clear ?b)))))
"""

TOY_PROBLEM = """
(define (problem toy-1)
  (:domain toy)
  (:objects a b - block)
  (:init (clear a) (clear b))
  (:goal (and (stacked a b))))
"""


# ---------------------------------------------------------------------------
# parsing and diagnostics


def test_parse_bundled_domain():
    domain = transport()
    assert domain.name == "transport"
    assert {a.name for a in domain.actions} == {"move", "perceive", "grasp",
                                                "place"}
    assert domain.predicate_arity()["holding"] == ("robot", "item")


def test_syntax_error_carries_location():
    with pytest.raises(PddlSyntaxError) as exc:
        parse_domain("(define (domain d)\n  (:predicates (p ?x)",
                     path="broken.pddl")
    assert "broken.pddl" in str(exc.value)


def test_unbalanced_close_rejected():
    with pytest.raises(PddlSyntaxError):
        parse_domain("(define (domain d)))", path="extra.pddl")


def test_unsupported_requirement():
    text = "(define (domain d) (:requirements :adl))"
    with pytest.raises(UnsupportedRequirement, match="adl"):
        parse_domain(text)


def test_arity_mismatch():
    text = """
    (define (domain d)
      (:requirements :strips :typing)
      (:types t)
      (:predicates (p ?x - t))
      (:action a
        :parameters (?x - t ?y - t)
        :precondition (and (p ?x ?y))
        :effect (and (p ?x))))
    """
    with pytest.raises(ArityMismatch):
        parse_domain(text)


def test_unknown_type():
    text = """
    (define (domain d)
      (:requirements :strips :typing)
      (:types t)
      (:predicates (p ?x - t))
      (:action a
        :parameters (?x - vehicle)
        :precondition (and (p ?x))
        :effect (and (p ?x))))
    """
    with pytest.raises(UnknownType, match="vehicle"):
        parse_domain(text)


def test_unknown_predicate():
    text = """
    (define (domain d)
      (:requirements :strips :typing)
      (:types t)
      (:predicates (p ?x - t))
      (:action a
        :parameters (?x - t)
        :precondition (and (q ?x))
        :effect (and (p ?x))))
    """
    with pytest.raises(UnknownPredicate, match="q"):
        parse_domain(text)


def test_undeclared_object_in_problem():
    domain = parse_domain(TOY_DOMAIN)
    bad = TOY_PROBLEM.replace("(clear a)", "(clear ghost)")
    with pytest.raises(UndeclaredObject, match="ghost"):
        parse_problem(bad, domain)


def test_undefined_function_value():
    domain = transport()
    text = DATA.joinpath("transport_1.pddl").read_text()
    text = text.replace("(= (distance shelf ws) 1)", "")
    problem = parse_problem(text, domain)
    with pytest.raises(UndefinedFunctionValue, match="distance"):
        ground(domain, problem)


def test_negative_cost_rejected():
    domain = transport()
    text = DATA.joinpath("transport_1.pddl").read_text()
    text = text.replace("(= (distance shelf ws) 1)",
                        "(= (distance shelf ws) -2)")
    problem = parse_problem(text, domain)
    with pytest.raises(NegativeCost):
        ground(domain, problem)


# ---------------------------------------------------------------------------
# grounding


def naive_ground_names(domain, problem):
    """Independent enumeration: every type-consistent binding, minus the two
    documented prunes (contradictory preconditions, statically false atoms)."""
    parents = domain.type_parents()

    def is_a(ty, wanted):
        while True:
            if ty == wanted:
                return True
            if ty == "object":
                return False
            ty = parents.get(ty, "object")

    objects = list(domain.constants) + list(problem.objects)
    added = {lit.name for schema in domain.actions for lit in schema.add}
    names = set()
    for schema in domain.actions:
        pools = [[o for o, ty in objects if is_a(ty, want)]
                 for _, want in schema.params]
        for combo in itertools.product(*pools):
            bind = dict(zip((v for v, _ in schema.params), combo))
            pos = {(l.name,) + tuple(bind.get(a, a) for a in l.args)
                   for l in schema.precondition if l.positive}
            neg = {(l.name,) + tuple(bind.get(a, a) for a in l.args)
                   for l in schema.precondition if not l.positive}
            if pos & neg:
                continue
            if any(atom not in problem.init and atom[0] not in added
                   for atom in pos):
                continue
            names.add("(" + " ".join((schema.name,) + combo) + ")")
    return names


def test_ground_matches_naive_enumeration():
    for fname in ("transport_1.pddl", "transport_3.pddl"):
        domain, problem = problem_file(fname)
        actions = ground(domain, problem)
        assert {a.name for a in actions} == naive_ground_names(domain, problem)
        assert [a.name for a in actions] == sorted(a.name for a in actions)


def test_ground_prunes_self_moves():
    domain, problem = problem_file("transport_1.pddl")
    for act in ground(domain, problem):
        parts = act.name.strip("()").split()
        if parts[0] == "move":
            assert parts[2] != parts[3]


def test_unit_cost_without_action_costs_requirement():
    domain = parse_domain(TOY_DOMAIN)
    problem = parse_problem(TOY_PROBLEM, domain)
    assert all(a.cost == 1.0 for a in ground(domain, problem))


# ---------------------------------------------------------------------------
# search


def dijkstra_cost(domain, problem):
    """Minimal goal cost by plain Dijkstra over the state graph."""
    actions = ground(domain, problem)
    goal = problem.goal
    dist = {problem.init: 0.0}
    heap = [(0.0, 0, problem.init)]
    tick = itertools.count(1)
    while heap:
        d, _, state = heapq.heappop(heap)
        if d > dist.get(state, math.inf):
            continue
        if all(atom in state for atom in goal):
            return d
        for act in actions:
            if not act.applicable(state):
                continue
            nxt = act.apply(state)
            nd = d + act.cost
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, next(tick), nxt))
    return math.inf


def test_optimal_plan_on_small_problem():
    domain, problem = problem_file("transport_1.pddl")
    result = plan(domain, problem, mode="optimal")
    # drive to the shelf, perceive, grasp, drive back, place
    assert result.cost == 5.0
    assert len(result.actions) == 5
    assert result.names()[0] == "(move youbot ws shelf)"
    assert validate(domain, problem, result).ok


def test_optimal_cost_equals_dijkstra_oracle():
    for fname in ("transport_1.pddl", "transport_3.pddl"):
        domain, problem = problem_file(fname)
        result = plan(domain, problem, mode="optimal")
        assert result.cost == dijkstra_cost(domain, problem)
        assert validate(domain, problem, result).ok


def test_greedy_solves_but_may_overpay():
    domain, problem = problem_file("transport_3.pddl")
    greedy = plan(domain, problem, mode="greedy")
    optimal = plan(domain, problem, mode="optimal")
    assert validate(domain, problem, greedy).ok
    assert greedy.cost >= optimal.cost
    assert optimal.cost == 19.0


def test_plan_is_deterministic():
    domain, problem = problem_file("transport_3.pddl")
    a = plan(domain, problem, mode="optimal")
    b = plan(domain, problem, mode="optimal")
    assert a.names() == b.names()


def test_plan_rejects_unknown_mode():
    domain, problem = problem_file("transport_1.pddl")
    with pytest.raises(ValueError, match="mode"):
        plan(domain, problem, mode="astar")


def test_unsolvable_goal():
    domain = parse_domain(TOY_DOMAIN)
    text = TOY_PROBLEM.replace("(:init (clear a) (clear b))",
                               "(:init (clear a))")
    problem = parse_problem(text, domain)
    with pytest.raises(Unsolvable):
        plan(domain, problem)


# ---------------------------------------------------------------------------
# validation


def test_validate_reports_first_bad_step():
    domain, problem = problem_file("transport_1.pddl")
    names = ["(move youbot ws shelf)", "(grasp youbot bolt shelf)"]
    result = validate(domain, problem, names)
    assert not result.ok
    assert result.failed_at == 1          # grasp before perceive


def test_validate_reports_missed_goal():
    domain, problem = problem_file("transport_1.pddl")
    result = validate(domain, problem, ["(move youbot ws shelf)"])
    assert not result.ok
    assert result.failed_at == "goal"


def test_validate_accepts_messy_name_spacing():
    domain, problem = problem_file("transport_1.pddl")
    good = plan(domain, problem).names()
    messy = [n.upper().replace(" ", "  ") for n in good]
    assert validate(domain, problem, messy).ok


# ---------------------------------------------------------------------------
# printing and plan files


def test_print_parse_fixpoint():
    domain = transport()
    text1 = print_domain(domain)
    text2 = print_domain(parse_domain(text1))
    assert text1 == text2
    for fname in ("transport_1.pddl", "transport_3.pddl"):
        _, problem = problem_file(fname)
        p1 = print_problem(problem)
        p2 = print_problem(parse_problem(p1, domain))
        assert p1 == p2


def test_format_and_parse_plan_round_trip():
    domain, problem = problem_file("transport_1.pddl")
    result = plan(domain, problem)
    text = format_plan(result)
    assert text.endswith("; cost = 5\n")
    assert parse_plan_text(text) == list(result.names())


def test_parse_plan_text_skips_noise():
    text = "; a comment\n\n(MOVE  youbot ws shelf)\n"
    assert parse_plan_text(text) == ["(move youbot ws shelf)"]
