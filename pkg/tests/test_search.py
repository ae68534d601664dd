from collections import deque

import pytest

from bison.core import HLProblem, ObjectTable, ground_outcomes, instantiate
from bison.envs import env_domain
from bison.formats import parse_domain
from bison.search import (SearchStats, default_depth_cap, find_plan,
                          find_policy, validate_plan, validate_policy)
from bison.bench import gen_blocks_hl_problem


def example1_problem():
    dom = env_domain("pickplace")
    table = ObjectTable(["obj1", "loc1", "loc2"])
    f = lambda n, *a: dom.ground_fact(n, a, table)
    init = frozenset({f("rAt", "loc1"), f("at", "obj1", "loc1"), f("free")})
    goal = frozenset({f("at", "obj1", "loc2")})
    return HLProblem(dom, table, init, goal)


def bfs_oracle(problem):
    """Independent breadth-first search over the outcome-0 determinisation."""
    from bison.rules import StateIndex
    from bison.search import applicable_actions
    start = frozenset(problem.init)
    frontier = deque([start])
    parent = {start: None}
    while frontier:
        state = frontier.popleft()
        if problem.goal <= state:
            plan = []
            while parent[state] is not None:
                state, act = parent[state]
                plan.append(act)
            return list(reversed(plan))
        idx = StateIndex(state, problem.goal)
        for act in applicable_actions(problem.domain, idx, len(problem.objects)):
            for add, dele in ground_outcomes(problem.domain, act):
                nxt = (state - dele) | add
                if nxt not in parent:
                    parent[nxt] = (state, act)
                    frontier.append(nxt)
    return None


def test_find_plan_solved_instance():
    prob = example1_problem()
    solved = HLProblem(prob.domain, prob.objects, prob.init | prob.goal, prob.goal)
    plan = find_plan(solved)
    assert plan is not None and len(plan) == 0


def test_find_plan_example1_matches_bfs_oracle():
    prob = example1_problem()
    plan = find_plan(prob)
    assert plan is not None and validate_plan(prob, plan)
    oracle = bfs_oracle(prob)
    assert len(plan.actions) == len(oracle) == 3
    names = [prob.domain.schemata[a.schema_id].name for a in plan.actions]
    assert names == ["pick", "move", "place"]
    assert plan.actions == oracle


def test_find_plan_unsolvable():
    dom = parse_domain("""
    (define (domain d) (:predicates (p ?x) (q ?x))
      (:action a :parameters (?x) :precondition (and (p ?x)) :effect (and)))""")
    table = ObjectTable(["o"])
    prob = HLProblem(dom, table, frozenset({dom.ground_fact("p", ("o",), table)}),
                     frozenset({dom.ground_fact("q", ("o",), table)}))
    stats = SearchStats()
    assert find_plan(prob, stats=stats) is None
    assert stats.status == "exhausted"


def test_find_plan_budget_exhaustion():
    prob = gen_blocks_hl_problem(12, seed=0)
    stats = SearchStats()
    plan = find_plan(prob, node_budget=3, stats=stats)
    assert plan is None and stats.status == "budget"


def test_find_policy_solved_instance():
    prob = example1_problem()
    solved = HLProblem(prob.domain, prob.objects, prob.init | prob.goal, prob.goal)
    pol = find_policy(solved)
    assert pol is not None and len(pol) == 0


def test_find_policy_deterministic_matches_plan_states():
    prob = example1_problem()
    pol = find_policy(prob)
    assert pol is not None
    assert len(pol) == 3  # one entry per non-goal state along the plan
    assert validate_policy(prob, pol)
    plan = find_plan(prob)
    state = frozenset(prob.init)
    for act in plan.actions:
        assert pol.get(state) == act
        add, dele = next(iter(ground_outcomes(prob.domain, act)))
        state = (state - dele) | add


def test_find_policy_covers_both_outcomes():
    dom = parse_domain("""
    (define (domain d) (:predicates (ready ?x) (done ?x) (retry ?x))
      (:action attempt :parameters (?x)
        :precondition (and (ready ?x))
        :effect (oneof (and (done ?x)) (and (retry ?x) (not (ready ?x)))))
      (:action reset :parameters (?x)
        :precondition (and (retry ?x))
        :effect (and (done ?x) (not (retry ?x)))))""")
    table = ObjectTable(["t"])
    f = lambda n, *a: dom.ground_fact(n, a, table)
    prob = HLProblem(dom, table, frozenset({f("ready", "t")}),
                     frozenset({f("done", "t")}))
    pol = find_policy(prob)
    assert pol is not None
    assert validate_policy(prob, pol)
    # both successor branches of the 2-outcome attempt are covered
    assert len(pol) == 2


def test_find_policy_depth_cap():
    prob = example1_problem()
    assert find_policy(prob, depth_cap=1) is None
    assert default_depth_cap(prob) >= 4


def test_deterministic_policy_iff_plan():
    # on deterministic problems find_policy succeeds exactly when find_plan does
    for n in (1, 2):
        prob = gen_blocks_hl_problem(n, seed=n)
        assert (find_plan(prob) is not None) == (find_policy(prob) is not None)
    dom = parse_domain("""
    (define (domain d) (:predicates (p ?x) (q ?x))
      (:action a :parameters (?x) :precondition (and (p ?x)) :effect (and)))""")
    table = ObjectTable(["o"])
    prob = HLProblem(dom, table, frozenset({dom.ground_fact("p", ("o",), table)}),
                     frozenset({dom.ground_fact("q", ("o",), table)}))
    assert find_plan(prob) is None and find_policy(prob) is None
