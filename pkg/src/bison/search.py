"""Internal HL planners used by the baselines.

``find_plan``: greedy best-first search with a goal-count heuristic on the
all-outcomes determinisation (every nondeterministic outcome becomes its own
deterministic action).  ``find_policy``: depth-bounded AND-OR search with
memoization producing an explicit state → action map (weak/acyclic policies;
the replanning executors compensate for uncovered states).

Successor states are materialized lazily at expansion to keep memory bounded
by the closed set.
"""

from __future__ import annotations

import heapq
import itertools
import sys
import time
from dataclasses import dataclass
from typing import Optional

from .core import (Domain, GroundAction, HLProblem, HLState, ground_outcomes,
                   instantiate)
from .rules import StateIndex, enum_matches

DEFAULT_NODE_BUDGET = 10 ** 6
DEFAULT_GENERATED_CAP = 2 * 10 ** 6


@dataclass
class Plan:
    actions: list  # list[GroundAction]
    outcomes: list  # chosen outcome index per action (determinisation witness)

    def __len__(self):
        return len(self.actions)


@dataclass
class SearchStats:
    status: str = "solved"  # solved | exhausted | budget | timeout
    expanded: int = 0
    generated: int = 0
    seconds: float = 0.0


def applicable_actions(domain: Domain, idx: StateIndex, n_objects: int):
    """All ground actions applicable in the indexed state, canonical order.

    Precondition variables are bound by an index join; parameters that the
    precondition leaves free range over all objects.
    """
    for sid, sch in enumerate(domain.schemata):
        atoms = [("s", a) for a in sch.pre]
        seen = set()
        for binding in enum_matches(idx, atoms, [None] * sch.arity):
            if binding in seen:  # joins may revisit a binding via free atoms
                continue
            seen.add(binding)
            free = [v for v in range(sch.arity) if binding[v] is None]
            if not free:
                yield GroundAction(sid, binding)
            else:
                for combo in itertools.product(range(n_objects), repeat=len(free)):
                    b = list(binding)
                    for v, o in zip(free, combo):
                        b[v] = o
                    yield GroundAction(sid, tuple(b))


def _goal_count(state: HLState, goal: frozenset) -> int:
    return sum(1 for f in goal if f not in state)


def find_plan(problem: HLProblem, node_budget: int = DEFAULT_NODE_BUDGET,
              time_budget: Optional[float] = None,
              generated_cap: int = DEFAULT_GENERATED_CAP,
              stats: SearchStats = None) -> Optional[Plan]:
    """Greedy best-first plan search; None on failure or budget exhaustion."""
    st = stats if stats is not None else SearchStats()
    t0 = time.perf_counter()
    domain, goal = problem.domain, problem.goal
    n_obj = len(problem.objects)
    init = frozenset(problem.init)
    # frontier entries: (h, seq, parent_state, action, outcome_idx); the root
    # is (h, 0, init, None, -1).  States materialize at pop time.
    frontier = [(_goal_count(init, goal), 0, init, None, -1)]
    closed = {}  # state -> (parent_state, action, outcome_idx)
    seq = 1

    def finish(status):
        st.status = status
        st.seconds = time.perf_counter() - t0
        return None

    def extract(state):
        acts, outs = [], []
        while True:
            parent, action, k = closed[state]
            if action is None:
                break
            acts.append(action)
            outs.append(k)
            state = parent
        acts.reverse()
        outs.reverse()
        st.status = "solved"
        st.seconds = time.perf_counter() - t0
        return Plan(acts, outs)

    while frontier:
        if st.expanded >= node_budget or st.generated >= generated_cap:
            return finish("budget")
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            return finish("timeout")
        h, _, parent, action, k = heapq.heappop(frontier)
        if action is None:
            state = parent
        else:
            outs = list(ground_outcomes(domain, action))
            add, dele = outs[k]
            state = (parent - dele) | add
        if state in closed:
            continue
        closed[state] = (parent, action, k)
        if goal <= state:
            return extract(state)
        st.expanded += 1
        idx = StateIndex(state, goal)
        for act in applicable_actions(domain, idx, n_obj):
            for j, (add, dele) in enumerate(ground_outcomes(domain, act)):
                h2 = h + sum(1 for f in dele if f in goal and f in state) \
                     - sum(1 for f in add if f in goal and f not in state)
                heapq.heappush(frontier, (h2, seq, state, act, j))
                seq += 1
                st.generated += 1
    return finish("exhausted")


# ---------------------------------------------------------------------------
# AND-OR policy search
# ---------------------------------------------------------------------------

class SearchPolicy:
    """Explicit finite state → action map extracted by AND-OR search."""

    def __init__(self, mapping: dict, goal: frozenset, partial: bool = False):
        self.mapping = mapping
        self.goal = goal
        self.partial = partial

    def get(self, state: HLState) -> Optional[GroundAction]:
        return self.mapping.get(frozenset(state))

    def __len__(self):
        return len(self.mapping)


def default_depth_cap(problem: HLProblem) -> int:
    return max(1, 4 * max(1, len(problem.goal)) * max(1, len(problem.objects)))


def find_policy(problem: HLProblem, depth_cap: int = None,
                node_budget: int = DEFAULT_NODE_BUDGET,
                time_budget: Optional[float] = None,
                stats: SearchStats = None) -> Optional[SearchPolicy]:
    """Depth-bounded AND-OR search with memoization.

    A state is solved if some applicable action has every outcome solved
    within the remaining depth.  OR-branches try actions ordered by the best
    outcome's goal count, so deterministic chains are found greedily.  Cycles
    are cut (states on the current path fail), yielding acyclic policies.
    """
    if depth_cap is None:
        depth_cap = default_depth_cap(problem)
    if depth_cap <= 0:
        raise ValueError("depth_cap must be positive")
    st = stats if stats is not None else SearchStats()
    t0 = time.perf_counter()
    domain, goal = problem.domain, problem.goal
    n_obj = len(problem.objects)
    solved_action = {}
    failed_at = {}  # state -> depth it failed with (retry only with more depth)
    on_path = set()
    aborted = []

    def solve(state: HLState, depth: int) -> bool:
        if goal <= state:
            return True
        if state in solved_action:
            return True
        if depth <= 0 or state in on_path:
            return False
        if failed_at.get(state, -1) >= depth:
            return False
        if st.expanded >= node_budget:
            aborted.append("budget")
            return False
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            aborted.append("timeout")
            return False
        st.expanded += 1
        on_path.add(state)
        idx = StateIndex(state, goal)
        candidates = []
        for act in applicable_actions(domain, idx, n_obj):
            succs = [(state - dele) | add for add, dele in ground_outcomes(domain, act)]
            best_h = min(_goal_count(s2, goal) for s2 in succs)
            candidates.append((best_h, len(candidates), act, succs))
            st.generated += len(succs)
        if 1 < len(candidates) <= 64:
            # one-ply lookahead tie-break keeps greedy descent off plateau
            # actions whose successors enable no improvement
            ranked = []
            for best_h, i, act, succs in candidates:
                look = best_h
                for s2 in succs:
                    idx2 = StateIndex(s2, goal)
                    for a2 in applicable_actions(domain, idx2, n_obj):
                        for add2, dele2 in ground_outcomes(domain, a2):
                            look = min(look, _goal_count((s2 - dele2) | add2, goal))
                ranked.append((best_h, look, i, act, succs))
            ranked.sort(key=lambda c: (c[0], c[1], c[2]))
            candidates = [(b, i, a, s) for b, _, i, a, s in ranked]
        else:
            candidates.sort(key=lambda c: (c[0], c[1]))
        ok = False
        for _, _, act, succs in candidates:
            if all(solve(s2, depth - 1) for s2 in succs):
                solved_action[state] = act
                ok = True
                break
            if aborted:
                break
        on_path.discard(state)
        if not ok:
            failed_at[state] = max(failed_at.get(state, -1), depth)
        return ok

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, depth_cap * 8 + 1000))
    try:
        ok = solve(frozenset(problem.init), depth_cap)
    finally:
        sys.setrecursionlimit(old_limit)
    st.seconds = time.perf_counter() - t0
    if not ok:
        st.status = aborted[0] if aborted else "exhausted"
        return None
    st.status = "solved"
    return SearchPolicy(solved_action, goal)


def validate_plan(problem: HLProblem, plan: Plan) -> bool:
    """Replaying the plan under its chosen determinisation reaches the goal."""
    state = frozenset(problem.init)
    for act, k in zip(plan.actions, plan.outcomes):
        sch = problem.domain.schemata[act.schema_id]
        if not all(instantiate(a, act.args) in state for a in sch.pre):
            return False
        outs = list(ground_outcomes(problem.domain, act))
        add, dele = outs[k]
        state = (state - dele) | add
    return problem.goal <= state


def validate_policy(problem: HLProblem, policy: SearchPolicy,
                    max_states: int = 100000) -> bool:
    """Closedness: every state reachable under the map has an entry or is a goal."""
    domain, goal = problem.domain, problem.goal
    seen = set()
    stack = [frozenset(problem.init)]
    while stack:
        state = stack.pop()
        if state in seen or goal <= state:
            continue
        seen.add(state)
        if len(seen) > max_states:
            return False
        act = policy.get(state)
        if act is None:
            return False
        for s2 in (frozenset((state - dele) | add)
                   for add, dele in ground_outcomes(domain, act)):
            stack.append(s2)
    return True
