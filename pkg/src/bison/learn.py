"""Learning HL policies from demonstrations by goal regression.

Pipeline: abstract each LL demo into an HL trace (collapsing steps that leave
the abstraction unchanged and explaining each change by a ground action), walk
the trace backwards regressing the achieved goal through each action, and lift
the resulting ground condition-action pairs into first-order rules.  Also
houses the finite-cover bound on the number of inequivalent extractable rules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, List

from .core import (BisonError, Domain, GroundAction, HLState, ObjectTable,
                   ground_outcomes, instantiate)
from .formats import Demo
from .rules import HLPolicy, Rule


class AbstractionGapError(BisonError):
    """No modelled action explains an observed abstraction change."""

    def __init__(self, message: str, step: int):
        super().__init__("%s (LL step %d)" % (message, step))
        self.step = step


@dataclass
class HLTrace:
    goal: frozenset
    actions: list  # list[GroundAction]
    states: list   # list[HLState], len = len(actions) + 1
    table: ObjectTable = None
    goal_reached: bool = True

    @property
    def achieved(self) -> frozenset:
        return self.goal & self.states[-1]


def _explain_change(domain: Domain, prev: HLState, nxt: HLState, table: ObjectTable):
    """First (schema, binding, outcome) in canonical order with pre ⊆ prev and
    nxt = (prev \\ del) ∪ add, or None."""
    n_obj = len(table)
    for sid, sch in enumerate(domain.schemata):
        for binding in itertools.product(range(n_obj), repeat=sch.arity):
            if not all(instantiate(a, binding) in prev for a in sch.pre):
                continue
            action = GroundAction(sid, binding)
            for add, dele in ground_outcomes(domain, action):
                if (prev - dele) | add == nxt:
                    return action
    return None


def extract_hl_trace(demo: Demo, domain: Domain, labeller: Callable) -> HLTrace:
    """Collapse an LL demo to its HL abstraction changes.

    ``labeller(step, table)`` must return the HL state of one demo step,
    interning object names into ``table``.
    """
    if not demo.steps:
        raise BisonError("cannot abstract an empty demo")
    table = ObjectTable()
    for name in demo.steps[0].objects:
        table.intern(name)
    states = [labeller(s, table) for s in demo.steps]
    goal = frozenset(domain.ground_fact(g[0], g[1:], table) for g in demo.goal)
    hl_states = [states[0]]
    changes = []
    for i, s in enumerate(states[1:], start=1):
        if s != hl_states[-1]:
            changes.append(i)
            hl_states.append(s)
    actions = []
    for k, i in enumerate(changes):
        act = _explain_change(domain, hl_states[k], hl_states[k + 1], table)
        if act is None:
            raise AbstractionGapError("unexplained abstraction change", i)
        actions.append(act)
    return HLTrace(goal, actions, hl_states, table,
                   goal_reached=goal <= hl_states[-1])


def regress(domain: Domain, goal: frozenset, action: GroundAction) -> List[frozenset]:
    """Pre-images of a goal set through an action, one per outcome.

    Regressable iff no outcome deletes a goal fact; an empty list encodes
    non-regressable.
    """
    pre = None
    results = []
    for add, dele in ground_outcomes(domain, action):
        if dele & goal:
            return []
        if pre is None:
            sch = domain.schemata[action.schema_id]
            pre = frozenset(instantiate(a, action.args) for a in sch.pre)
        results.append((goal - add) | pre)
    return results


def lift(domain: Domain, action: GroundAction, state_cond: frozenset,
         goal_cond: frozenset, val: int = 0) -> Rule:
    """Replace objects by fresh variables in first-occurrence order.

    Occurrence order: action arguments, then state condition facts in
    canonical fact order, then goal condition facts.
    """
    var_of = {}

    def v(obj):
        if obj not in var_of:
            var_of[obj] = len(var_of)
        return var_of[obj]

    head_args = tuple(v(o) for o in action.args)
    s_atoms = []
    for f in sorted(state_cond):
        s_atoms.append((f[0],) + tuple(v(o) for o in f[1:]))
    g_atoms = []
    for f in sorted(goal_cond):
        g_atoms.append((f[0],) + tuple(v(o) for o in f[1:]))
    return Rule(val, len(var_of), frozenset(s_atoms), frozenset(g_atoms),
                action.schema_id, head_args)


@dataclass
class LearnReport:
    policy: HLPolicy = None
    demos_used: int = 0
    demos_skipped: int = 0
    unreached_goals: int = 0
    subgoals_dropped: int = 0


def learn_hl_policy(demos: Iterable[Demo], domain: Domain, labeller: Callable,
                    subgoal_cap: int = 256, report: LearnReport = None) -> HLPolicy:
    """Algorithmic core: per-trace backward goal regression with lifting.

    The subgoal set starts from the goal atoms the trace actually achieved and
    is regressed through the actions in reverse; each regressed condition is
    lifted together with the achieved goal subset into a rule with priority
    m - j.  Non-regressable subgoals carry over unchanged.  Rules from all
    demos are unioned, duplicates merged keeping the minimum priority.
    """
    rep = report if report is not None else LearnReport()
    rules = []
    for demo in demos:
        try:
            trace = extract_hl_trace(demo, domain, labeller)
        except AbstractionGapError:
            rep.demos_skipped += 1
            continue
        if not trace.goal_reached:
            rep.unreached_goals += 1
        achieved = trace.achieved
        if not achieved or not trace.actions:
            rep.demos_used += 1
            continue
        m = len(trace.actions) - 1
        subgoals = [achieved]
        for j in range(m, -1, -1):
            action = trace.actions[j]
            nxt = []
            seen = set()
            for goal_set in subgoals:
                regressed = regress(domain, goal_set, action)
                if not regressed:
                    if goal_set not in seen:  # irrelevant action: carry over
                        seen.add(goal_set)
                        nxt.append(goal_set)
                    continue
                for cond in regressed:
                    rules.append(lift(domain, action, cond, achieved, val=m - j))
                    if cond not in seen:
                        seen.add(cond)
                        nxt.append(cond)
            if len(nxt) > subgoal_cap:
                rep.subgoals_dropped += len(nxt) - subgoal_cap
                nxt = nxt[:subgoal_cap]
            subgoals = nxt
        rep.demos_used += 1
    policy = HLPolicy(rules, domain)
    rep.policy = policy
    return policy


def coverage_bound(domain: Domain, c: int) -> int:
    """Upper bound on inequivalent rules extractable from length-≤-c suffixes."""
    if c < 0:
        raise BisonError("coverage bound needs C >= 0")
    n_arity = max((s.arity for s in domain.schemata), default=0)
    m_arity = max((p.arity for p in domain.predicates), default=0)
    m_pow = m_arity ** m_arity if m_arity > 0 else 1
    total = 0
    for k in range(c + 1):
        total += (len(domain.schemata) * (k * n_arity + m_arity) ** n_arity) ** k
    return len(domain.predicates) * m_pow * total
