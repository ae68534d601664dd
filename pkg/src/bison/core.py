"""Ground and lifted relational semantics.

Facts, states, action schemata, applicability, nondeterministic successors,
object renaming, instance equivalence and the downward-refinement check.

Representation: predicates and objects are interned to integer ids; a ground
fact is the tuple ``(pred_id, obj_id, ...)`` and an HL state is a frozenset of
such tuples.  Lifted atoms use variable indices in place of object ids.  All
values are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence


class BisonError(Exception):
    """Base class for errors raised by this package."""


class StructuralError(BisonError):
    """Arity mismatch, undeclared symbol, or ill-formed structure."""


class PreconditionError(BisonError):
    """Action applied in a state that does not satisfy its precondition."""


Fact = tuple  # (pred_id, *object_ids)
Atom = tuple  # (pred_id, *var_indices)
HLState = frozenset  # frozenset[Fact]


@dataclass(frozen=True)
class Predicate:
    name: str
    arity: int


@dataclass(frozen=True)
class ActionSchema:
    """Lifted nondeterministic operator.

    ``outcomes`` is a non-empty tuple of (add, delete) pairs of lifted atoms;
    a schema is deterministic iff it has exactly one outcome.
    """

    name: str
    var_names: tuple
    pre: frozenset
    outcomes: tuple  # tuple[(frozenset[Atom], frozenset[Atom]), ...]

    @property
    def arity(self) -> int:
        return len(self.var_names)

    @property
    def deterministic(self) -> bool:
        return len(self.outcomes) == 1


@dataclass(frozen=True)
class GroundAction:
    schema_id: int
    args: tuple  # tuple[int, ...] object ids, total binding

    def __str__(self):  # ids only; use Domain.action_str for names
        return "a%d(%s)" % (self.schema_id, ",".join(map(str, self.args)))


class ObjectTable:
    """Append-only interner mapping object names to dense ids."""

    def __init__(self, names: Iterable[str] = ()):
        self.names: list = []
        self.ids: dict = {}
        for n in names:
            self.intern(n)

    def intern(self, name: str) -> int:
        oid = self.ids.get(name)
        if oid is None:
            oid = len(self.names)
            self.ids[name] = oid
            self.names.append(name)
        return oid

    def id(self, name: str) -> int:
        try:
            return self.ids[name]
        except KeyError:
            raise StructuralError("undeclared object %r" % name) from None

    def __len__(self):
        return len(self.names)

    def __contains__(self, name):
        return name in self.ids


class Domain:
    """A set of predicates and action schemata with interned symbol ids."""

    def __init__(self, predicates: Sequence[Predicate], schemata: Sequence[ActionSchema],
                 name: str = "domain"):
        self.name = name
        self.predicates = tuple(predicates)
        self.pred_ids = {}
        for i, p in enumerate(self.predicates):
            if p.name in self.pred_ids:
                raise StructuralError("duplicate predicate %r" % p.name)
            if p.arity < 0:
                raise StructuralError("negative arity for %r" % p.name)
            self.pred_ids[p.name] = i
        self.schemata = tuple(schemata)
        self.schema_ids = {}
        for i, a in enumerate(self.schemata):
            if a.name in self.schema_ids:
                raise StructuralError("duplicate action schema %r" % a.name)
            self.schema_ids[a.name] = i
            self._check_schema(a)

    def _check_schema(self, a: ActionSchema):
        if not a.outcomes:
            raise StructuralError("schema %r has no outcomes" % a.name)
        nv = len(a.var_names)
        for atom in itertools.chain(a.pre, *[add | dele for add, dele in a.outcomes]):
            pid = atom[0]
            if not (0 <= pid < len(self.predicates)):
                raise StructuralError("schema %r uses undeclared predicate id %d" % (a.name, pid))
            if len(atom) - 1 != self.predicates[pid].arity:
                raise StructuralError("schema %r: arity mismatch for %s"
                                      % (a.name, self.predicates[pid].name))
            for v in atom[1:]:
                if not (0 <= v < nv):
                    raise StructuralError("schema %r: variable out of range" % a.name)
        for add, dele in a.outcomes:
            if add & dele:
                raise StructuralError("schema %r has an outcome with add ∩ del ≠ ∅" % a.name)

    # -- display helpers -------------------------------------------------
    def fact_str(self, fact: Fact, objects: ObjectTable) -> str:
        p = self.predicates[fact[0]]
        if p.arity == 0:
            return "(%s)" % p.name
        return "(%s %s)" % (p.name, " ".join(objects.names[o] for o in fact[1:]))

    def action_str(self, action: GroundAction, objects: ObjectTable) -> str:
        sch = self.schemata[action.schema_id]
        if not action.args:
            return "(%s)" % sch.name
        return "(%s %s)" % (sch.name, " ".join(objects.names[o] for o in action.args))

    def ground_fact(self, name: str, arg_names: Sequence[str], objects: ObjectTable) -> Fact:
        pid = self.pred_ids.get(name)
        if pid is None:
            raise StructuralError("undeclared predicate %r" % name)
        if len(arg_names) != self.predicates[pid].arity:
            raise StructuralError("arity mismatch for %r: got %d args, declared %d"
                                  % (name, len(arg_names), self.predicates[pid].arity))
        return (pid,) + tuple(objects.intern(a) for a in arg_names)

    def ground_action(self, name: str, arg_names: Sequence[str], objects: ObjectTable) -> GroundAction:
        sid = self.schema_ids.get(name)
        if sid is None:
            raise StructuralError("undeclared action schema %r" % name)
        sch = self.schemata[sid]
        if len(arg_names) != sch.arity:
            raise StructuralError("arity mismatch grounding %r" % name)
        return GroundAction(sid, tuple(objects.id(a) for a in arg_names))


@dataclass
class HLProblem:
    domain: Domain
    objects: ObjectTable
    init: HLState
    goal: frozenset
    name: str = "problem"


# ---------------------------------------------------------------------------
# Ground operations
# ---------------------------------------------------------------------------

def instantiate(atom: Atom, binding: Sequence[int]) -> Fact:
    return (atom[0],) + tuple(binding[v] for v in atom[1:])


def ground_pre(domain: Domain, action: GroundAction) -> frozenset:
    sch = domain.schemata[action.schema_id]
    return frozenset(instantiate(a, action.args) for a in sch.pre)


def ground_outcomes(domain: Domain, action: GroundAction):
    """Yield (add, delete) fact-set pairs in declared outcome order."""
    sch = domain.schemata[action.schema_id]
    for add, dele in sch.outcomes:
        yield (frozenset(instantiate(a, action.args) for a in add),
               frozenset(instantiate(a, action.args) for a in dele))


def applicable(domain: Domain, state: HLState, action: GroundAction) -> bool:
    """True iff every ground precondition fact is in the state."""
    sch = domain.schemata[action.schema_id]
    if len(action.args) != sch.arity:
        raise StructuralError("binding length %d does not match arity of %r"
                              % (len(action.args), sch.name))
    return all(instantiate(a, action.args) in state for a in sch.pre)


def successors(domain: Domain, state: HLState, action: GroundAction) -> list:
    """All successor states, one per outcome: (state \\ del_i) ∪ add_i."""
    if not applicable(domain, state, action):
        raise PreconditionError("action %s not applicable" % (action,))
    out = []
    for add, dele in ground_outcomes(domain, action):
        out.append((state - dele) | add)
    return out


def is_goal(state: HLState, goal: frozenset) -> bool:
    return goal <= state


# ---------------------------------------------------------------------------
# Renaming and equivalence
# ---------------------------------------------------------------------------

def _check_bijection(mapping: dict, mentioned: set):
    missing = mentioned - set(mapping)
    if missing:
        raise StructuralError("renaming not total on %d mentioned objects" % len(missing))
    values = list(mapping.values())
    if len(set(values)) != len(values):
        raise StructuralError("renaming is not injective")


def rename_fact(fact: Fact, mapping: dict) -> Fact:
    return (fact[0],) + tuple(mapping[o] for o in fact[1:])


def rename_state(state: HLState, mapping: dict) -> HLState:
    mentioned = {o for f in state for o in f[1:]}
    _check_bijection(mapping, mentioned)
    return frozenset(rename_fact(f, mapping) for f in state)


def rename_action(action: GroundAction, mapping: dict) -> GroundAction:
    _check_bijection(mapping, set(action.args))
    return GroundAction(action.schema_id, tuple(mapping[o] for o in action.args))


def rename_problem(problem: HLProblem, mapping: dict) -> HLProblem:
    mentioned = {o for f in problem.init | problem.goal for o in f[1:]}
    mentioned |= set(range(len(problem.objects)))
    _check_bijection(mapping, mentioned)
    return HLProblem(problem.domain, problem.objects,
                     frozenset(rename_fact(f, mapping) for f in problem.init),
                     frozenset(rename_fact(f, mapping) for f in problem.goal),
                     problem.name)


def _signature(problem: HLProblem, oid: int):
    """Multiset of (fact-set tag, predicate, position) occurrences of an object."""
    sig = []
    for tag, facts in (("i", problem.init), ("g", problem.goal)):
        for f in facts:
            for pos, o in enumerate(f[1:]):
                if o == oid:
                    sig.append((tag, f[0], pos))
    sig.sort()
    return tuple(sig)


def equivalent(p1: HLProblem, p2: HLProblem) -> Optional[dict]:
    """Witness bijection f with F(init1) = init2 and F(goal1) = goal2, or None.

    Candidate pairings are pruned by per-object signatures before backtracking;
    worst case is exponential, acceptable for the small instances this is used
    on.  Requires both problems to share a domain.
    """
    if p1.domain is not p2.domain and p1.domain.pred_ids != p2.domain.pred_ids:
        raise StructuralError("equivalence requires a common domain")
    n1, n2 = len(p1.objects), len(p2.objects)
    if n1 != n2 or len(p1.init) != len(p2.init) or len(p1.goal) != len(p2.goal):
        return None
    sig2 = {}
    for o in range(n2):
        sig2.setdefault(_signature(p2, o), []).append(o)
    cands = []
    for o in range(n1):
        c = sig2.get(_signature(p1, o))
        if not c:
            return None
        cands.append(c)
    order = sorted(range(n1), key=lambda o: len(cands[o]))
    mapping = {}
    used = set()

    def consistent(partial):
        # quick check only on fully-mapped facts
        for src, dst in ((p1.init, p2.init), (p1.goal, p2.goal)):
            for f in src:
                if all(o in partial for o in f[1:]):
                    if rename_fact(f, partial) not in dst:
                        return False
        return True

    def backtrack(k):
        if k == n1:
            return consistent(mapping)
        o = order[k]
        for c in cands[o]:
            if c in used:
                continue
            mapping[o] = c
            used.add(c)
            if consistent(mapping) and backtrack(k + 1):
                return True
            del mapping[o]
            used.discard(c)
        return False

    if backtrack(0):
        return dict(mapping)
    return None


# ---------------------------------------------------------------------------
# Nondeterministic downward refinement check
# ---------------------------------------------------------------------------

@dataclass
class NdrpReport:
    ok: bool
    step: int = -1
    reason: str = ""


def check_ndrp(transitions, labeller, table: ObjectTable, hl_policy, domain: Domain,
               goal: frozenset) -> NdrpReport:
    """Check Def.-1 downward refinement over LL transitions.

    For every LL transition s → s', either the abstraction is preserved or
    λ(s') is a successor of the policy-selected action at λ(s).  A policy that
    returns no action at a changing abstract state is reported as a violation
    with the offending step index.
    """
    from .rules import select_action  # local import to avoid a cycle

    for i, (s, s2) in enumerate(transitions):
        a1 = labeller(s, table)
        a2 = labeller(s2, table)
        if a1 == a2:
            continue
        act = select_action(hl_policy, a1, goal, range(len(table)), domain)
        if act is None:
            return NdrpReport(False, i, "policy returned no action at a changing state")
        if not applicable(domain, a1, act):
            return NdrpReport(False, i, "selected action inapplicable")
        if a2 not in successors(domain, a1, act):
            return NdrpReport(False, i, "abstract jump not among successors of selected action")
    return NdrpReport(True)
