"""Textual formats: domains (.bsd), problems (.bsq), traces (.bst), policies (.bsp).

Domains and problems use a small S-expression dialect; traces are line-oriented
JSON records; policies are one rule per line.  Parsers are total: any input
yields a value or a positioned ParseError, never an unhandled crash.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Tuple

from .core import (ActionSchema, BisonError, Domain, HLProblem, ObjectTable,
                   Predicate, StructuralError)
from .rules import HLPolicy, Rule


class ParseError(BisonError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__("%s (line %d, col %d)" % (message, line, col))
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# S-expressions
# ---------------------------------------------------------------------------

@dataclass
class _Tok:
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Tok]:
    toks, line, col, i = [], 1, 1, 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            col += 1
            i += 1
            continue
        if c in "()":
            toks.append(_Tok(c, line, col))
            col += 1
            i += 1
            continue
        start, scol = i, col
        while i < n and text[i] not in " \t\r\n();":
            i += 1
            col += 1
        toks.append(_Tok(text[start:i], line, scol))
    return toks


def _read_sexprs(text: str):
    """Parse all top-level S-expressions into nested lists of _Tok leaves."""
    toks = _tokenize(text)
    pos = [0]

    def read():
        if pos[0] >= len(toks):
            raise ParseError("unexpected end of input",
                             toks[-1].line if toks else 1, toks[-1].col if toks else 1)
        t = toks[pos[0]]
        pos[0] += 1
        if t.text == "(":
            items = []
            while True:
                if pos[0] >= len(toks):
                    raise ParseError("unbalanced '('", t.line, t.col)
                if toks[pos[0]].text == ")":
                    pos[0] += 1
                    return items
                items.append(read())
        if t.text == ")":
            raise ParseError("unbalanced ')'", t.line, t.col)
        return t

    out = []
    while pos[0] < len(toks):
        out.append(read())
    return out


def _head(form) -> str:
    if isinstance(form, list) and form and isinstance(form[0], _Tok):
        return form[0].text
    return ""


def _loc(form) -> Tuple[int, int]:
    f = form
    while isinstance(f, list):
        if not f:
            return (0, 0)
        f = f[0]
    return (f.line, f.col)


def _expect_atom(form, what: str) -> _Tok:
    if not isinstance(form, _Tok):
        raise ParseError("expected %s" % what, *_loc(form))
    return form


def _unwrap_define(forms, kind: str):
    """Accept either bare (:blocks …) forms or a (define (kind name) …) wrapper."""
    if len(forms) == 1 and _head(forms[0]) == "define":
        body = forms[0][1:]
        name = "unnamed"
        if body and isinstance(body[0], list) and len(body[0]) >= 1:
            if len(body[0]) >= 2 and isinstance(body[0][1], _Tok):
                name = body[0][1].text
            body = body[1:]
        return name, body
    return "unnamed", forms


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

def _parse_lifted_atom(form, domain_preds, var_ids, where):
    if not isinstance(form, list) or not form or not isinstance(form[0], _Tok):
        raise ParseError("expected an atom in %s" % where, *_loc(form))
    name = form[0].text
    if name not in domain_preds:
        raise ParseError("undeclared predicate %r in %s" % (name, where), form[0].line, form[0].col)
    pid, arity = domain_preds[name]
    args = []
    for a in form[1:]:
        t = _expect_atom(a, "a variable")
        if not t.text.startswith("?"):
            raise ParseError("expected a ?variable, got %r" % t.text, t.line, t.col)
        if t.text not in var_ids:
            raise ParseError("variable %s not among :parameters" % t.text, t.line, t.col)
        args.append(var_ids[t.text])
    if len(args) != arity:
        raise ParseError("predicate %r expects %d args, got %d" % (name, arity, len(args)),
                         form[0].line, form[0].col)
    return (pid,) + tuple(args)


def _parse_conj(form, domain_preds, var_ids, where):
    """(and a…) | () | bare atom → list of lifted atoms."""
    if isinstance(form, list) and (not form or _head(form) == "and"):
        items = form[1:] if form else []
        return [_parse_lifted_atom(a, domain_preds, var_ids, where) for a in items]
    return [_parse_lifted_atom(form, domain_preds, var_ids, where)]


def _parse_effect_conj(form, domain_preds, var_ids):
    adds, dels = [], []
    items = form[1:] if _head(form) == "and" else [form]
    for item in items:
        if _head(item) == "not":
            if len(item) != 2:
                raise ParseError("(not …) takes one atom", *_loc(item))
            dels.append(_parse_lifted_atom(item[1], domain_preds, var_ids, ":effect"))
        else:
            adds.append(_parse_lifted_atom(item, domain_preds, var_ids, ":effect"))
    return frozenset(adds), frozenset(dels)


def parse_domain(text: str) -> Domain:
    forms = _read_sexprs(text)
    name, body = _unwrap_define(forms, "domain")
    preds: List[Predicate] = []
    pred_ids = {}
    schemata: List[ActionSchema] = []
    saw_predicates = False
    for form in body:
        h = _head(form)
        if h == ":predicates":
            saw_predicates = True
            for p in form[1:]:
                if not isinstance(p, list) or not p:
                    raise ParseError("malformed predicate declaration", *_loc(p))
                pname = _expect_atom(p[0], "a predicate name").text
                if pname in pred_ids:
                    raise ParseError("duplicate predicate %r" % pname, p[0].line, p[0].col)
                for v in p[1:]:
                    t = _expect_atom(v, "a variable")
                    if not t.text.startswith("?"):
                        raise ParseError("predicate argument must be a ?variable", t.line, t.col)
                pred_ids[pname] = (len(preds), len(p) - 1)
                preds.append(Predicate(pname, len(p) - 1))
        elif h == ":action":
            if len(form) < 2 or not isinstance(form[1], _Tok):
                raise ParseError("missing action name", *_loc(form))
            aname = form[1].text
            sections = {}
            it = iter(form[2:])
            for key in it:
                kt = _expect_atom(key, "an :action section keyword")
                if kt.text not in (":parameters", ":precondition", ":effect"):
                    raise ParseError("unknown action section %r" % kt.text, kt.line, kt.col)
                try:
                    sections[kt.text] = next(it)
                except StopIteration:
                    raise ParseError("missing body for %s" % kt.text, kt.line, kt.col) from None
            for req in (":parameters", ":precondition", ":effect"):
                if req not in sections:
                    raise ParseError("action %r lacks %s" % (aname, req),
                                     form[1].line, form[1].col)
            params = sections[":parameters"]
            if not isinstance(params, list):
                raise ParseError(":parameters must be a list", *_loc(params))
            var_names, var_ids = [], {}
            for v in params:
                t = _expect_atom(v, "a parameter variable")
                if not t.text.startswith("?") or t.text in var_ids:
                    raise ParseError("bad or duplicate parameter %r" % t.text, t.line, t.col)
                var_ids[t.text] = len(var_names)
                var_names.append(t.text)
            pre = frozenset(_parse_conj(sections[":precondition"], pred_ids, var_ids,
                                        ":precondition"))
            eff = sections[":effect"]
            if _head(eff) == "oneof":
                outcomes = tuple(_parse_effect_conj(o, pred_ids, var_ids) for o in eff[1:])
                if not outcomes:
                    raise ParseError("(oneof …) needs at least one outcome", *_loc(eff))
            else:
                outcomes = (_parse_effect_conj(eff, pred_ids, var_ids),)
            schemata.append(ActionSchema(aname, tuple(var_names), pre, outcomes))
        elif h in ("domain",):
            continue
        else:
            raise ParseError("unexpected top-level form %r" % (h or "?"), *_loc(form))
    if not saw_predicates:
        raise ParseError("missing (:predicates …) block", 1, 1)
    try:
        return Domain(preds, schemata, name)
    except StructuralError as e:
        raise ParseError(str(e), 1, 1) from None


def serialize_domain(domain: Domain) -> str:
    lines = ["(define (domain %s)" % domain.name]
    ps = " ".join(
        "(%s%s)" % (p.name, "".join(" ?x%d" % i for i in range(p.arity)))
        for p in domain.predicates)
    lines.append("  (:predicates %s)" % ps)

    def atom_s(atom, sch):
        p = domain.predicates[atom[0]]
        if p.arity == 0:
            return "(%s)" % p.name
        return "(%s %s)" % (p.name, " ".join(sch.var_names[v] for v in atom[1:]))

    for sch in domain.schemata:
        lines.append("  (:action %s" % sch.name)
        lines.append("    :parameters (%s)" % " ".join(sch.var_names))
        lines.append("    :precondition (and %s)" % " ".join(atom_s(a, sch) for a in sorted(sch.pre)))
        outs = []
        for add, dele in sch.outcomes:
            parts = [atom_s(a, sch) for a in sorted(add)]
            parts += ["(not %s)" % atom_s(a, sch) for a in sorted(dele)]
            outs.append("(and %s)" % " ".join(parts))
        if len(outs) == 1:
            lines.append("    :effect %s)" % outs[0])
        else:
            lines.append("    :effect (oneof %s))" % " ".join(outs))
    lines.append(")")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

def _parse_ground_fact(form, domain: Domain, objects: ObjectTable, declared: bool):
    if not isinstance(form, list) or not form or not isinstance(form[0], _Tok):
        raise ParseError("expected a ground fact", *_loc(form))
    name = form[0].text
    args = []
    for a in form[1:]:
        t = _expect_atom(a, "an object name")
        if t.text.startswith("?"):
            raise ParseError("ground fact cannot contain variables", t.line, t.col)
        if declared and t.text not in objects:
            raise ParseError("undeclared object %r" % t.text, t.line, t.col)
        args.append(t.text)
    try:
        return domain.ground_fact(name, args, objects)
    except StructuralError as e:
        raise ParseError(str(e), form[0].line, form[0].col) from None


def parse_problem(text: str, domain: Domain) -> HLProblem:
    forms = _read_sexprs(text)
    name, body = _unwrap_define(forms, "problem")
    objects = ObjectTable()
    init, goal = [], []
    for form in body:
        h = _head(form)
        if h == ":domain":
            continue
        elif h == ":objects":
            for o in form[1:]:
                t = _expect_atom(o, "an object name")
                if t.text in objects:
                    raise ParseError("duplicate object %r" % t.text, t.line, t.col)
                objects.intern(t.text)
        elif h == ":init":
            init = [_parse_ground_fact(f, domain, objects, True) for f in form[1:]]
        elif h == ":goal":
            items = form[1:]
            if len(items) == 1 and _head(items[0]) == "and":
                items = items[0][1:]
            goal = [_parse_ground_fact(f, domain, objects, True) for f in items]
        else:
            raise ParseError("unexpected problem form %r" % (h or "?"), *_loc(form))
    return HLProblem(domain, objects, frozenset(init), frozenset(goal), name)


def serialize_problem(problem: HLProblem) -> str:
    d, objs = problem.domain, problem.objects
    lines = ["(define (problem %s)" % problem.name,
             "  (:domain %s)" % d.name,
             "  (:objects %s)" % " ".join(objs.names),
             "  (:init %s)" % " ".join(d.fact_str(f, objs) for f in sorted(problem.init)),
             "  (:goal %s))" % " ".join(d.fact_str(f, objs) for f in sorted(problem.goal))]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass
class DemoStep:
    ego: list
    objects: dict  # name -> feature list, insertion order = object order
    action: list


@dataclass
class Demo:
    goal: tuple  # tuple of fact name-tuples, e.g. ("at", "b0", "p0")
    steps: list


def _fact_names(s: str, line_no: int) -> tuple:
    try:
        forms = _read_sexprs(s)
    except ParseError as e:
        raise ParseError("bad fact %r in trace" % s, line_no, 1) from None
    if len(forms) != 1 or not isinstance(forms[0], list) or not forms[0] \
            or not all(isinstance(t, _Tok) for t in forms[0]):
        raise ParseError("bad fact %r in trace" % s, line_no, 1)
    return tuple(t.text for t in forms[0])


def parse_traces(text: str) -> List[Demo]:
    demos = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError("malformed trace record: %s" % e.msg, line_no, e.colno) from None
        if not isinstance(rec, dict) or "goal" not in rec or "steps" not in rec:
            raise ParseError("trace record needs 'goal' and 'steps'", line_no, 1)
        goal = tuple(_fact_names(g, line_no) for g in rec["goal"])
        steps, ego_len, obj_len, act_len = [], None, None, None
        for s in rec["steps"]:
            if not isinstance(s, dict) or not {"ego", "objects", "action"} <= set(s):
                raise ParseError("trace step needs ego/objects/action", line_no, 1)
            ego, objs, act = s["ego"], s["objects"], s["action"]
            if ego_len is None:
                ego_len, act_len = len(ego), len(act)
            if len(ego) != ego_len or len(act) != act_len:
                raise ParseError("ragged ego/action vector lengths", line_no, 1)
            for name, vec in objs.items():
                if obj_len is None:
                    obj_len = len(vec)
                if len(vec) != obj_len:
                    raise ParseError("ragged object vector lengths", line_no, 1)
            steps.append(DemoStep([float(x) for x in ego],
                                  {k: [float(x) for x in v] for k, v in objs.items()},
                                  [float(x) for x in act]))
        demos.append(Demo(goal, steps))
    return demos


def _fmt(x: float) -> float:
    return float("%.9g" % x)


def serialize_traces(demos: Iterable[Demo]) -> str:
    lines = []
    for demo in demos:
        rec = {
            "goal": ["(%s)" % " ".join(g) for g in demo.goal],
            "steps": [{"ego": [_fmt(x) for x in s.ego],
                       "objects": {k: [_fmt(x) for x in v] for k, v in s.objects.items()},
                       "action": [_fmt(x) for x in s.action]} for s in demo.steps],
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

def _parse_rule_atom_group(forms, domain: Domain, var_ids: dict, line_no: int):
    atoms = []
    for form in forms:
        if not isinstance(form, list) or not form or not isinstance(form[0], _Tok):
            raise ParseError("expected an atom", line_no, 1)
        name = form[0].text
        pid = domain.pred_ids.get(name)
        if pid is None:
            raise ParseError("undeclared predicate %r in rule" % name, line_no, form[0].col)
        args = []
        for a in form[1:]:
            t = _expect_atom(a, "a variable")
            if not t.text.startswith("?"):
                raise ParseError("rule atoms take ?variables only", line_no, t.col)
            if t.text not in var_ids:
                raise ParseError("variable %s not in :vars" % t.text, line_no, t.col)
            args.append(var_ids[t.text])
        if len(args) != domain.predicates[pid].arity:
            raise ParseError("arity mismatch for %r in rule" % name, line_no, form[0].col)
        atoms.append((pid,) + tuple(args))
    return frozenset(atoms)


def parse_rule_line(line: str, domain: Domain, line_no: int = 1) -> Rule:
    if ":" not in line:
        raise ParseError("rule line needs '<val>:' prefix", line_no, 1)
    val_s, rest = line.split(":", 1)
    try:
        val = int(val_s.strip()) - 1  # display priorities are 1-based
    except ValueError:
        raise ParseError("bad priority %r" % val_s.strip(), line_no, 1) from None
    if "=>" not in rest:
        raise ParseError("rule line needs '=>'", line_no, 1)
    conds_s, head_s = rest.split("=>", 1)
    forms = _read_sexprs(conds_s)
    groups = {":vars": None, ":state": None, ":goal": None}
    for form in forms:
        h = _head(form)
        if h not in groups:
            raise ParseError("unexpected rule section %r" % (h or "?"), line_no, 1)
        if groups[h] is not None:
            raise ParseError("duplicate rule section %r" % h, line_no, 1)
        groups[h] = form[1:]
    for k, v in groups.items():
        if v is None:
            raise ParseError("rule lacks %s section" % k, line_no, 1)
    var_ids = {}
    for v in groups[":vars"]:
        t = _expect_atom(v, "a variable")
        if not t.text.startswith("?") or t.text in var_ids:
            raise ParseError("bad or duplicate variable %r" % t.text, line_no, t.col)
        var_ids[t.text] = len(var_ids)
    s_cond = _parse_rule_atom_group(groups[":state"], domain, var_ids, line_no)
    g_cond = _parse_rule_atom_group(groups[":goal"], domain, var_ids, line_no)
    head_forms = _read_sexprs(head_s)
    if len(head_forms) != 1 or not isinstance(head_forms[0], list) or not head_forms[0]:
        raise ParseError("malformed rule head", line_no, 1)
    hname = _expect_atom(head_forms[0][0], "a schema name").text
    sid = domain.schema_ids.get(hname)
    if sid is None:
        raise ParseError("undeclared schema %r in rule head" % hname, line_no, 1)
    head_args = []
    for a in head_forms[0][1:]:
        t = _expect_atom(a, "a variable")
        if not t.text.startswith("?") or t.text not in var_ids:
            raise ParseError("rule head takes declared ?variables only", line_no, t.col)
        head_args.append(var_ids[t.text])
    if len(head_args) != domain.schemata[sid].arity:
        raise ParseError("rule head arity mismatch for %r" % hname, line_no, 1)
    return Rule(val, len(var_ids), s_cond, g_cond, sid, tuple(head_args))


def parse_policy(text: str, domain: Domain) -> HLPolicy:
    rules = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split(";", 1)[0].strip()
        if not stripped:
            continue
        rules.append(parse_rule_line(stripped, domain, line_no))
    return HLPolicy(rules, domain)


def serialize_policy(policy: HLPolicy) -> str:
    return policy.serialize()
