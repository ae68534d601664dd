"""Episode executors: the composed bilevel policy and the planner baselines.

The bilevel loop re-queries the HL policy at every LL step (the composition is
pointwise in the LL state), so exactly one HL query and one LL query happen
per environment step.  Baselines follow the plan/policy bookkeeping of the
replanning literature: track a plan index, advance when the next action's
precondition holds, fail or replan when neither does.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import HLProblem, ground_pre
from .rules import HLPolicy, select_action
from .search import find_plan, find_policy

STRATEGIES = ("bison", "det_plan", "det_replan", "ndt_plan", "ndt_replan",
              "oracle", "pure_nn_stub")

FAILURE_KINDS = ("none", "no_hl_action", "step_cap", "plan_broken")


@dataclass
class EpisodeResult:
    success: bool = False
    ll_steps: int = 0
    hl_actions_fired: int = 0  # number of distinct consecutive HL action segments
    replans: int = 0
    wall_time: float = 0.0
    failure_kind: str = "none"

    def fail(self, kind: str):
        assert kind in FAILURE_KINDS and kind != "none"
        self.success = False
        self.failure_kind = kind
        return self


@dataclass
class Executor:
    """Strategy plus the handles it needs.

    ll_mode: "oracle" (scripted skill), "gnn", or "gnn_stub" (action features
    zeroed at inference).  The oracle and pure_nn_stub strategies force their
    LL mode; bison uses hl_policy or the env's built-in policy when None.
    """

    strategy: str
    hl_policy: Optional[HLPolicy] = None
    gnn_params: Optional[object] = None
    ll_mode: str = "oracle"
    plan_node_budget: int = 10 ** 6
    plan_time_budget: float = 30.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError("unknown strategy %r" % self.strategy)


def _make_ll(executor: Executor, env) -> Callable:
    mode = executor.ll_mode
    if executor.strategy == "oracle":
        mode = "oracle"
    elif executor.strategy == "pure_nn_stub":
        mode = "gnn_stub"
    if mode == "oracle":
        return lambda lls, hla, goal, hls: env.oracle_skill(lls, hla)
    if mode in ("gnn", "gnn_stub"):
        from .gnn import encode, forward
        params = executor.gnn_params
        if params is None:
            raise ValueError("gnn LL mode requires trained parameters")
        zero = mode == "gnn_stub"

        def ll(lls, hla, goal, hls):
            inp = encode(params.spec, env.domain, lls, hla, goal, hls, env.table,
                         zero_action=zero)
            return np.clip(forward(params, inp), -1.0, 1.0)
        return ll
    raise ValueError("unknown ll_mode %r" % mode)


def _note_fired(result: EpisodeResult, prev, hla):
    if hla != prev:
        result.hl_actions_fired += 1
    return hla


def run_episode(env, executor: Executor, step_cap: int = None,
                record: list = None) -> EpisodeResult:
    """Run one episode of the given strategy; never raises on planning failure."""
    t0 = time.perf_counter()
    lls, _ = env.reset()
    cap = step_cap if step_cap is not None else env.config.max_steps
    if executor.strategy in ("bison", "oracle", "pure_nn_stub"):
        result = _run_policy_loop(env, executor, lls, cap, record)
    elif executor.strategy in ("det_plan", "det_replan"):
        result = _run_det(env, executor, lls, cap, executor.strategy == "det_replan")
    else:
        result = _run_ndt(env, executor, lls, cap, executor.strategy == "ndt_replan")
    result.wall_time = time.perf_counter() - t0
    return result


def _record_step(record, lls, action):
    if record is not None:
        record.append((lls, np.asarray(action, dtype=float)))


def _run_policy_loop(env, executor, lls, cap, record=None) -> EpisodeResult:
    from .envs import builtin_policy

    policy = executor.hl_policy
    if policy is None or executor.strategy == "oracle":
        policy = builtin_policy(env.config.kind)
    ll = _make_ll(executor, env)
    result = EpisodeResult()
    prev = None
    while True:
        hls = env.label(lls)
        goal = env.goal
        if goal <= hls:
            result.success = True
            _record_step(record, lls, np.zeros(3))
            return result
        if result.ll_steps >= cap:
            return result.fail("step_cap")
        hla = select_action(policy, hls, goal, range(len(env.table)), env.domain)
        if hla is None:
            return result.fail("no_hl_action")
        prev = _note_fired(result, prev, hla)
        action = ll(lls, hla, goal, hls)
        _record_step(record, lls, action)
        lls = env.step(action)
        result.ll_steps += 1


def _plan_from(env, hls, executor):
    problem = HLProblem(env.domain, env.table, frozenset(hls), frozenset(env.goal))
    return find_plan(problem, node_budget=executor.plan_node_budget,
                     time_budget=executor.plan_time_budget)


def _run_det(env, executor, lls, cap, replan: bool) -> EpisodeResult:
    ll = _make_ll(executor, env)
    result = EpisodeResult()
    hls = env.label(lls)
    if env.goal <= hls:
        result.success = True
        return result
    plan = _plan_from(env, hls, executor)
    if plan is None:
        return result.fail("no_hl_action")
    i = 0
    prev = None
    domain = env.domain
    while True:
        hls = env.label(lls)
        goal = env.goal
        if goal <= hls:
            result.success = True
            return result
        if result.ll_steps >= cap:
            return result.fail("step_cap")
        broken = False
        if i < len(plan.actions) and ground_pre(domain, plan.actions[i]) <= hls:
            hla = plan.actions[i]
        elif i + 1 < len(plan.actions) and ground_pre(domain, plan.actions[i + 1]) <= hls:
            i += 1
            hla = plan.actions[i]
        else:
            broken = True
        if broken:
            if not replan:
                return result.fail("plan_broken")
            plan = _plan_from(env, hls, executor)
            result.replans += 1
            if plan is None:
                return result.fail("no_hl_action")
            i = 0
            continue
        prev = _note_fired(result, prev, hla)
        action = ll(lls, hla, goal, hls)
        lls = env.step(action)
        result.ll_steps += 1


def _policy_from(env, hls, executor):
    problem = HLProblem(env.domain, env.table, frozenset(hls), frozenset(env.goal))
    return find_policy(problem, node_budget=executor.plan_node_budget,
                       time_budget=executor.plan_time_budget)


def _run_ndt(env, executor, lls, cap, replan: bool) -> EpisodeResult:
    ll = _make_ll(executor, env)
    result = EpisodeResult()
    hls = env.label(lls)
    if env.goal <= hls:
        result.success = True
        return result
    policy = _policy_from(env, hls, executor)
    if policy is None:
        return result.fail("no_hl_action")
    prev = None
    while True:
        hls = env.label(lls)
        goal = env.goal
        if goal <= hls:
            result.success = True
            return result
        if result.ll_steps >= cap:
            return result.fail("step_cap")
        hla = policy.get(hls)
        if hla is None:
            if not replan:
                return result.fail("no_hl_action")
            policy = _policy_from(env, hls, executor)
            result.replans += 1
            if policy is None:
                return result.fail("no_hl_action")
            hla = policy.get(hls)
            if hla is None:
                return result.fail("no_hl_action")
        prev = _note_fired(result, prev, hla)
        action = ll(lls, hla, goal, hls)
        lls = env.step(action)
        result.ll_steps += 1
