"""Command-line harness: demo generation, learning, training, evaluation.

Subcommands: gen-demos, learn-hl, train-ll, eval, bench-hl, check.
Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.  Log level via the
BISON_LOG environment variable.  Fixed seeds give byte-identical outputs; the
eval wall_time column is zeroed unless --timing wall is passed (measured times
always go to the log).
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys

from .bench import bench_hl, bench_rows_csv
from .core import BisonError, check_ndrp, ObjectTable
from .envs import (ENV_KINDS, EGO_DIM, ACTION_DIM, EnvConfig, builtin_policy,
                   env_domain, episode_seed, generate_demos, make_env,
                   make_labeller, obj_dim)
from .formats import ParseError, parse_policy, parse_traces, serialize_policy, \
    serialize_traces
from .gnn import EncodingSpec, TrainConfig, build_dataset, load_params, \
    save_params, train
from .learn import AbstractionGapError, LearnReport, extract_hl_trace, \
    learn_hl_policy
from .runner import STRATEGIES, Executor, run_episode
from .rules import rule_is_dead, unconstrained_vars

log = logging.getLogger("bison")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

EVAL_CSV_HEADER = "strategy,env,n,episode,seed,success,steps,replans,wall_time"
SUMMARY_CSV_HEADER = "strategy,env,success_mean,success_std"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read(path):
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _env_config(args, n=None):
    return EnvConfig(kind=args.env, n_objects=n if n is not None else args.objects,
                     seed=args.seed)


def _load_policy_arg(arg, kind):
    if arg in (None, "builtin"):
        return builtin_policy(kind)
    return parse_policy(_read(arg), env_domain(kind))


# -- subcommands -------------------------------------------------------------

def cmd_gen_demos(args):
    cfg = EnvConfig(kind=args.env, n_objects=args.objects, seed=args.seed)
    demos = generate_demos(cfg, args.count)
    if len(demos) < args.count:
        log.warning("only %d/%d episodes reached the goal", len(demos), args.count)
    _write(args.out, serialize_traces(demos))
    return EXIT_OK


def _domain_for(args):
    """The env's domain, or a .bsd file checked to declare the same symbols.

    Labelling functions are bound to the env vocabularies, so a custom domain
    must agree on predicates and schemata (it may reword nothing else).
    """
    domain = env_domain(args.env)
    if getattr(args, "domain", None):
        from .formats import parse_domain
        custom = parse_domain(_read(args.domain))
        same = ([(p.name, p.arity) for p in custom.predicates]
                == [(p.name, p.arity) for p in domain.predicates]
                and [(s.name, s.var_names, s.pre, s.outcomes) for s in custom.schemata]
                == [(s.name, s.var_names, s.pre, s.outcomes) for s in domain.schemata])
        if not same:
            raise BisonError("--domain must match the %s environment's domain "
                             "(its labelling is bound to that vocabulary)" % args.env)
        return custom
    return domain


def cmd_learn_hl(args):
    domain = _domain_for(args)
    demos = parse_traces(_read(args.traces))
    report = LearnReport()
    policy = learn_hl_policy(demos, domain, make_labeller(args.env),
                             subgoal_cap=args.subgoal_cap, report=report)
    log.info("learned %d rules from %d demos (%d skipped, %d unreached goals)",
             len(policy), report.demos_used, report.demos_skipped,
             report.unreached_goals)
    _write(args.out, serialize_policy(policy))
    return EXIT_OK


def cmd_train_ll(args):
    domain = _domain_for(args)
    demos = parse_traces(_read(args.traces))
    spec = EncodingSpec.for_domain(domain, EGO_DIM, obj_dim(args.env), ACTION_DIM)
    config = TrainConfig(iterations=args.iterations, seed=args.seed)
    samples = build_dataset(demos, domain, make_labeller(args.env), spec)
    if not samples:
        raise BisonError("no trainable samples in %s" % args.traces)
    result = train(samples, spec, config)
    log.info("training MSE: first %.6f last %.6f over %d iterations",
             result.losses[0] if result.losses else float("nan"),
             result.losses[-1] if result.losses else float("nan"),
             len(result.losses))
    save_params(result.params, args.out)
    return EXIT_OK


def _parse_range(spec: str):
    if ".." in spec:
        a, b = spec.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in spec.split(",") if x]


def cmd_eval(args):
    policy = None
    if args.strategy in ("bison", "pure_nn_stub"):
        policy = _load_policy_arg(args.policy, args.env)
    params = load_params(args.params) if args.params else None
    if args.ll in ("gnn", "gnn_stub") and params is None \
            and args.strategy not in ("oracle",):
        raise BisonError("--ll %s requires --params" % args.ll)
    rows = []
    n_list = _parse_range(args.objects_range)
    jobs = []
    for n in n_list:
        for seed_i in range(args.seeds):
            seed = args.seed + seed_i
            for ep in range(args.episodes):
                jobs.append((n, seed, ep))
    results = _run_eval_jobs(args, jobs, policy, params)
    for (n, seed, ep), res in zip(jobs, results):
        wall = "%.6f" % res.wall_time if args.timing == "wall" else "0.000000"
        rows.append("%s,%s,%d,%d,%d,%d,%d,%d,%s" % (
            args.strategy, args.env, n, ep, seed, int(res.success),
            res.ll_steps, res.replans, wall))
        log.info("episode env=%s n=%d seed=%d ep=%d success=%s steps=%d %.3fs",
                 args.env, n, seed, ep, res.success, res.ll_steps, res.wall_time)
    _write(args.out, EVAL_CSV_HEADER + "\n" + "\n".join(rows) + ("\n" if rows else ""))
    if args.summary:
        per_seed = {}
        for (n, seed, ep), res in zip(jobs, results):
            per_seed.setdefault(seed, []).append(1.0 if res.success else 0.0)
        means = [statistics.mean(v) for _, v in sorted(per_seed.items())]
        std = statistics.pstdev(means) if len(means) > 1 else 0.0
        mean = statistics.mean(means) if means else 0.0
        _write(args.summary, SUMMARY_CSV_HEADER + "\n" +
               "%s,%s,%.6f,%.6f\n" % (args.strategy, args.env, mean, std))
    return EXIT_OK


def _eval_one(packed):
    args_d, n, seed, ep, policy, params = packed
    cfg = EnvConfig(kind=args_d["env"], n_objects=n, seed=episode_seed(seed, ep))
    env = make_env(cfg)
    executor = Executor(strategy=args_d["strategy"], hl_policy=policy,
                        gnn_params=params, ll_mode=args_d["ll"])
    return run_episode(env, executor)


def _run_eval_jobs(args, jobs, policy, params):
    packed = [({"env": args.env, "strategy": args.strategy, "ll": args.ll},
               n, seed, ep, policy, params) for (n, seed, ep) in jobs]
    if args.jobs > 1:
        import multiprocessing
        with multiprocessing.Pool(args.jobs) as pool:
            return pool.map(_eval_one, packed)
    return [_eval_one(p) for p in packed]


def cmd_bench_hl(args):
    policy = _load_policy_arg(args.policy, "blocks")
    n_list = _parse_range(args.n_list)
    rows = bench_hl(policy, n_list, timeout=args.timeout, seed=args.seed,
                    baseline=not args.no_baseline,
                    baseline_max_n=args.baseline_max_n)
    for r in rows:
        log.info("bench n=%d %s solved=%s steps=%d %.3fs (setup %.3fs)",
                 r.n, r.method, r.solved, r.hl_steps, r.seconds, r.setup_seconds)
    _write(args.out, bench_rows_csv(rows))
    return EXIT_OK


def cmd_check(args):
    domain = env_domain(args.env)
    policy = _load_policy_arg(args.policy, args.env)
    labeller = make_labeller(args.env)
    problems = 0
    for i, rule in enumerate(policy.rules):
        if rule_is_dead(rule):
            print("policy: rule %d is statically unsatisfiable "
                  "(shared state/goal atom)" % (i + 1))
        uv = unconstrained_vars(rule)
        if uv:
            print("policy: rule %d has %d unconstrained variable(s); grounding "
                  "them scans all objects" % (i + 1, len(uv)))
    if args.traces:
        demos = parse_traces(_read(args.traces))
        for k, demo in enumerate(demos):
            try:
                trace = extract_hl_trace(demo, domain, labeller)
            except AbstractionGapError as e:
                print("demo %d: abstraction gap: %s" % (k, e))
                problems += 1
                continue
            table = ObjectTable()
            for name in demo.steps[0].objects:
                table.intern(name)
            goal = frozenset(domain.ground_fact(g[0], g[1:], table)
                             for g in demo.goal)
            transitions = list(zip(demo.steps, demo.steps[1:]))
            rep = check_ndrp(transitions, labeller, table, policy, domain, goal)
            if not rep.ok:
                print("demo %d: NDRP violation at step %d: %s"
                      % (k, rep.step, rep.reason))
                problems += 1
            if not trace.goal_reached:
                print("demo %d: final abstraction misses the goal" % k)
        print("checked %d demos, %d problem(s)" % (len(demos), problems))
    return EXIT_OK if problems == 0 else EXIT_DATA


def build_parser() -> _Parser:
    p = _Parser(prog="bison", description=__doc__)
    p.add_argument("--log-level", default=os.environ.get("BISON_LOG", "warning"))
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, env=True):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--out", default="-")
        if env:
            sp.add_argument("--env", required=True, choices=ENV_KINDS)

    sp = sub.add_parser("gen-demos", help="record oracle demonstrations")
    common(sp)
    sp.add_argument("--objects", type=int, default=3)
    sp.add_argument("--count", type=int, default=200)
    sp.set_defaults(func=cmd_gen_demos)

    sp = sub.add_parser("learn-hl", help="learn an HL rule policy from traces")
    common(sp)
    sp.add_argument("--traces", required=True)
    sp.add_argument("--domain", default=None, help="optional .bsd file")
    sp.add_argument("--subgoal-cap", type=int, default=256)
    sp.set_defaults(func=cmd_learn_hl)

    sp = sub.add_parser("train-ll", help="behaviour-clone the LL GNN policy")
    common(sp)
    sp.add_argument("--traces", required=True)
    sp.add_argument("--domain", default=None, help="optional .bsd file")
    sp.add_argument("--iterations", type=int, default=200)
    sp.set_defaults(func=cmd_train_ll)

    sp = sub.add_parser("eval", help="run evaluation episodes to CSV")
    common(sp)
    sp.add_argument("--strategy", required=True, choices=STRATEGIES)
    sp.add_argument("--objects", dest="objects_range", default="1..10",
                    help="object counts, e.g. 3 or 1..10 or 2,4,8")
    sp.add_argument("--episodes", type=int, default=10)
    sp.add_argument("--seeds", type=int, default=3)
    sp.add_argument("--ll", default="oracle", choices=("oracle", "gnn", "gnn_stub"))
    sp.add_argument("--policy", default=None,
                    help=".bsp file or 'builtin' (default: builtin)")
    sp.add_argument("--params", default=None, help=".bsw parameter file")
    sp.add_argument("--timing", default="none", choices=("none", "wall"))
    sp.add_argument("--summary", default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench-hl", help="HL-only scalability benchmark")
    common(sp, env=False)
    sp.add_argument("--policy", default=None)
    sp.add_argument("--n-list", default="3,10,100,1000,10000")
    sp.add_argument("--timeout", type=float, default=60.0)
    sp.add_argument("--no-baseline", action="store_true")
    sp.add_argument("--baseline-max-n", type=int, default=None)
    sp.set_defaults(func=cmd_bench_hl)

    sp = sub.add_parser("check", help="NDRP and policy validation diagnostics")
    common(sp)
    sp.add_argument("--policy", default=None)
    sp.add_argument("--traces", default=None)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError,) as e:
        log.error("parse error: %s", e)
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DATA
    except (BisonError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # pragma: no cover - internal failure surface
        log.exception("internal error")
        print("internal error: %s" % e, file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
