"""Command-line driver: ``pbskit <task> [options]``.

Programs are read as JSON from a file argument or stdin; reports are JSON
(stdout or ``--out``) with a CSV summary row next to them.  A program
document may carry a ``"multipliers"`` entry, which tasks that need
multipliers use instead of running dual ascent.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import instances
from .dual import DualConfig, SolverFailure, UnboundedRelaxation, dual_ascent
from .model import CQDP, InfeasibleProgram, MultiplierSet, Partition
from .partition import ChainViolation, Limits, corollary2_report, pbs_scan, solve_to_optimality

SCHEMA = "pbskit.report/1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHAIN = 4
EXIT_INFEASIBLE = 5
EXIT_SOLVER = 6

log = logging.getLogger("pbskit")


class ConfigError(ValueError):
    pass


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover - running from a source tree
        return "unknown"


def _config_hash(args: argparse.Namespace) -> str:
    skip = {"func", "out", "csv", "input", "trace"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _read_text(path) -> str:
    try:
        if path in (None, "-"):
            return sys.stdin.read()
        return Path(path).read_text()
    except OSError as e:
        raise OSError(f"cannot read {path}: {e}") from e


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _read_program(args):
    doc = json.loads(_read_text(args.input))
    program = CQDP.from_json(doc)
    mult = MultiplierSet.from_json(doc["multipliers"]) if "multipliers" in doc else None
    return program, mult


def _limits(args) -> Limits:
    return Limits(time=args.block_time_limit)


def _dual_config(args) -> DualConfig:
    return DualConfig(max_iter=args.iters, step_rule=args.step_rule, upper_bound=args.upper_bound)


def _multipliers(program, given, args):
    if given is not None:
        return given, "given", None
    trace = dual_ascent(program, _dual_config(args), threads=args.threads)
    return trace.best_multipliers, "dual ascent", trace.best_value


def _parse_partition(spec: str, program: CQDP, seed: int) -> Partition:
    if spec.startswith("rand:"):
        try:
            m, b = (int(x) for x in spec[5:].split(","))
        except ValueError:
            raise ConfigError("rand partition needs rand:minMerges,maxBlock") from None
        p = instances.gen_random_partition(program.K, m, b, seed=seed, ids=sorted(program.ids))
        return p
    if spec.startswith(("alg1:", "alg2:")):
        raise ConfigError(f"{spec.split(':')[0]} partitions apply to clustering tasks only")
    return Partition.from_json(json.loads(_read_text(spec)))


def _report(args, task: str, body: dict, summary: dict, t0: float) -> None:
    rep = {"schema": SCHEMA, "task": task, "version": _version(), "seed": args.seed,
           "config_hash": _config_hash(args), **body, "wall_time": time.perf_counter() - t0}
    _write_text(args.out, json.dumps(rep, indent=2) + "\n")
    csv_path = args.csv or (None if args.out in (None, "-") else str(Path(args.out).with_suffix(".csv")))
    if csv_path:
        row = {"task": task, "seed": args.seed, "config_hash": rep["config_hash"], **summary,
               "wall_time": rep["wall_time"]}
        new = not Path(csv_path).exists()
        with open(csv_path, "a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            if new:
                w.writeheader()
            w.writerow(row)


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else str(x)


# ----------------------------------------------------------------------------
# tasks
# ----------------------------------------------------------------------------


def cmd_gen(args):
    spec = instances.GenSpec(n=args.n, K=args.K, D=args.D, seed=args.seed)
    _write_text(args.out, instances.gen_cqdp(spec).dumps() + "\n")


def cmd_gen_points(args):
    pts = instances.gen_points(args.N, args.dim, args.K_true, args.spread, args.seed)
    _write_text(args.out, instances.points_to_csv(pts))


def cmd_example(args):
    doc = instances.example_instance().to_json()
    doc["multipliers"] = MultiplierSet(instances.EXAMPLE_HULL_MULTIPLIERS).to_json()
    _write_text(args.out, json.dumps(doc) + "\n")


def cmd_dual(args):
    t0 = time.perf_counter()
    program, _ = _read_program(args)
    trace = dual_ascent(program, _dual_config(args), threads=args.threads)
    if args.trace:
        Path(args.trace).write_text(trace.to_csv())
    body = {"best_value": _finite(trace.best_value), "iterations": len(trace.iterates),
            "converged": trace.converged, "max_sum_violation": trace.max_sum_violation,
            "multipliers": trace.best_multipliers.to_json()}
    _report(args, "dual", body, {"best_value": trace.best_value}, t0)


def cmd_prelax(args):
    t0 = time.perf_counter()
    program, given = _read_program(args)
    if not args.partition:
        raise ConfigError("prelax needs --partition")
    partition = _parse_partition(args.partition, program, args.seed)
    mult, source, hull = _multipliers(program, given, args)
    rep = corollary2_report(program, mult, partition, _limits(args), dual=_dual_config(args),
                            lr_hull=hull, with_z_star=not args.no_z_star, threads=args.threads,
                            multiplier_source=source)
    _report(args, "prelax", rep.to_json(),
            {f: rep.to_json()[f] for f in rep.CSV_FIELDS if f != "wall_time"}, t0)


def cmd_pbs_scan(args):
    t0 = time.perf_counter()
    program, given = _read_program(args)
    mult, source, _ = _multipliers(program, given, args)
    ranked = pbs_scan(program, mult, _limits(args), threads=args.threads)
    body = {"multiplier_source": source,
            "ranking": [{"pair": [r.k, r.l], "delta_lb": _finite(r.delta_lb),
                         "l_partition": _finite(r.detail.total)} for r in ranked]}
    best = ranked[0] if ranked else None
    _report(args, "pbs-scan", body,
            {"best_pair": "" if best is None else f"{best.k}-{best.l}",
             "best_delta_lb": "" if best is None else best.delta_lb}, t0)


def cmd_solve(args):
    t0 = time.perf_counter()
    program, _ = _read_program(args)
    opt = solve_to_optimality(program, Limits(time=args.time_limit))
    body = {"value": _finite(opt.value), "lower_bound": _finite(opt.lower_bound),
            "status": opt.status.value, "point": None if opt.point is None else opt.point.tolist(),
            "nodes": opt.detail.nodes_explored}
    _report(args, "solve", body, {"value": opt.value, "status": opt.status.value}, t0)


def _read_points(args):
    from .kmeans import KMeansProblem

    pts = instances.points_from_csv(_read_text(args.input))
    return KMeansProblem(pts, args.clusters)


def cmd_kmeans_ub(args):
    from .kmeans import lloyd

    t0 = time.perf_counter()
    problem = _read_points(args)
    cl = lloyd(problem, args.replications, args.seed)
    _report(args, "kmeans-ub", {"ub": cl.sse, "clustering": cl.to_json()}, {"ub": cl.sse}, t0)


def _kmeans_partition(spec: str, problem, warm, seed: int):
    from .kmeans import SubproblemPartition, det_partition, rand_partition

    if spec.startswith("alg1:"):
        return det_partition(warm, int(spec[5:]))
    if spec.startswith("alg2:"):
        return rand_partition(problem.N, int(spec[5:]), seed)
    if spec.startswith("rand:"):
        raise ConfigError("rand: partitions apply to disjunctive programs only")
    return SubproblemPartition.from_json(json.loads(_read_text(spec)))


def cmd_kmeans_lb(args):
    from .kmeans import gap_closed, kmeans_lower_bound, lloyd

    t0 = time.perf_counter()
    problem = _read_points(args)
    warm = lloyd(problem, args.replications, args.seed)
    spec = args.partition or f"alg1:{-(-problem.N // 20)}"
    part = _kmeans_partition(spec, problem, warm, args.seed)
    block_time = args.block_time_limit
    if block_time is None:
        block_time = max(60.0, args.time_limit / len(part.blocks)) if args.time_limit else 60.0
    res = kmeans_lower_bound(problem, part, block_time, args.threads)
    gap = gap_closed(res.lb, warm.sse) if warm.sse > 0 else 1.0
    body = {"lb": res.lb, "ub": warm.sse, "gap_closed": gap,
            "gap_closed_baseline": "trivial bound 0", "partition": part.to_json()["blocks"],
            "per_block": [r.to_json() for r in res.per_block], "block_time_limit": block_time}
    _report(args, "kmeans-lb", body, {"lb": res.lb, "ub": warm.sse, "gap_closed": gap}, t0)


def cmd_export(args):
    from .kmeans import export_miqcp

    problem = _read_points(args)
    exp = export_miqcp(problem, args.format, args.symmetry, args.nonempty)
    _write_text(args.out, exp.text)
    sys.stderr.write(json.dumps({"schema": SCHEMA, "task": "export", "format": exp.format, **exp.stats}) + "\n")


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------


def _positive_float(s):
    v = float(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(s):
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--time-limit", type=_positive_float, default=None)
    common.add_argument("--block-time-limit", type=_positive_float, default=None)
    common.add_argument("--iters", type=_positive_int, default=2000)
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("--partition", default=None,
                        help="JSON file, rand:minMerges,maxBlock, alg1:S or alg2:size")
    common.add_argument("-o", "--out", default=None)
    common.add_argument("--csv", default=None, help="append the summary row here")

    p = argparse.ArgumentParser(prog="pbskit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="task", required=True)

    def task(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    sp = task("gen", cmd_gen, "random conic quadratic disjunctive program")
    sp.add_argument("--n", type=_positive_int, default=10)
    sp.add_argument("--K", type=_positive_int, default=8)
    sp.add_argument("--D", type=_positive_int, default=5)

    sp = task("gen-points", cmd_gen_points, "clustering point set as CSV")
    sp.add_argument("--N", type=_positive_int, default=100)
    sp.add_argument("--dim", type=_positive_int, default=2)
    sp.add_argument("--K-true", dest="K_true", type=_positive_int, default=3)
    sp.add_argument("--spread", type=_positive_float, default=0.05)

    task("example", cmd_example, "the two-variable example with its hull multipliers")

    for name, func, help_ in [("dual", cmd_dual, "Lagrangian dual ascent"),
                              ("prelax", cmd_prelax, "partition relaxation and bound chain"),
                              ("pbs-scan", cmd_pbs_scan, "pseudo basic step for every pair"),
                              ("solve", cmd_solve, "global optimum by branch-and-bound")]:
        sp = task(name, func, help_)
        sp.add_argument("input", nargs="?", default=None)
        sp.add_argument("--step-rule", choices=["diminishing", "polyak"], default="diminishing")
        sp.add_argument("--upper-bound", type=float, default=None)
        if name == "dual":
            sp.add_argument("--trace", default=None, help="write the iterate CSV here")
        if name == "prelax":
            sp.add_argument("--no-z-star", action="store_true", help="skip the global optimum")

    for name, func, help_ in [("kmeans-ub", cmd_kmeans_ub, "Lloyd upper bound"),
                              ("kmeans-lb", cmd_kmeans_lb, "partition-relaxation lower bound"),
                              ("export", cmd_export, "MIQCP model text")]:
        sp = task(name, func, help_)
        sp.add_argument("input", nargs="?", default=None, help="points CSV")
        sp.add_argument("--K", dest="clusters", type=_positive_int, default=3)
        sp.add_argument("--replications", type=_positive_int, default=100)
        if name == "export":
            sp.add_argument("--format", choices=["bigm", "hull"], default="bigm")
            sp.add_argument("--symmetry", action="store_true")
            sp.add_argument("--nonempty", action="store_true")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PBSKIT_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if getattr(args, "step_rule", None) == "polyak" and args.upper_bound is None:
        print("pbskit: error: --step-rule polyak needs --upper-bound", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except ChainViolation as e:
        log.error("%s", e)
        return EXIT_CHAIN
    except InfeasibleProgram as e:
        log.error("%s", e)
        return EXIT_INFEASIBLE
    except SolverFailure as e:
        log.error("%s", e)
        return EXIT_SOLVER
    except OSError as e:
        log.error("%s", e)
        return EXIT_IO
    except (ConfigError, UnboundedRelaxation, ValueError, KeyError, json.JSONDecodeError) as e:
        log.error("%s", e)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
