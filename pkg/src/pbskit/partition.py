"""Partition relaxations and pseudo basic steps.

A block subproblem minimizes ``mu . v`` over the intersection of several
disjunctions, where ``mu`` sums the multipliers of the block.  It is solved
exactly by best-first branch-and-bound over disjunct selections; stopping
early still leaves a valid lower bound.
"""
from __future__ import annotations

import csv
import enum
import heapq
import io
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .dual import DualConfig, dual_ascent, evaluate_lr
from .kernels import DEFAULT_CONFIG, SolverConfig, Status
from .model import CQDP, MultiplierSet, Partition, merge_block

CHAIN_TOL = 1e-6


class BlockStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"


class ChainViolation(RuntimeError):
    """The bound chain z* >= z_post >= L_P >= LR failed; a solver is wrong."""


@dataclass(frozen=True)
class Limits:
    time: Optional[float] = None  # seconds per block
    nodes: Optional[int] = None


@dataclass
class BlockSolve:
    block: tuple
    mu: np.ndarray
    value: float
    incumbent_value: float
    chosen: dict  # id -> disjunct index at the incumbent
    status: BlockStatus
    nodes_explored: int
    wall_time: float = 0.0
    point: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        return {
            "block": list(self.block),
            "mu": self.mu.tolist(),
            "value": _num(self.value),
            "incumbent_value": _num(self.incumbent_value),
            "chosen": {str(k): v for k, v in self.chosen.items()},
            "status": self.status.value,
            "nodes_explored": self.nodes_explored,
            "wall_time": self.wall_time,
        }


@dataclass
class PartitionBound:
    partition: Partition
    blocks: list
    total: float
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {
            "partition": self.partition.to_json()["blocks"],
            "total": _num(self.total),
            "blocks": [b.to_json() for b in self.blocks],
            "wall_time": self.wall_time,
        }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def _box_min(mu, lo, hi) -> float:
    return float(np.sum(np.where(mu >= 0, mu * lo, mu * hi)))


def solve_block(program: CQDP, block, mu, limits: Limits = Limits(),
                config: SolverConfig = DEFAULT_CONFIG) -> BlockSolve:
    """min mu . v over the intersection of the block's disjunctions (and the box).

    Disjunctions are fixed in ascending id order; children are ordered by the
    minimum of mu over their own disjunct alone.  A node's bound is the
    minimum over the intersection of its fixed disjuncts.
    """
    order = sorted(int(k) for k in block)
    if not order:
        raise ValueError("empty block")
    for k in order:
        program.disjunction(k)  # raises on unknown ids
    mu = np.asarray(mu, dtype=float)
    box = program.box
    t_start = time.perf_counter()
    disjs = [program.disjunction(k) for k in order]
    # own minima give the child order at every depth
    own = []
    for d in disjs:
        values, _, _ = d.solver(config).minimize(mu, box)
        own.append(np.argsort(values, kind="stable"))
    depth_total = len(order)
    counter = itertools.count()

    incumbent, inc_sel, inc_point = np.inf, None, None
    # heap of (bound, tiebreak, selection)
    root_bound = _box_min(mu, program.lo, program.hi)
    heap = [(root_bound, next(counter), ())]
    nodes = 1
    timed_out = False
    while heap:
        bound, _, sel = heap[0]
        if bound >= incumbent:
            break
        if (limits.time is not None and time.perf_counter() - t_start > limits.time) or \
                (limits.nodes is not None and nodes >= limits.nodes):
            timed_out = True
            break
        heapq.heappop(heap)
        depth = len(sel)
        base = [c for k, j in enumerate(sel) for c in disjs[k].disjuncts[j].constraints]
        children = [sel + (int(j),) for j in own[depth]]
        if depth == 0:
            values, points, statuses = disjs[0].solver(config).minimize(mu, box)
            results = [(values[j], points[j], statuses[j]) for j in own[0]]
        else:
            problems = [base + list(disjs[depth].disjuncts[ch[-1]].constraints) for ch in children]
            res = kernels.linmin_intersection_batch(mu[None, :], problems, program.n, box, config)
            results = [(r.value, r.argmin, r.status) for r in res]
        nodes += len(children)
        for ch, (val, pt, st) in zip(children, results):
            if st is Status.INFEASIBLE:
                continue
            if st is Status.ITERATION_LIMIT:
                if len(ch) == depth_total:
                    raise RuntimeError(f"barrier failed on selection {ch} of block {order}")
                val = bound  # undecided: inherit the parent bound
            val = float(val)
            if len(ch) == depth_total:
                if val < incumbent:
                    incumbent, inc_sel, inc_point = val, ch, np.asarray(pt, dtype=float)
            elif val < incumbent:
                heapq.heappush(heap, (val, next(counter), ch))

    open_bound = heap[0][0] if heap else np.inf
    value = min(incumbent, open_bound)
    if timed_out and open_bound < incumbent:
        status = BlockStatus.TIME_LIMIT
    elif inc_sel is None:
        status = BlockStatus.INFEASIBLE
    else:
        status = BlockStatus.OPTIMAL
        value = incumbent
    chosen = {} if inc_sel is None else dict(zip(order, inc_sel))
    return BlockSolve(tuple(order), mu, float(value), float(incumbent), chosen, status, nodes,
                      time.perf_counter() - t_start, inc_point)


def _check_multipliers(program: CQDP, multipliers: MultiplierSet) -> None:
    from .dual import SUM_TOL, UnboundedRelaxation

    if set(multipliers.lambdas) != set(program.ids):
        raise ValueError("multipliers do not match the program's disjunctions")
    if multipliers.violation(program.c) > SUM_TOL:
        raise UnboundedRelaxation("multipliers must sum to c")


def partition_relaxation(program: CQDP, multipliers: MultiplierSet, partition: Partition,
                         limits: Limits = Limits(), config: SolverConfig = DEFAULT_CONFIG,
                         threads: int = 1) -> PartitionBound:
    """Sum of block minima with block-summed multipliers."""
    partition.check(program.ids)
    _check_multipliers(program, multipliers)
    t0 = time.perf_counter()

    def one(block):
        return solve_block(program, block, multipliers.summed(block), limits, config)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            blocks = list(ex.map(one, partition.blocks))
    else:
        blocks = [one(b) for b in partition.blocks]
    total = 0.0
    for b in blocks:
        total += b.value
    return PartitionBound(partition, blocks, total, time.perf_counter() - t0)


def pair_partition(program: CQDP, k: int, l: int) -> Partition:
    if k == l:
        raise ValueError("a pair needs two distinct disjunctions")
    rest = [(i,) for i in program.ids if i not in (k, l)]
    return Partition(((k, l), *rest))


@dataclass
class PairResult:
    k: int
    l: int
    delta_lb: float
    detail: PartitionBound

    def to_json(self) -> dict:
        return {"pair": [self.k, self.l], "delta_lb": _num(self.delta_lb), "detail": self.detail.to_json()}


def pseudo_basic_step_pair(program: CQDP, multipliers: MultiplierSet, k: int, l: int,
                           limits: Limits = Limits(), config: SolverConfig = DEFAULT_CONFIG,
                           lr: Optional[float] = None) -> PairResult:
    """Bound gain L_P - LR from merging only k and l."""
    detail = partition_relaxation(program, multipliers, pair_partition(program, k, l), limits, config)
    if lr is None:
        lr = evaluate_lr(program, multipliers, config).total
    return PairResult(k, l, detail.total - lr, detail)


def pbs_scan(program: CQDP, multipliers: MultiplierSet, limits: Limits = Limits(),
             config: SolverConfig = DEFAULT_CONFIG, threads: int = 1) -> list[PairResult]:
    """Pseudo basic step for every pair, best bound gain first (ties by pair)."""
    lr = evaluate_lr(program, multipliers, config).total
    pairs = list(itertools.combinations(sorted(program.ids), 2))

    def one(p):
        return pseudo_basic_step_pair(program, multipliers, *p, limits, config, lr)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, pairs))
    else:
        out = [one(p) for p in pairs]
    return sorted(out, key=lambda r: (-r.delta_lb, r.k, r.l))


@dataclass
class Optimum:
    value: float
    point: Optional[np.ndarray]
    status: BlockStatus
    lower_bound: float
    detail: BlockSolve


def solve_to_optimality(program: CQDP, limits: Limits = Limits(),
                        config: SolverConfig = DEFAULT_CONFIG) -> Optimum:
    """The trivial partition (one block of everything) with mu = c is the original problem."""
    res = solve_block(program, program.ids, program.c, limits, config)
    if res.status is BlockStatus.INFEASIBLE:
        from .model import InfeasibleProgram

        raise InfeasibleProgram("no selection of disjuncts has a common point")
    return Optimum(res.incumbent_value, res.point, res.status, res.value, res)


@dataclass
class BoundReport:
    z_star: Optional[float]
    z_post_bs_dual: Optional[float]
    l_partition: float
    lr_plain: float
    improvement_fraction: Optional[float]
    lr_hull: Optional[float] = None
    partition: Optional[Partition] = None
    detail: Optional[PartitionBound] = None
    multiplier_source: str = "given"
    tolerance: float = CHAIN_TOL
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def chain(self) -> list:
        return [v for v in (self.z_star, self.z_post_bs_dual, self.l_partition, self.lr_plain) if v is not None]

    def chain_ok(self) -> bool:
        vals = self.chain()
        return all(a + self.tolerance >= b for a, b in zip(vals, vals[1:]))

    def to_json(self) -> dict:
        opt = lambda v: None if v is None else _num(v)  # noqa: E731
        return {
            "z_star": opt(self.z_star),
            "z_post_bs_dual": opt(self.z_post_bs_dual),
            "l_partition": _num(self.l_partition),
            "lr_plain": _num(self.lr_plain),
            "lr_hull": opt(self.lr_hull),
            "improvement_fraction": opt(self.improvement_fraction),
            "improvement_denominator": "dual ascent on the program after actual basic steps",
            "multiplier_source": self.multiplier_source,
            "tolerance": self.tolerance,
            "partition": None if self.partition is None else self.partition.to_json()["blocks"],
            "blocks": [] if self.detail is None else [b.to_json() for b in self.detail.blocks],
            "wall_time": self.wall_time,
            **self.extra,
        }

    CSV_FIELDS = ("z_star", "z_post_bs_dual", "l_partition", "lr_plain", "lr_hull",
                  "improvement_fraction", "wall_time")

    def csv_row(self, label: str = "") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.to_json()
        w.writerow([label] + ["" if d[f] is None else repr(d[f]) for f in self.CSV_FIELDS])
        return buf.getvalue()


def improvement_fraction(l_partition: float, z_post: float, lr_hull: float, eps: float = 1e-9):
    """|L_P - z_hull| / |z_post - z_hull|; None when the basic steps gain nothing."""
    den = abs(z_post - lr_hull)
    if den <= eps:
        return None
    return abs(l_partition - lr_hull) / den


def corollary2_report(program: CQDP, multipliers: MultiplierSet, partition: Partition,
                      limits: Limits = Limits(), config: SolverConfig = DEFAULT_CONFIG,
                      dual: Optional[DualConfig] = None, lr_hull: Optional[float] = None,
                      with_z_star: bool = True, threads: int = 1,
                      multiplier_source: str = "given", tol: float = CHAIN_TOL) -> BoundReport:
    """Every bound in z* >= z_post >= L_P >= LR, checked.

    The dual ascent on the merged program starts from the block-summed
    multipliers, whose Lagrangian value is exactly L_P.
    """
    t0 = time.perf_counter()
    lr_plain = evaluate_lr(program, multipliers, config, threads).total
    detail = partition_relaxation(program, multipliers, partition, limits, config, threads)
    merged = program
    for block in partition.blocks:
        if len(block) > 1:
            merged = merge_block(merged, block, prune_empty=True, config=config)
    warm = MultiplierSet({min(b): multipliers.summed(b) for b in partition.blocks})
    trace = dual_ascent(merged, dual, warm, config, threads)
    z_post = trace.best_value
    z_star = solve_to_optimality(program, limits, config).value if with_z_star else None
    if lr_hull is None:
        lr_hull = dual_ascent(program, dual, None, config, threads).best_value
    frac = improvement_fraction(detail.total, z_post, lr_hull)
    report = BoundReport(z_star, z_post, detail.total, lr_plain, frac, lr_hull, partition, detail,
                         multiplier_source, tol, time.perf_counter() - t0,
                         {"post_bs_multiplier_violation": trace.max_sum_violation})
    if not report.chain_ok():
        raise ChainViolation(f"bound chain violated: {report.chain()}")
    return report
