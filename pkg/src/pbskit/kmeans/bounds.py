"""Partition-relaxation lower bounds for K-means.

With the analytic multipliers (one on every distance copy, zero on every
centroid copy) each block of points decouples into an ordinary K-means
problem on its own points, so the bound is a sum of exact block optima.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..instances import stream
from .core import Clustering, KMeansProblem
from .exact import MAX_POINTS, ExactResult, _exact

_RAND_PARTITION = 5  # stream tag
DEFAULT_BLOCK = 20
DEFAULT_BLOCK_TIME = 60.0
ORDER_TOL = 1e-9


@dataclass(frozen=True)
class SubproblemPartition:
    blocks: tuple  # tuples of 0-based point indices

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        flat = [i for b in blocks for i in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        if len(flat) != len(set(flat)):
            raise ValueError("blocks overlap")

    def check(self, N: int) -> None:
        if sorted(i for b in self.blocks for i in b) != list(range(N)):
            raise ValueError("partition does not cover the points exactly")

    def to_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, d) -> "SubproblemPartition":
        return cls(tuple(tuple(b) for b in d["blocks"]))


def det_partition(warm: Clustering, S: int) -> SubproblemPartition:
    """Deal the points of each warm-start cluster round-robin over S blocks."""
    if S < 1:
        raise ValueError("need at least one subproblem")
    blocks = [[] for _ in range(S)]
    s = 0
    labels = np.asarray(warm.labels)
    for k in range(int(labels.max()) + 1):
        for i in np.nonzero(labels == k)[0]:
            blocks[s].append(int(i))
            s = (s + 1) % S  # the counter carries over to the next cluster
    return SubproblemPartition(tuple(b for b in blocks if b))


def rand_partition(N: int, block_size: int, seed: int = 0) -> SubproblemPartition:
    """Sort the points by a uniform key and cut the order into runs of block_size."""
    if block_size < 1:
        raise ValueError("block size must be positive")
    keys = stream(seed, _RAND_PARTITION).uniform(size=N)
    order = np.argsort(keys, kind="stable")
    return SubproblemPartition(tuple(tuple(int(i) for i in order[p:p + block_size])
                                     for p in range(0, N, block_size)))


@dataclass
class LowerBound:
    lb: float
    per_block: list  # ExactResult per block, in block order
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return {"lb": self.lb, "per_block": [r.to_json() for r in self.per_block], "wall_time": self.wall_time}


def kmeans_lower_bound(problem: KMeansProblem, partition: SubproblemPartition,
                       block_time: Optional[float] = DEFAULT_BLOCK_TIME, threads: int = 1,
                       cap: int = MAX_POINTS) -> LowerBound:
    """Sum of the exact K-means lower bounds of every block."""
    partition.check(problem.N)
    for b in partition.blocks:
        if len(b) > cap:
            raise ValueError(f"block of {len(b)} points exceeds the exact-solver cap of {cap}")
    t0 = time.perf_counter()

    def one(block) -> ExactResult:
        return _exact(problem.points[list(block)], problem.K, block_time)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, partition.blocks))
    else:
        results = [one(b) for b in partition.blocks]
    lb = 0.0
    for r in results:
        lb += r.lb
    return LowerBound(lb, results, time.perf_counter() - t0)


def gap_closed(lb: float, ub: float) -> float:
    """Fraction of the gap between the trivial bound 0 and ub closed by lb."""
    if ub <= 0:
        raise ValueError("upper bound must be positive")
    if lb < -ORDER_TOL or lb > ub + ORDER_TOL:
        raise ValueError("need 0 <= lb <= ub")
    return lb / ub
