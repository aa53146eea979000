"""Exact K-means by branch-and-bound over point-to-cluster assignments.

Points are assigned in their given order.  A point may join any cluster
already in use or open the next unused one, which removes the K! relabelings
of every solution.  The bound of a node is the SSE of the assigned prefix
plus the optimal SSE of the unassigned suffix; the suffix optima are solved
first, from the shortest suffix up, each one seeding the next.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .core import Clustering, KMeansProblem, lloyd

MAX_POINTS = 25
_CHUNK = 200_000  # nodes between clock checks


class ExactStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"


@dataclass
class ExactResult:
    lb: float
    ub: float
    clustering: Clustering
    status: ExactStatus
    nodes: int = 0

    def to_json(self) -> dict:
        return {"lb": self.lb, "ub": self.ub, "status": self.status.value, "nodes": self.nodes}


class _State:
    """Resumable depth-first search state (plain arrays, mutated in place)."""

    def __init__(self, X: np.ndarray, K: int):
        N, D = X.shape
        self.assign = np.zeros(N, dtype=np.int64)
        self.counts = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros((K, D))
        self.sse_at = np.zeros(N + 1)
        self.used_at = np.zeros(N + 1, dtype=np.int64)
        self.order = np.zeros((N, K), dtype=np.int64)
        self.inc = np.zeros((N, K))
        self.nch = np.zeros(N, dtype=np.int64)
        self.pos = np.zeros(N, dtype=np.int64)
        self.depth = np.zeros(1, dtype=np.int64)
        _expand(X, K, 0, self.counts, self.sums, self.used_at, self.order, self.inc, self.nch, self.pos)

    def arrays(self):
        return (self.assign, self.counts, self.sums, self.sse_at, self.used_at, self.order,
                self.inc, self.nch, self.pos, self.depth)


@njit(cache=True, nogil=True)
def _expand(X, K, d, counts, sums, used_at, order, inc, nch, pos):
    """Children of the node at depth d, sorted by SSE increase (stable in k)."""
    used = used_at[d]
    top = min(K, used + 1)
    D = X.shape[1]
    for k in range(top):
        m = counts[k]
        v = 0.0
        if m > 0:
            for j in range(D):
                diff = X[d, j] - sums[k, j] / m
                v += diff * diff
            v *= m / (m + 1.0)
        # insertion sort
        p = k
        while p > 0 and inc[d, p - 1] > v:
            inc[d, p] = inc[d, p - 1]
            order[d, p] = order[d, p - 1]
            p -= 1
        inc[d, p] = v
        order[d, p] = k
    nch[d] = top
    pos[d] = 0


@njit(cache=True, nogil=True)
def _search(X, K, suffix, ub, best, assign, counts, sums, sse_at, used_at, order, inc, nch, pos,
            depth, budget):
    """Continue the search for at most ``budget`` nodes.

    Returns (incumbent SSE, nodes used, finished flag); ``best`` receives the
    incumbent assignment.
    """
    N, D = X.shape
    d = depth[0]
    nodes = 0
    while d >= 0 and nodes < budget:
        if pos[d] > 0:
            # back from the subtree of the previous child: undo it
            k = order[d, pos[d] - 1]
            counts[k] -= 1
            for j in range(D):
                sums[k, j] -= X[d, j]
        if pos[d] >= nch[d]:
            d -= 1
            continue
        p = pos[d]
        pos[d] += 1
        bound = sse_at[d] + inc[d, p] + suffix[d + 1]
        if bound >= ub:
            # children are sorted, the rest cannot do better
            pos[d] = nch[d]
            d -= 1
            continue
        nodes += 1
        k = order[d, p]
        assign[d] = k
        counts[k] += 1
        for j in range(D):
            sums[k, j] += X[d, j]
        sse_at[d + 1] = sse_at[d] + inc[d, p]
        used_at[d + 1] = max(used_at[d], k + 1)
        if d + 1 == N:
            ub = sse_at[N]
            best[:] = assign
            continue  # the undo happens on the next pass at this depth
        d += 1
        _expand(X, K, d, counts, sums, used_at, order, inc, nch, pos)
    depth[0] = d
    return ub, nodes, d < 0


@njit(cache=True, nogil=True)
def _open_bound(suffix, sse_at, inc, nch, pos, depth, ub):
    """Smallest bound over the untried children on the current path."""
    lb = ub
    for d in range(depth[0] + 1):
        for p in range(pos[d], nch[d]):
            b = sse_at[d] + inc[d, p] + suffix[d + 1]
            if b < lb:
                lb = b
    return lb


def _sse_of(X: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for k in np.unique(labels):
        members = X[labels == k]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total


def _place_first(X: np.ndarray, K: int, labels: np.ndarray) -> np.ndarray:
    """Extend a suffix assignment by the point in front of it, greedily."""
    best, best_inc = None, np.inf
    used = int(labels.max()) + 1 if len(labels) else 0
    for k in range(min(K, used + 1)):
        members = X[1:][labels == k]
        m = len(members)
        v = 0.0 if m == 0 else m / (m + 1.0) * float(np.sum((X[0] - members.mean(axis=0)) ** 2))
        if v < best_inc:
            best, best_inc = k, v
    return np.concatenate([[best], labels]).astype(np.int64)


def _canonical(labels: np.ndarray) -> np.ndarray:
    """Relabel so that clusters appear in order of first use."""
    mapping, out = {}, np.empty_like(labels)
    for i, k in enumerate(labels):
        out[i] = mapping.setdefault(int(k), len(mapping))
    return out


def _solve(X: np.ndarray, K: int, suffix: np.ndarray, ub: float, labels: np.ndarray,
           deadline: Optional[float]):
    """Branch-and-bound with a fixed suffix bound table; returns (lb, ub, labels, finished, nodes)."""
    N = X.shape[0]
    if N <= K:
        return 0.0, 0.0, np.arange(N, dtype=np.int64), True, 0
    st = _State(X, K)
    best = labels.astype(np.int64).copy()
    total = 0
    # a strict improvement over the seed must beat it by more than rounding
    ub_search = ub * (1.0 + 1e-12) + 1e-15
    found = False
    while True:
        new_ub, nodes, done = _search(X, K, suffix, ub_search, best, *st.arrays(), _CHUNK)
        total += nodes
        if new_ub < ub_search:
            ub_search, found = new_ub, True
        if done:
            break
        if deadline is not None and time.perf_counter() > deadline:
            lb = _open_bound(suffix, st.sse_at, st.inc, st.nch, st.pos, st.depth, ub_search)
            ub_final = _sse_of(X, best) if found else ub
            return min(lb, ub_final), ub_final, best, False, total
    ub_final = _sse_of(X, best) if found else ub
    return ub_final, ub_final, best, True, total


def exact_kmeans(problem: KMeansProblem, time_limit: Optional[float] = None,
                 cap: int = MAX_POINTS, warm: Optional[Clustering] = None, seed: int = 0) -> ExactResult:
    """Optimal K-means clustering, or valid bounds when the time limit hits."""
    if problem.N > cap:
        raise ValueError(f"{problem.N} points exceed the exact-solver cap of {cap}")
    return _exact(problem.points, problem.K, time_limit, warm, seed)


def _exact(X: np.ndarray, K: int, time_limit: Optional[float] = None,
           warm: Optional[Clustering] = None, seed: int = 0) -> ExactResult:
    X = np.ascontiguousarray(X, dtype=float)
    N = X.shape[0]
    deadline = None if time_limit is None else time.perf_counter() + time_limit
    if N <= K:
        return ExactResult(0.0, 0.0, Clustering.from_labels(X, np.arange(N), K), ExactStatus.OPTIMAL)
    heur = warm if warm is not None else lloyd(KMeansProblem(X, K), replications=10, seed=seed)
    # suffix[s] is the optimal SSE of points s..N-1; K or fewer points cost nothing
    suffix = np.zeros(N + 1)
    labels = np.arange(K)
    nodes = 0
    for s in range(N - K - 1, -1, -1):
        seed_labels = _canonical(_place_first(X[s:], K, labels))
        if s == 0 and heur.sse < _sse_of(X, seed_labels):
            seed_labels = _canonical(heur.labels)
        lb, _, labels, done, used = _solve(X[s:], K, suffix[s:], _sse_of(X[s:], seed_labels),
                                           seed_labels, deadline)
        nodes += used
        labels = _canonical(labels)
        if not done:
            # a subset never costs more than the whole, so lb stays valid
            if s > 0:
                labels = heur.labels
            ub = _sse_of(X, labels)
            return ExactResult(float(min(lb, ub)), ub, Clustering.from_labels(X, labels, K),
                               ExactStatus.TIME_LIMIT, nodes)
        suffix[s] = lb
    ub = _sse_of(X, labels)
    return ExactResult(ub, ub, Clustering.from_labels(X, labels, K), ExactStatus.OPTIMAL, nodes)
