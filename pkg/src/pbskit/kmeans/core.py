"""Clustering problems, solutions and the Lloyd heuristic."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..instances import stream

_LLOYD = 4  # stream tag


@dataclass(frozen=True, eq=False)
class KMeansProblem:
    """N points in [0, 1]^D to be split into K clusters."""

    points: np.ndarray
    K: int

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if pts.shape[0] < 1 or self.K < 1:
            raise ValueError("need at least one point and one cluster")
        if pts.shape[0] < self.K:
            raise ValueError("need N >= K")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("points must be normalized into the unit hypercube")

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]


@dataclass
class Clustering:
    labels: np.ndarray  # cluster of each point, 0-based
    centroids: np.ndarray  # (K, D)
    sse: float

    @classmethod
    def from_labels(cls, points, labels, K: int) -> "Clustering":
        """Centroids are the cluster means; an unused cluster keeps the origin."""
        points = np.asarray(points, dtype=float)
        labels = np.asarray(labels, dtype=int)
        C = np.zeros((K, points.shape[1]))
        for k in range(K):
            members = points[labels == k]
            if len(members):
                C[k] = members.mean(axis=0)
        return cls(labels, C, sse(points, labels, C))

    def to_json(self) -> dict:
        return {"assignment": (self.labels + 1).tolist(), "centroids": self.centroids.tolist(), "sse": self.sse}


def sse(points, labels, centroids) -> float:
    diff = np.asarray(points) - np.asarray(centroids)[labels]
    return float(np.sum(diff * diff))


def _kmeanspp(X: np.ndarray, K: int, rng) -> np.ndarray:
    C = [X[rng.integers(len(X))]]
    d2 = np.sum((X - C[0]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        i = rng.integers(len(X)) if total <= 0 else rng.choice(len(X), p=d2 / total)
        C.append(X[i])
        d2 = np.minimum(d2, np.sum((X - X[i]) ** 2, axis=1))
    return np.array(C)


def lloyd_run(X: np.ndarray, C: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from centroids C until the assignment stops changing.

    Returns the labels, centroids and the SSE after every iteration.
    """
    K = C.shape[0]
    C = C.copy()
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = np.sum((X[:, None, :] - C[None, :, :]) ** 2, axis=2)
        new = np.argmin(d2, axis=1)
        counts = np.bincount(new, minlength=K)
        for k in np.nonzero(counts == 0)[0]:
            # reseed an empty cluster at the point farthest from its centroid,
            # taken from a cluster that can spare it
            own = d2[np.arange(len(X)), new]
            own = np.where(counts[new] > 1, own, -1.0)
            i = int(np.argmax(own))
            if own[i] < 0:
                break
            counts[new[i]] -= 1
            new[i] = k
            counts[k] = 1
        for k in range(K):
            if counts[k]:
                C[k] = X[new == k].mean(axis=0)
        history.append(sse(X, new, C))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return labels, C, history


def lloyd(problem: KMeansProblem, replications: int = 100, seed: int = 0, max_iter: int = 300) -> Clustering:
    """Best of ``replications`` k-means++ seeded Lloyd runs."""
    if replications < 1:
        raise ValueError("need at least one replication")
    X, K = problem.points, problem.K
    best = None
    for r in range(replications):
        C0 = _kmeanspp(X, K, stream(seed, _LLOYD, r))
        labels, C, hist = lloyd_run(X, C0, max_iter)
        if best is None or hist[-1] < best.sse:
            best = Clustering(labels, C, hist[-1])
    return best
