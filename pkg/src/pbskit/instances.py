"""Random conic quadratic instances, random partitions, the two-variable example,
and clustering point sets.

Randomness comes from Philox (a counter-based generator).  Every independent
piece of an instance draws from its own child stream, keyed by a fixed
spawn key, so the content of a disjunct does not depend on how many numbers
were drawn before it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .model import CQDP, Partition, QuadConstraint, make_program

MAX_RESAMPLE = 1000

# stream tags
_COST, _DISJUNCT, _PARTITION, _POINTS = 0, 1, 2, 3


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GenSpec:
    n: int = 10
    K: int = 8
    D: int = 5
    seed: int = 1
    c_lo: float = -1000.0
    c_hi: float = 1000.0
    q_lo: float = 0.1
    q_hi: float = 1.0
    b_lo: float = -1.0
    b_hi: float = 1.0
    g_lo: float = 0.0
    g_hi: float = 2.0
    box_lo: float = -100.0
    box_hi: float = 100.0

    def __post_init__(self):
        if self.q_lo <= 0:
            raise ValueError("q_lo must be positive")
        if self.box_lo >= self.box_hi:
            raise ValueError("box_lo must be below box_hi")
        if self.D < 1 or self.K < 1 or self.n < 1:
            raise ValueError("n, K and D must be positive")


def _random_disjunct(spec: GenSpec, k: int, i: int) -> QuadConstraint:
    rng = stream(spec.seed, _DISJUNCT, k, i)
    for _ in range(MAX_RESAMPLE):
        q = rng.uniform(spec.q_lo, spec.q_hi, spec.n)
        b = rng.uniform(spec.b_lo, spec.b_hi, spec.n)
        g = rng.uniform(spec.g_lo, spec.g_hi)
        if np.sum(b * b / (4.0 * q)) - g >= 0.0:
            return QuadConstraint.diagonal(q, b, g)
    raise RuntimeError(f"could not draw a nonempty disjunct ({k}, {i}) in {MAX_RESAMPLE} tries")


def gen_cqdp(spec: GenSpec) -> CQDP:
    """Random program: diagonal ellipsoid disjuncts, uniform costs, a global box."""
    c = stream(spec.seed, _COST).uniform(spec.c_lo, spec.c_hi, spec.n)
    disjunctions = [[[_random_disjunct(spec, k, i)] for i in range(spec.D)]
                    for k in range(1, spec.K + 1)]
    lo = np.full(spec.n, spec.box_lo)
    hi = np.full(spec.n, spec.box_hi)
    return make_program(c, disjunctions, lo, hi)


def gen_random_partition(K: int, min_merges: int = 0, max_block: int | None = None,
                         seed: int = 0, ids=None) -> Partition:
    """Shuffle the ids and cut them into blocks.

    Block sizes are drawn so that the number of merges (sum of size - 1) is at
    least ``min_merges`` and no block exceeds ``max_block``.
    """
    max_block = K if max_block is None else max_block
    ids = list(range(1, K + 1)) if ids is None else list(ids)
    if K < 1 or max_block < 1 or min_merges < 0 or min_merges > K - 1:
        raise ValueError("infeasible partition options")
    # merges = K - (number of blocks), so the block count is bounded above
    max_blocks = K - min_merges
    min_blocks = -(-K // max_block)
    if min_blocks > max_blocks:
        raise ValueError("infeasible partition options")
    rng = stream(seed, _PARTITION)
    order = [ids[i] for i in rng.permutation(K)]
    nblocks = int(rng.integers(min_blocks, max_blocks + 1))
    # spread K items over nblocks with sizes in [1, max_block]
    sizes = [1] * nblocks
    for _ in range(K - nblocks):
        room = [j for j in range(nblocks) if sizes[j] < max_block]
        sizes[room[int(rng.integers(len(room)))]] += 1
    blocks, pos = [], 0
    for s in sizes:
        blocks.append(tuple(order[pos:pos + s]))
        pos += s
    return Partition(tuple(blocks))


def _ellipse(cx: float, cy: float) -> QuadConstraint:
    # (x1 - cx)^2 + (x2 - cy)^2 / 4 <= 1
    return QuadConstraint.diagonal([1.0, 0.25], [-2.0 * cx, -0.5 * cy], cx * cx + 0.25 * cy * cy - 1.0)


def example_instance() -> CQDP:
    """min 0.2 x1 + x2 over three two-ellipse disjunctions, box [-20, 20]^2."""
    centers = [
        [(0.0, 5.0), (5.0, 2.0)],
        [(0.0, 2.0), (5.0, 5.0)],
        [(0.0, 3.5), (5.0, 3.5)],
    ]
    disjunctions = [[[_ellipse(*xy)] for xy in pair] for pair in centers]
    return make_program([0.2, 1.0], disjunctions, [-20.0, -20.0], [20.0, 20.0])


# published multipliers of the hull relaxation of the example
EXAMPLE_HULL_MULTIPLIERS = {1: [0.200, 0.334], 2: [0.0, 0.0], 3: [0.0, 0.666]}


def gen_points(N: int, D: int, K_true: int, spread: float = 0.05, seed: int = 0) -> np.ndarray:
    """Gaussian blobs around uniform centers, min-max normalized into [0, 1]^D."""
    if not N >= K_true >= 1:
        raise ValueError("need N >= K_true >= 1")
    rng = stream(seed, _POINTS)
    centers = rng.uniform(0.0, 1.0, (K_true, D))
    labels = np.arange(N) % K_true
    pts = centers[labels] + spread * rng.standard_normal((N, D))
    # truncate to three standard deviations around each center
    pts = np.clip(pts, centers[labels] - 3 * spread, centers[labels] + 3 * spread)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((pts - lo) / span, 0.0, 1.0)


def points_to_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(points, dtype=float):
        w.writerow([f"{x:.17g}" for x in row])
    return buf.getvalue()


def points_from_csv(text: str) -> np.ndarray:
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
    return np.array(rows, dtype=float)
