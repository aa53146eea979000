"""Convex primitives: linear minimization over ellipsoids and their intersections.

Every constraint has the form ``v^T Q v + b^T v + gamma <= 0`` with ``Q``
positive definite.  A single ellipsoid is handled in closed form; an
intersection of several (optionally with a box) goes through a batched
path-following log-barrier Newton method whose inner loop is compiled with
numba, since the problems are small and numerous.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

EMPTY_RADIUS_TOL = 1e-12
FEAS_TOL = 1e-7


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of the barrier method."""

    mu: float = 10.0
    t0: float = 1.0
    gap_tol: float = 1e-8
    feas_tol: float = FEAS_TOL
    max_newton: int = 500
    armijo_alpha: float = 0.01
    armijo_beta: float = 0.5
    newton_tol: float = 1e-10
    # phase 1 stops early once a point this deep inside every constraint is found
    phase1_margin: float = 1e-6


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class EllipsoidGeometry:
    center: np.ndarray
    radius_sq: float
    Q: np.ndarray


@dataclass
class SolveResult:
    value: float
    argmin: Optional[np.ndarray]
    status: Status
    kkt_residual: float = 0.0
    newton_steps: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class FeasibilityResult:
    """Outcome of a phase-1 solve: ``feasible`` is None when undecided."""

    feasible: Optional[bool]
    point: Optional[np.ndarray]
    min_slack: float
    newton_steps: int = 0

    @property
    def status(self) -> str:
        if self.feasible is None:
            return "Unknown"
        return "Feasible" if self.feasible else "Empty"


def _check_pd(Q: np.ndarray) -> None:
    try:
        np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        raise ValueError("quadratic form is not positive definite") from None


def ellipsoid_geometry(constraint) -> Optional[EllipsoidGeometry]:
    """Complete the square; returns None when the set is empty."""
    Q = np.asarray(constraint.Q, dtype=float)
    _check_pd(Q)
    b = np.asarray(constraint.b, dtype=float)
    Qinv_b = np.linalg.solve(Q, b)
    center = -0.5 * Qinv_b
    radius_sq = 0.25 * float(b @ Qinv_b) - float(constraint.gamma)
    if radius_sq < -EMPTY_RADIUS_TOL:
        return None
    return EllipsoidGeometry(center=center, radius_sq=max(radius_sq, 0.0), Q=Q)


def linmin_single(lam, constraint) -> SolveResult:
    """Minimize ``lam . v`` over one ellipsoid in closed form."""
    geom = ellipsoid_geometry(constraint)
    lam = np.asarray(lam, dtype=float)
    if geom is None:
        return SolveResult(np.inf, None, Status.INFEASIBLE)
    Qinv_lam = np.linalg.solve(geom.Q, lam)
    quad = float(lam @ Qinv_lam)
    if quad <= 0.0:
        return SolveResult(0.0, geom.center.copy(), Status.OPTIMAL)
    scale = np.sqrt(geom.radius_sq / quad)
    argmin = geom.center - scale * Qinv_lam
    value = float(lam @ geom.center) - np.sqrt(geom.radius_sq * quad)
    return SolveResult(value, argmin, Status.OPTIMAL)


def constraint_values(constraints, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([v @ c.Q @ v + c.b @ v + c.gamma for c in constraints])


def in_box(v, box, tol: float = 1e-9) -> bool:
    if box is None:
        return True
    lo, hi = box
    return bool(np.all(v >= lo - tol) and np.all(v <= hi + tol))


# ---------------------------------------------------------------------------
# batched barrier machinery
# ---------------------------------------------------------------------------


@dataclass
class _Batch:
    """Padded data of B problems, each with up to m quadratic and p linear rows.

    Quadratic rows: x^T A x + a^T x + alpha <= 0 (masked rows are ignored).
    Linear rows: G x <= h.
    """

    A: np.ndarray  # (B, m, N, N)
    a: np.ndarray  # (B, m, N)
    alpha: np.ndarray  # (B, m)
    qmask: np.ndarray  # (B, m) float 0/1
    G: np.ndarray  # (B, p, N)
    h: np.ndarray  # (B, p)
    c: np.ndarray  # (B, N)
    ncons: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ncons = self.qmask.sum(axis=1) + self.G.shape[1]


_LADDER = 40
_NOISE = 1e-12


@njit(cache=True, nogil=True)
def _follow_one(A, a, alpha, qmask, G, h, c, x0, t0, mu, gap_tol, newton_tol, max_newton,
                arm_a, arm_b, phase1, margin, feas_tol):
    """Barrier path following for one problem (compiled).

    Quadratic rows x^T A_j x + a_j^T x + alpha_j <= 0 (rows with qmask 0 are
    ignored) and linear rows G x <= h.  The line search backtracks over a
    fixed ladder of step sizes; constraint values along the ray are exact
    quadratics in the step, so the barrier change is formed from slack
    ratios, which avoids the cancellation of large t * c.x terms.

    In phase-1 mode the last coordinate is the slack s and the run stops as
    soon as s <= -margin, or when a centered point proves s* > feas_tol.
    Returns (x, t, code, steps, gap bound) with code 0 converged, 1 early
    stop, 2 iteration limit.
    """
    m = alpha.shape[0]
    p = h.shape[0]
    N = x0.shape[0]
    x = x0.copy()
    t = t0
    ncons = p
    for j in range(m):
        if qmask[j] > 0:
            ncons += 1
    steps = 0
    rq = np.ones(m)
    rl = np.empty(p)
    Ax = np.zeros((m, N))
    grad = np.empty(N)
    H = np.empty((N, N))
    while True:
        # slacks and derivatives
        for j in range(m):
            if qmask[j] > 0:
                val = alpha[j]
                for i in range(N):
                    acc = 0.0
                    for k in range(N):
                        acc += A[j, i, k] * x[k]
                    Ax[j, i] = acc
                    val += (acc + a[j, i]) * x[i]
                rq[j] = -val
        for j in range(p):
            val = h[j]
            for i in range(N):
                val -= G[j, i] * x[i]
            rl[j] = val
        for i in range(N):
            grad[i] = t * c[i]
            for k in range(N):
                H[i, k] = 0.0
        for j in range(m):
            if qmask[j] > 0:
                w = 1.0 / rq[j]
                for i in range(N):
                    gi = 2.0 * Ax[j, i] + a[j, i]
                    grad[i] += w * gi
                    for k in range(N):
                        gk = 2.0 * Ax[j, k] + a[j, k]
                        H[i, k] += 2.0 * w * A[j, i, k] + w * w * gi * gk
        for j in range(p):
            w = 1.0 / rl[j]
            for i in range(N):
                grad[i] += w * G[j, i]
                if G[j, i] != 0.0:
                    for k in range(N):
                        H[i, k] += w * w * G[j, i] * G[j, k]
        dx = -np.linalg.solve(H, grad)
        dec2 = 0.0
        for i in range(N):
            dec2 -= grad[i] * dx[i]
        resid = (ncons + 0.5 * dec2) / t
        # below the rounding floor of t * c.x further centering is noise
        floor = 0.0
        for i in range(N):
            floor += abs(c[i] * x[i])
        centered = 0.5 * dec2 <= max(newton_tol, _NOISE * (t * floor + ncons))
        if not centered:
            # directional data of every row along dx
            cdx = 0.0
            for i in range(N):
                cdx += c[i] * dx[i]
            slope = t * cdx
            g1 = np.zeros(m)
            g2 = np.zeros(m)
            l1 = np.zeros(p)
            for j in range(m):
                if qmask[j] > 0:
                    s1 = 0.0
                    s2 = 0.0
                    for i in range(N):
                        s1 += (2.0 * Ax[j, i] + a[j, i]) * dx[i]
                        acc = 0.0
                        for k in range(N):
                            acc += A[j, i, k] * dx[k]
                        s2 += acc * dx[i]
                    g1[j] = s1
                    g2[j] = s2
                    slope += s1 / rq[j]
            for j in range(p):
                s1 = 0.0
                for i in range(N):
                    s1 += G[j, i] * dx[i]
                l1[j] = s1
                slope += s1 / rl[j]
            step = 1.0
            found = False
            for _ in range(_LADDER):
                ok = True
                change = t * cdx * step
                for j in range(m):
                    if qmask[j] > 0:
                        r = rq[j] - step * g1[j] - step * step * g2[j]
                        if r <= 0.0:
                            ok = False
                            break
                        change -= np.log(r / rq[j])
                if ok:
                    for j in range(p):
                        r = rl[j] - step * l1[j]
                        if r <= 0.0:
                            ok = False
                            break
                        change -= np.log(r / rl[j])
                if ok and change <= arm_a * step * slope:
                    found = True
                    break
                step *= arm_b
            if found:
                for i in range(N):
                    x[i] += step * dx[i]
            else:
                # no admissible step: numerically centered as far as we can go
                centered = True
            steps += 1
        if phase1:
            s = x[N - 1]
            if s <= -margin or (centered and s - ncons / t > feas_tol):
                return x, t, 1, steps, resid
        if centered:
            if ncons / t < gap_tol:
                return x, t, 0, steps, resid
            t *= mu
        if steps >= max_newton:
            return x, t, 2, steps, resid


def _path_follow(batch: _Batch, x0: np.ndarray, cfg: SolverConfig, phase1: bool = False,
                 gap_tol: Optional[float] = None):
    """Central-path following for every problem in the batch.

    Returns final points, barrier parameters, per-problem status code
    (0 converged, 1 early stop, 2 iteration limit), Newton step counts and
    a bound on the objective gap, (m + decrement^2 / 2) / t.
    """
    gap_tol = cfg.gap_tol if gap_tol is None else gap_tol
    B = x0.shape[0]
    x = np.empty_like(x0)
    t = np.empty(B)
    code = np.empty(B, dtype=int)
    steps = np.empty(B, dtype=int)
    resid = np.empty(B)
    for i in range(B):
        x[i], t[i], code[i], steps[i], resid[i] = _follow_one(
            batch.A[i], batch.a[i], batch.alpha[i], batch.qmask[i], batch.G[i], batch.h[i],
            batch.c[i], np.ascontiguousarray(x0[i], dtype=float), cfg.t0, cfg.mu, gap_tol,
            cfg.newton_tol, cfg.max_newton, cfg.armijo_alpha, cfg.armijo_beta, phase1,
            cfg.phase1_margin, cfg.feas_tol)
    return x, t, code, steps, resid


def _pad_constraints(problems: Sequence[Sequence], n: int, extra_dim: int = 0):
    B = len(problems)
    m = max(len(p) for p in problems)
    N = n + extra_dim
    A = np.zeros((B, m, N, N))
    a = np.zeros((B, m, N))
    alpha = np.zeros((B, m))
    qmask = np.zeros((B, m))
    for i, cons in enumerate(problems):
        for j, c in enumerate(cons):
            A[i, j, :n, :n] = c.Q
            a[i, j, :n] = c.b
            alpha[i, j] = c.gamma
            qmask[i, j] = 1.0
    return A, a, alpha, qmask


def _box_rows(box, B: int, n: int, extra_dim: int = 0):
    N = n + extra_dim
    if box is None:
        return np.zeros((B, 0, N)), np.zeros((B, 0))
    lo, hi = (np.asarray(v, dtype=float) for v in box)
    G = np.zeros((2 * n, N))
    G[:n, :n] = np.eye(n)
    G[n:, :n] = -np.eye(n)
    h = np.concatenate([hi, -lo])
    return np.broadcast_to(G, (B, 2 * n, N)).copy(), np.broadcast_to(h, (B, 2 * n)).copy()


def _start_points(problems, n: int, box) -> np.ndarray:
    x0 = np.zeros((len(problems), n))
    for i, cons in enumerate(problems):
        centers = [-0.5 * np.linalg.solve(c.Q, c.b) for c in cons]
        x0[i] = np.mean(centers, axis=0)
    if box is not None:
        lo, hi = (np.asarray(v, dtype=float) for v in box)
        pad = 1e-3 * (hi - lo)
        x0 = np.clip(x0, lo + pad, hi - pad)
    return x0


def feasibility_batch(problems: Sequence[Sequence], n: int, box=None,
                      config: SolverConfig = DEFAULT_CONFIG) -> list[FeasibilityResult]:
    """Phase-1 solves: minimize s subject to g_j(v) <= s for each problem."""
    B = len(problems)
    A, a, alpha, qmask = _pad_constraints(problems, n, extra_dim=1)
    a[:, :, n] = -qmask  # g_j(v) - s <= 0
    G, h = _box_rows(box, B, n, extra_dim=1)
    c = np.zeros((B, n + 1))
    c[:, n] = 1.0
    batch = _Batch(A, a, alpha, qmask, G, h, c)
    v0 = _start_points(problems, n, box)
    x0 = np.zeros((B, n + 1))
    x0[:, :n] = v0
    g0 = np.array([constraint_values(cons, v) .max() for cons, v in zip(problems, v0)])
    x0[:, n] = g0 + 1.0

    tol = config.feas_tol
    x, t, code, steps, _ = _path_follow(batch, x0, config, phase1=True, gap_tol=1e-11)
    out = []
    for i in range(B):
        v = x[i, :n]
        slack = float(constraint_values(problems[i], v).max())
        lower = slack - batch.ncons[i] / t[i]
        if code[i] == 2 and slack > tol and lower <= tol:
            out.append(FeasibilityResult(None, None, slack, int(steps[i])))
        elif slack <= tol and in_box(v, box):
            out.append(FeasibilityResult(True, v.copy(), slack, int(steps[i])))
        else:
            out.append(FeasibilityResult(False, None, max(slack, lower), int(steps[i])))
    return out


def feasibility(constraints: Sequence, box=None, config: SolverConfig = DEFAULT_CONFIG) -> FeasibilityResult:
    """Certify that the intersection of the constraints (and box) is nonempty or empty."""
    if not constraints:
        raise ValueError("need at least one constraint")
    n = len(constraints[0].b)
    return feasibility_batch([list(constraints)], n, box, config)[0]


def linmin_intersection_batch(lams: np.ndarray, problems: Sequence[Sequence], n: int, box=None,
                              config: SolverConfig = DEFAULT_CONFIG,
                              start: Optional[Sequence[Optional[FeasibilityResult]]] = None
                              ) -> list[SolveResult]:
    """Minimize ``lams[i] . v`` over the intersection of ``problems[i]`` for every i.

    ``start`` may carry cached phase-1 results (one per problem) to skip phase 1.
    """
    B = len(problems)
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    if lams.shape[0] == 1 and B > 1:
        lams = np.repeat(lams, B, axis=0)
    if start is None:
        start = feasibility_batch(problems, n, box, config)
    results: list[Optional[SolveResult]] = [None] * B
    todo, x0, shift = [], [], []
    for i, fr in enumerate(start):
        if fr is None:
            fr = feasibility_batch([problems[i]], n, box, config)[0]
        if fr.feasible is None:
            results[i] = SolveResult(np.inf, None, Status.ITERATION_LIMIT, newton_steps=fr.newton_steps)
        elif not fr.feasible:
            results[i] = SolveResult(np.inf, None, Status.INFEASIBLE, newton_steps=fr.newton_steps)
        elif not np.any(lams[i]):
            results[i] = SolveResult(0.0, fr.point.copy(), Status.OPTIMAL)
        else:
            todo.append(i)
            x0.append(fr.point)
            # near-degenerate intersections are relaxed just enough to own an interior
            shift.append(0.0 if fr.min_slack < -1e-9 else max(fr.min_slack, 0.0) + 1e-9)
    if todo:
        sub = [problems[i] for i in todo]
        A, a, alpha, qmask = _pad_constraints(sub, n)
        alpha = alpha - np.asarray(shift)[:, None] * qmask
        G, h = _box_rows(box, len(sub), n)
        batch = _Batch(A, a, alpha, qmask, G, h, lams[todo])
        x, t, code, steps, resid = _path_follow(batch, np.asarray(x0), config)
        for j, i in enumerate(todo):
            v = x[j]
            status = Status.OPTIMAL if code[j] == 0 else Status.ITERATION_LIMIT
            kkt = float(resid[j])
            results[i] = SolveResult(float(lams[i] @ v), v.copy(), status, kkt, int(steps[j]))
    return results  # type: ignore[return-value]


def linmin_intersection(lam, constraints: Sequence, box=None,
                        config: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    if not constraints:
        raise ValueError("need at least one constraint")
    n = len(constraints[0].b)
    return linmin_intersection_batch(np.asarray(lam, dtype=float)[None, :], [list(constraints)], n, box, config)[0]


# ---------------------------------------------------------------------------
# per-disjunction evaluation
# ---------------------------------------------------------------------------


class DisjunctSolver:
    """Minimizes a linear form over every disjunct of one disjunction.

    Single-constraint disjuncts use the closed form (vectorized); the rest use
    the batched barrier.  Phase-1 points of intersections do not depend on the
    objective, so they are computed once and reused.  Any argmin that leaves
    the box triggers a re-solve with the box rows included.
    """

    def __init__(self, disjuncts: Sequence[Sequence], n: int, config: SolverConfig = DEFAULT_CONFIG):
        self.disjuncts = [list(d) for d in disjuncts]
        self.n = n
        self.config = config
        self.single = [i for i, d in enumerate(self.disjuncts) if len(d) == 1]
        self.multi = [i for i, d in enumerate(self.disjuncts) if len(d) > 1]
        D = len(self.single)
        self._centers = np.zeros((D, n))
        self._radius = np.zeros(D)
        self._Qinv = np.zeros((D, n, n))
        self._empty = np.zeros(D, dtype=bool)
        for j, i in enumerate(self.single):
            c = self.disjuncts[i][0]
            _check_pd(np.asarray(c.Q, dtype=float))
            Qinv = np.linalg.inv(c.Q)
            self._Qinv[j] = Qinv
            self._centers[j] = -0.5 * Qinv @ c.b
            r = 0.25 * float(c.b @ Qinv @ c.b) - float(c.gamma)
            self._empty[j] = r < -EMPTY_RADIUS_TOL
            self._radius[j] = max(r, 0.0)
        self._phase1 = None

    def _phase1_cache(self):
        if self._phase1 is None:
            probs = [self.disjuncts[i] for i in self.multi]
            self._phase1 = feasibility_batch(probs, self.n, None, self.config) if probs else []
        return self._phase1

    def minimize(self, lam, box=None):
        """Return (values, argmins, statuses) for all disjuncts; empty ones get +inf."""
        lam = np.asarray(lam, dtype=float)
        D = len(self.disjuncts)
        values = np.full(D, np.inf)
        argmins = np.full((D, self.n), np.nan)
        statuses = [Status.INFEASIBLE] * D
        redo = []
        if self.single:
            Ql = self._Qinv @ lam
            quad = np.maximum(Ql @ lam, 0.0)
            root = np.sqrt(self._radius * quad)
            vals = self._centers @ lam - root
            with np.errstate(invalid="ignore", divide="ignore"):
                scale = np.where(quad > 0, np.sqrt(self._radius / np.where(quad > 0, quad, 1.0)), 0.0)
            pts = self._centers - scale[:, None] * Ql
            for j, i in enumerate(self.single):
                if self._empty[j]:
                    continue
                values[i], argmins[i], statuses[i] = vals[j], pts[j], Status.OPTIMAL
                if not in_box(pts[j], box):
                    redo.append(i)
        if self.multi:
            res = linmin_intersection_batch(lam[None, :], [self.disjuncts[i] for i in self.multi],
                                            self.n, None, self.config, start=self._phase1_cache())
            for i, r in zip(self.multi, res):
                statuses[i] = r.status
                if r.status is Status.OPTIMAL:
                    values[i], argmins[i] = r.value, r.argmin
                    if not in_box(r.argmin, box):
                        redo.append(i)
                elif r.status is Status.ITERATION_LIMIT:
                    redo.append(i)
        if redo and box is not None:
            res = linmin_intersection_batch(lam[None, :], [self.disjuncts[i] for i in redo],
                                            self.n, box, self.config)
            for i, r in zip(redo, res):
                statuses[i] = r.status
                values[i] = r.value if r.status is Status.OPTIMAL else np.inf
                argmins[i] = r.argmin if r.argmin is not None else np.nan
        return values, argmins, statuses
