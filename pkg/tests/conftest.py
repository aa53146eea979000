import itertools
from functools import lru_cache

import cvxpy as cp
import numpy as np
import pytest

from pbskit.instances import GenSpec, gen_cqdp
from pbskit.model import InfeasibleProgram
from pbskit.partition import solve_to_optimality


def cvx_linmin(lam, constraints, box=None):
    """Independent oracle: min lam.v over an intersection, solved by Clarabel."""
    n = len(constraints[0].b)
    v = cp.Variable(n)
    cons = []
    for c in constraints:
        Q = np.asarray(c.Q, dtype=float)
        L = np.linalg.cholesky(Q)
        cons.append(cp.sum_squares(L.T @ v) + c.b @ v + c.gamma <= 0)
    if box is not None:
        cons += [v >= box[0], v <= box[1]]
    prob = cp.Problem(cp.Minimize(np.asarray(lam, dtype=float) @ v), cons)
    attempts = [dict(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10),
                dict(solver=cp.CLARABEL), dict(solver=cp.CVXOPT)]
    for opts in attempts:
        try:
            prob.solve(**opts)
            break
        except cp.error.SolverError:
            continue
    else:
        raise RuntimeError("every oracle solver failed")
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        return np.inf, None
    return prob.value, v.value


def dnf_optimum(program, mu=None, ids=None):
    """Enumerate every selection of one disjunct per disjunction (no pruning)."""
    ids = sorted(program.ids) if ids is None else sorted(ids)
    mu = program.c if mu is None else np.asarray(mu, dtype=float)
    best = np.inf
    for sel in itertools.product(*[program.disjunction(k).disjuncts for k in ids]):
        cons = [c for d in sel for c in d.constraints]
        val, _ = cvx_linmin(mu, cons, program.box)
        best = min(best, val)
    return best


@lru_cache(maxsize=None)
def feasible_seeds(count, n, K, D, start=1):
    out, seed = [], start
    while len(out) < count:
        try:
            solve_to_optimality(gen_cqdp(GenSpec(n=n, K=K, D=D, seed=seed)))
            out.append(seed)
        except InfeasibleProgram:
            pass
        seed += 1
    return tuple(out)


def brute_kmeans(X, K):
    """Optimal SSE over all restricted-growth label strings."""
    X = np.asarray(X, dtype=float)
    N = len(X)
    best = np.inf

    def rec(i, labels, used):
        nonlocal best
        if i == N:
            lab = np.array(labels)
            total = sum(float(np.sum((X[lab == k] - X[lab == k].mean(axis=0)) ** 2)) for k in range(used))
            best = min(best, total)
            return
        for k in range(min(K, used + 1)):
            rec(i + 1, labels + [k], max(used, k + 1))

    rec(0, [], 0)
    return best


@pytest.fixture
def example():
    from pbskit.instances import example_instance

    return example_instance()


@pytest.fixture
def hull_multipliers():
    from pbskit.instances import EXAMPLE_HULL_MULTIPLIERS
    from pbskit.model import MultiplierSet

    return MultiplierSet(EXAMPLE_HULL_MULTIPLIERS)
