"""Decomposed Lagrangian relaxation and projected subgradient ascent on its dual."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .kernels import DEFAULT_CONFIG, SolverConfig, Status
from .model import CQDP, MultiplierSet, project_multipliers

SUM_TOL = 1e-6


class UnboundedRelaxation(ValueError):
    """Multipliers do not sum to the cost vector; the relaxation is unbounded."""


class SolverFailure(RuntimeError):
    pass


@dataclass
class LRValue:
    total: float
    # id -> (value, argmin, chosen disjunct index)
    per_disjunction: dict

    def argmins(self) -> dict:
        return {k: v[1] for k, v in self.per_disjunction.items()}


def _min_over_disjunction(program: CQDP, k: int, lam, config: SolverConfig):
    d = program.disjunction(k)
    values, argmins, statuses = d.solver(config).minimize(lam, program.box)
    if any(s is Status.ITERATION_LIMIT for s in statuses):
        raise SolverFailure(f"barrier iteration limit inside disjunction {k}")
    i = int(np.argmin(values))  # first minimum: ties go to the lowest index
    return float(values[i]), argmins[i], i


def evaluate_lr(program: CQDP, multipliers: MultiplierSet, config: SolverConfig = DEFAULT_CONFIG,
                threads: int = 1) -> LRValue:
    """Sum over disjunctions of min lambda_k . v over the disjunction."""
    if multipliers.violation(program.c) > SUM_TOL:
        raise UnboundedRelaxation("multipliers must sum to c")
    ids = sorted(program.ids)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda k: _min_over_disjunction(program, k, multipliers[k], config), ids))
    else:
        parts = [_min_over_disjunction(program, k, multipliers[k], config) for k in ids]
    total = 0.0
    for p in parts:
        total += p[0]
    return LRValue(total, dict(zip(ids, parts)))


@dataclass
class DualConfig:
    max_iter: int = 2000
    # "diminishing" scales the subgradient by a / (b + t); "polyak" needs
    # upper_bound
    step_rule: str = "diminishing"
    step_a: Optional[float] = None
    step_b: float = 10.0
    upper_bound: Optional[float] = None
    tolerance: float = 1e-9


@dataclass
class DualTrace:
    best_value: float
    best_multipliers: MultiplierSet
    iterates: list = field(default_factory=list)  # (iteration, value, step)
    converged: bool = False
    max_sum_violation: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "value", "step"])
        for it, val, step in self.iterates:
            w.writerow([it, repr(val), repr(step)])
        return buf.getvalue()


def dual_ascent(program: CQDP, config: DualConfig | None = None, init: MultiplierSet | None = None,
                solver: SolverConfig = DEFAULT_CONFIG, threads: int = 1) -> DualTrace:
    """Projected subgradient ascent on {sum_k lambda_k = c}.

    The subgradient for block k is the minimizer v_k of its subproblem; the
    projection removes the mean over blocks.  Starts from c / K unless
    ``init`` is given.
    """
    cfg = config or DualConfig()
    c = program.c
    ids = sorted(program.ids)
    K = len(ids)
    if init is None:
        lam = project_multipliers({k: np.zeros(program.n) for k in ids}, c)
    else:
        lam = project_multipliers(init.lambdas, c)
    a = cfg.step_a if cfg.step_a is not None else np.linalg.norm(c) / np.sqrt(program.n)
    best_val, best_lam = -np.inf, lam
    trace = DualTrace(best_val, best_lam)
    for it in range(cfg.max_iter):
        viol = lam.violation(c)
        trace.max_sum_violation = max(trace.max_sum_violation, viol)
        lr = evaluate_lr(program, lam, solver, threads)
        if lr.total > best_val:
            best_val, best_lam = lr.total, lam
        V = np.array([lr.per_disjunction[k][1] for k in ids])
        g = V - V.mean(axis=0)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.tolerance or not np.isfinite(lr.total):
            trace.iterates.append((it, lr.total, 0.0))
            trace.converged = np.isfinite(lr.total)
            break
        if cfg.step_rule == "polyak":
            if cfg.upper_bound is None:
                raise ValueError("Polyak steps need an upper bound")
            step = max(cfg.upper_bound - lr.total, 0.0) / gnorm ** 2
            move = step * g
        elif cfg.step_rule == "diminishing":
            step = a / (cfg.step_b + it)
            move = step * g
        else:
            raise ValueError(f"unknown step rule {cfg.step_rule!r}")
        trace.iterates.append((it, lr.total, float(step)))
        lam = project_multipliers({k: lam[k] + move[j] for j, k in enumerate(ids)}, c)
    trace.best_value = best_val
    trace.best_multipliers = best_lam
    return trace
