import numpy as np
import pytest

from conftest import dnf_optimum, feasible_seeds
from pbskit.dual import DualConfig, UnboundedRelaxation, dual_ascent, evaluate_lr
from pbskit.instances import GenSpec, gen_cqdp
from pbskit.model import MultiplierSet, QuadConstraint, make_program, project_multipliers

EXAMPLE_CENTERS = {1: [(0, 5), (5, 2)], 2: [(0, 2), (5, 5)], 3: [(0, 3.5), (5, 3.5)]}


def closed_form_lr(lambdas):
    """Ellipses with semi-axes (1, 2): min lam.v = lam.center - sqrt(lam1^2 + 4 lam2^2)."""
    total = 0.0
    for k, centers in EXAMPLE_CENTERS.items():
        lam = np.asarray(lambdas[k], dtype=float)
        total += min(lam @ np.array(ctr) - np.hypot(lam[0], 2 * lam[1]) for ctr in centers)
    return total


def test_hull_multipliers(example, hull_multipliers):
    lr = evaluate_lr(example, hull_multipliers)
    assert lr.total == pytest.approx(1.97, abs=0.02)
    assert lr.total == pytest.approx(closed_form_lr(hull_multipliers.lambdas), abs=1e-7)
    assert list(lr.per_disjunction) == [1, 2, 3]
    for k, (val, x, i) in lr.per_disjunction.items():
        con = example.disjunction(k).disjuncts[i].constraints[0]
        assert con.value(x) <= 1e-7


def test_uniform_split(example):
    lam = project_multipliers({k: [0, 0] for k in (1, 2, 3)}, example.c)
    v = evaluate_lr(example, lam).total
    assert v == pytest.approx(closed_form_lr(lam.lambdas), abs=1e-7)
    assert v <= 1.97


def test_single_disjunction():
    cons = [[QuadConstraint.diagonal([1, 1], [-2 * a, 0], a * a - 1)] for a in (0.0, 3.0)]
    prog = make_program([1.0, 0.5], [cons], [-10, -10], [10, 10])
    lr = evaluate_lr(prog, MultiplierSet({1: prog.c}))
    assert lr.total == pytest.approx(-np.hypot(1, 0.5), abs=1e-7)
    trace = dual_ascent(prog)
    assert trace.converged and len(trace.iterates) == 1
    assert np.array_equal(trace.best_multipliers[1], prog.c)


def test_ties_go_to_lowest_index():
    con = QuadConstraint.diagonal([1, 1], [0, 0], -1)
    prog = make_program([1.0, 0.0], [[[con], [con]]], [-5, -5], [5, 5])
    assert evaluate_lr(prog, MultiplierSet({1: prog.c})).per_disjunction[1][2] == 0


def test_unbounded(example):
    with pytest.raises(UnboundedRelaxation):
        evaluate_lr(example, MultiplierSet({1: [0.2, 1], 2: [0, 0], 3: [0, 0.1]}))


def test_dual_example(example):
    trace = dual_ascent(example, DualConfig(max_iter=2000))
    assert trace.best_value == pytest.approx(1.97, abs=0.02)
    assert trace.best_value == max(v for _, v, _ in trace.iterates)
    assert trace.max_sum_violation <= 1e-9
    assert trace.best_multipliers.violation(example.c) <= 1e-9


def test_concave():
    rng = np.random.default_rng(5)
    prog = gen_cqdp(GenSpec(n=4, K=3, D=3, seed=2))
    for _ in range(100):
        a = project_multipliers({k: rng.normal(0, 300, 4) for k in prog.ids}, prog.c)
        b = project_multipliers({k: rng.normal(0, 300, 4) for k in prog.ids}, prog.c)
        mid = project_multipliers({k: (a[k] + b[k]) / 2 for k in prog.ids}, prog.c)
        lhs = evaluate_lr(prog, mid).total
        rhs = (evaluate_lr(prog, a).total + evaluate_lr(prog, b).total) / 2
        assert lhs >= rhs - 1e-7 * max(1.0, abs(rhs))


@pytest.mark.parametrize("seed", feasible_seeds(5, 3, 3, 2))
def test_weak_duality(seed):
    prog = gen_cqdp(GenSpec(n=3, K=3, D=2, seed=seed))
    trace = dual_ascent(prog, DualConfig(max_iter=300))
    assert trace.best_value <= dnf_optimum(prog) + 1e-6 * max(1, abs(trace.best_value))


def test_monotone_in_iterations(example):
    values = [dual_ascent(example, DualConfig(max_iter=m)).best_value for m in (1, 10, 100, 400)]
    assert values == sorted(values)


def test_polyak(example):
    # a tight target converges; the loose one (z*) still only improves
    tight = dual_ascent(example, DualConfig(max_iter=300, step_rule="polyak", upper_bound=1.98))
    assert 1.9 <= tight.best_value <= 1.98
    loose = dual_ascent(example, DualConfig(max_iter=300, step_rule="polyak", upper_bound=2.99))
    assert loose.iterates[0][1] < loose.best_value <= 1.98
    with pytest.raises(ValueError):
        dual_ascent(example, DualConfig(step_rule="polyak"))


def test_csv(example):
    trace = dual_ascent(example, DualConfig(max_iter=5))
    lines = trace.to_csv().splitlines()
    assert lines[0] == "iteration,value,step" and len(lines) == 6
    it, val, step = lines[3].split(",")
    assert int(it) == 2 and float(step) == pytest.approx(np.linalg.norm(example.c) / np.sqrt(2) / 12)
