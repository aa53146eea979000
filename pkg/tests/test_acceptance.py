"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from conftest import brute_kmeans, dnf_optimum, feasible_seeds
from pbskit import cli
from pbskit.dual import DualConfig, dual_ascent, evaluate_lr
from pbskit.instances import GenSpec, gen_cqdp, gen_points, gen_random_partition
from pbskit.kmeans import (KMeansProblem, det_partition, exact_kmeans, gap_closed, kmeans_lower_bound, lloyd,
                           rand_partition)
from pbskit.model import Partition, apply_basic_step, project_multipliers
from pbskit.partition import corollary2_report, partition_relaxation, solve_to_optimality

PAIRS = [(1, 2), (1, 3), (2, 3)]
CHAIN_TOL = 1e-6


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def pair_partition(k, l):
    return Partition(((k, l), *[(i,) for i in (1, 2, 3) if i not in (k, l)]))


def test_criterion_1_example_values(example, verdict):
    z = solve_to_optimality(example).value
    t0 = time.perf_counter()
    hull = dual_ascent(example, DualConfig(max_iter=2000)).best_value
    dt = time.perf_counter() - t0
    ok = abs(z - 2.99) <= 0.01 and abs(hull - 1.97) <= 0.02 and dt <= 5
    verdict(1, ok, f"z*={z:.4f} (2.99+-0.01) dual={hull:.4f} (1.97+-0.02) in {dt:.2f}s (<=5s)")


def test_criterion_2_pseudo_basic_steps(example, hull_multipliers, verdict):
    expected = {(1, 2): 2.31, (1, 3): 2.99, (2, 3): 2.31}
    parts, ok = [], True
    for pair in PAIRS:
        t0 = time.perf_counter()
        total = partition_relaxation(example, hull_multipliers, pair_partition(*pair)).total
        dt = time.perf_counter() - t0
        good = abs(total - expected[pair]) <= 0.02 and dt < 1
        ok &= good
        parts.append(f"{pair}: {total:.4f} vs {expected[pair]} in {dt:.3f}s")
    verdict(2, ok, "; ".join(parts))


def test_criterion_3_basic_steps(example, verdict):
    expected = {(1, 2): 2.99, (1, 3): 2.99, (2, 3): 2.45}
    parts, ok = [], True
    for pair in PAIRS:
        t0 = time.perf_counter()
        merged = apply_basic_step(example, *pair, prune_empty=True)
        best = dual_ascent(merged, DualConfig(max_iter=2000)).best_value
        dt = time.perf_counter() - t0
        good = abs(best - expected[pair]) <= 0.05 and dt <= 10
        ok &= good
        parts.append(f"{pair}: {best:.4f} vs {expected[pair]} in {dt:.2f}s")
    verdict(3, ok, "; ".join(parts))


def test_criterion_4_bound_chain(verdict):
    t0 = time.perf_counter()
    seeds = feasible_seeds(20, 10, 4, 3)
    worst, failures, cases = np.inf, [], 0
    for seed in seeds:
        prog = gen_cqdp(GenSpec(n=10, K=4, D=3, seed=seed))
        z_star = dnf_optimum(prog)
        trace = dual_ascent(prog, DualConfig(max_iter=500))
        for j in range(3):
            part = gen_random_partition(4, min_merges=1, max_block=4, seed=1000 * seed + j)
            rep = corollary2_report(prog, trace.best_multipliers, part, dual=DualConfig(max_iter=500),
                                    lr_hull=trace.best_value, with_z_star=False, multiplier_source="dual ascent")
            # dual ascent's gap: the merged program's ascent may stop short, but
            # it starts at L_P, so the only slack is solver accuracy
            tol = CHAIN_TOL + rep.extra["post_bs_multiplier_violation"]
            chain = [z_star, rep.z_post_bs_dual, rep.l_partition, rep.lr_plain]
            slack = min(a + tol - b for a, b in zip(chain, chain[1:]))
            worst = min(worst, slack)
            cases += 1
            if slack < 0:
                failures.append((seed, part.blocks, chain))
    dt = time.perf_counter() - t0
    ok = not failures and dt <= 600
    verdict(4, ok, f"{cases} cases, min slack {worst:.3g}, failures {failures[:2]}, {dt:.1f}s (<=600s)")


def test_criterion_5_monotonicity(verdict):
    rng = np.random.default_rng(55)
    worst, cases = np.inf, 0
    for seed in feasible_seeds(50, 5, 6, 3):
        prog = gen_cqdp(GenSpec(n=5, K=6, D=3, seed=seed))
        parts = [gen_random_partition(6, min_merges=1, max_block=4, seed=100 * seed + j) for j in range(5)]
        for _ in range(20):
            lam = project_multipliers({k: rng.normal(0, 300, 5) for k in prog.ids}, prog.c)
            lr = evaluate_lr(prog, lam).total
            for p in parts:
                worst = min(worst, partition_relaxation(prog, lam, p).total - lr)
                cases += 1
    verdict(5, worst >= -1e-6, f"{cases} cases, min L_P - LR = {worst:.3g} (>= -1e-6)")


def test_criterion_6_improvement_fraction(verdict):
    t0 = time.perf_counter()
    lines, ok, fractions = [], True, []
    for seed in feasible_seeds(10, 10, 8, 5):
        prog = gen_cqdp(GenSpec(n=10, K=8, D=5, seed=seed))
        trace = dual_ascent(prog, DualConfig(max_iter=2000))
        part = gen_random_partition(8, min_merges=4, max_block=5, seed=seed)
        rep = corollary2_report(prog, trace.best_multipliers, part, lr_hull=trace.best_value,
                                with_z_star=False, multiplier_source="dual ascent")
        frac = rep.improvement_fraction
        between = trace.best_value - CHAIN_TOL <= rep.l_partition <= rep.z_post_bs_dual + CHAIN_TOL
        in_range = frac is None or -1e-12 <= frac <= 1 + 1e-6
        ok &= between and in_range
        fractions.append(frac)
        lines.append(f"seed {seed}: {'n/a' if frac is None else f'{100 * frac:.1f}%'}")
    dt = time.perf_counter() - t0
    ok &= dt <= 900
    shown = [f for f in fractions if f is not None]
    verdict(6, ok, f"{', '.join(lines)}; range {100 * min(shown):.1f}-{100 * max(shown):.1f}% "
                   f"(reference 37.6-93.1%, not asserted); {dt:.0f}s (<=900s)")


def test_criterion_7_exact_kmeans(verdict):
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(2, 11))
        K = int(rng.integers(1, min(3, N) + 1))
        X = rng.uniform(size=(N, int(rng.integers(1, 4))))
        worst = max(worst, abs(exact_kmeans(KMeansProblem(X, K)).ub - brute_kmeans(X, K)))
    dt = time.perf_counter() - t0
    verdict(7, worst <= 1e-9 and dt <= 60, f"max |exact - brute| = {worst:.2g} (<=1e-9), {dt:.1f}s (<=60s)")


def test_criterion_8_kmeans_bound_validity(verdict):
    rng = np.random.default_rng(88)
    worst = -np.inf
    for seed in range(100):
        K = int(rng.integers(2, 5))
        N = int(rng.integers(K + 1, 21))
        X = gen_points(N, int(rng.integers(1, 4)), int(rng.integers(1, K + 1)), spread=0.1, seed=seed)
        prob = KMeansProblem(X, K)
        opt = exact_kmeans(prob).ub
        warm = lloyd(prob, replications=10, seed=seed)
        for part in (det_partition(warm, int(rng.integers(2, 4))),
                     rand_partition(N, int(rng.integers(3, 11)), seed=seed)):
            worst = max(worst, kmeans_lower_bound(prob, part).lb - opt)
    verdict(8, worst <= 1e-9, f"max lb - optimum = {worst:.3g} over 100 instances x 2 partitions (<=1e-9)")


def test_criterion_9_desk_scale(verdict):
    t0 = time.perf_counter()
    prob = KMeansProblem(gen_points(100, 2, 3, seed=9), 3)
    warm = lloyd(prob, replications=100, seed=9)
    lines, ok = [], True
    for name, part in (("alg1", det_partition(warm, 5)), ("alg2", rand_partition(100, 20, seed=9))):
        res = kmeans_lower_bound(prob, part, block_time=60.0)
        ok &= 0 < res.lb <= warm.sse
        lines.append(f"{name}: lb={res.lb:.4f} ub={warm.sse:.4f} gap_closed={gap_closed(res.lb, warm.sse):.3f}")
    dt = time.perf_counter() - t0
    verdict(9, ok and dt <= 900, f"{'; '.join(lines)} (reference 0.93, not asserted); {dt:.1f}s (<=900s)")


def _strip_times(obj):
    if isinstance(obj, dict):
        return {k: _strip_times(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_strip_times(v) for v in obj]
    return obj


def test_criterion_10_determinism(tmp_path, verdict):
    problems = []
    prog = gen_cqdp(GenSpec(n=10, K=8, D=5, seed=feasible_seeds(1, 10, 8, 5)[0]))
    part = gen_random_partition(8, min_merges=4, max_block=5, seed=3)
    runs = []
    worst = 0.0
    for threads in (1, 1, 4):
        trace = dual_ascent(prog, DualConfig(max_iter=300), threads=threads)
        rep = corollary2_report(prog, trace.best_multipliers, part, dual=DualConfig(max_iter=300),
                                lr_hull=trace.best_value, threads=threads)
        worst = max(worst, trace.max_sum_violation, rep.extra["post_bs_multiplier_violation"],
                    trace.best_multipliers.violation(prog.c))
        runs.append(json.dumps(_strip_times(rep.to_json()), sort_keys=True))
    if len(set(runs)) != 1:
        problems.append("threaded/serial bound reports differ")
    kprob = KMeansProblem(gen_points(60, 2, 3, seed=4), 3)
    kpart = rand_partition(60, 15, seed=4)
    if len({kmeans_lower_bound(kprob, kpart, threads=t).lb for t in (1, 1, 3)}) != 1:
        problems.append("K-means bounds differ")
    reports = []
    src = tmp_path / "ex.json"
    cli.main(["example", "-o", str(src)])
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        cli.main(["prelax", str(src), "--partition", "rand:1,2", "--seed", "7", "--iters", "200", "-o", str(out)])
        reports.append(json.dumps(_strip_times(json.loads(out.read_text())), sort_keys=True))
    if reports[0] != reports[1]:
        problems.append("CLI reports differ")
    ok = not problems and worst <= 1e-9
    verdict(10, ok, f"{problems or 'reports identical'}; max multiplier-sum violation {worst:.2g} (<=1e-9)")
