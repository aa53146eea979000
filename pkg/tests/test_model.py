import json

import numpy as np
import pytest

from conftest import cvx_linmin
from pbskit.instances import EXAMPLE_HULL_MULTIPLIERS, GenSpec, gen_cqdp
from pbskit.kernels import feasibility
from pbskit.model import (CQDP, MultiplierSet, Partition, QuadConstraint, apply_basic_step, make_program,
                          project_multipliers, to_dnf, validate)


def test_example_is_valid(example):
    assert validate(example) == []


def test_non_pd_violation(example):
    doc = example.to_json()
    doc["disjunctions"][0]["disjuncts"][0]["constraints"][0]["Q_diag"] = [1.0, 0.0]
    bad = CQDP.from_json.__func__  # bypass the loader's own check below
    with pytest.raises(ValueError):
        CQDP.from_json(doc)
    con = QuadConstraint.diagonal([1.0, 0.0], [0, -2.5], 5.25)
    prog = make_program([0.2, 1], [[[con]]], [-20, -20], [20, 20])
    kinds = [v.kind for v in validate(prog)]
    assert kinds == ["non-positive-definite"]
    assert bad is not None


def test_wrong_cost_length(example):
    prog = CQDP(example.n, [0.2, 1, 0], example.disjunctions, example.lo, example.hi)
    assert [v.kind for v in validate(prog)] == ["dimension mismatch"]


def test_json_roundtrip(example):
    text = example.dumps()
    back = CQDP.loads(text)
    assert back.dumps() == text
    assert json.loads(text)["disjunctions"][0]["disjuncts"][0]["constraints"][0]["gamma"] == 5.25


def test_basic_step_counts(example):
    merged = apply_basic_step(example, 1, 2)
    assert merged.K == 2 and len(merged.disjunction(1)) == 4
    pruned = apply_basic_step(example, 1, 2, prune_empty=True)
    # the oracle: an independent solver decides each of the four intersections
    d1, d2 = example.disjunction(1).disjuncts, example.disjunction(2).disjuncts
    nonempty = sum(np.isfinite(cvx_linmin([0, 0], list(a.constraints + b.constraints))[0])
                   for a in d1 for b in d2)
    assert len(pruned.disjunction(1)) == nonempty == 2
    assert [d.provenance for d in pruned.disjunction(1).disjuncts] == [((1, 0), (2, 0)), ((1, 1), (2, 1))]


def test_basic_step_same_pair(example):
    with pytest.raises(ValueError):
        apply_basic_step(example, 2, 2)
    with pytest.raises(KeyError):
        apply_basic_step(example, 1, 9)


def test_dnf(example):
    assert len(to_dnf(example, prune_empty=False)) == 8
    dnf = to_dnf(example)
    assert [tuple(j for _, j in d.provenance) for d in dnf.disjuncts] == [(0, 0, 0), (1, 1, 1)]
    for d in dnf.disjuncts:
        assert sorted(k for k, _ in d.provenance) == [1, 2, 3]
        assert feasibility(list(d.constraints), example.box).status == "Feasible"


def test_dnf_single_disjunction():
    prog = make_program([1, 0], [[[QuadConstraint.diagonal([1, 1], [0, 0], -1)]]], [-5, -5], [5, 5])
    assert to_dnf(prog) is prog.disjunctions[0]


def test_dnf_guard():
    with pytest.raises(ValueError):
        to_dnf(gen_cqdp(GenSpec()), max_disjuncts=10 ** 4)


def test_basic_step_preserves_feasible_set():
    rng = np.random.default_rng(0)
    for seed in range(1, 6):
        prog = gen_cqdp(GenSpec(n=3, K=3, D=3, seed=seed))
        after = apply_basic_step(prog, 1, 3)
        # points near the disjunct centers, so both outcomes occur
        centers = np.array([-0.5 * np.linalg.solve(c.Q, c.b) for d in prog.disjunctions
                            for dj in d.disjuncts for c in dj.constraints])
        pts = centers[rng.integers(len(centers), size=200)] + rng.normal(0, 1.5, (200, 3))
        for p in pts:
            assert prog.contains(p) == after.contains(p)


class TestMultipliers:
    def test_uniform_split(self):
        lam = project_multipliers({1: [0, 0], 2: [0, 0], 3: [0, 0]}, [0.2, 1])
        for k in (1, 2, 3):
            assert np.allclose(lam[k], [0.2 / 3, 1 / 3])

    def test_idempotent(self):
        lam = project_multipliers(EXAMPLE_HULL_MULTIPLIERS, [0.2, 1])
        for k, v in EXAMPLE_HULL_MULTIPLIERS.items():
            assert np.allclose(lam[k], v, atol=1e-15)
        again = project_multipliers(lam.lambdas, [0.2, 1])
        assert all(np.array_equal(again[k], lam[k]) for k in lam.lambdas)

    def test_perturbed_block(self):
        delta = np.array([0.03, -0.06])
        raw = {k: np.array(v, dtype=float) for k, v in EXAMPLE_HULL_MULTIPLIERS.items()}
        raw[2] = raw[2] + delta
        lam = project_multipliers(raw, [0.2, 1])
        for k, v in EXAMPLE_HULL_MULTIPLIERS.items():
            expect = np.array(v) + (delta if k == 2 else 0) - delta / 3
            assert np.allclose(lam[k], expect, atol=1e-12)

    def test_sum_invariant_random(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            K, n = int(rng.integers(1, 9)), int(rng.integers(1, 11))
            c = rng.uniform(-1000, 1000, n)
            lam = project_multipliers({k: rng.normal(0, 500, n) for k in range(1, K + 1)}, c)
            assert lam.violation(c) <= 1e-9

    def test_empty(self):
        with pytest.raises(ValueError):
            project_multipliers({}, [1.0])

    def test_json(self):
        lam = MultiplierSet(EXAMPLE_HULL_MULTIPLIERS)
        assert MultiplierSet.from_json(json.loads(json.dumps(lam.to_json()))).to_json() == lam.to_json()


class TestPartition:
    def test_overlap(self):
        with pytest.raises(ValueError):
            Partition(((1, 2), (2, 3)))

    def test_empty_block(self):
        with pytest.raises(ValueError):
            Partition(((1,), ()))

    def test_cover(self):
        with pytest.raises(ValueError):
            Partition(((1, 2),)).check([1, 2, 3])
        Partition(((3, 1), (2,))).check([1, 2, 3])

    def test_json(self):
        p = Partition(((1, 2), (3,)))
        assert Partition.from_json(p.to_json()) == p
