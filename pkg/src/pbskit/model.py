"""Disjunctive program data model and structural transformations."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .kernels import SolverConfig, DEFAULT_CONFIG

MULTIPLIER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QuadConstraint:
    """The set {v : v^T Q v + b^T v + gamma <= 0}."""

    Q: np.ndarray
    b: np.ndarray
    gamma: float

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim == 1:
            Q = np.diag(Q)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", np.array(self.b, dtype=float))
        object.__setattr__(self, "gamma", float(self.gamma))
        self.Q.setflags(write=False)
        self.b.setflags(write=False)

    @classmethod
    def diagonal(cls, q, b, gamma) -> "QuadConstraint":
        return cls(np.diag(np.asarray(q, dtype=float)), b, gamma)

    @property
    def n(self) -> int:
        return len(self.b)

    @cached_property
    def is_diagonal(self) -> bool:
        return not np.any(self.Q - np.diag(np.diag(self.Q)))

    def value(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.Q @ v + self.b @ v + self.gamma)

    def to_json(self) -> dict:
        out = {"Q_diag": self.Q.diagonal().tolist()} if self.is_diagonal else {"Q": self.Q.tolist()}
        out["b"] = self.b.tolist()
        out["gamma"] = self.gamma
        return out

    @classmethod
    def from_json(cls, d: Mapping) -> "QuadConstraint":
        if "Q_diag" in d:
            con = cls.diagonal(d["Q_diag"], d["b"], d["gamma"])
        else:
            con = cls(d["Q"], d["b"], d["gamma"])
        if not _is_pd(con.Q):
            raise ValueError("quadratic form is not positive definite")
        return con


@dataclass(frozen=True, eq=False)
class Disjunct:
    constraints: tuple
    provenance: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "provenance", tuple(tuple(p) for p in self.provenance))


@dataclass(frozen=True, eq=False)
class Disjunction:
    id: int
    disjuncts: tuple

    def __post_init__(self):
        object.__setattr__(self, "disjuncts", tuple(self.disjuncts))

    def __len__(self):
        return len(self.disjuncts)

    def solver(self, config: SolverConfig = DEFAULT_CONFIG) -> kernels.DisjunctSolver:
        cache = self.__dict__.setdefault("_solvers", {})
        if config not in cache:
            n = self.disjuncts[0].constraints[0].n
            cache[config] = kernels.DisjunctSolver([d.constraints for d in self.disjuncts], n, config)
        return cache[config]


@dataclass(frozen=True, eq=False)
class CQDP:
    """min c^T x  s.t.  x in every disjunction, lo <= x <= hi."""

    n: int
    c: np.ndarray
    disjunctions: tuple
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.array(self.c, dtype=float))
        object.__setattr__(self, "lo", np.array(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.array(self.hi, dtype=float))
        object.__setattr__(self, "disjunctions", tuple(self.disjunctions))

    @property
    def box(self):
        return (self.lo, self.hi)

    @property
    def ids(self) -> list[int]:
        return [d.id for d in self.disjunctions]

    @property
    def K(self) -> int:
        return len(self.disjunctions)

    def disjunction(self, k: int) -> Disjunction:
        for d in self.disjunctions:
            if d.id == k:
                return d
        raise KeyError(f"unknown disjunction id {k}")

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        return all(any(all(c.value(x) <= tol for c in dj.constraints) for dj in d.disjuncts)
                   for d in self.disjunctions)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "c": self.c.tolist(),
            "box": {"lo": self.lo.tolist(), "hi": self.hi.tolist()},
            "disjunctions": [
                {"id": d.id,
                 "disjuncts": [{"constraints": [c.to_json() for c in dj.constraints],
                                "provenance": [list(p) for p in dj.provenance]}
                               for dj in d.disjuncts]}
                for d in self.disjunctions
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, d: Mapping) -> "CQDP":
        disjunctions = []
        for dd in d["disjunctions"]:
            djs = []
            for i, dj in enumerate(dd["disjuncts"]):
                prov = dj.get("provenance") or [(dd["id"], i)]
                djs.append(Disjunct([QuadConstraint.from_json(c) for c in dj["constraints"]], prov))
            disjunctions.append(Disjunction(int(dd["id"]), djs))
        return cls(int(d["n"]), d["c"], disjunctions, d["box"]["lo"], d["box"]["hi"])

    @classmethod
    def loads(cls, text: str) -> "CQDP":
        return cls.from_json(json.loads(text))


def make_program(c, disjunctions: Iterable[Sequence[Sequence[QuadConstraint]]], lo, hi,
                 ids: Optional[Sequence[int]] = None) -> CQDP:
    """Build a program from nested lists: disjunction -> disjunct -> constraints."""
    disjunctions = list(disjunctions)
    ids = list(ids) if ids is not None else list(range(1, len(disjunctions) + 1))
    built = []
    for k, djs in zip(ids, disjunctions):
        built.append(Disjunction(k, [Disjunct(list(cons), [(k, i)]) for i, cons in enumerate(djs)]))
    c = np.asarray(c, dtype=float)
    return CQDP(len(c), c, built, lo, hi)


def _is_pd(Q) -> bool:
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
        return False
    try:
        np.linalg.cholesky(Q)
        return True
    except np.linalg.LinAlgError:
        return False


@dataclass
class Violation:
    kind: str
    location: str
    detail: str = ""


def validate(program: CQDP) -> list[Violation]:
    """Every invariant violation of the program; empty iff well formed."""
    out = []
    n = program.n
    if program.c.shape != (n,):
        out.append(Violation("dimension mismatch", "c", f"length {program.c.size} != {n}"))
    if program.lo.shape != (n,) or program.hi.shape != (n,):
        out.append(Violation("dimension mismatch", "box"))
    elif np.any(program.lo > program.hi):
        out.append(Violation("bad box", "box", "lo > hi"))
    if not program.disjunctions:
        out.append(Violation("empty", "disjunctions"))
    seen = set()
    for d in program.disjunctions:
        if d.id in seen:
            out.append(Violation("duplicate id", f"disjunction {d.id}"))
        seen.add(d.id)
        if not d.disjuncts:
            out.append(Violation("empty", f"disjunction {d.id}"))
        for i, dj in enumerate(d.disjuncts):
            where = f"disjunction {d.id} disjunct {i}"
            if not dj.constraints:
                out.append(Violation("empty", where))
            prov = list(dj.provenance)
            if not prov or len(set(prov)) != len(prov):
                out.append(Violation("bad provenance", where))
            for j, con in enumerate(dj.constraints):
                loc = f"{where} constraint {j}"
                if con.b.shape != (n,) or con.Q.shape != (n, n):
                    out.append(Violation("dimension mismatch", loc))
                elif not _is_pd(con.Q):
                    out.append(Violation("non-positive-definite", loc))
    return out


def _replace(program: CQDP, disjunctions) -> CQDP:
    return CQDP(program.n, program.c, disjunctions, program.lo, program.hi)


def apply_basic_step(program: CQDP, k: int, l: int, prune_empty: bool = False,
                     config: SolverConfig = DEFAULT_CONFIG) -> CQDP:
    """Replace disjunctions k and l by the disjunction of all pairwise intersections.

    The merged disjunction takes the smaller of the two ids and the position of
    the earlier one.  With ``prune_empty``, intersections certified empty
    (within the box) are dropped; undecided ones are kept.
    """
    if k == l:
        raise ValueError("basic step needs two distinct disjunctions")
    dk, dl = program.disjunction(k), program.disjunction(l)
    merged = [Disjunct(p.constraints + q.constraints, p.provenance + q.provenance)
              for p, q in itertools.product(dk.disjuncts, dl.disjuncts)]
    if prune_empty:
        res = kernels.feasibility_batch([d.constraints for d in merged], program.n, program.box, config)
        merged = [d for d, r in zip(merged, res) if r.feasible is not False]
        if not merged:
            raise InfeasibleProgram(f"basic step on {k} and {l} leaves no nonempty disjunct")
    new = Disjunction(min(k, l), merged)
    out = []
    for d in program.disjunctions:
        if d.id in (k, l):
            if not any(o is new for o in out):
                out.append(new)
        else:
            out.append(d)
    return _replace(program, out)


class InfeasibleProgram(ValueError):
    pass


def merge_block(program: CQDP, block: Iterable[int], prune_empty: bool = True,
                config: SolverConfig = DEFAULT_CONFIG) -> CQDP:
    """Sequential basic steps over one block, in ascending id order."""
    ids = sorted(block)
    for l in ids[1:]:
        program = apply_basic_step(program, ids[0], l, prune_empty, config)
    return program


def to_dnf(program: CQDP, max_disjuncts: int = 10 ** 4, prune_empty: bool = True,
           config: SolverConfig = DEFAULT_CONFIG) -> Disjunction:
    """Bring the whole program into a single disjunction by K-1 basic steps."""
    size = int(np.prod([len(d) for d in program.disjunctions], dtype=object))
    if size > max_disjuncts:
        raise ValueError(f"DNF would have {size} disjuncts, more than {max_disjuncts}")
    if program.K == 1:
        return program.disjunctions[0]
    return merge_block(program, program.ids, prune_empty, config).disjunctions[0]


@dataclass
class MultiplierSet:
    lambdas: dict

    def __post_init__(self):
        self.lambdas = {int(k): np.asarray(v, dtype=float) for k, v in self.lambdas.items()}

    def __getitem__(self, k):
        return self.lambdas[k]

    def total(self) -> np.ndarray:
        return np.sum([self.lambdas[k] for k in sorted(self.lambdas)], axis=0)

    def violation(self, c) -> float:
        return float(np.max(np.abs(self.total() - np.asarray(c, dtype=float))))

    def summed(self, block: Iterable[int]) -> np.ndarray:
        return np.sum([self.lambdas[k] for k in sorted(block)], axis=0)

    def to_json(self) -> dict:
        return {"lambdas": {str(k): self.lambdas[k].tolist() for k in sorted(self.lambdas)}}

    @classmethod
    def from_json(cls, d: Mapping) -> "MultiplierSet":
        return cls({int(k): v for k, v in d["lambdas"].items()})


def project_multipliers(raw: Mapping[int, Sequence[float]], c) -> MultiplierSet:
    """Orthogonal projection onto {sum_k lambda_k = c}."""
    if not raw:
        raise ValueError("no multipliers to project")
    c = np.asarray(c, dtype=float)
    keys = sorted(raw)
    lam = np.array([np.asarray(raw[k], dtype=float) for k in keys])
    if lam.shape[1:] != c.shape:
        raise ValueError("multiplier length does not match c")
    excess = lam.sum(axis=0) - c
    lam = lam - excess / len(keys)
    # push the rounding residue onto the last block so the sum is c to the ulp
    lam[-1] += c - lam.sum(axis=0)
    return MultiplierSet(dict(zip(keys, lam)))


@dataclass(frozen=True)
class Partition:
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(k) for k in b)) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        flat = [k for b in blocks for k in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("partition has an empty block")
        if len(flat) != len(set(flat)):
            raise ValueError("partition blocks overlap")

    @property
    def ids(self) -> set:
        return {k for b in self.blocks for k in b}

    def check(self, ids: Iterable[int]) -> None:
        if self.ids != set(ids):
            raise ValueError("partition does not cover exactly the program's disjunctions")

    @classmethod
    def singletons(cls, ids: Iterable[int]) -> "Partition":
        return cls(tuple((k,) for k in ids))

    def to_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, d: Mapping) -> "Partition":
        return cls(tuple(tuple(b) for b in d["blocks"]))
