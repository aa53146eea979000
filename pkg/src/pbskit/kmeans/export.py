"""MIQCP text models of K-means in an LP-file dialect.

Quadratic terms sit inside square brackets, e.g. ``[ c_1_1 ^2 - t_1_1_1 * y_1_1 ]``.
Sections: ``Minimize``, ``Subject To`` (one named row per line), ``Bounds``,
``Binary`` and ``End``.  Indices in names are 1-based.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .core import KMeansProblem


@dataclass
class MIQCPExport:
    format: str
    text: str
    stats: dict
    big_m: dict = field(default_factory=dict)


def pairwise_max(points) -> np.ndarray:
    """M_i: largest squared distance from point i to any point."""
    P = np.asarray(points, dtype=float)
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=2)
    return d2.max(axis=1)


def _fmt(x: float) -> str:
    return repr(float(x))


def _terms(pairs) -> str:
    """Linear expression from (coefficient, name) pairs, zero terms dropped."""
    out = []
    for coef, name in pairs:
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        out.append(f"{sign} {name}" if mag == 1 else f"{sign} {_fmt(mag)} {name}")
    s = " ".join(out)
    return s[2:] if s.startswith("+ ") else s


class _Writer:
    def __init__(self):
        self.rows: list[str] = []
        self.bounds: list[str] = []
        self.binaries: list[str] = []

    def row(self, name: str, expr: str, sense: str, rhs: float) -> None:
        self.rows.append(f" {name}: {expr} {sense} {_fmt(rhs)}")

    def text(self, objective: str) -> str:
        lines = ["\\ K-means clustering", "Minimize", f" obj: {objective}", "Subject To", *self.rows,
                 "Bounds", *self.bounds]
        if self.binaries:
            lines += ["Binary", " " + " ".join(self.binaries)]
        lines.append("End")
        return "\n".join(lines) + "\n"


def _common_rows(w: _Writer, N: int, K: int, symmetry: bool, nonempty: bool) -> None:
    for i in range(1, N + 1):
        w.row(f"assign_{i}", _terms((1, f"y_{i}_{k}") for k in range(1, K + 1)), "=", 1)
    if symmetry:
        for k in range(2, K + 1):
            w.row(f"order_{k}", _terms([(1, f"c_{k - 1}_1"), (-1, f"c_{k}_1")]), "<=", 0)
    if nonempty:
        for k in range(1, K + 1):
            w.row(f"nonempty_{k}", _terms((1, f"y_{i}_{k}") for i in range(1, N + 1)), ">=", 1)
    w.binaries = [f"y_{i}_{k}" for i in range(1, N + 1) for k in range(1, K + 1)]


def _bigm(problem: KMeansProblem, symmetry: bool, nonempty: bool) -> MIQCPExport:
    P, N, K, D = problem.points, problem.N, problem.K, problem.D
    M = pairwise_max(P)
    w = _Writer()
    for i in range(1, N + 1):
        p = P[i - 1]
        for k in range(1, K + 1):
            # sum_j (p_j - c_kj)^2 - M_i (1 - y_ik) - d_i <= 0
            lin = [(-2.0 * p[j - 1], f"c_{k}_{j}") for j in range(1, D + 1)]
            lin += [(float(M[i - 1]), f"y_{i}_{k}"), (-1, f"d_{i}")]
            quad = " + ".join(f"c_{k}_{j} ^2" for j in range(1, D + 1))
            w.row(f"dist_{i}_{k}", f"{_terms(lin)} + [ {quad} ]", "<=", float(M[i - 1]) - float(p @ p))
    _common_rows(w, N, K, symmetry, nonempty)
    w.bounds = [f" 0 <= c_{k}_{j} <= 1" for k in range(1, K + 1) for j in range(1, D + 1)]
    w.bounds += [f" d_{i} >= 0" for i in range(1, N + 1)]
    text = w.text(_terms((1, f"d_{i}") for i in range(1, N + 1)))
    return MIQCPExport("bigm", text, parse_stats(text), {"M": M.tolist()})


def _hull(problem: KMeansProblem, symmetry: bool, nonempty: bool) -> MIQCPExport:
    P, N, K, D = problem.points, problem.N, problem.K, problem.D
    M = pairwise_max(P)
    w = _Writer()
    rng_k, rng_i, rng_j = range(1, K + 1), range(1, N + 1), range(1, D + 1)
    for i in rng_i:
        w.row(f"dsum_{i}", _terms([(1, f"d_{i}")] + [(-1, f"dp_{i}_{k}") for k in rng_k]), "=", 0)
    for k in rng_k:
        for i in rng_i:
            for j in rng_j:
                w.row(f"csplit_{k}_{i}_{j}",
                      _terms([(1, f"c_{k}_{j}"), (-1, f"cp0_{k}_{i}_{j}"), (-1, f"cp1_{k}_{i}_{j}")]), "=", 0)
    for i in rng_i:
        p = P[i - 1]
        for k in rng_k:
            lin = [(float(p @ p), f"y_{i}_{k}")]
            lin += [(-2.0 * p[j - 1], f"cp1_{k}_{i}_{j}") for j in rng_j]
            lin += [(1, f"t_{k}_{i}_{j}") for j in rng_j] + [(-1, f"dp_{i}_{k}")]
            w.row(f"dcopy_{i}_{k}", _terms(lin), "<=", 0)
    for k in rng_k:
        for i in rng_i:
            for j in rng_j:
                w.row(f"cone_{k}_{i}_{j}", f"[ cp1_{k}_{i}_{j} ^2 - t_{k}_{i}_{j} * y_{i}_{k} ]", "<=", 0)
    for k in rng_k:
        for i in rng_i:
            for j in rng_j:
                # tightened form of -M(1 - y) <= c'_0 <= M(1 - y) on the unit cube
                w.row(f"off_{k}_{i}_{j}", _terms([(1, f"cp0_{k}_{i}_{j}"), (1, f"y_{i}_{k}")]), "<=", 1)
    _common_rows(w, N, K, symmetry, nonempty)
    b = [f" 0 <= c_{k}_{j} <= 1" for k in rng_k for j in rng_j]
    b += [f" 0 <= cp{s}_{k}_{i}_{j} <= 1" for s in (0, 1) for k in rng_k for i in rng_i for j in rng_j]
    b += [f" 0 <= d_{i} <= {_fmt(M[i - 1])}" for i in rng_i]
    b += [f" 0 <= dp_{i}_{k} <= {_fmt(M[i - 1])}" for i in rng_i for k in rng_k]
    b += [f" t_{k}_{i}_{j} >= 0" for k in rng_k for i in rng_i for j in rng_j]
    w.bounds = b
    text = w.text(_terms((1, f"d_{i}") for i in rng_i))
    L = np.zeros((K, D))
    U = np.ones((K, D))
    return MIQCPExport("hull", text, parse_stats(text), {"M": 1.0, "L": L.tolist(), "U": U.tolist()})


def export_miqcp(problem: KMeansProblem, format: str = "bigm", symmetry: bool = False,
                 nonempty: bool = False) -> MIQCPExport:
    if format == "bigm":
        return _bigm(problem, symmetry, nonempty)
    if format == "hull":
        return _hull(problem, symmetry, nonempty)
    raise ValueError(f"unknown format {format!r}")


_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def parse_stats(text: str) -> dict:
    """Count variables, rows and binaries by reading the model text back."""
    section = None
    names: set = set()
    rows = quad_rows = 0
    binaries: set = set()
    headers = {"minimize": "obj", "subject to": "rows", "bounds": "bounds", "binary": "binary", "end": None}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if line.lower() in headers:
            section = headers[line.lower()]
            continue
        if section in ("obj", "rows"):
            label, _, expr = line.partition(":")
            if section == "rows":
                rows += 1
                quad_rows += "[" in expr
            names.update(_NAME.findall(expr))
        elif section == "bounds":
            names.update(_NAME.findall(line))
        elif section == "binary":
            found = _NAME.findall(line)
            binaries.update(found)
            names.update(found)
    return {"variables": len(names), "constraints": rows, "quadratic_constraints": quad_rows,
            "binaries": len(binaries)}
