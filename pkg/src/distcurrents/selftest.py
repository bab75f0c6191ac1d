"""Exhaustive and randomized property suites for the algebraic layers.

Each property returns a :class:`PropertyResult`; :func:`run_selftest` runs them all.
"""

from __future__ import annotations

from itertools import combinations
from typing import Callable, NamedTuple

import numpy as np

from .exterior import adjoint_entry, graph_nvector, graph_tangent_vectors, laplace_minor, minor, wedge_vectors
from .multiindex import add, complement, enumerate_indices, inversion_parity_sign, remove, sigma

LAPLACE_TOL = 1e-12
GRAPH_TOL = 1e-12


class PropertyResult(NamedTuple):
    name: str
    passed: bool
    checked: int
    worst: float

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "checked": self.checked, "worst": self.worst}


def _subsets(n: int):
    for k in range(n + 1):
        yield from combinations(range(1, n + 1), k)


def sigma_parity(n_max: int = 6) -> PropertyResult:
    """``sigma(alpha, beta)`` against brute-force inversion counts for all disjoint pairs."""
    checked = bad = 0
    for n in range(1, n_max + 1):
        for a in _subsets(n):
            rest = [i for i in range(1, n + 1) if i not in a]
            for k in range(len(rest) + 1):
                for b in combinations(rest, k):
                    checked += 1
                    bad += sigma(a, b) != inversion_parity_sign(a + b)
    return PropertyResult("sigma_parity", bad == 0, checked, float(bad))


def index_algebra(n_max: int = 6) -> PropertyResult:
    """Complement is an involution, ``remove`` inverts ``add`` and ``sigma(a, abar) sigma(abar, a) = (-1)^{k(n-k)}``."""
    checked = bad = 0
    for n in range(1, n_max + 1):
        for k in range(n + 1):
            for a in enumerate_indices(k, n):
                abar = complement(a)
                checked += 1
                ok = complement(abar) == a and len(abar) == n - k
                ok &= sigma(a, abar) * sigma(abar, a) == (-1) ** (k * (n - k))
                for j in abar.entries:
                    ok &= remove(add(a, j), j) == a
                bad += not ok
    return PropertyResult("index_algebra", bad == 0, checked, float(bad))


def _hadamard(A: np.ndarray, a, b) -> float:
    sub = A[np.ix_([j - 1 for j in b], [i - 1 for i in a])]
    return float(np.prod(np.linalg.norm(sub, axis=1)))


def laplace_vs_minor(count: int = 1000, size: int = 4, seed: int = 0) -> PropertyResult:
    """Laplace expansion equals the direct minor on random matrices, every index pair and row.

    The error is measured relative to the Hadamard bound of the submatrix, which keeps
    nearly singular draws from dominating.
    """
    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    for _ in range(count):
        A = rng.standard_normal((size, size))
        for k in range(1, size + 1):
            for a in enumerate_indices(k, size):
                for b in enumerate_indices(k, size):
                    direct = float(minor(A, a.entries, b.entries))
                    scale = _hadamard(A, a.entries, b.entries)
                    for i in b.entries:
                        lap = float(laplace_minor(A, a.entries, b.entries, i))
                        worst = max(worst, abs(lap - direct) / scale)
                        checked += 1
    return PropertyResult("laplace_minor", worst <= LAPLACE_TOL, checked, worst)


def adjugate_identity(count: int = 200, seed: int = 1) -> PropertyResult:
    """``A adj(A) = det(A) I`` for square matrices of order 2..4."""
    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    for _ in range(count):
        m = int(rng.integers(2, 5))
        A = rng.standard_normal((m, m))
        full_idx = tuple(range(1, m + 1))
        adj = np.array([[adjoint_entry(A, full_idx, full_idx, j, i) for j in full_idx] for i in full_idx])
        err = np.max(np.abs(A @ adj - np.linalg.det(A) * np.eye(m)))
        worst = max(worst, float(err) / max(1.0, float(np.prod(np.linalg.norm(A, axis=1)))))
        checked += 1
    return PropertyResult("adjugate_identity", worst <= LAPLACE_TOL, checked, worst)


def graph_vs_wedge(max_total: int = 6, seed: int = 2, trials: int = 5) -> PropertyResult:
    """``graph_nvector`` against the multilinear wedge of the tangent vectors, all ``n + N <= max_total``."""
    rng = np.random.default_rng(seed)
    worst, checked = 0.0, 0
    for n in range(1, max_total):
        for N in range(1, max_total - n + 1):
            for _ in range(trials):
                Du = rng.standard_normal((N, n))
                g = graph_nvector(Du)
                w = wedge_vectors(graph_tangent_vectors(Du))
                for key in set(g.coefficients) | set(w.coefficients):
                    worst = max(worst, abs(g[key] - w[key]))
                    checked += 1
    return PropertyResult("graph_nvector", worst <= GRAPH_TOL, checked, worst)


PROPERTIES: tuple[Callable[[], PropertyResult], ...] = (
    sigma_parity,
    index_algebra,
    laplace_vs_minor,
    adjugate_identity,
    graph_vs_wedge,
)


def run_selftest() -> list[PropertyResult]:
    return [prop() for prop in PROPERTIES]


def summarize(results: list[PropertyResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  checked={r.checked}  worst={r.worst:.3g}" for r in results]
    return "\n".join(lines)

