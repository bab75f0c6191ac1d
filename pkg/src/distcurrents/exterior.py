"""Minors, adjoints and simple k-vectors.

Matrices follow the ``N x n`` convention: rows are target components, columns are
source directions, so ``Du[j, i] = d u^j / d x_i``. Every routine accepts a batch of
matrices with shape ``(..., N, n)`` and returns an array of shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .multiindex import (
    InvalidIndexError,
    MultiIndex,
    complement,
    enumerate_indices,
    sigma,
)


def _as_tuple(idx) -> tuple[int, ...]:
    if isinstance(idx, MultiIndex):
        return idx.entries
    if isinstance(idx, int):
        return (idx,)
    return tuple(idx)


def _det(S: np.ndarray) -> np.ndarray:
    k = S.shape[-1]
    if k == 1:
        return S[..., 0, 0]
    if k == 2:
        return S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    if k == 3:
        return (
            S[..., 0, 0] * (S[..., 1, 1] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 1])
            - S[..., 0, 1] * (S[..., 1, 0] * S[..., 2, 2] - S[..., 1, 2] * S[..., 2, 0])
            + S[..., 0, 2] * (S[..., 1, 0] * S[..., 2, 1] - S[..., 1, 1] * S[..., 2, 0])
        )
    # LAPACK LU with partial pivoting
    return np.linalg.det(S)


def minor(A, alpha, beta):
    """``M_alpha^beta(A)``: determinant of rows ``beta`` and columns ``alpha`` (1-based).

    The empty selection gives 1.
    """
    A = np.asarray(A, dtype=float)
    a, b = _as_tuple(alpha), _as_tuple(beta)
    if len(a) != len(b):
        raise InvalidIndexError(f"|alpha|={len(a)} differs from |beta|={len(b)}")
    if len(a) == 0:
        return np.ones(A.shape[:-2]) if A.ndim > 2 else 1.0
    N, n = A.shape[-2:]
    if max(a) > n or min(a) < 1 or max(b) > N or min(b) < 1:
        raise InvalidIndexError(f"selection {a}x{b} outside a {N}x{n} matrix")
    sub = A[..., [j - 1 for j in b], :][..., [i - 1 for i in a]]
    out = _det(sub)
    return float(out) if np.ndim(out) == 0 else out


def _remove_tuple(t: tuple[int, ...], x: int) -> tuple[int, ...]:
    if x not in t:
        raise InvalidIndexError(f"{x} not in {t}")
    return tuple(e for e in t if e != x)


def adjoint_entry(A, alpha, beta, i: int, j: int):
    """``(adj A_alpha^beta)_j^i = sigma(i, beta-i) sigma(j, alpha-j) det A_{alpha-j}^{beta-i}``.

    ``i`` is a row index in ``beta`` and ``j`` a column index in ``alpha``.
    """
    a, b = _as_tuple(alpha), _as_tuple(beta)
    bi = _remove_tuple(b, i)
    aj = _remove_tuple(a, j)
    return sigma(i, bi) * sigma(j, aj) * minor(A, aj, bi)


def laplace_minor(A, alpha, beta, i: int):
    """Laplace expansion of ``M_alpha^beta(A)`` along row ``i`` of ``beta``."""
    A = np.asarray(A, dtype=float)
    a, b = _as_tuple(alpha), _as_tuple(beta)
    if i not in b:
        raise InvalidIndexError(f"expansion row {i} not in beta={b}")
    total = 0.0
    for j in a:
        total = total + A[..., i - 1, j - 1] * adjoint_entry(A, a, b, i, j)
    return total


@dataclass(frozen=True)
class KVector:
    """Sparse k-vector in ``Lambda_k(R^ambient)``; absent keys are zero."""

    ambient: int
    degree: int
    coefficients: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        coeffs = {}
        for key, val in dict(self.coefficients).items():
            key = _as_tuple(key)
            MultiIndex(key, self.ambient)
            if len(key) != self.degree:
                raise InvalidIndexError(f"key {key} has length != degree {self.degree}")
            coeffs[key] = float(val)
        object.__setattr__(self, "coefficients", coeffs)

    def __getitem__(self, key) -> float:
        return self.coefficients.get(_as_tuple(key), 0.0)

    def norm(self) -> float:
        return float(np.sqrt(sum(v * v for v in self.coefficients.values())))

    @classmethod
    def basis(cls, key, ambient: int) -> "KVector":
        key = _as_tuple(key)
        return cls(ambient, len(key), {key: 1.0})


def pair(omega: KVector, xi: KVector) -> float:
    """Duality pairing ``sum_alpha omega_alpha xi_alpha`` of form coefficients with a k-vector."""
    if omega.ambient != xi.ambient or omega.degree != xi.degree:
        raise InvalidIndexError(
            f"cannot pair degree {omega.degree} in R^{omega.ambient} with degree {xi.degree} in R^{xi.ambient}"
        )
    return float(sum(v * xi[k] for k, v in omega.coefficients.items()))


def split_graph_key(key: tuple[int, ...], n: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split an index of ``R^{n+N}`` into its horizontal part alpha and vertical part beta."""
    alpha = tuple(e for e in key if e <= n)
    beta = tuple(e - n for e in key if e > n)
    return alpha, beta


def graph_key(alpha, beta, n: int) -> tuple[int, ...]:
    return _as_tuple(alpha) + tuple(n + b for b in _as_tuple(beta))


def graph_nvector(Du) -> KVector:
    """The n-vector ``M(Du) = (e_1 + D_1u) ^ ... ^ (e_n + D_nu)`` in ``R^{n+N}``.

    Component ``e_alpha ^ eps_beta`` equals ``sigma(alpha, alpha_bar) M_{alpha_bar}^beta(Du)``.
    """
    Du = np.asarray(Du, dtype=float)
    N, n = Du.shape
    coeffs = {}
    for k in range(0, min(n, N) + 1):
        for beta in enumerate_indices(k, N):
            for abar in enumerate_indices(k, n):
                alpha = complement(abar)
                val = sigma(alpha, abar) * minor(Du, abar, beta)
                if val != 0.0:
                    coeffs[graph_key(alpha, beta, n)] = val
    return KVector(n + N, n, coeffs)


def wedge_vectors(vectors: Iterable[np.ndarray]) -> KVector:
    """Wedge product of vectors expanded by multilinearity (no determinants).

    Used as the independent oracle for :func:`graph_nvector`.
    """
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    dim = len(vectors[0])
    terms: dict[tuple[int, ...], float] = {(): 1.0}
    for v in vectors:
        new: dict[tuple[int, ...], float] = {}
        for key, c in terms.items():
            for b in range(1, dim + 1):
                if b in key or v[b - 1] == 0.0:
                    continue
                # e_key ^ e_b: move e_b left past every larger entry
                swaps = sum(1 for e in key if e > b)
                sign = -1.0 if swaps % 2 else 1.0
                nk = tuple(sorted(key + (b,)))
                new[nk] = new.get(nk, 0.0) + sign * c * v[b - 1]
        terms = new
    return KVector(dim, len(vectors), {k: v for k, v in terms.items() if v != 0.0})


def graph_tangent_vectors(Du) -> list[np.ndarray]:
    """The vectors ``e_i + sum_s D_i u^s eps_s`` spanning the graph tangent plane."""
    Du = np.asarray(Du, dtype=float)
    N, n = Du.shape
    out = []
    for i in range(n):
        v = np.zeros(n + N)
        v[i] = 1.0
        v[n:] = Du[:, i]
        out.append(v)
    return out
