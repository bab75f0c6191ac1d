"""Ordered multi-indices and permutation signs.

Indices are 1-based, matching the usual notation ``alpha = (alpha_1 < ... < alpha_k)``
with entries in ``1..n``. The zero-length index plays the role of the index ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

from .errors import InvalidArgumentError


class InvalidIndexError(InvalidArgumentError):
    """Raised for malformed multi-indices or violated membership preconditions."""


@dataclass(frozen=True, order=True)
class MultiIndex:
    entries: tuple[int, ...]
    ambient: int
    zero_based: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        if self.ambient < 0:
            raise InvalidIndexError(f"ambient dimension must be >= 0, got {self.ambient}")
        for a, b in zip(entries, entries[1:]):
            if a >= b:
                raise InvalidIndexError(f"entries must be strictly increasing: {entries}")
        if entries and (entries[0] < 1 or entries[-1] > self.ambient):
            raise InvalidIndexError(f"entries {entries} outside 1..{self.ambient}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "zero_based", tuple(e - 1 for e in entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, i) -> bool:
        return i in self.entries

    def __str__(self) -> str:
        return "(" + ",".join(map(str, self.entries)) + ")" if self.entries else "0"

    def with_ambient(self, ambient: int) -> "MultiIndex":
        return MultiIndex(self.entries, ambient)


def mi(*entries: int, ambient: int) -> MultiIndex:
    """Shorthand constructor: ``mi(1, 3, ambient=3)``."""
    return MultiIndex(tuple(entries), ambient)


def full(n: int) -> MultiIndex:
    return MultiIndex(tuple(range(1, n + 1)), n)


def empty(n: int) -> MultiIndex:
    return MultiIndex((), n)


def enumerate_indices(k: int, n: int) -> list[MultiIndex]:
    """All elements of I(k, n) in lexicographic order; I(0, n) is the single empty index."""
    if k < 0 or k > n:
        raise InvalidIndexError(f"need 0 <= k <= n, got k={k}, n={n}")
    return [MultiIndex(c, n) for c in combinations(range(1, n + 1), k)]


def complement(alpha: MultiIndex) -> MultiIndex:
    present = set(alpha.entries)
    return MultiIndex(tuple(i for i in range(1, alpha.ambient + 1) if i not in present), alpha.ambient)


def remove(alpha: MultiIndex, i: int) -> MultiIndex:
    if i not in alpha.entries:
        raise InvalidIndexError(f"{i} is not an entry of {alpha}")
    return MultiIndex(tuple(e for e in alpha.entries if e != i), alpha.ambient)


def add(alpha: MultiIndex, j: int) -> MultiIndex:
    if j in alpha.entries:
        raise InvalidIndexError(f"{j} is already an entry of {alpha}")
    if j < 1 or j > alpha.ambient:
        raise InvalidIndexError(f"{j} outside 1..{alpha.ambient}")
    return MultiIndex(tuple(sorted(alpha.entries + (j,))), alpha.ambient)


def _entries(x: MultiIndex | int | Iterable[int]) -> tuple[int, ...]:
    if isinstance(x, MultiIndex):
        return x.entries
    if isinstance(x, int):
        return (x,)
    t = tuple(x)
    if any(p >= q for p, q in zip(t, t[1:])):
        raise InvalidIndexError(f"multi-index must be strictly increasing: {t}")
    return t


def sigma(alpha: MultiIndex | int | Iterable[int], beta: MultiIndex | int | Iterable[int]) -> int:
    """Sign of the permutation sorting the concatenation ``(alpha, beta)``.

    Single integers are accepted as length-one indices, so ``sigma(i, alpha - i)``
    reads as written. Both operands are assumed internally increasing; the sign is
    the parity of the cross inversions between them.
    """
    a, b = _entries(alpha), _entries(beta)
    if set(a) & set(b):
        raise InvalidIndexError(f"sigma needs disjoint indices, got {a} and {b}")
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


def inversion_parity_sign(seq: Iterable[int]) -> int:
    """Sign of an arbitrary sequence of distinct integers by brute-force inversion count."""
    s = list(seq)
    inv = sum(1 for p in range(len(s)) for q in range(p + 1, len(s)) if s[p] > s[q])
    return -1 if inv % 2 else 1
