"""Fractional Sobolev norms ``W^{s,p}`` on sampled maps and the continuity-estimate ratio.

The Gagliardo double integral is a midpoint double sum over node pairs with the diagonal
left out, so every pair is at distance at least one cell. Pairs are grouped by their
index offset ``o``: with ``S(o) = sum_x |u(x+o) - u(x)|^p`` one has ``S(o) = S(-o)``
exactly, and only the half-space of offsets is summed. The cost is quadratic in the node
count; above a node budget the nodes are subsampled with a uniform stride and the result
is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import NamedTuple

import numpy as np

from .distminor import MapFn, div_minor
from .errors import InvalidArgumentError
from .fields import SampledMap, TestFunction, lp_norm, tree_sum

NODE_BUDGET = 2**14


@dataclass(frozen=True)
class SobolevParams:
    s: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InvalidArgumentError(f"s must lie in (0, 1), got {self.s}")
        if self.p < 1.0:
            raise InvalidArgumentError(f"p must be >= 1, got {self.p}")

    @classmethod
    def trace(cls, p: float) -> "SobolevParams":
        """The trace exponent pair ``s = 1 - 1/p``."""
        return cls(1.0 - 1.0 / p, p)


class Seminorm(NamedTuple):
    value: float
    subsampled: bool
    stride: int
    nodes: int


def _stride(shape: tuple[int, ...], budget: int) -> int:
    s = 1
    while math.prod(-(-m // s) for m in shape) > budget:
        s += 1
    return s


def half_offsets(shape: tuple[int, ...]) -> list[tuple[int, ...]]:
    """Offsets whose first nonzero entry is positive, in lexicographic order."""
    ranges = [range(-(m - 1), m) for m in shape]
    return [o for o in product(*ranges) if any(o) and next(c for c in o if c) > 0]


def offset_sum(values: np.ndarray, valid: np.ndarray, o: tuple[int, ...], p: float) -> float:
    """``sum_x |u(x+o) - u(x)|^p`` over pairs of valid nodes."""
    a = tuple(slice(max(c, 0), m + min(c, 0)) for c, m in zip(o, valid.shape))
    b = tuple(slice(max(-c, 0), m + min(-c, 0)) for c, m in zip(o, valid.shape))
    d = np.linalg.norm(values[a] - values[b], axis=-1)
    ok = valid[a] & valid[b]
    return float(np.sum(np.where(ok, d**p, 0.0)))


def offset_row(values: np.ndarray, valid: np.ndarray, lead: tuple[int, ...], p: float) -> np.ndarray:
    """``S(lead, c)`` for every last-axis offset ``c`` in ``-(m-1)..m-1`` at once."""
    shape = valid.shape
    m = shape[-1]
    a_sl = tuple(slice(max(c, 0), k + min(c, 0)) for c, k in zip(lead, shape[:-1]))
    b_sl = tuple(slice(max(-c, 0), k + min(-c, 0)) for c, k in zip(lead, shape[:-1]))
    a, b = values[a_sl], values[b_sl]
    va, vb = valid[a_sl], valid[b_sl]
    pad = [(0, 0)] * (va.ndim - 1) + [(m - 1, m - 1)]
    win = np.lib.stride_tricks.sliding_window_view
    d2 = 0.0
    for j in range(values.shape[-1]):
        diff = win(np.pad(a[..., j], pad), m, axis=-1) - b[..., None, :, j]  # (..., 2m-1, m)
        d2 = d2 + diff * diff
    ok = win(np.pad(va, pad), m, axis=-1) & vb[..., None, :]
    w = np.where(ok, d2 if p == 2 else d2 ** (0.5 * p), 0.0)
    lead_axes = tuple(range(w.ndim - 2))
    return np.sum(w, axis=lead_axes + (w.ndim - 1,))


def _block(values, valid, lead, p, h, expo) -> list[float]:
    m = valid.shape[-1]
    row = offset_row(values, valid, lead, p)
    c = np.arange(1, m) if not any(lead) else np.arange(-(m - 1), m)
    r2 = float(np.sum((np.array(lead) * h[:-1]) ** 2)) + (c * h[-1]) ** 2
    return list(row[c + m - 1] / r2 ** (0.5 * expo))


def gagliardo(u: SampledMap, params: SobolevParams, budget: int = NODE_BUDGET, map_fn: MapFn = map) -> Seminorm:
    """Gagliardo seminorm with its subsampling record."""
    grid = u.grid
    n = grid.dim
    stride = _stride(grid.shape, budget)
    sl = (slice(None, None, stride),) * n
    values = u.values[sl]
    valid = ~u.mask[sl] & np.all(np.isfinite(values), axis=-1)
    values = np.where(valid[..., None], values, 0.0)
    h = grid.h * stride
    w = float(np.prod(h))
    expo = n + params.s * params.p
    # half-space: leading offsets lexicographically >= 0, the zero lead keeps c > 0 only
    leads = [o for o in product(*[range(-(m - 1), m) for m in valid.shape[:-1]]) if not any(o) or next(c for c in o if c) > 0]
    parts = [x for r in map_fn(lambda lead: _block(values, valid, lead, params.p, h, expo), leads) for x in r]
    total = 2.0 * tree_sum(parts) * w * w
    return Seminorm(total ** (1.0 / params.p), stride > 1, stride, int(valid.size))


def gagliardo_seminorm(u: SampledMap, params: SobolevParams, budget: int = NODE_BUDGET, map_fn: MapFn = map) -> float:
    """``(sum_{x != y} |u(x)-u(y)|^p / |x-y|^{n+sp} h^{2n})^{1/p}``; ``O(nodes^2)`` work."""
    return gagliardo(u, params, budget, map_fn).value


def wsp_norm(u: SampledMap, params: SobolevParams, budget: int = NODE_BUDGET, map_fn: MapFn = map) -> float:
    """``||u||_{L^p} + [u]_{s,p}``."""
    return lp_norm(u, params.p) + gagliardo_seminorm(u, params, budget, map_fn)


def _difference(u: SampledMap, v: SampledMap) -> SampledMap:
    if u.grid != v.grid or u.codim != v.codim:
        raise InvalidArgumentError("maps live on different grids")
    return SampledMap(u.grid, u.values - v.values, u.mask | v.mask)


def continuity_ratio(
    u: SampledMap,
    v: SampledMap,
    alpha,
    beta,
    psi: TestFunction,
    p: float,
    budget: int = NODE_BUDGET,
    profile=None,
    map_fn: MapFn = map,
) -> float:
    """``|<Div(Du) - Div(Dv), psi>| / (||u-v|| (||u||^{k-1} + ||v||^{k-1}) ||D psi||_inf)`` in ``W^{1-1/p,p}``."""
    k = len(alpha) if not isinstance(alpha, int) else 1
    if k > p:
        raise InvalidArgumentError(f"|alpha| = {k} exceeds p = {p}")
    diff = _difference(u, v)
    if not np.any(diff.values[~diff.mask]):
        return 0.0
    params = SobolevParams.trace(p)
    du = div_minor(u, alpha, beta, psi, profile, map_fn).value
    dv = div_minor(v, alpha, beta, psi, profile, map_fn).value
    nu = wsp_norm(u, params, budget, map_fn)
    nv = wsp_norm(v, params, budget, map_fn)
    nd = wsp_norm(diff, params, budget, map_fn)
    dpsi = float(np.max(np.linalg.norm(psi.gradient, axis=-1)))
    den = nd * (nu ** (k - 1) + nv ** (k - 1)) * dpsi
    return abs(du - dv) / den
