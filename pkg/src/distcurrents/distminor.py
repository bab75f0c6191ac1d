"""Distributional minors via the extension formula, and their smooth-map oracles.

For ``alpha`` in ``I(k,n)`` and ``beta`` in ``I(k,N)``::

    <Div_alpha^beta(Du), psi> = - sum_{i in alpha+(n+1)} sigma(alpha+(n+1)-i, i)
                                  int_{Omega x (0,1)} M^beta_{alpha+(n+1)-i}(DU) d_i Psi

with ``Psi = psi * eta``. The integral runs over the layers where the cut-off is active
and the index box around ``supp psi``, in fixed chunks of layers. Chunk partial sums are
combined exactly, so the value does not depend on how chunks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError
from .exterior import adjoint_entry, minor
from .extension import AVERAGING, ExtendedMap, ExtendedTest, ExtensionProfile, expand_region, extend_test
from .fields import JacobianField, SampledMap, TestFunction, block_sum, integrate, jacobian, tree_sum
from .multiindex import MultiIndex, sigma

CHUNK_LAYERS = 16

MapFn = Callable


def _entries(idx) -> tuple[int, ...]:
    if isinstance(idx, MultiIndex):
        return idx.entries
    if isinstance(idx, int):
        return (idx,)
    return tuple(idx)


@dataclass(frozen=True)
class DistributionalEvaluation:
    value: float
    breakdown: dict = field(default_factory=dict)
    extension: str = AVERAGING
    masked: int = 0
    grid: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "breakdown": {str(k): v for k, v in self.breakdown.items()},
            "extension": self.extension,
            "masked": self.masked,
            "grid": self.grid,
        }


def layer_chunks(K: int, size: int = CHUNK_LAYERS) -> list[tuple[int, int]]:
    return [(k, min(k + size, K)) for k in range(0, K, size)]


def validate_pair(alpha, beta, n: int, N: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    a, b = _entries(alpha), _entries(beta)
    if len(a) != len(b):
        raise InvalidArgumentError(f"|alpha| = {len(a)} differs from |beta| = {len(b)}")
    MultiIndex(a, n)
    MultiIndex(b, N)
    return a, b


def extension_terms(cols: tuple[int, ...], n: int) -> list[tuple[int, int, tuple[int, ...]]]:
    """``(i, sigma(cols+(n+1)-i, i), cols+(n+1)-i)`` for every ``i`` in ``cols+(n+1)``."""
    full = cols + (n + 1,)
    out = []
    for i in full:
        rest = tuple(e for e in full if e != i)
        out.append((i, sigma(rest, i), rest))
    return out


def _chunk_integrals(ext: ExtendedMap, etest: ExtendedTest, region, terms, beta, k0, k1):
    DU = ext.jacobian(region, k0, k1)
    dPsi = etest.gradient(region, k0, k1)
    sums = []
    live_any = np.zeros(DU.shape[:-2], dtype=bool)
    bad_any = np.zeros(DU.shape[:-2], dtype=bool)
    for i, _, rest in terms:
        dpsi = dPsi[..., i - 1]
        integrand = minor(DU, rest, beta) * dpsi
        live = dpsi != 0.0
        bad = live & ~np.isfinite(integrand)
        live_any |= live
        bad_any |= bad
        sums.append(block_sum(np.where(bad | ~live, 0.0, integrand)))
    return sums, int(bad_any.sum()), int((live_any & ~bad_any).sum())


def div_minor(
    u: SampledMap,
    alpha,
    beta,
    psi: TestFunction,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
    region=None,
) -> DistributionalEvaluation:
    """Evaluate ``<Div_alpha^beta(Du), psi>`` from the extension formula."""
    grid = u.grid
    n, N = grid.dim, u.codim
    a, b = validate_pair(alpha, beta, n, N)
    if psi.grid != grid:
        raise InvalidArgumentError("test function and map live on different grids")
    profile = profile or ExtensionProfile()
    if not a:
        val = integrate(psi.values, grid).value
        return DistributionalEvaluation(val, {}, profile.kind, 0, {"resolution": list(grid.resolution)})
    ext = ExtendedMap(u, profile)
    etest = extend_test(psi, profile, ext.M)
    if region is None:
        region = psi.support_box(pad=1)
    K = etest.layers
    terms = extension_terms(a, n)
    chunks = layer_chunks(K)
    if not chunks or any(e <= s for s, e in zip(*region)):
        raise DegenerateInputError("test function has empty support")
    if ext.kind == AVERAGING:
        # build the shared FFT window before any chunk runs
        ext.window(expand_region(region, grid.shape), K)
    results = list(map_fn(lambda c: _chunk_integrals(ext, etest, region, terms, b, c[0], c[1]), chunks))
    vol = ext.grid3.cell_volume
    breakdown = {}
    total = []
    for idx, (i, sgn, _) in enumerate(terms):
        term = -sgn * tree_sum([r[0][idx] for r in results]) * vol
        breakdown[i] = term
        total.append(term)
    masked = sum(r[1] for r in results)
    good = sum(r[2] for r in results)
    if masked and not good:
        raise DegenerateInputError("every integrand node is masked")
    meta = {
        "resolution": list(grid.resolution),
        "vertical_resolution": ext.M,
        "layers": K,
        "region": [list(region[0]), list(region[1])],
    }
    return DistributionalEvaluation(tree_sum(total), breakdown, ext.kind, masked, meta)


def pointwise_minor_integral(u: SampledMap, alpha, beta, psi: TestFunction, Du: JacobianField | None = None) -> float:
    """Midpoint quadrature of ``M_alpha^beta(Du) psi``."""
    a, b = validate_pair(alpha, beta, u.grid.dim, u.codim)
    if u.masked_count:
        raise DegenerateInputError(f"{u.masked_count} masked nodes; the pointwise minor needs a smooth map")
    if Du is None:
        Du = jacobian(u)
    return integrate(minor(Du.matrices, a, b) * psi.values, u.grid).value


def cofactor_divergence_residual(U: SampledMap, alpha, beta, j: int) -> float:
    """L1 norm of ``sum_{i in alpha} d_i (adj(DU)_alpha^beta)_i^j`` by finite differences."""
    a, b = validate_pair(alpha, beta, U.grid.dim, U.codim)
    if j not in b:
        raise InvalidArgumentError(f"row {j} is not in beta = {b}")
    if U.masked_count:
        raise DegenerateInputError(f"{U.masked_count} masked nodes in U")
    DU = jacobian(U).matrices
    h = U.grid.h
    div = np.zeros(U.grid.shape)
    for i in a:
        entry = adjoint_entry(DU, a, b, j, i)
        entry = np.broadcast_to(entry, U.grid.shape)
        div = div + np.gradient(entry, h[i - 1], axis=i - 1, edge_order=2)
    return integrate(np.abs(div), U.grid).value
