"""Graph currents, the boundary current ``T_u`` and mass lower bounds.

Forms on ``Omega x R^N`` are sums of ``omega_{alpha beta}(x, y) dx^alpha ^ dy^beta`` with
DSL coefficients over ``x1..xn, y1..yN``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .distminor import (
    MapFn,
    div_minor,
    extension_terms,
    layer_chunks,
)
from .errors import DegenerateInputError, InvalidArgumentError
from .exprdsl import Expression, parse, to_source
from .exterior import minor
from .extension import AVERAGING, ExtendedMap, ExtensionProfile, active_layers, cutoff_eta, expand_region, full_region
from .fields import BoxGrid, SampledMap, TestFunction, block_sum, expression_gradient, fd_step, integrate, jacobian, tree_sum
from .multiindex import MultiIndex, complement, sigma


@dataclass(frozen=True)
class FormTerm:
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    coefficient: Expression


@dataclass(frozen=True)
class DifferentialForm:
    n: int
    N: int
    terms: tuple[FormTerm, ...]

    def __post_init__(self):
        degrees = set()
        for t in self.terms:
            MultiIndex(t.alpha, self.n)
            MultiIndex(t.beta, self.N)
            if t.coefficient.arity != self.n or t.coefficient.y_arity not in (0, self.N):
                raise InvalidArgumentError("form coefficients must be expressions over (x, y)")
            degrees.add(len(t.alpha) + len(t.beta))
        if len(degrees) > 1:
            raise InvalidArgumentError(f"terms of mixed degree {sorted(degrees)}")

    @property
    def degree(self) -> int:
        return len(self.terms[0].alpha) + len(self.terms[0].beta) if self.terms else 0

    @classmethod
    def parse_terms(cls, n: int, N: int, terms: Sequence[tuple]) -> "DifferentialForm":
        """``terms`` holds ``(alpha, beta, source)`` triples."""
        return cls(n, N, tuple(FormTerm(tuple(a), tuple(b), parse(src, n, N)) for a, b, src in terms))

    def coefficient_values(self, term: FormTerm, coords: Sequence[np.ndarray]) -> np.ndarray:
        c = term.coefficient
        return c.evaluate_coords(list(coords[: c.width]))


def _coef_on(term_coef: Expression, x_coords, y_values):
    coords = list(x_coords)
    if term_coef.y_arity:
        coords += [y_values[..., j] for j in range(y_values.shape[-1])]
    return term_coef.evaluate_coords(coords)


def graph_current_eval(u: SampledMap, omega: DifferentialForm) -> float:
    """``G_u(omega) = sum sigma(alpha, alpha_bar) int omega_{alpha beta}(x, u(x)) M_{alpha_bar}^beta(Du) dx``."""
    n, N = u.grid.dim, u.codim
    if omega.n != n or omega.N != N or omega.degree != n:
        raise InvalidArgumentError("graph currents act on n-forms over Omega x R^N")
    if u.masked_count:
        raise DegenerateInputError(f"{u.masked_count} masked nodes; the graph current needs a smooth map")
    Du = jacobian(u).matrices
    coords = u.grid.coords()
    total = []
    for term in omega.terms:
        a = MultiIndex(term.alpha, n)
        abar = complement(a)
        coef = _coef_on(term.coefficient, coords, u.values)
        val = sigma(a, abar) * integrate(coef * minor(Du, abar.entries, term.beta), u.grid).value
        total.append(val)
    return tree_sum(total)


@dataclass(frozen=True)
class CurrentComponentValue:
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    value: float
    route: str = "boundary"
    breakdown: dict = field(default_factory=dict)
    # contribution of the d_y Psi . d_i U chain terms
    chain_term: float = 0.0
    masked: int = 0

    def __float__(self) -> float:
        return self.value


def _tu_chunk(ext, psi_expr, region, terms, beta, eta, deta, step, k0, k1):
    grid = ext.u.grid
    n = grid.dim
    DU = ext.jacobian(region, k0, k1)
    U = ext.values(region, k0, k1) if ext.kind == AVERAGING else None
    if U is None:
        U = ext.values(region, 0, 1)
        U = np.broadcast_to(U, DU.shape[:-2] + (U.shape[-1],))
    N = U.shape[-1]
    axes = [grid.axis(i)[s:e] for i, (s, e) in enumerate(zip(*region))]
    xs = np.meshgrid(*axes, indexing="ij", sparse=True)
    xs = [x[..., None] for x in xs]
    coords = xs + [U[..., j] for j in range(N)]
    val = psi_expr.evaluate_coords(coords)
    grads = expression_gradient(psi_expr, coords, step)
    e = eta[k0:k1]
    de = deta[k0:k1]
    sums, chain = [], []
    bad_any = np.zeros(DU.shape[:-2], dtype=bool)
    for i, _, rest in terms:
        if i <= n:
            chain_part = sum(grads[n + j] * DU[..., j, i - 1] for j in range(N))
            total = e * (grads[i - 1] + chain_part)
        else:
            chain_part = sum(grads[n + j] * DU[..., j, n] for j in range(N))
            total = val * de + e * chain_part
        M = minor(DU, rest, beta)
        integrand = total * M
        bad = ~np.isfinite(integrand)
        bad_any |= bad
        sums.append(block_sum(np.where(bad, 0.0, integrand)))
        chain.append(block_sum(np.where(bad, 0.0, e * chain_part * M)))
    return sums, chain, int(bad_any.sum())


def tu_component(
    u: SampledMap,
    alpha,
    beta,
    psi: Expression,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
    region=None,
) -> CurrentComponentValue:
    """``(T_u)^{alpha beta}(psi)`` for a coefficient ``psi(x, y)`` compactly supported in ``x``.

    ``D_{x_i}[Psi(x~, U(x~))] = d_{x_i} Psi + sum_j d_{y_j} Psi d_i U^j``; the partial
    derivatives of ``psi`` come from central differences of the expression.
    """
    grid = u.grid
    n, N = grid.dim, u.codim
    a = MultiIndex(tuple(alpha.entries if isinstance(alpha, MultiIndex) else alpha), n)
    b = tuple(beta.entries if isinstance(beta, MultiIndex) else beta)
    MultiIndex(b, N)
    abar = complement(a)
    if len(a) + len(b) != n:
        raise InvalidArgumentError(f"|alpha| + |beta| must be n = {n}")
    if psi.arity != n or psi.y_arity not in (0, N):
        raise InvalidArgumentError("psi must be an expression over (x, y)")
    if psi.y_arity == 0:
        psi = parse(to_source(psi.ast), n, N)
    profile = profile or ExtensionProfile()
    ext = ExtendedMap(u, profile)
    M = ext.M
    ht = 1.0 / M
    tk = (np.arange(M) + 0.5) * ht
    eta = cutoff_eta(tk)
    deta = (cutoff_eta(tk + 0.5 * ht) - cutoff_eta(tk - 0.5 * ht)) / ht
    if region is None:
        region = full_region(grid)
    terms = extension_terms(abar.entries, n)
    sign_a = sigma(a, abar)
    K = active_layers(M)
    step = fd_step(grid)
    if ext.kind == AVERAGING:
        ext.window(expand_region(region, grid.shape), K)
        ext.window(region, K)
    results = list(
        map_fn(lambda c: _tu_chunk(ext, psi, region, terms, b, eta, deta, step, c[0], c[1]), layer_chunks(K))
    )
    vol = ext.grid3.cell_volume
    breakdown, total, chain = {}, [], []
    for idx, (i, sgn, _) in enumerate(terms):
        term = -sgn * sign_a * tree_sum([r[0][idx] for r in results]) * vol
        breakdown[i] = term
        total.append(term)
        chain.append(-sgn * sign_a * tree_sum([r[1][idx] for r in results]) * vol)
    masked = sum(r[2] for r in results)
    return CurrentComponentValue(a.entries, b, tree_sum(total), "boundary", breakdown, tree_sum(chain), masked)


def radial_cutoff_source(R: float, N: int) -> str:
    """``chi_R(y)``: 1 on ``B(0,R)``, 0 outside ``B(0,2R)``, smoothstep in between."""
    ys = ",".join(f"y{j + 1}" for j in range(N))
    s = f"min(max((norm({ys})-{R!r})/{R!r},0),1)"
    return f"(1-(3*{s}^2-2*{s}^3))"


def cutoff_radius(u: SampledMap) -> float:
    m = float(np.max(np.linalg.norm(np.where(u.mask[..., None], 0.0, u.values), axis=-1)))
    return 2.0 * m if m > 0 else 1.0


class PushforwardPair(NamedTuple):
    lhs: float
    rhs: float


CHAIN_TOLERANCE = 1e-10


def lifted_test(psi: TestFunction, u: SampledMap) -> Expression:
    """``psi(x) chi_R(y)`` with ``R = 2 max|u|`` (an upper bound for ``max|U|`` under averaging)."""
    if psi.expression is None:
        raise InvalidArgumentError("the pushforward check needs psi given by an expression")
    n, N = u.grid.dim, u.codim
    src = f"({to_source(psi.expression.ast)})*{radial_cutoff_source(cutoff_radius(u), N)}"
    return parse(src, n, N)


def pushforward_check(
    u: SampledMap,
    alpha,
    beta,
    psi: TestFunction,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
) -> PushforwardPair:
    """``(sigma(alpha, alpha_bar) (T_u)^{alpha beta}(psi chi_R), <Div_{alpha_bar}^beta(Du), psi>)``."""
    n = u.grid.dim
    a = MultiIndex(tuple(alpha), n)
    abar = complement(a)
    lifted = lifted_test(psi, u)
    rhs = div_minor(u, abar.entries, beta, psi, profile, map_fn)
    tu_val = tu_component(u, a.entries, beta, lifted, profile, map_fn, region=psi.support_box(pad=1))
    scale = max(abs(tu_val.value), 1e-300)
    if abs(tu_val.chain_term) > CHAIN_TOLERANCE * max(scale, 1.0):
        raise DegenerateInputError(f"cut-off derivative term {tu_val.chain_term:g} is not negligible")
    return PushforwardPair(sigma(a, abar) * tu_val.value, rhs.value)


def l1_functional(u: SampledMap, psi: TestFunction, profile: ExtensionProfile | None = None, map_fn: MapFn = map):
    """``T_u(psi(x)|y| dx)`` against its smooth-map value ``int psi |u| dx``."""
    n, N = u.grid.dim, u.codim
    ys = ",".join(f"y{j + 1}" for j in range(N))
    expr = parse(f"({to_source(psi.expression.ast)})*norm({ys})", n, N)
    full = tuple(range(1, n + 1))
    val = tu_component(u, full, (), expr, profile, map_fn, region=psi.support_box(pad=1)).value
    mag = np.linalg.norm(np.where(u.mask[..., None], 0.0, u.values), axis=-1)
    return val, integrate(mag * psi.values, u.grid).value


def projection_functional(u: SampledMap, psi: TestFunction, profile: ExtensionProfile | None = None, map_fn: MapFn = map):
    """``pi_#T_u(psi dx) = T_u(psi chi_R dx)`` against ``int psi``."""
    n = u.grid.dim
    full = tuple(range(1, n + 1))
    val = tu_component(u, full, (), lifted_test(psi, u), profile, map_fn, region=psi.support_box(pad=1)).value
    return val, integrate(psi.values, u.grid).value


class MassBound(NamedTuple):
    value: float
    argmax: int
    values: tuple


def form_sup(omega: DifferentialForm, grid: BoxGrid, y_samples: np.ndarray | None = None) -> float:
    """Sup of the coefficients over the grid nodes (the normalization of the dictionaries)."""
    coords = grid.coords()
    best = 0.0
    for t in omega.terms:
        if t.coefficient.y_arity:
            if y_samples is None:
                continue
            for y in y_samples:
                vals = t.coefficient.evaluate_coords(list(coords) + [np.full(grid.shape, yj) for yj in y])
                best = max(best, float(np.nanmax(np.abs(vals))))
        else:
            best = max(best, float(np.nanmax(np.abs(t.coefficient.evaluate_coords(coords)))))
    return best


def mass_lower_bound(
    evaluator: Callable,
    dictionary: Sequence,
    grid: BoxGrid | None = None,
    tol: float = 1e-12,
) -> MassBound:
    """``max_omega |T(omega)|`` over a dictionary of forms with sup-normalized coefficients.

    Since ``-omega`` is admissible whenever ``omega`` is, the absolute value is taken. The
    result is a lower bound for the mass, never the mass itself.
    """
    if not dictionary:
        raise InvalidArgumentError("mass lower bound needs a nonempty dictionary")
    if grid is not None:
        for k, omega in enumerate(dictionary):
            if isinstance(omega, DifferentialForm) and form_sup(omega, grid) > 1.0 + tol:
                raise InvalidArgumentError(f"dictionary form {k} has coefficient sup above 1")
    values = tuple(float(evaluator(omega)) for omega in dictionary)
    k = int(np.argmax(np.abs(values)))
    return MassBound(abs(values[k]), k, values)
