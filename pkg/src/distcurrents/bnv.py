"""Distributional Jacobians, level-set currents and coarea checks.

Level sets ``U^{-1}(y)`` are extracted from the piecewise-linear interpolant of nodal
values over the Kuhn triangulation of a rectilinear node lattice (``d!`` simplices per
cell). Curves are produced when ``N = d - 1`` and points when ``N = d``. Each curve
segment carries the orientation

    zeta = (-1)^{n-1} sum_i sigma(i, i_bar) M_{i_bar}^{(1..N)}(DU) e_i / |.|

from the simplex gradient ``DU``; simplices with ``J_U = |rho|`` below ``1e-8 max J_U``
are flagged and left out of ``E_U``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import ndimage
from scipy.stats import qmc

from .currents import DifferentialForm, FormTerm, mass_lower_bound
from .distminor import MapFn, div_minor
from .errors import DegenerateInputError, DegenerateLevelError, InvalidArgumentError
from .exprdsl import Expression, VectorExpression, parse
from .exterior import minor
from .extension import ExtendedMap, ExtensionProfile, active_layers, cutoff_eta, cutoff_eta_prime, expand_region
from .fields import SampledMap, TestFunction, expression_gradient, fd_step, integrate, jacobian, test_function, tree_sum
from .multiindex import MultiIndex, complement, enumerate_indices, sigma

J_THRESHOLD = 1e-8
PERTURBATION_BUDGET = (1e-13, 1e-11, 1e-9, 1e-7)
LAMBDA_TOL = 1e-12


# --- [Ju] ------------------------------------------------------------------


@dataclass(frozen=True)
class JacobianCurrentEval:
    value: float
    breakdown: dict = field(default_factory=dict)
    masked: int = 0

    def __float__(self) -> float:
        return self.value


def zero_form(expr: Expression | str, n: int) -> DifferentialForm:
    if isinstance(expr, str):
        expr = parse(expr, n)
    return DifferentialForm(n, 0, (FormTerm((), (), expr),))


def _form_tests(omega: DifferentialForm, grid) -> list[tuple[tuple[int, ...], TestFunction]]:
    out = []
    for t in omega.terms:
        if t.beta or t.coefficient.y_arity:
            raise InvalidArgumentError("[Ju] acts on forms over Omega (no dy terms)")
        out.append((t.alpha, test_function(t.coefficient, grid)))
    return out


def ju_eval(
    u: SampledMap,
    omega: DifferentialForm,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
) -> JacobianCurrentEval:
    """``[Ju](omega) = sum_{alpha in I(n-N,n)} sigma(alpha, alpha_bar) <Div_{alpha_bar}^{(1..N)}(Du), omega_alpha>``."""
    n, N = u.grid.dim, u.codim
    if N > n:
        raise InvalidArgumentError(f"[Ju] needs N <= n, got N={N}, n={n}")
    if N < 2:
        raise InvalidArgumentError("[Ju] needs N >= 2")
    if omega.n != n or omega.degree != n - N:
        raise InvalidArgumentError(f"[Ju] acts on forms of degree n-N = {n - N} over R^{n}")
    rows = tuple(range(1, N + 1))
    breakdown, total, masked = {}, [], 0
    for alpha, psi in _form_tests(omega, u.grid):
        a = MultiIndex(alpha, n)
        abar = complement(a)
        ev = div_minor(u, abar.entries, rows, psi, profile, map_fn)
        val = sigma(a, abar) * ev.value
        breakdown[alpha] = breakdown.get(alpha, 0.0) + val
        total.append(val)
        masked += ev.masked
    return JacobianCurrentEval(tree_sum(total), breakdown, masked)


# --- level sets ------------------------------------------------------------


def kuhn_paths(d: int) -> np.ndarray:
    """Vertex offsets ``(d!, d+1, d)`` of the Kuhn simplices of the unit cube."""
    out = []
    for perm in permutations(range(d)):
        v = np.zeros(d, dtype=np.int64)
        path = [v.copy()]
        for ax in perm:
            v[ax] += 1
            path.append(v.copy())
        out.append(path)
    return np.array(out, dtype=np.int64)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0 / 2.0**53) - 1.0


def vertex_perturbation(node_ids: np.ndarray, N: int) -> np.ndarray:
    """Deterministic pseudo-random offsets in ``[-1, 1)`` per node and component."""
    comp = np.arange(N, dtype=np.uint64)
    return _splitmix(node_ids.astype(np.uint64)[..., None] * np.uint64(N) + comp)


def _cramer(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve batched square systems by Cramer's rule; singular systems give non-finite entries."""
    det = np.linalg.det(A)
    m = A.shape[-1]
    lam = np.empty(A.shape[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(m):
            Ak = A.copy()
            Ak[..., :, k] = rhs
            lam[..., k] = np.linalg.det(Ak) / det
    return lam


@dataclass
class LevelSetCurrent:
    y: np.ndarray
    dim: int
    # dim 1: segments (S, 2, d); dim 0: points (S, d) stored as segments[:, 0]
    segments: np.ndarray
    orientations: np.ndarray
    jacobians: np.ndarray
    in_E: np.ndarray
    endpoint_ids: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    facet_on_boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    flagged: int = 0
    perturbation: float = 0.0
    attempts: int = 1

    @property
    def size(self) -> int:
        return len(self.segments)

    @property
    def points(self) -> np.ndarray:
        return self.segments[:, 0]

    def lengths(self) -> np.ndarray:
        if self.dim == 0:
            return np.ones(len(self.segments))
        return np.linalg.norm(self.segments[:, 1] - self.segments[:, 0], axis=-1)

    def measure(self) -> float:
        """``H^dim`` of the part inside ``E_U``: a point count or a curve length."""
        return float(math.fsum(self.lengths()[self.in_E]))

    def pair_gradient(self, grad_fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """``T(d phi) = sum over segments in E of <grad phi(mid), zeta> |segment|``."""
        if self.dim != 1:
            raise InvalidArgumentError("only curve currents pair with 1-forms")
        if not self.size:
            return 0.0
        mids = 0.5 * (self.segments[:, 0] + self.segments[:, 1])
        g = grad_fn(mids)
        w = np.sum(g * self.orientations, axis=-1) * self.lengths()
        return float(math.fsum(w[self.in_E]))

    def closure_defect(self) -> int:
        """Net signed endpoint multiplicity at facets away from the lattice boundary."""
        if self.dim != 1 or not self.size:
            return 0
        d = self.segments[:, 1] - self.segments[:, 0]
        forward = np.sum(d * self.orientations, axis=-1) >= 0
        start = np.where(forward, self.endpoint_ids[:, 0], self.endpoint_ids[:, 1])
        end = np.where(forward, self.endpoint_ids[:, 1], self.endpoint_ids[:, 0])
        mult = np.zeros(len(self.facet_on_boundary), dtype=np.int64)
        np.add.at(mult, end, 1)
        np.add.at(mult, start, -1)
        return int(np.abs(mult[~self.facet_on_boundary]).sum())

    def slice_crossings(self, axis: int, value: float) -> int:
        """Segments whose endpoints lie on opposite sides of ``x_axis = value``."""
        if self.dim != 1 or not self.size:
            return 0
        a = self.segments[:, 0, axis] - value
        b = self.segments[:, 1, axis] - value
        return int(np.sum((a < 0) != (b < 0)))

    def to_csv(self, path: str | Path) -> None:
        export_level_set_csv(self, path)


def export_level_set_csv(current: LevelSetCurrent, path: str | Path) -> None:
    """One row per segment (or point): kind, membership in E_U, coordinates, orientation."""
    d = current.segments.shape[-1] if current.size else len(current.orientations[0]) if len(current.orientations) else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if current.dim == 1:
            w.writerow(["kind", "in_E"] + [f"a{i + 1}" for i in range(d)] + [f"b{i + 1}" for i in range(d)] + [f"zeta{i + 1}" for i in range(d)])
            for s, z, e in zip(current.segments, current.orientations, current.in_E):
                w.writerow(["segment", int(e)] + [repr(float(v)) for v in s[0]] + [repr(float(v)) for v in s[1]] + [repr(float(v)) for v in z])
        else:
            w.writerow(["kind", "in_E"] + [f"x{i + 1}" for i in range(d)])
            for s, e in zip(current.segments, current.in_E):
                w.writerow(["point", int(e)] + [repr(float(v)) for v in s[0]])


class Lattice:
    """Rectilinear nodes (``axes``) carrying ``N`` values each, ready for level extraction."""

    def __init__(self, axes: Sequence[np.ndarray], values: np.ndarray, orientation_sign: int = 1, salt: int = 0):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.d = len(self.axes)
        self.shape = tuple(len(a) for a in self.axes)
        values = np.asarray(values, dtype=float)
        if values.shape[:-1] != self.shape:
            raise InvalidArgumentError("lattice values do not match the axes")
        if not np.all(np.isfinite(values)):
            raise DegenerateInputError("level extraction needs finite nodal values")
        self.N = values.shape[-1]
        if self.N not in (self.d - 1, self.d):
            raise NotImplementedError(f"level sets of dimension {self.d - self.N} are not supported")
        self.values = values
        self.flat = values.reshape(-1, self.N)
        self.sign = orientation_sign
        self.salt = salt
        self.cell_shape = tuple(s - 1 for s in self.shape)
        self.paths = kuhn_paths(self.d)
        corners = np.array(np.meshgrid(*[[0, 1]] * self.d, indexing="ij")).reshape(self.d, -1).T
        cmin = cmax = None
        for c in corners:
            sl = tuple(slice(o, o + n) for o, n in zip(c, self.cell_shape))
            v = values[sl]
            cmin = v if cmin is None else np.minimum(cmin, v)
            cmax = v if cmax is None else np.maximum(cmax, v)
        self.cmin = cmin.reshape(-1, self.N)
        self.cmax = cmax.reshape(-1, self.N)
        self.scale = float(np.max(np.abs(values))) or 1.0

    def range_ball(self, support: np.ndarray | None = None) -> tuple[np.ndarray, float]:
        """Ball covering the values on the cells that touch ``support`` (all cells by default)."""
        if support is None:
            vals = self.flat
        else:
            near = ndimage.binary_dilation(support, structure=np.ones((3,) * self.d, dtype=bool))
            vals = self.flat[near.ravel()]
            if not len(vals):
                return np.zeros(self.N), 0.0
        lo, hi = vals.min(axis=0), vals.max(axis=0)
        c = 0.5 * (lo + hi)
        r = float(np.max(np.linalg.norm(vals - c, axis=-1)))
        return c, r

    def _candidates(self, y: np.ndarray, pad: float) -> np.ndarray:
        ok = np.ones(len(self.cmin), dtype=bool)
        for j in range(self.N):
            ok &= (self.cmin[:, j] - pad <= y[j]) & (self.cmax[:, j] + pad >= y[j])
        return np.nonzero(ok)[0]

    def extract(self, y) -> LevelSetCurrent:
        y = np.asarray(y, dtype=float).reshape(self.N)
        for attempt, rel in enumerate(PERTURBATION_BUDGET, start=1):
            amp = rel * self.scale
            cur = self._extract(y, amp, attempt)
            if cur is not None:
                return cur
        raise DegenerateLevelError(f"level {y.tolist()} stays degenerate after {len(PERTURBATION_BUDGET)} perturbations")

    def _empty(self, y, amp, attempt) -> LevelSetCurrent:
        dim = self.d - self.N
        return LevelSetCurrent(
            y, dim, np.zeros((0, 2, self.d)), np.zeros((0, self.d)), np.zeros(0), np.zeros(0, dtype=bool),
            perturbation=amp, attempts=attempt,
        )

    def _extract(self, y, amp, attempt):
        cand = self._candidates(y, amp)
        if cand.size == 0:
            return self._empty(y, amp, attempt)
        d, N = self.d, self.N
        cells = np.stack(np.unravel_index(cand, self.cell_shape), axis=-1)
        nodes = cells[:, None, None, :] + self.paths[None]
        P = self.paths.shape[0]
        nodes = nodes.reshape(-1, d + 1, d)
        ids = np.ravel_multi_index(tuple(nodes[..., a] for a in range(d)), self.shape)
        raw = self.flat[ids]
        V = raw + amp * vertex_perturbation(ids + self.salt * self.flat.shape[0], N)
        X = np.stack([self.axes[a][nodes[..., a]] for a in range(d)], axis=-1)
        G = self._simplex_gradients(raw, nodes)
        if N == d:
            return self._points(y, V, X, G, amp, attempt)
        return self._curves(y, ids, V, X, G, nodes, amp, attempt)

    def _simplex_gradients(self, raw, nodes) -> np.ndarray:
        """P1 gradient ``(S, N, d)`` along the Kuhn path of every simplex."""
        S = raw.shape[0]
        G = np.empty((S, self.N, self.d))
        step = nodes[:, 1:, :] - nodes[:, :-1, :]
        axis = np.argmax(step, axis=-1)
        for k in range(self.d):
            ax = axis[:, k]
            idx = nodes[np.arange(S), k, ax]
            h = np.empty(S)
            for a in range(self.d):
                sel = ax == a
                h[sel] = self.axes[a][idx[sel] + 1] - self.axes[a][idx[sel]]
            G[np.arange(S), :, ax] = (raw[:, k + 1] - raw[:, k]) / h[:, None]
        return G

    def _orientation(self, G: np.ndarray) -> np.ndarray:
        d, N = self.d, self.N
        rows = tuple(range(1, N + 1))
        rho = np.empty(G.shape[:1] + (d,))
        for i in range(1, d + 1):
            rest = tuple(c for c in range(1, d + 1) if c != i)
            rho[:, i - 1] = sigma(i, rest) * minor(G, rest, rows)
        return rho

    def _points(self, y, V, X, G, amp, attempt):
        S, d = V.shape[0], self.d
        A = np.ones((S, d + 1, d + 1))
        A[:, :d, :] = np.swapaxes(V, 1, 2)
        rhs = np.broadcast_to(np.append(y, 1.0), (S, d + 1))
        lam = _cramer(A, rhs)
        finite = np.all(np.isfinite(lam), axis=-1)
        inside = finite & np.all(lam > LAMBDA_TOL, axis=-1)
        ambiguous = finite & np.all(lam > -LAMBDA_TOL, axis=-1) & np.any(np.abs(lam) <= LAMBDA_TOL, axis=-1)
        if ambiguous.any():
            return None
        lam, X, G = lam[inside], X[inside], G[inside]
        pts = np.einsum("sk,skd->sd", lam, X)
        J = np.abs(np.linalg.det(G)) if len(G) else np.zeros(0)
        thr = J_THRESHOLD * (J.max() if J.size else 0.0)
        orient = np.sign(np.linalg.det(G))[:, None] * np.ones((1, d)) if len(G) else np.zeros((0, d))
        in_E = J > thr
        segs = np.stack([pts, pts], axis=1)
        return LevelSetCurrent(y, 0, segs, orient, J, in_E, flagged=int((~in_E).sum()), perturbation=amp, attempts=attempt)

    def _curves(self, y, ids, V, X, G, nodes, amp, attempt):
        S, d, N = V.shape[0], self.d, self.N
        drop = [np.array([v for v in range(d + 1) if v != m]) for m in range(d + 1)]
        fids = np.stack([ids[:, dm] for dm in drop], axis=1)  # (S, d+1, d)
        keys = np.sort(fids, axis=-1).reshape(-1, d)
        uniq, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inv = inv.reshape(S, d + 1)
        s_of = first // (d + 1)
        m_of = first % (d + 1)
        vsel = np.stack([drop[m] for m in range(d + 1)])[m_of]  # (F, d)
        Vf = V[s_of[:, None], vsel]  # (F, d, N)
        Xf = X[s_of[:, None], vsel]  # (F, d, d)
        F = len(uniq)
        A = np.ones((F, d, d))
        A[:, :N, :] = np.swapaxes(Vf, 1, 2)
        rhs = np.broadcast_to(np.append(y, 1.0), (F, d))
        lam = _cramer(A, rhs)
        finite = np.all(np.isfinite(lam), axis=-1)
        crossed = finite & np.all(lam > LAMBDA_TOL, axis=-1)
        ambiguous = finite & np.all(lam > -LAMBDA_TOL, axis=-1) & np.any(np.abs(lam) <= LAMBDA_TOL, axis=-1)
        if ambiguous.any():
            return None
        count = crossed[inv].sum(axis=1)
        if np.any((count != 0) & (count != 2)):
            return None
        pts = np.einsum("fk,fkd->fd", np.where(crossed[:, None], lam, 0.0), Xf)
        on = count == 2
        if not on.any():
            return self._empty(y, amp, attempt)
        sel = inv[on]
        hit = crossed[sel]
        order = np.argsort(~hit, axis=1, kind="stable")[:, :2]
        ends = np.take_along_axis(sel, order, axis=1)
        segs = pts[ends]
        rho = self._orientation(G[on])
        J = np.linalg.norm(rho, axis=-1)
        thr = J_THRESHOLD * J.max()
        in_E = J > thr
        with np.errstate(invalid="ignore", divide="ignore"):
            zeta = self.sign * rho / np.where(J > 0, J, 1.0)[:, None]
        # facets lying on the lattice boundary
        multi = np.stack(np.unravel_index(uniq.ravel(), self.shape), axis=-1).reshape(F, d, d)
        on_bd = np.zeros(F, dtype=bool)
        for a in range(d):
            col = multi[:, :, a]
            same = np.all(col == col[:, :1], axis=1)
            on_bd |= same & ((col[:, 0] == 0) | (col[:, 0] == self.shape[a] - 1))
        return LevelSetCurrent(
            y, 1, segs, zeta, J, in_E, ends, on_bd, flagged=int((~in_E).sum()), perturbation=amp, attempts=attempt
        )


def level_set_current(U_axes: Sequence[np.ndarray], U_values: np.ndarray, y, n: int | None = None) -> LevelSetCurrent:
    """Extract ``U^{-1}(y)`` from nodal values; ``n`` fixes the ``(-1)^{n-1}`` orientation sign."""
    d = len(U_axes)
    n = d - 1 if n is None else n
    return Lattice(U_axes, U_values, (-1) ** (n - 1)).extract(y)


def cylinder_lattice(u: SampledMap, region, profile: ExtensionProfile | None = None) -> tuple[Lattice, ExtendedMap]:
    """Lattice over ``region x [0, t_K]``: the ``t = 0`` layer carries ``u`` itself."""
    ext = ExtendedMap(u, profile)
    n = u.grid.dim
    if u.codim != n:
        raise NotImplementedError("cylinder level sets are implemented for n = N (curves)")
    K = active_layers(ext.M)
    top = min(K + 1, ext.M)
    sl = tuple(slice(s, e) for s, e in zip(*region))
    U0 = u.values[sl][..., None, :]
    vals = np.concatenate([U0, ext.values(region, 0, top)], axis=-2)
    axes = [u.grid.axis(i)[s:e] for i, (s, e) in enumerate(zip(*region))]
    axes.append(np.concatenate([[0.0], ext.t(np.arange(top))]))
    return Lattice(axes, vals, (-1) ** (n - 1)), ext


# --- Monte Carlo levels ----------------------------------------------------


def ball_volume(N: int, r: float) -> float:
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1) * r**N


def ball_samples(center: np.ndarray, radius: float, N: int, count: int, seed: int) -> np.ndarray:
    """Stratified uniform samples of a ball by the equal-volume polar map.

    ``count = m^N`` uses jittered strata of the unit cube; other counts use Latin
    hypercube strata.
    """
    rng = np.random.default_rng(seed)
    m = round(count ** (1.0 / N))
    if m**N == count:
        grids = np.stack(np.meshgrid(*[np.arange(m)] * N, indexing="ij"), axis=-1).reshape(-1, N)
        U = (grids + rng.random((count, N))) / m
    else:
        U = qmc.LatinHypercube(d=N, seed=rng).random(count)
    if N == 2:
        r = radius * np.sqrt(U[:, 0])
        th = 2 * np.pi * U[:, 1]
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    elif N == 3:
        r = radius * np.cbrt(U[:, 0])
        cphi = 1 - 2 * U[:, 1]
        sphi = np.sqrt(1 - cphi**2)
        th = 2 * np.pi * U[:, 2]
        pts = np.stack([r * sphi * np.cos(th), r * sphi * np.sin(th), r * cphi], axis=-1)
    else:
        raise InvalidArgumentError(f"ball sampling supports N in (2, 3), got {N}")
    return center + pts


class CoareaCheck(NamedTuple):
    lhs: float
    rhs: float
    error: float


def _rel_error(lhs: float, rhs: float, eps: float = 1e-12) -> float:
    return abs(lhs - rhs) / (abs(lhs) + eps)


def _dpsi_tilde(psi: Expression, n: int, step: float) -> Callable[[np.ndarray], np.ndarray]:
    """Gradient of ``psi(x) eta(t)`` at points ``(x, t)``."""

    def grad(pts: np.ndarray) -> np.ndarray:
        xs = [pts[:, i] for i in range(n)]
        t = pts[:, n]
        g = expression_gradient(psi, xs, step)
        val = psi.evaluate_coords(xs)
        e = cutoff_eta(t)
        out = np.empty((len(pts), n + 1))
        for i in range(n):
            out[:, i] = e * g[i]
        out[:, n] = val * cutoff_eta_prime(t)
        return out

    return grad


def _single_zero_form(omega: DifferentialForm, n: int, N: int) -> Expression:
    if n != N or len(omega.terms) != 1 or omega.terms[0].alpha:
        raise NotImplementedError("level-set coarea checks are implemented for n = N with a 0-form")
    return omega.terms[0].coefficient


def level_integrals(
    u: SampledMap,
    omega: DifferentialForm,
    samples: int = 256,
    seed: int = 0,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
):
    """``(ys, values, volume, stats)`` with ``values[k] = T_{y_k} u(d omega~)``."""
    n, N = u.grid.dim, u.codim
    psi_expr = _single_zero_form(omega, n, N)
    psi = test_function(psi_expr, u.grid)
    region = psi.support_box(pad=2)
    lattice, _ = cylinder_lattice(u, region, profile)
    sl = tuple(slice(s, e) for s, e in zip(*region))
    live_x = (psi.values[sl] != 0.0) | np.any(psi.gradient[sl] != 0.0, axis=-1)
    live_t = lattice.axes[-1] < 0.75
    c, r = lattice.range_ball(live_x[..., None] & live_t)
    ys = ball_samples(c, r, N, samples, seed)
    grad = _dpsi_tilde(psi_expr, n, fd_step(u.grid))

    def one(y):
        cur = lattice.extract(y)
        return cur.pair_gradient(grad) if cur.size else 0.0, cur.flagged, cur.attempts

    out = list(map_fn(one, ys))
    vals = np.array([o[0] for o in out])
    stats = {"flagged": int(sum(o[1] for o in out)), "retries": int(sum(o[2] - 1 for o in out))}
    return ys, vals, ball_volume(N, r), stats


def weak_coarea_check(
    u: SampledMap,
    omega: DifferentialForm,
    samples: int = 256,
    seed: int = 0,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
) -> CoareaCheck:
    """``[Ju](omega)`` against the Monte Carlo value of ``int T_y u(d omega~) dy``."""
    lhs = ju_eval(u, omega, profile, map_fn).value
    ys, vals, vol, _ = level_integrals(u, omega, samples, seed, profile, map_fn)
    rhs = vol * math.fsum(vals) / len(vals)
    return CoareaCheck(lhs, rhs, _rel_error(lhs, rhs))


def compose(F: VectorExpression, u: SampledMap) -> SampledMap:
    """``F o u`` by evaluating ``F`` on the nodal values of ``u``."""
    if F.arity != u.codim or F.codim != u.codim:
        raise InvalidArgumentError("F must map R^N to R^N")
    vals = F.evaluate_coords([u.values[..., j] for j in range(u.codim)])
    return SampledMap(u.grid, vals, provenance=f"compose({F}):{u.provenance}")


def expression_jacobian_det(F: VectorExpression, ys: np.ndarray, step: float = 1e-6) -> np.ndarray:
    N = F.codim
    DF = np.empty((len(ys), N, N))
    coords = [ys[:, j] for j in range(N)]
    for r, comp in enumerate(F.components):
        for c, g in enumerate(expression_gradient(comp, coords, step)):
            DF[:, r, c] = g
    return np.linalg.det(DF)


def chain_rule_check(
    u: SampledMap,
    F: VectorExpression,
    omega: DifferentialForm,
    samples: int = 256,
    seed: int = 0,
    profile: ExtensionProfile | None = None,
    map_fn: MapFn = map,
    bound: float = 1e8,
) -> CoareaCheck:
    """``[J F(u)](omega)`` against ``int det DF(y) T_y u(d omega~) dy`` using the levels of ``U``."""
    lhs = ju_eval(compose(F, u), omega, profile, map_fn).value
    ys, vals, vol, _ = level_integrals(u, omega, samples, seed, profile, map_fn)
    det = expression_jacobian_det(F, ys)
    if not np.all(np.isfinite(det)) or np.max(np.abs(det)) > bound:
        raise InvalidArgumentError("DF is unbounded on the sampled range of U")
    rhs = vol * math.fsum(det * vals) / len(vals)
    return CoareaCheck(lhs, rhs, _rel_error(lhs, rhs))


def coarea_jacobian(Du: np.ndarray, n: int, N: int) -> np.ndarray:
    """``sqrt(sum_alpha M_{alpha_bar}^{(1..N)}(Du)^2)``: the Binet-Cauchy Jacobian."""
    rows = tuple(range(1, N + 1))
    acc = 0.0
    for abar in enumerate_indices(N, n):
        acc = acc + minor(Du, abar.entries, rows) ** 2
    return np.sqrt(acc)


def strong_coarea_check(u: SampledMap, samples: int = 4096, seed: int = 0, map_fn: MapFn = map) -> CoareaCheck:
    """``int_Omega J_N u dx`` against the Monte Carlo value of ``int H^{n-N}(u^{-1}(y) cap E_u) dy``."""
    n, N = u.grid.dim, u.codim
    if u.masked_count:
        raise DegenerateInputError(f"{u.masked_count} masked nodes; the strong coarea check needs a smooth map")
    if N > n:
        raise InvalidArgumentError("strong coarea needs N <= n")
    Du = jacobian(u).matrices
    lhs = integrate(coarea_jacobian(Du, n, N), u.grid).value
    lattice = Lattice(u.grid.axes(), u.values, 1)
    c, r = lattice.range_ball()
    if r == 0.0:
        return CoareaCheck(lhs, 0.0, _rel_error(lhs, 0.0))
    ys = ball_samples(c, r, N, samples, seed)
    meas = list(map_fn(lambda y: lattice.extract(y).measure(), ys))
    rhs = ball_volume(N, r) * math.fsum(meas) / len(meas)
    return CoareaCheck(lhs, rhs, _rel_error(lhs, rhs))


def bnv_mass(u: SampledMap, dictionary: Sequence[DifferentialForm], profile: ExtensionProfile | None = None, map_fn: MapFn = map):
    """Dictionary lower bound for ``sup {[Ju](omega) : |omega| <= 1}``."""
    return mass_lower_bound(lambda om: ju_eval(u, om, profile, map_fn).value, dictionary, u.grid)
