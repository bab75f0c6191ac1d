"""Box grids, sampled fields, finite-difference Jacobians and midpoint quadrature.

Nodes sit at cell midpoints. Arrays of nodal values have the grid shape as their
leading axes, followed by component axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, InvalidArgumentError
from .exprdsl import Expression, VectorExpression


@dataclass(frozen=True)
class BoxGrid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        res = tuple(int(r) for r in self.resolution)
        if not (len(lo) == len(hi) == len(res)) or not lo:
            raise InvalidArgumentError("lower, upper and resolution must have one common length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidArgumentError(f"need lower < upper componentwise, got {lo} and {hi}")
        if any(r < 2 for r in res):
            raise InvalidArgumentError(f"resolution must be >= 2 per axis, got {res}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def cube(cls, dim: int, lo: float, hi: float, res: int) -> "BoxGrid":
        return cls((lo,) * dim, (hi,) * dim, (res,) * dim)

    @property
    def dim(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / np.array(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.resolution))

    def axis(self, i: int) -> np.ndarray:
        h = (self.upper[i] - self.lower[i]) / self.resolution[i]
        return self.lower[i] + (np.arange(self.resolution[i]) + 0.5) * h

    def axes(self) -> list[np.ndarray]:
        return [self.axis(i) for i in range(self.dim)]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (open mesh)."""
        return np.meshgrid(*self.axes(), indexing="ij", sparse=True)

    def points(self) -> np.ndarray:
        """Dense node coordinates, shape ``grid.shape + (dim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def boundary_distance(self) -> np.ndarray:
        """Distance of every node to the box boundary (sup over axes of the per-axis minimum)."""
        d = np.full(self.shape, np.inf)
        for i, x in enumerate(self.coords()):
            d = np.minimum(d, np.minimum(x - self.lower[i], self.upper[i] - x))
        return d

    def sub(self, start: Sequence[int], stop: Sequence[int]) -> "BoxGrid":
        """The grid of cells ``start[i] <= idx < stop[i]`` on every axis."""
        h = self.h
        lo = [self.lower[i] + start[i] * h[i] for i in range(self.dim)]
        hi = [self.lower[i] + stop[i] * h[i] for i in range(self.dim)]
        return BoxGrid(tuple(lo), tuple(hi), tuple(b - a for a, b in zip(start, stop)))


@dataclass(frozen=True, eq=False)
class SampledMap:
    """``N`` components per node; ``mask`` marks nodes with non-finite values."""

    grid: BoxGrid
    values: np.ndarray
    mask: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == self.grid.dim:
            v = v[..., None]
        if v.shape[: self.grid.dim] != self.grid.shape or v.ndim != self.grid.dim + 1:
            raise InvalidArgumentError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        mask = ~np.all(np.isfinite(v), axis=-1) if self.mask is None else np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", mask)

    @property
    def codim(self) -> int:
        return self.values.shape[-1]

    @property
    def masked_count(self) -> int:
        return int(self.mask.sum())

    def component(self, j: int) -> np.ndarray:
        return self.values[..., j]


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A scalar field that vanishes on every node closer than ``margin`` to the boundary."""

    __test__ = False

    grid: BoxGrid
    values: np.ndarray
    gradient: np.ndarray
    margin: float = 0.0
    expression: Expression | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = np.asarray(self.gradient, dtype=float)
        if v.shape != self.grid.shape or g.shape != self.grid.shape + (self.grid.dim,):
            raise InvalidArgumentError("test function arrays do not match the grid")
        near = self.grid.boundary_distance() < self.margin
        if np.any(v[near] != 0.0):
            raise InvalidArgumentError(
                f"test function is nonzero within the support margin {self.margin} of the boundary"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gradient", g)

    def support_box(self, pad: int = 1) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Index box covering ``supp psi`` and ``supp grad psi``, padded by ``pad`` cells."""
        nz = (self.values != 0.0) | np.any(self.gradient != 0.0, axis=-1)
        if not nz.any():
            return tuple(0 for _ in self.grid.shape), tuple(0 for _ in self.grid.shape)
        idx = np.nonzero(nz)
        start = tuple(max(int(i.min()) - pad, 0) for i in idx)
        stop = tuple(min(int(i.max()) + 1 + pad, r) for i, r in zip(idx, self.grid.shape))
        return start, stop

    def scaled(self, c: float) -> "TestFunction":
        return TestFunction(self.grid, c * self.values, c * self.gradient, self.margin)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        return TestFunction(
            self.grid, self.values + other.values, self.gradient + other.gradient, max(self.margin, other.margin)
        )


@dataclass(frozen=True, eq=False)
class JacobianField:
    """``matrices[..., j, i] = d u^j / d x_i`` at every node."""

    grid: BoxGrid
    matrices: np.ndarray
    scheme: str = "central/one-sided-2"


class Integral(NamedTuple):
    value: float
    masked: int


def fd_step(grid: BoxGrid) -> float:
    """Step for central differences of expressions: small relative to the box scale."""
    return 1e-5 * float(max(np.array(grid.upper) - np.array(grid.lower)))


def expression_gradient(expr: Expression, coords: Sequence[np.ndarray], step: float) -> list[np.ndarray]:
    """Central differences of ``expr`` in every coordinate slot."""
    out = []
    for i in range(len(coords)):
        plus = list(coords)
        minus = list(coords)
        plus[i] = coords[i] + step
        minus[i] = coords[i] - step
        out.append((expr.evaluate_coords(plus) - expr.evaluate_coords(minus)) / (2.0 * step))
    return out


def sample(expr: VectorExpression | Expression, grid: BoxGrid) -> SampledMap:
    """Evaluate at cell midpoints; non-finite nodes land in the mask."""
    if isinstance(expr, Expression):
        expr = VectorExpression((expr,))
    if expr.arity != grid.dim or expr.components[0].y_arity:
        raise InvalidArgumentError(f"expression arity {expr.arity} does not match grid dimension {grid.dim}")
    return SampledMap(grid, expr.evaluate_coords(grid.coords()), provenance=f"expr:{expr}")


def test_function(expr: Expression, grid: BoxGrid, margin: float | None = None) -> TestFunction:
    """Sample ``psi`` and its finite-difference gradient. Default margin: half a cell."""
    if expr.width != grid.dim:
        raise InvalidArgumentError(f"test function arity {expr.width} does not match grid dimension {grid.dim}")
    if margin is None:
        margin = 0.5 * float(grid.h.min())
    coords = grid.coords()
    values = expr.evaluate_coords(coords)
    grad = np.stack(expression_gradient(expr, coords, fd_step(grid)), axis=-1)
    return TestFunction(grid, values, grad, margin, expr)


test_function.__test__ = False


def jacobian(u: SampledMap) -> JacobianField:
    """Second-order differences: central inside, one-sided at the boundary layer. NaNs spread."""
    grid = u.grid
    if any(r < 3 for r in grid.resolution):
        raise InvalidArgumentError("jacobian needs resolution >= 3 per axis")
    h = grid.h
    mats = np.empty(grid.shape + (u.codim, grid.dim))
    for j in range(u.codim):
        grads = np.gradient(u.values[..., j], *h, edge_order=2)
        if grid.dim == 1:
            grads = [grads]
        for i, g in enumerate(grads):
            mats[..., j, i] = g
    return JacobianField(grid, mats)


def block_sum(a: np.ndarray) -> float:
    """Sum with a fixed order: numpy pairwise summation over a contiguous copy."""
    return float(np.sum(np.ascontiguousarray(a, dtype=float).ravel()))


def tree_sum(partials: Sequence[float]) -> float:
    """Combine partial sums exactly; the result does not depend on their order."""
    return math.fsum(partials)


def integrate(f: np.ndarray, grid: BoxGrid, mask: np.ndarray | None = None) -> Integral:
    """Midpoint rule over unmasked nodes; non-finite nodes are counted as masked."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        f = np.broadcast_to(f, grid.shape)
    bad = ~np.isfinite(f)
    if mask is not None:
        bad = bad | mask
    vals = np.where(bad, 0.0, f)
    return Integral(block_sum(vals) * grid.cell_volume, int(bad.sum()))


def lp_norm(u: SampledMap, p: float) -> float:
    """Discrete ``L^p`` norm of ``|u|`` (Euclidean in components) over unmasked nodes."""
    mag = np.linalg.norm(u.values, axis=-1)
    return integrate(mag**p, u.grid, u.mask).value ** (1.0 / p)


def mollify(u: SampledMap, eps: float) -> SampledMap:
    """Convolve with the standard mollifier of radius ``eps``; the boundary is reflected evenly.

    Masked nodes are left out of the weighted average.
    """
    grid = u.grid
    h = grid.h
    half = [int(math.floor(eps / hi)) for hi in h]
    offs = np.meshgrid(*[np.arange(-k, k + 1) * hi for k, hi in zip(half, h)], indexing="ij", sparse=True)
    q = sum(o**2 for o in offs) / eps**2
    with np.errstate(divide="ignore", over="ignore"):
        kernel = np.where(q < 1.0, np.exp(-1.0 / np.where(q < 1.0, 1.0 - q, 1.0)), 0.0)
    kernel = kernel / kernel.sum()
    w = (~u.mask).astype(float)
    weight = ndimage.convolve(w, kernel, mode="reflect")
    out = np.empty_like(u.values)
    for j in range(u.codim):
        v = np.where(u.mask, 0.0, u.values[..., j])
        out[..., j] = ndimage.convolve(v, kernel, mode="reflect") / weight
    return SampledMap(grid, out, provenance=f"mollified({eps}):{u.provenance}")


# --- DCF1 ----------------------------------------------------------------

DCF_VERSION = 1


def write_dcf(path: str | Path, u: SampledMap) -> None:
    g = u.grid
    header = [
        f"dcf {DCF_VERSION}",
        f"dim {g.dim}",
        f"codim {u.codim}",
        "box " + " ".join(repr(v) for v in g.lower + g.upper),
        "res " + " ".join(str(r) for r in g.resolution),
        "order row-major",
        "data",
    ]
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(data)


def read_dcf(path: str | Path) -> SampledMap:
    raw = Path(path).read_bytes()
    meta: dict[str, list[str]] = {}
    pos = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise InvalidArgumentError("DCF header is not terminated by a data line")
        line = raw[pos:end].decode("ascii").strip()
        pos = end + 1
        if line == "data":
            break
        key, *rest = line.split()
        meta[key] = rest
    if meta.get("dcf") != [str(DCF_VERSION)]:
        raise InvalidArgumentError(f"unsupported DCF version {meta.get('dcf')}")
    if meta.get("order") != ["row-major"]:
        raise InvalidArgumentError(f"unsupported DCF order {meta.get('order')}")
    dim = int(meta["dim"][0])
    codim = int(meta["codim"][0])
    box = [float(v) for v in meta["box"]]
    res = tuple(int(r) for r in meta["res"])
    if len(box) != 2 * dim or len(res) != dim:
        raise InvalidArgumentError("DCF box/res entries do not match dim")
    grid = BoxGrid(tuple(box[:dim]), tuple(box[dim:]), res)
    values = np.frombuffer(raw, dtype="<f8", offset=pos)
    if values.size != grid.node_count * codim:
        raise InvalidArgumentError(f"DCF payload has {values.size} values, expected {grid.node_count * codim}")
    return SampledMap(grid, values.reshape(res + (codim,)).astype(float), provenance=f"file:{path}")
