"""Extensions of maps and test functions from ``Omega`` to the cylinder ``Omega x (0,1)``.

The cylinder grid shares the horizontal cells of ``u`` and adds ``M`` vertical cells with
midpoints ``t_k = (k + 1/2)/M``. The extension variable is the last axis, so column
``n+1`` of ``DU`` is the ``t`` derivative.

Both extensions are evaluated lazily on index boxes of layers: the integrals that use
them only need the layers where the cut-off is active and the horizontal box around
``supp psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import InvalidArgumentError
from .fields import BoxGrid, SampledMap, TestFunction

Region = tuple[tuple[int, ...], tuple[int, ...]]

AVERAGING = "averaging"
PRODUCT = "product"


def smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def cutoff_eta(t):
    """1 on ``t <= 1/4``, 0 on ``t >= 3/4``, cubic smoothstep in between (max slope 3)."""
    return 1.0 - smoothstep(2.0 * (np.asarray(t, dtype=float) - 0.25))


def cutoff_eta_prime(t):
    s = np.clip(2.0 * (np.asarray(t, dtype=float) - 0.25), 0.0, 1.0)
    return -12.0 * s * (1.0 - s)


@dataclass(frozen=True)
class ExtensionProfile:
    kind: str = AVERAGING
    vertical_resolution: int | None = None

    def __post_init__(self):
        if self.kind not in (AVERAGING, PRODUCT):
            raise InvalidArgumentError(f"unknown extension kind {self.kind!r}")
        if self.vertical_resolution is not None and self.vertical_resolution < 3:
            raise InvalidArgumentError("vertical resolution must be >= 3")

    @staticmethod
    def eta(t):
        return cutoff_eta(t)

    @staticmethod
    def eta_prime(t):
        return cutoff_eta_prime(t)


def cylinder_grid(grid: BoxGrid, vertical_resolution: int | None = None) -> BoxGrid:
    M = vertical_resolution or max(grid.resolution)
    return BoxGrid(grid.lower + (0.0,), grid.upper + (1.0,), grid.resolution + (M,))


def active_layers(M: int) -> int:
    """Number of layers where ``Psi`` or its discrete ``t`` derivative can be nonzero."""
    return int(math.ceil(0.75 * M))


def full_region(grid: BoxGrid) -> Region:
    return tuple(0 for _ in grid.shape), tuple(grid.shape)


def expand_region(region: Region, shape: Sequence[int], pad: int = 1) -> Region:
    start = tuple(max(s - pad, 0) for s in region[0])
    stop = tuple(min(e + pad, r) for e, r in zip(region[1], shape))
    return start, stop


class _AveragingWindow:
    """FFT of the evenly reflected ``u`` over an index box enlarged by the ball radius."""

    def __init__(self, u: SampledMap, region: Region, t_max: float):
        grid = u.grid
        self.h = grid.h
        self.region = region
        self.R = tuple(int(math.ceil(t_max / hi)) + 1 for hi in self.h)
        start, stop = region
        shape = tuple(e - s for s, e in zip(start, stop))
        self.out_shape = shape
        self.L = tuple(n + 2 * r for n, r in zip(shape, self.R))
        pad = [(r, r) for r in self.R] + [(0, 0)]
        masked = bool(u.mask.any())
        vals = np.where(u.mask[..., None], 0.0, u.values) if masked else u.values
        big = np.pad(vals, pad, mode="symmetric")
        sl = tuple(slice(s, s + n + 2 * r) for s, n, r in zip(start, shape, self.R))
        win = big[sl]
        self.centre = win[tuple(slice(r, r + n) for r, n in zip(self.R, shape))]
        axes = tuple(range(grid.dim))
        self.fu = sfft.rfftn(win, s=self.L, axes=axes, workers=1)
        if masked:
            w = np.pad((~u.mask).astype(float), [(r, r) for r in self.R], mode="symmetric")[sl]
            self.fw = sfft.rfftn(w, s=self.L, workers=1)
            self.centre_w = w[tuple(slice(r, r + n) for r, n in zip(self.R, shape))]
        else:
            self.fw = None
        self.axes = axes

    def layer(self, t: float) -> np.ndarray:
        offs = [np.arange(-r, r + 1) for r in self.R]
        grids = np.meshgrid(*[o * hi for o, hi in zip(offs, self.h)], indexing="ij", sparse=True)
        inside = sum(g * g for g in grids) < t * t
        count = int(inside.sum())
        if count <= 1:
            if self.fw is None:
                return self.centre.copy()
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(self.centre_w[..., None] > 0, self.centre, np.nan)
        K = np.zeros(self.L)
        K[np.ix_(*[o % n for o, n in zip(offs, self.L)])] = inside
        fk = sfft.rfftn(K, workers=1)
        crop = tuple(slice(r, r + n) for r, n in zip(self.R, self.out_shape))
        num = sfft.irfftn(self.fu * fk[..., None], s=self.L, axes=self.axes, workers=1)[crop]
        if self.fw is None:
            return num / count
        den = sfft.irfftn(self.fw * fk, s=self.L, workers=1)[crop]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den[..., None] > 0.5, num / den[..., None], np.nan)


class ExtendedMap:
    """Lazy extension ``U`` of ``u`` to the cylinder.

    ``averaging``: ``U(x,t)`` is the mean of the evenly reflected ``u`` over cells whose
    midpoint lies in the open ball ``B(x,t)``. ``product``: ``U(x,t) = u(x)``.
    """

    def __init__(self, u: SampledMap, profile: ExtensionProfile | None = None):
        self.u = u
        self.profile = profile or ExtensionProfile()
        self.grid3 = cylinder_grid(u.grid, self.profile.vertical_resolution)
        self.M = self.grid3.resolution[-1]
        self.ht = 1.0 / self.M
        # layers used by the cut-off integrals, plus the difference halo
        self.k_limit = min(self.M - 1, active_layers(self.M) + 1)
        self._windows: dict = {}

    @property
    def kind(self) -> str:
        return self.profile.kind

    def t(self, k) -> np.ndarray:
        return (np.asarray(k) + 0.5) * self.ht

    def window(self, region: Region, k_max: int) -> _AveragingWindow | None:
        if self.kind == PRODUCT:
            return None
        k_max = self.k_limit if k_max <= self.k_limit else self.M - 1
        key = (region, k_max)
        if key not in self._windows:
            self._windows[key] = _AveragingWindow(self.u, region, float(self.t(k_max)))
        return self._windows[key]

    def values(self, region: Region, k0: int, k1: int) -> np.ndarray:
        """``U`` on ``region x layers[k0:k1]``; shape ``region + (k1-k0, N)``."""
        start, stop = region
        if self.kind == PRODUCT:
            sl = tuple(slice(s, e) for s, e in zip(start, stop))
            base = self.u.values[sl]
            return np.repeat(base[..., None, :], k1 - k0, axis=-2)
        win = self.window(region, k1 - 1)
        return np.stack([win.layer(float(self.t(k))) for k in range(k0, k1)], axis=-2)

    def jacobian(self, region: Region, k0: int, k1: int) -> np.ndarray:
        """``DU`` on ``region x layers[k0:k1]``; shape ``region + (k1-k0, N, n+1)``.

        Differences are taken on a one-cell halo so interior values agree with a whole-grid
        evaluation; the box faces and the layers ``0`` and ``M-1`` use one-sided stencils.
        """
        grid = self.u.grid
        n = grid.dim
        big = expand_region(region, grid.shape)
        lo, hi = max(k0 - 1, 0), min(k1 + 1, self.M)
        while hi - lo < 3:
            lo, hi = max(lo - 1, 0), min(hi + 1, self.M)
        if self.kind == PRODUCT:
            vals = self.values(big, 0, 3)
        else:
            vals = self.values(big, lo, hi)
        N = vals.shape[-1]
        spacing = list(grid.h) + [self.ht]
        crop = tuple(slice(s - bs, e - bs) for s, e, bs in zip(region[0], region[1], big[0]))
        shape = tuple(e - s for s, e in zip(*region)) + (k1 - k0, N, n + 1)
        DU = np.empty(shape)
        for j in range(N):
            grads = np.gradient(vals[..., j], *spacing, edge_order=2)
            for i, g in enumerate(grads):
                if self.kind == PRODUCT:
                    g = g[..., :1] if i < n else np.zeros_like(g[..., :1])
                    DU[..., j, i] = g[crop]
                else:
                    DU[..., j, i] = g[crop + (slice(k0 - lo, k1 - lo),)]
        return DU

    def materialize(self) -> SampledMap:
        """``U`` on the whole cylinder grid (small grids only)."""
        region = full_region(self.u.grid)
        vals = self.values(region, 0, self.M)
        return SampledMap(self.grid3, vals, provenance=f"{self.kind}-extension:{self.u.provenance}")


def extend_map(u: SampledMap, grid3: BoxGrid | None = None, kind: str = AVERAGING) -> ExtendedMap:
    if grid3 is not None:
        if grid3.dim != u.grid.dim + 1 or grid3.resolution[:-1] != u.grid.resolution:
            raise InvalidArgumentError("cylinder grid must share the horizontal cells of u")
        if tuple(grid3.lower[:-1]) != u.grid.lower or tuple(grid3.upper[:-1]) != u.grid.upper:
            raise InvalidArgumentError("cylinder grid must sit over the box of u")
        if (grid3.lower[-1], grid3.upper[-1]) != (0.0, 1.0):
            raise InvalidArgumentError("cylinder grid must span t in (0, 1)")
        M = grid3.resolution[-1]
    else:
        M = None
    return ExtendedMap(u, ExtensionProfile(kind, M))


class ExtendedTest:
    """``Psi(x,t) = psi(x) eta(t)`` on the cylinder grid.

    The ``t`` derivative is the cell-centred difference ``(eta(t+h/2) - eta(t-h/2))/h``,
    so that summing it over the layers gives exactly ``-psi``.
    """

    __test__ = False

    def __init__(self, psi: TestFunction, M: int):
        self.psi = psi
        self.M = M
        self.ht = 1.0 / M
        k = np.arange(M)
        t = (k + 0.5) * self.ht
        self.eta = cutoff_eta(t)
        self.deta = (cutoff_eta(t + 0.5 * self.ht) - cutoff_eta(t - 0.5 * self.ht)) / self.ht
        self.layers = active_layers(M)

    def values(self, region: Region, k0: int, k1: int) -> np.ndarray:
        sl = tuple(slice(s, e) for s, e in zip(*region))
        return self.psi.values[sl][..., None] * self.eta[k0:k1]

    def gradient(self, region: Region, k0: int, k1: int) -> np.ndarray:
        """Shape ``region + (k1-k0, n+1)``: ``(eta grad psi, psi d_t eta)``."""
        sl = tuple(slice(s, e) for s, e in zip(*region))
        g = self.psi.gradient[sl]
        v = self.psi.values[sl]
        n = g.shape[-1]
        out = np.empty(v.shape + (k1 - k0, n + 1))
        out[..., :n] = g[..., None, :] * self.eta[k0:k1, None]
        out[..., n] = v[..., None] * self.deta[k0:k1]
        return out

    def materialize(self) -> TestFunction:
        grid3 = cylinder_grid(self.psi.grid, self.M)
        region = full_region(self.psi.grid)
        return TestFunction(grid3, self.values(region, 0, self.M), self.gradient(region, 0, self.M))


def extend_test(psi: TestFunction, profile: ExtensionProfile | None = None, M: int | None = None) -> ExtendedTest:
    profile = profile or ExtensionProfile()
    M = M or profile.vertical_resolution or max(psi.grid.resolution)
    return ExtendedTest(psi, M)
