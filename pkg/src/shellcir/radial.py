"""Radial basis sets for the relative and centre-of-mass motion.

Reference operators, acting on u = r psi (relative, reduced mass 1/2)
and w = R Psi (centre of mass, total mass 2):

    relative:  -u'' + [r^2/4 + l(l+1)/r^2] u,   u'(0) = -u(0)/a0 for l = 0
    com:       -w''/4 + [(R - r0)^2 + L(L+1)/(4 R^2)] w,   w(0) = 0

Their sum differs from the trap potential only by the non-separable
residual handled in :mod:`shellcir.coupled`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fedvr import RadialGrid, graded_edges, solve_sturm_liouville
from .model import Truncation


class GridTooCoarse(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RadialBasisSet:
    kind: str  # "relative" or "com"
    l_or_L: int
    grid: RadialGrid
    functions: np.ndarray  # (grid.size, n) nodal values of u(r)
    ref_energies: np.ndarray

    @property
    def size(self) -> int:
        return self.functions.shape[1]

    def weighted(self) -> np.ndarray:
        return self.functions * self.grid.weights[:, None]


def relative_grid(trunc: Truncation, inv_a0: float) -> RadialGrid:
    """Mesh for the relative coordinate, graded towards r=0 to resolve exp(-r/a0)."""
    ext = trunc.r_extent or 16.0
    if math.isfinite(inv_a0) and inv_a0 > 0:
        h_min = min(trunc.h_max, max(0.02, 0.5 / inv_a0))
    else:
        h_min = min(trunc.h_max, 0.25)
    return RadialGrid(graded_edges(ext, trunc.h_max, h_min, growth=1.3), trunc.order)


def com_grid(trunc: Truncation) -> RadialGrid:
    return RadialGrid.uniform(trunc.R_extent or 12.0, trunc.h_max, trunc.order)


def _centrifugal(x: np.ndarray, coef: float) -> np.ndarray:
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = coef / x[nz] ** 2
    return out


_cache: dict = {}


def _cached(key, build):
    if key not in _cache:
        if len(_cache) > 256:
            _cache.clear()
        _cache[key] = build()
    return _cache[key]


def build_relative_basis(inv_a0: float, l: int, grid: RadialGrid, n_max: int) -> RadialBasisSet:
    """Lowest ``n_max`` eigenfunctions of the relative reference operator."""
    if l % 2:
        raise ValueError("relative angular momentum must be even for identical bosons")
    if n_max == 0:
        return _empty("relative", l, grid)
    if n_max > grid.size // 4:
        raise ValueError(f"n_max={n_max} exceeds grid size/4 ({grid.size // 4})")
    key = ("rel", float(inv_a0), l, grid.edges.tobytes(), grid.order, n_max)

    def build():
        r = grid.points
        pot = r**2 / 4.0 + _centrifugal(r, l * (l + 1.0))
        robin = None
        if l == 0 and math.isfinite(inv_a0):
            robin = inv_a0
        E, u = solve_sturm_liouville(grid, 1.0, pot, n_max, robin=robin)
        if robin is not None and inv_a0 > 0:
            _check_resolution(grid, u[:, 0])
        return RadialBasisSet("relative", l, grid, u, E)

    return _cached(key, build)


def _check_resolution(grid: RadialGrid, u0: np.ndarray) -> None:
    a = np.abs(u0)
    imax = int(np.argmax(a))
    below = np.nonzero(a[imax:] < 0.5 * a[imax])[0]
    if not len(below):
        return
    half_width = grid.points[imax + below[0]] - grid.points[imax]
    local = (grid.edges[1] - grid.edges[0]) / grid.order
    if half_width < 4 * local:
        raise GridTooCoarse("refine grid near origin: molecular state narrower than 4 grid spacings")


def build_com_basis(r0: float, L: int, grid: RadialGrid, n_max: int,
                    scale: float = 1.0) -> RadialBasisSet:
    """Lowest ``n_max`` eigenfunctions of the shifted centre-of-mass oscillator.

    ``scale`` multiplies the (R - r0)^2 term; only used to move the
    reference/residual split in convergence checks.
    """
    if n_max == 0:
        return _empty("com", L, grid)
    if n_max > grid.size // 4:
        raise ValueError(f"n_max={n_max} exceeds grid size/4 ({grid.size // 4})")
    key = ("com", float(r0), L, grid.edges.tobytes(), grid.order, n_max, float(scale))

    def build():
        R = grid.points
        pot = scale * (R - r0) ** 2 + _centrifugal(R, L * (L + 1.0) / 4.0)
        E, w = solve_sturm_liouville(grid, 0.25, pot, n_max)
        return RadialBasisSet("com", L, grid, w, E)

    return _cached(key, build)


def gram_matrix(basis: RadialBasisSet, r_max: float | None = None) -> np.ndarray:
    """Quadrature Gram matrix of the basis functions, optionally over [0, r_max] only."""
    f = basis.functions
    w = basis.grid.weights
    if r_max is not None:
        w = np.where(basis.grid.points <= r_max, w, 0.0)
    return f.T @ (f * w[:, None])


def orthonormality_defect(basis: RadialBasisSet, r_max: float | None = None) -> float:
    g = gram_matrix(basis, r_max)
    return float(np.abs(g - np.eye(len(g))).max()) if len(g) else 0.0


def _empty(kind: str, l: int, grid: RadialGrid) -> RadialBasisSet:
    return RadialBasisSet(kind, l, grid, np.zeros((grid.size, 0)), np.zeros(0))
