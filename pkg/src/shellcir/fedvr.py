"""Finite-element discrete variable representation on a half line.

Every radial-type problem in the package (relative, centre-of-mass,
hyperangular, hyperradial) is discretised on a :class:`RadialGrid`: a
mesh of elements, each carrying Gauss-Lobatto-Legendre (GLL) nodes. The
nodal values of a function are its coordinates, the GLL weights double
as the quadrature rule, and Robin conditions enter through the weak
form as a single boundary term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import linalg


@lru_cache(maxsize=None)
def gll_rule(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """GLL nodes, weights and the Lagrange derivative matrix on [-1, 1]."""
    if order < 2:
        raise ValueError("GLL order must be >= 2")
    p = order
    inner = npleg.legroots(npleg.legder([0] * p + [1]))
    t = np.concatenate(([-1.0], np.sort(inner), [1.0]))
    pp = npleg.legval(t, [0] * p + [1])
    w = 2.0 / (p * (p + 1) * pp**2)
    d = np.zeros((p + 1, p + 1))
    for i in range(p + 1):
        for j in range(p + 1):
            if i != j:
                d[i, j] = pp[i] / (pp[j] * (t[i] - t[j]))
    d[0, 0] = -p * (p + 1) / 4.0
    d[p, p] = p * (p + 1) / 4.0
    return t, w, d


def graded_edges(extent: float, h_max: float, h_min: float | None = None,
                 growth: float = 1.3, breaks: tuple[float, ...] = ()) -> np.ndarray:
    """Element edges on [0, extent].

    Element sizes start at ``h_min`` (if given) and grow geometrically up
    to ``h_max``. Points in ``breaks`` are forced to be element edges.
    """
    if extent <= 0 or h_max <= 0:
        raise ValueError("grid extent and element size must be positive")
    edges = [0.0]
    h = h_max if h_min is None else min(h_min, h_max)
    while edges[-1] < extent - 1e-12:
        edges.append(min(edges[-1] + h, extent))
        h = min(h * growth, h_max)
    if len(edges) > 2 and edges[-1] - edges[-2] < 0.3 * h_max:
        del edges[-2]
    out = np.asarray(edges)
    for b in breaks:
        if 0 < b < extent and np.min(np.abs(out - b)) > 1e-12:
            k = int(np.argmin(np.abs(out - b)))
            if k in (0, len(out) - 1):
                out = np.sort(np.append(out, b))
            else:
                out[k] = b
    return out


@dataclass(frozen=True)
class RadialGrid:
    """GLL nodes and weights of an element mesh on [0, extent]."""

    edges: np.ndarray
    order: int = 10
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
            raise ValueError("element edges must be strictly increasing")
        object.__setattr__(self, "edges", edges)
        t, w, _ = gll_rule(self.order)
        ne, p = len(edges) - 1, self.order
        pts = np.empty(ne * p + 1)
        wts = np.zeros(ne * p + 1)
        for e in range(ne):
            a, b = edges[e], edges[e + 1]
            pts[e * p:e * p + p + 1] = a + (t + 1.0) * (b - a) / 2.0
            wts[e * p:e * p + p + 1] += w * (b - a) / 2.0
        pts[0], pts[-1] = edges[0], edges[-1]
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def uniform(cls, extent: float, h: float = 0.5, order: int = 10) -> "RadialGrid":
        n = max(1, int(np.ceil(extent / h - 1e-9)))
        return cls(np.linspace(0.0, extent, n + 1), order)

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def extent(self) -> float:
        return float(self.edges[-1])

    def spacing(self) -> np.ndarray:
        return np.diff(self.points)

    def stiffness(self) -> np.ndarray:
        """Global matrix of int phi_i' phi_j' over the mesh (dense)."""
        t, w, d = gll_rule(self.order)
        p, n = self.order, self.size
        k = np.zeros((n, n))
        for e in range(len(self.edges) - 1):
            h = self.edges[e + 1] - self.edges[e]
            loc = (d.T * w) @ d * (2.0 / h)
            s = slice(e * p, e * p + p + 1)
            k[s, s] += loc
        return k

    def _locate(self, x: np.ndarray) -> np.ndarray:
        e = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(e, 0, len(self.edges) - 2)

    def interpolation_weights(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Node indices (n, order+1) and barycentric weights for positions ``x``.

        Points outside [0, extent] get all-zero weights.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        outside = (x < self.edges[0] - 1e-12) | (x > self.edges[-1] + 1e-12)
        x = np.clip(x, self.edges[0], self.edges[-1])
        t, _, _ = gll_rule(self.order)
        p = self.order
        bw = _bary_weights(p)
        e = self._locate(x)
        a, b = self.edges[e], self.edges[e + 1]
        s = 2.0 * (x - a) / (b - a) - 1.0
        diff = s[:, None] - t[None, :]
        exact = np.isclose(diff, 0.0, atol=1e-14)
        diff[exact] = 1.0
        c = bw[None, :] / diff
        c = c / c.sum(axis=1, keepdims=True)
        rows, cols = np.nonzero(exact)
        c[rows] = 0.0
        c[rows, cols] = 1.0
        c[outside] = 0.0
        idx = e[:, None] * p + np.arange(p + 1)[None, :]
        return idx, c

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Evaluate nodal ``values`` (shape (size, ...)) at positions ``x``.

        Points outside [0, extent] evaluate to zero.
        """
        values = np.asarray(values)
        idx, c = self.interpolation_weights(x)
        return np.einsum("xq,xq...->x...", c, values[idx])

    def derivative_at_origin(self, values: np.ndarray) -> np.ndarray:
        """One-sided spectral derivative at x=0 from the first element."""
        _, _, d = gll_rule(self.order)
        h = self.edges[1] - self.edges[0]
        return (2.0 / h) * np.tensordot(d[0], np.asarray(values)[: self.order + 1], axes=1)


@lru_cache(maxsize=None)
def _bary_weights(order: int) -> np.ndarray:
    t, _, _ = gll_rule(order)
    diff = t[:, None] - t[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / diff.prod(axis=1)


def solve_sturm_liouville(grid: RadialGrid, kinetic: float, potential: np.ndarray,
                          n_max: int, robin: float | None = None,
                          dirichlet_left: bool = True, dirichlet_right: bool = True):
    """Lowest eigenpairs of ``-kinetic d^2/dx^2 + potential`` on the grid.

    With ``robin`` given, the left boundary obeys u'(0) = -robin * u(0)
    (natural condition); otherwise the left node is Dirichlet when
    ``dirichlet_left`` is set and Neumann when not. The right node is
    Dirichlet unless ``dirichlet_right`` is False.

    Returns (energies, functions) where ``functions`` has shape
    (grid.size, n_max) holding nodal values (zero on Dirichlet nodes),
    orthonormal under ``grid.weights``. Signs are fixed so that the
    first sizeable lobe from the origin is positive.
    """
    n = grid.size
    h = kinetic * grid.stiffness()
    w = grid.weights
    keep = np.ones(n, dtype=bool)
    if robin is not None:
        h[0, 0] -= kinetic * robin
    elif dirichlet_left:
        keep[0] = False
    if dirichlet_right:
        keep[-1] = False
    pot = np.array(potential, dtype=float)
    pot[~keep] = 0.0
    h[np.diag_indices(n)] += pot * w
    idx = np.nonzero(keep)[0]
    sw = np.sqrt(w[idx])
    hs = h[np.ix_(idx, idx)] / sw[:, None] / sw[None, :]
    n_max = min(n_max, len(idx))
    if n_max == 0:
        return np.zeros(0), np.zeros((n, 0))
    vals, vecs = linalg.eigh(hs, subset_by_index=[0, n_max - 1])
    funcs = np.zeros((n, n_max))
    funcs[idx] = vecs / sw[:, None]
    fix_signs(funcs)
    return vals, funcs


def fix_signs(funcs: np.ndarray, rel: float = 1e-3) -> None:
    """Flip columns in place so the first node above ``rel``*max is positive."""
    for j in range(funcs.shape[1]):
        col = funcs[:, j]
        big = np.nonzero(np.abs(col) > rel * np.abs(col).max())[0]
        if len(big) and col[big[0]] < 0:
            funcs[:, j] = -col
