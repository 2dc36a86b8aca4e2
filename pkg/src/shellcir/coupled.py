"""Exact diagonalisation in the product basis relative x centre-of-mass x angles.

The trap potential 1/2 (|r1| - r0)^2 + 1/2 (|r2| - r0)^2 equals the sum
of the two reference potentials of :mod:`shellcir.radial` plus

    dV = -r0 (|R + r/2| + |R - r/2| - 2R),

which is <= 0 (triangle inequality) and couples relative and
centre-of-mass motion through its Legendre multipoles in cos(r, R).
dV is linear in r0, so the multipole table and all relative-coordinate
integrals are built once per scattering length and reused along a scan.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import eval_legendre

from .angular import angular_coupling
from .fedvr import RadialGrid
from .model import Channel, ModelParams, Truncation, enumerate_channels, resolve_extents
from .radial import (RadialBasisSet, build_com_basis, build_relative_basis, com_grid,
                     relative_grid)

log = logging.getLogger(__name__)

MAX_DIM = 20000


class DimensionError(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


def residual_potential(r, R, costheta, r0):
    """Non-separable part of the shell potential in hbar*omega."""
    r, R, c = np.broadcast_arrays(np.asarray(r, float), np.asarray(R, float),
                                  np.asarray(costheta, float))
    a = R * R + 0.25 * r * r
    b = R * r * c
    s1 = np.sqrt(np.maximum(a + b, 0.0))
    s2 = np.sqrt(np.maximum(a - b, 0.0))
    return -r0 * (s1 + s2 - 2.0 * R)


@dataclass(frozen=True, eq=False)
class MultipoleTable:
    """Even Legendre coefficients v_k(r_i, R_j) of dV on a product grid."""

    r0: float
    ks: np.ndarray
    values: np.ndarray  # (len(ks), len(r), len(R))
    r: np.ndarray
    R: np.ndarray

    def coefficient(self, k: int) -> np.ndarray:
        if k % 2:
            return np.zeros(self.values.shape[1:])
        return self.values[list(self.ks).index(k)]

    def reconstruct(self, costheta: float) -> np.ndarray:
        p = eval_legendre(self.ks, costheta)
        return np.tensordot(p, self.values, axes=1)

    def scaled(self, r0: float) -> "MultipoleTable":
        f = r0 / self.r0 if self.r0 else 0.0
        return MultipoleTable(r0, self.ks, self.values * f, self.r, self.R)


def multipole_decompose(r0: float, grid_r, grid_R, k_max: int, n_nodes: int | None = None) -> MultipoleTable:
    """v_k = (2k+1)/2 int_{-1}^{1} dV P_k dc for even k <= k_max.

    dV is even in c, so the integral is folded onto [0, 1] and mapped
    with c = 1 - t^2, which removes the square-root behaviour of
    |R - r/2| at c = 1 on the line r = 2R.
    """
    r = np.asarray(getattr(grid_r, "points", grid_r), float)
    R = np.asarray(getattr(grid_R, "points", grid_R), float)
    n_nodes = n_nodes or max(2 * k_max + 8, 48)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w * 2.0 * t  # dc = 2t dt on t in [0, 1]
    c = 1.0 - t * t
    ks = np.arange(0, k_max + 1, 2)
    pk = eval_legendre(ks[:, None], c[None, :]) * wt[None, :] * (2 * ks[:, None] + 1)
    vals = np.empty((len(ks), len(r), len(R)))
    rr, RR = r[:, None], R[None, :]
    acc = np.zeros((len(ks),) + rr.shape[:1] + RR.shape[1:])
    for q in range(n_nodes):
        dv = residual_potential(rr, RR, c[q], 1.0)
        acc += pk[:, q, None, None] * dv[None]
    vals[:] = acc * r0
    return MultipoleTable(float(r0), ks, vals, r, R)


@dataclass(eq=False)
class SpectrumResult:
    """Eigenpairs of one (J, parity) block at one shell radius."""

    energies: np.ndarray
    vectors: np.ndarray  # (dim, n_states), orthonormal columns
    r0: float | None = None
    channels: list = field(default_factory=list)
    rel_bases: dict = field(default_factory=dict)
    com_bases: dict = field(default_factory=dict)
    params: ModelParams | None = None

    @property
    def n_rel(self) -> int:
        return next(iter(self.rel_bases.values())).size

    @property
    def n_com(self) -> int:
        return next(iter(self.com_bases.values())).size

    def coefficients(self, n: int) -> np.ndarray:
        """State ``n`` as an array (channel, n_rel, n_com)."""
        return self.vectors[:, n].reshape(len(self.channels), self.n_rel, self.n_com)

    def channel_weights(self, n: int) -> np.ndarray:
        return (self.coefficients(n) ** 2).sum(axis=(1, 2))

    def dominant(self, n: int) -> tuple[Channel, int, int]:
        c = self.coefficients(n)
        ch, a, b = np.unravel_index(int(np.argmax(np.abs(c))), c.shape)
        return self.channels[ch], int(a), int(b)


def _fix_vector_signs(vecs: np.ndarray) -> None:
    idx = np.argmax(np.abs(vecs), axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    vecs *= s


def diagonalize_block(H: np.ndarray, n_states: int | None = None, **context) -> SpectrumResult:
    """Dense symmetric eigendecomposition, ascending, signs fixed.

    The largest-magnitude component of every eigenvector is positive.
    ``context`` fills the remaining :class:`SpectrumResult` fields.
    """
    H = np.asarray(H, float)
    n = H.shape[0]
    sub = None if n_states is None or n_states >= n else [0, n_states - 1]
    try:
        E, V = linalg.eigh(H, subset_by_index=sub, driver="evr" if sub else "evd")
    except (linalg.LinAlgError, ValueError) as exc:
        diag = np.diag(H)
        raise EigenSolverError(
            f"eigensolver failed on {n}x{n} matrix (diag range [{diag.min():.3g}, {diag.max():.3g}], "
            f"asymmetry {np.abs(H - H.T).max():.3g}, finite={np.isfinite(H).all()}): {exc}") from exc
    _fix_vector_signs(V)
    return SpectrumResult(E, V, **context)


class ExactSolver:
    """Coupled-channel solver for one scattering length and (J, parity) block.

    Everything that does not depend on r0 (relative bases, multipole
    shape, angular factors, relative-coordinate integrals) is built here;
    :meth:`solve` only adds the r0-dependent centre-of-mass contraction.
    """

    def __init__(self, params: ModelParams, trunc: Truncation | None = None,
                 r0_max: float | None = None, com_ref_scale: float = 1.0):
        trunc = trunc or Truncation()
        self.params = params
        self.com_ref_scale = com_ref_scale
        self.trunc = resolve_extents(trunc, params.r0 if r0_max is None else r0_max)
        self.channels = enumerate_channels(params, self.trunc)
        n_rel, n_com = self.trunc.n_rel_max, self.trunc.n_com_max
        self.dim = len(self.channels) * n_rel * n_com
        if self.dim > MAX_DIM:
            raise DimensionError(f"basis dimension {self.dim} > {MAX_DIM}: reduce truncation")
        self.grid_r = relative_grid(self.trunc, params.inv_a0)
        self.grid_R = com_grid(self.trunc)
        self.rel_bases = {l: build_relative_basis(params.inv_a0, l, self.grid_r, n_rel)
                          for l in sorted({ch.l for ch in self.channels})}
        self.shape = multipole_decompose(1.0, self.grid_r, self.grid_R, self.trunc.k_max,
                                         self.trunc.quadrature_nodes())
        self._pairs = {}
        wr = self.grid_r.weights
        for i, ch in enumerate(self.channels):
            for j in range(i, len(self.channels)):
                ch2 = self.channels[j]
                comb = np.zeros(self.shape.values.shape[1:])
                for k, vk in zip(self.shape.ks, self.shape.values):
                    a = angular_coupling(ch.l, ch.L, ch2.l, ch2.L, params.J, int(k))
                    if a:
                        comb += a * vk
                if not np.any(comb):
                    continue
                ua = self.rel_bases[ch.l].functions
                uc = self.rel_bases[ch2.l].functions
                prod = (ua[:, :, None] * uc[:, None, :] * wr[:, None, None]).reshape(len(wr), -1)
                self._pairs[(i, j)] = (prod.T @ comb).reshape(n_rel, n_rel, -1)

    def com_bases(self, r0: float) -> dict[int, RadialBasisSet]:
        return {L: build_com_basis(r0, L, self.grid_R, self.trunc.n_com_max, self.com_ref_scale)
                for L in sorted({ch.L for ch in self.channels})}

    def assemble(self, r0: float):
        """Hamiltonian matrix at shell radius ``r0`` and the CoM bases used."""
        if r0 > self.trunc.R_extent - 6.0:
            log.warning("r0=%g close to the CoM grid extent %g", r0, self.trunc.R_extent)
        com = self.com_bases(r0)
        nr, nc = self.trunc.n_rel_max, self.trunc.n_com_max
        blk = nr * nc
        H = np.zeros((self.dim, self.dim))
        W = self.grid_R.weights
        R = self.grid_R.points
        for i, ch in enumerate(self.channels):
            e = self.rel_bases[ch.l].ref_energies[:, None] + com[ch.L].ref_energies[None, :]
            d = np.arange(i * blk, (i + 1) * blk)
            H[d, d] += e.ravel()
            if self.com_ref_scale != 1.0:
                # the part of (R - r0)^2 left out of the reference operator
                w = com[ch.L].functions
                extra = w.T @ (w * ((1.0 - self.com_ref_scale) * (R - r0) ** 2 * W)[:, None])
                H[i * blk:(i + 1) * blk, i * blk:(i + 1) * blk] += np.kron(np.eye(nr), extra)
        if r0 != 0.0:
            for (i, j), X in self._pairs.items():
                wb = com[self.channels[i].L].functions
                wd = com[self.channels[j].L].functions
                Y = (wb[:, :, None] * wd[:, None, :] * W[:, None, None]).reshape(len(W), -1)
                M = (X.reshape(nr * nr, -1) @ Y).reshape(nr, nr, nc, nc)
                M = r0 * M.transpose(0, 2, 1, 3).reshape(blk, blk)
                H[i * blk:(i + 1) * blk, j * blk:(j + 1) * blk] += M
                if i != j:
                    H[j * blk:(j + 1) * blk, i * blk:(i + 1) * blk] += M.T
        H = 0.5 * (H + H.T)
        return H, com

    def solve(self, r0: float, n_states: int | None = None) -> SpectrumResult:
        H, com = self.assemble(r0)
        return diagonalize_block(H, n_states, r0=float(r0), channels=self.channels,
                                 rel_bases=self.rel_bases, com_bases=com,
                                 params=self.params.with_r0(r0))


def assemble(params: ModelParams, trunc: Truncation, bases=None, multipoles=None) -> np.ndarray:
    """Hamiltonian matrix for ``params`` (a fresh :class:`ExactSolver` is built)."""
    return ExactSolver(params, trunc).assemble(params.r0)[0]


def wavefunction_on_grid(spectrum: SpectrumResult, n: int) -> np.ndarray:
    """Channel functions u_ch(r_i, R_j) of state ``n`` on the product quadrature grid."""
    c = spectrum.coefficients(n)
    out = []
    for k, ch in enumerate(spectrum.channels):
        u = spectrum.rel_bases[ch.l].functions
        w = spectrum.com_bases[ch.L].functions
        out.append(u @ c[k] @ w.T)
    return np.array(out)


def grid_norm(spectrum: SpectrumResult, funcs: np.ndarray) -> float:
    ch0 = spectrum.channels[0]
    wr = spectrum.rel_bases[ch0.l].grid.weights
    wR = spectrum.com_bases[ch0.L].grid.weights
    return float(np.einsum("cij,i,j->", funcs**2, wr, wR))


def expectation_r(spectrum: SpectrumResult, n: int) -> float:
    """<r> of state ``n`` (relative distance)."""
    f = wavefunction_on_grid(spectrum, n)
    ch0 = spectrum.channels[0]
    g = spectrum.rel_bases[ch0.l].grid
    wR = spectrum.com_bases[ch0.L].grid.weights
    return float(np.einsum("cij,i,j->", f**2, g.weights * g.points, wR))
