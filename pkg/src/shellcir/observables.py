"""Densities reconstructed from the coupled-channel eigenstates (J = 0)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import coupled_harmonic_j0
from .coupled import SpectrumResult, wavefunction_on_grid


@dataclass(eq=False)
class DensityGrid:
    axes: tuple[str, str]
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # (len(x), len(y))
    meta: dict = field(default_factory=dict)
    weights: tuple | None = None  # quadrature weights along x and y, if any

    def integral(self) -> float:
        if self.weights is not None:
            wx, wy = self.weights
        else:
            wx, wy = _trapezoid_weights(self.x), _trapezoid_weights(self.y)
        return float(wx @ self.values @ wy)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    if len(x) > 1:
        d = np.diff(x)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


def _require_j0(spectrum: SpectrumResult) -> None:
    if any(ch.l != ch.L for ch in spectrum.channels) or (spectrum.params and spectrum.params.J):
        raise NotImplementedError("wavefunction reconstruction is implemented for J = 0 only")


def evaluate_psi(spectrum: SpectrumResult, n: int, r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Psi_n(r1, r2) for Cartesian positions ``r1``, ``r2`` of shape (..., 3).

    At r1 = r2 the s-wave channel diverges like 1/r (zero-range contact);
    there the regular part, lim (u(r) - u(0))/r = u'(0), is returned.
    """
    _require_j0(spectrum)
    r1, r2 = np.broadcast_arrays(np.asarray(r1, float), np.asarray(r2, float))
    shp = r1.shape[:-1]
    rv = (r1 - r2).reshape(-1, 3)
    Rv = 0.5 * (r1 + r2).reshape(-1, 3)
    r = np.linalg.norm(rv, axis=1)
    R = np.linalg.norm(Rv, axis=1)
    tiny = 1e-12
    cos = np.ones_like(r)
    both = (r > tiny) & (R > tiny)
    cos[both] = np.einsum("pi,pi->p", rv[both], Rv[both]) / (r[both] * R[both])
    cos = np.clip(cos, -1.0, 1.0)
    c = spectrum.coefficients(n)
    psi = np.zeros_like(r)
    for k, ch in enumerate(spectrum.channels):
        rel, com = spectrum.rel_bases[ch.l], spectrum.com_bases[ch.L]
        # u(r)/r and w(R)/R; the limits at 0 come from the boundary derivative
        ur = rel.grid.interpolate(rel.functions, r)
        wR = com.grid.interpolate(com.functions, R)
        ur_r = np.zeros_like(ur)
        nz = r > tiny
        ur_r[nz] = ur[nz] / r[nz, None]
        if ch.l == 0:
            ur_r[~nz] = rel.grid.derivative_at_origin(rel.functions)
        wR_R = np.zeros_like(wR)
        nzR = R > tiny
        wR_R[nzR] = wR[nzR] / R[nzR, None]
        if ch.L == 0:
            wR_R[~nzR] = com.grid.derivative_at_origin(com.functions)
        radial = np.einsum("pa,ab,pb->p", ur_r, c[k], wR_R)
        psi += radial * coupled_harmonic_j0(ch.l, cos)
    return psi.reshape(shp)


def conditional_density(spectrum: SpectrumResult, n: int, rho2, z2) -> DensityGrid:
    """2 pi rho2 |Psi_n(r1 = north pole, r2 = (rho2, 0, z2))|^2 on a (rho2, z2) grid."""
    r0 = spectrum.r0 if spectrum.r0 is not None else spectrum.params.r0
    rho2 = np.asarray(rho2, float)
    z2 = np.asarray(z2, float)
    P, Z = np.meshgrid(rho2, z2, indexing="ij")
    r2 = np.stack([P, np.zeros_like(P), Z], axis=-1)
    r1 = np.broadcast_to(np.array([0.0, 0.0, r0]), r2.shape)
    psi = evaluate_psi(spectrum, n, r1, r2)
    vals = 2.0 * math.pi * P * psi**2
    return DensityGrid(("rho2", "z2"), rho2, z2, vals,
                       {"state": n, "r0": r0, "inv_a0": getattr(spectrum.params, "inv_a0", None)})


def rR_density(spectrum: SpectrumResult, n: int) -> DensityGrid:
    """sum_ch |u_ch(r, R)|^2 on the quadrature nodes (integrates to 1 with the node weights)."""
    f = wavefunction_on_grid(spectrum, n)
    ch = spectrum.channels[0]
    gr, gR = spectrum.rel_bases[ch.l].grid, spectrum.com_bases[ch.L].grid
    return DensityGrid(("r", "R"), gr.points, gR.points, np.sum(f**2, axis=0),
                       {"state": n, "r0": spectrum.r0}, (gr.weights, gR.weights))


def polar_profile(spectrum: SpectrumResult, n: int, theta, radius: float | None = None) -> np.ndarray:
    """Psi_n with particle 1 at the north pole and particle 2 at polar angle theta on the shell."""
    r0 = spectrum.r0 if radius is None else radius
    theta = np.asarray(theta, float)
    r2 = np.stack([r0 * np.sin(theta), np.zeros_like(theta), r0 * np.cos(theta)], axis=-1)
    r1 = np.broadcast_to(np.array([0.0, 0.0, spectrum.r0]), r2.shape)
    return evaluate_psi(spectrum, n, r1, r2)


def sign_changes(values: np.ndarray, rel: float = 1e-3) -> int:
    v = np.asarray(values, float)
    v = v[np.abs(v) > rel * np.abs(v).max()]
    return int(np.sum(np.sign(v[1:]) != np.sign(v[:-1])))


def hyperspherical_nodes(spectrum: SpectrumResult, n: int, channel: int = 0, rel: float = 0.05,
                         curves=None, n_xi: int = 200, n_chi_max: int = 8) -> tuple[int, int]:
    """(hyperradial, hyperangular) node counts of one channel function.

    The hyperangular count is taken along the arc through the maximum of
    |u|/sqrt(xi). Hyperangular nodal lines bend with xi away from
    unitarity, so the hyperradial count is taken on the projection of u
    onto the adiabatic function f_{n_chi}(chi; xi) with that many nodes,
    which is proportional to the hyperradial factor. Samples below ``rel``
    of the line maximum are ignored.
    """
    from .hyperspherical import adiabatic_curves

    ch = spectrum.channels[channel]
    rel_b, com_b = spectrum.rel_bases[ch.l], spectrum.com_bases[ch.L]
    c = spectrum.coefficients(n)[channel]
    xi_max = min(rel_b.grid.extent / math.sqrt(2.0), com_b.grid.extent * math.sqrt(2.0))
    if curves is None:
        params = spectrum.params
        curves = adiabatic_curves(params.inv_a0, spectrum.r0, ch.L, ch.l, n_chi_max,
                                  xi_max=xi_max, n_xi=n_xi)
    xi = curves.xi[curves.xi > 0]
    chi = curves.chi_grid.points
    X, C = np.meshgrid(xi, chi, indexing="ij")
    r = (math.sqrt(2.0) * X * np.sin(C)).ravel()
    R = (X * np.cos(C) / math.sqrt(2.0)).ravel()
    u = np.einsum("pa,ab,pb->p", rel_b.grid.interpolate(rel_b.functions, r), c,
                  com_b.grid.interpolate(com_b.functions, R)).reshape(X.shape)
    f = u / np.sqrt(X)
    i = int(np.unravel_index(int(np.argmax(np.abs(f))), f.shape)[0])
    n_chi = sign_changes(f[i, 1:-1], rel)
    if n_chi >= curves.f.shape[2]:
        return -1, n_chi
    ftab = curves.f[curves.xi > 0, :, n_chi]
    proj = np.einsum("ij,ij,j->i", u, ftab, curves.chi_grid.weights)
    return sign_changes(proj, rel), n_chi
