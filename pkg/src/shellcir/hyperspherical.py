"""Hyperspherical adiabatic treatment of the two-boson shell problem.

Coordinates: xi = sqrt(r^2/2 + 2R^2), chi = arctan(r / 2R), so that
r = sqrt(2) xi sin(chi) and R = xi cos(chi)/sqrt(2). With the coupling
V_c dropped, the hyperangular problem for f = sin(2 chi) V reads

    -f'' + [l(l+1)/sin^2 chi + L(L+1)/cos^2 chi + W_xi(chi) - 4] f = lambda f

with f'(0)/f(0) = -sqrt(2) xi / a0 (l = 0) or f(0) = 0 (l > 0), and
f(pi/2) = 0. The hyperradial equation for u = xi^{5/2} U is

    -u''/2 + [(lambda(xi) + 15/4)/(2 xi^2) + (xi - xi0)^2/2] u = E u,

xi0 = sqrt(2) r0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import eval_legendre

from .fedvr import RadialGrid, graded_edges, solve_sturm_liouville

HALF_PI = 0.5 * math.pi
QUARTER_PI = 0.25 * math.pi


class ChiGridError(ValueError):
    pass


class InterpolationRangeError(ValueError):
    pass


def w_potential(xi, chi, r0):
    """Monopole part W_xi(chi) of the shell potential on the hypersphere.

    W/(2 xi^2) is the cos(r, R)-average of r0 (sqrt(2) xi - |r1| - |r2|).
    """
    xi = np.asarray(xi, float)
    beta = np.abs(QUARTER_PI - np.asarray(chi, float))
    xi0 = math.sqrt(2.0) * r0
    bracket = 1.0 - (2.0 + np.sin(2.0 * beta)) / (3.0 * np.cos(QUARTER_PI - beta))
    return 2.0 * xi**3 * xi0 * bracket


def vc_coupling(xi, chi, r0, costheta, l_terms: int):
    """Partial sum (l = 1..l_terms) of the neglected coupling V_c.

    The spherical-harmonic pair sum is contracted to P_{2l}(costheta),
    costheta being the angle between r and R. Diagnostic only.
    """
    if l_terms < 1:
        raise ValueError("l_terms must be >= 1")
    a = QUARTER_PI - np.abs(np.asarray(chi, float) - QUARTER_PI)
    s, c = np.sin(a), np.cos(a)
    xi0 = math.sqrt(2.0) * r0
    out = 0.0
    for l in range(1, l_terms + 1):
        coef = s ** (2 * l) / c ** (2 * l + 1) * (s * s / (4 * l + 3) - c * c / (4 * l - 1))
        out = out + coef * eval_legendre(2 * l, costheta)
    return -xi * xi0 * out


def chi_grid(xi_max: float, inv_a0: float, h_max: float = 0.06, order: int = 10) -> RadialGrid:
    """Mesh on [0, pi/2], graded at chi=0 for the Robin layer of width a0/(sqrt(2) xi)."""
    h_min = h_max
    if math.isfinite(inv_a0) and inv_a0 > 0:
        kappa = math.sqrt(2.0) * xi_max * inv_a0
        h_min = min(h_max, 0.5 / max(kappa, 1e-12))
    edges = graded_edges(HALF_PI, h_max, h_min, growth=1.25, breaks=(QUARTER_PI,))
    return RadialGrid(edges, order)


@dataclass(eq=False)
class HyperAngularSolution:
    xi: float
    lam: np.ndarray
    f: np.ndarray  # (chi nodes, n_chi), int f^2 dchi = 1
    grid: RadialGrid

    @property
    def chi(self) -> np.ndarray:
        return self.grid.points

    def V(self) -> np.ndarray:
        """V = 2 f / sin(2 chi), normalised with weight sin^2 chi cos^2 chi (endpoints zeroed)."""
        s = np.sin(2.0 * self.chi)
        out = np.zeros_like(self.f)
        nz = s > 1e-12
        out[nz] = 2.0 * self.f[nz] / s[nz, None]
        return out

    def node_counts(self) -> list[int]:
        return [count_nodes(self.f[1:-1, j]) for j in range(self.f.shape[1])]


def count_nodes(values: np.ndarray, rel: float = 1e-6) -> int:
    v = values[np.abs(values) > rel * np.abs(values).max()]
    return int(np.sum(np.sign(v[1:]) != np.sign(v[:-1])))


def _hyperangular_potential(chi, xi, r0, L, l):
    s, c = np.sin(chi), np.cos(chi)
    pot = w_potential(xi, chi, r0) - 4.0
    if l:
        pot = pot + np.where(s > 0, l * (l + 1.0) / np.where(s > 0, s, 1.0) ** 2, 0.0)
    if L:
        pot = pot + np.where(c > 1e-15, L * (L + 1.0) / np.where(c > 1e-15, c, 1.0) ** 2, 0.0)
    return pot


def solve_hyperangular(xi: float, inv_a0: float, r0: float, L: int, l: int, n_chi_max: int,
                       grid: RadialGrid | None = None) -> HyperAngularSolution:
    """Lowest ``n_chi_max`` eigenpairs of Lambda^2 at fixed hyperradius ``xi``."""
    if l % 2:
        raise ValueError("l must be even")
    grid = grid or chi_grid(xi, inv_a0)
    robin = None
    if l == 0 and math.isfinite(inv_a0):
        robin = math.sqrt(2.0) * xi * inv_a0
        if inv_a0 > 0 and robin > 1.0:
            spacing = (grid.edges[1] - grid.edges[0]) / grid.order
            if spacing >= 1.0 / (10.0 * robin):
                raise ChiGridError(f"refine chi grid: spacing {spacing:.3g} does not resolve "
                                   f"the boundary layer a0/(sqrt(2) xi) = {1 / robin:.3g}")
    pot = _hyperangular_potential(grid.points, xi, r0, L, l)
    lam, f = solve_sturm_liouville(grid, 1.0, pot, n_chi_max, robin=robin)
    return HyperAngularSolution(float(xi), lam, f, grid)


@dataclass(eq=False)
class AdiabaticCurves:
    """lambda(n_chi; xi) for one (L, l) on a tabulation grid."""

    inv_a0: float
    r0: float
    L: int
    l: int
    xi: np.ndarray
    lam: np.ndarray  # (len(xi), n_chi)
    chi_grid: RadialGrid
    f: np.ndarray  # (len(xi), chi nodes, n_chi), signs aligned along xi
    min_overlap: float = 1.0

    def spline(self, n_chi: int) -> CubicSpline:
        return CubicSpline(self.xi, self.lam[:, n_chi])


def adiabatic_curves(inv_a0: float, r0: float, L: int, l: int, n_chi_max: int,
                     xi_max: float | None = None, n_xi: int = 400, xi_min: float = 0.05,
                     chi: RadialGrid | None = None) -> AdiabaticCurves:
    """Tabulate lambda on [xi_min, xi_max] (plus xi = 0), tracking branches by overlap."""
    xi0 = math.sqrt(2.0) * r0
    xi_max = xi_max or xi0 + 10.0
    grid = chi or chi_grid(xi_max, inv_a0)
    xs = np.concatenate(([0.0], np.linspace(xi_min, xi_max, n_xi)))
    lam = np.empty((len(xs), n_chi_max))
    fs = np.empty((len(xs), grid.size, n_chi_max))
    prev = None
    worst = 1.0
    w = grid.weights
    for i, x in enumerate(xs):
        sol = solve_hyperangular(x, inv_a0, r0, L, l, n_chi_max, grid)
        if prev is not None:
            ov = np.abs(prev.T @ (sol.f * w[:, None]))
            order = np.argmax(ov, axis=1)
            if len(set(order)) == n_chi_max:
                worst = min(worst, float(ov[np.arange(n_chi_max), order].min()))
                sol.lam, sol.f = sol.lam[order], sol.f[:, order]
            sgn = np.sign(np.sum(prev * sol.f * w[:, None], axis=0))
            sol.f = sol.f * np.where(sgn == 0, 1.0, sgn)
        lam[i] = sol.lam
        fs[i] = sol.f
        prev = sol.f
    return AdiabaticCurves(inv_a0, r0, L, l, xs, lam, grid, fs, worst)


def xi_grid(xi_max: float, h_max: float = 0.25, order: int = 10) -> RadialGrid:
    return RadialGrid(graded_edges(xi_max, h_max, 0.01, growth=1.35), order)


@dataclass(eq=False)
class AdiabaticSpectrum:
    """Hyperradial levels E[n_chi, n_xi] built on adiabatic curves."""

    curves: AdiabaticCurves
    xi0: float
    energies: np.ndarray  # (n_chi, n_xi)
    grid: RadialGrid
    u: np.ndarray  # (xi nodes, n_chi, n_xi), u = xi^{5/2} U, int u^2 dxi = 1

    def levels(self) -> list[tuple[float, int, int]]:
        """(E, n_xi, n_chi) ascending."""
        out = [(float(self.energies[c, x]), x, c)
               for c in range(self.energies.shape[0]) for x in range(self.energies.shape[1])]
        return sorted(out)

    def U(self, n_xi: int, n_chi: int) -> np.ndarray:
        x = self.grid.points
        out = np.zeros_like(x)
        nz = x > 0
        out[nz] = self.u[nz, n_chi, n_xi] / x[nz] ** 2.5
        return out

    def node_counts(self) -> np.ndarray:
        nc, nx = self.energies.shape
        return np.array([[count_nodes(self.u[1:-1, c, x]) for x in range(nx)] for c in range(nc)])


def solve_hyperradial(curves: AdiabaticCurves, xi0: float, n_xi_max: int,
                      grid: RadialGrid | None = None) -> AdiabaticSpectrum:
    """Hyperradial eigenpairs for every tabulated lambda branch (diagonal adiabatic)."""
    grid = grid or xi_grid(float(curves.xi[-1]))
    x = grid.points
    if x[-1] > curves.xi[-1] + 1e-9 or x[0] < curves.xi[0] - 1e-9:
        raise InterpolationRangeError(
            f"hyperradial grid [{x[0]}, {x[-1]}] outside tabulated lambda range "
            f"[{curves.xi[0]}, {curves.xi[-1]}]")
    n_chi = curves.lam.shape[1]
    E = np.empty((n_chi, n_xi_max))
    U = np.zeros((len(x), n_chi, n_xi_max))
    safe = np.where(x > 0, x, 1.0)
    for c in range(n_chi):
        lam = curves.spline(c)(x)
        pot = np.where(x > 0, (lam + 3.75) / (2.0 * safe**2), 0.0) + 0.5 * (x - xi0) ** 2
        e, u = solve_sturm_liouville(grid, 0.5, pot, n_xi_max)
        E[c], U[:, c, :] = e, u
    return AdiabaticSpectrum(curves, xi0, E, grid, U)


def adiabatic_spectrum(inv_a0: float, r0: float, n_chi_max: int = 6, n_xi_max: int = 10,
                       L: int = 0, l: int = 0, n_xi_tab: int = 400) -> AdiabaticSpectrum:
    """Curves plus hyperradial solve for one (L, l) with default grids."""
    xi0 = math.sqrt(2.0) * r0
    curves = adiabatic_curves(inv_a0, r0, L, l, n_chi_max, xi0 + 10.0, n_xi_tab)
    return solve_hyperradial(curves, xi0, n_xi_max)


def adiabatic_channel_function(ad: AdiabaticSpectrum, n_xi: int, n_chi: int, r, R) -> np.ndarray:
    """The adiabatic state as an (l, L) channel function u(r, R) = r R Psi.

    u(r, R) = u_xi(xi) f(chi; xi) / sqrt(xi), normalised with dr dR since
    dr dR = xi dxi dchi. ``r`` and ``R`` are 1-d node arrays; the result
    has shape (len(r), len(R)). f is interpolated linearly in xi between
    tabulation points.
    """
    r = np.asarray(r, float)
    R = np.asarray(R, float)
    rr, RR = np.meshgrid(r, R, indexing="ij")
    xi = np.sqrt(0.5 * rr**2 + 2.0 * RR**2).ravel()
    chi = np.arctan2(rr, 2.0 * RR).ravel()
    uxi = ad.grid.interpolate(ad.u[:, n_chi, n_xi], xi)
    cv = ad.curves
    tab = cv.xi
    j = np.clip(np.searchsorted(tab, xi) - 1, 0, len(tab) - 2)
    t = np.clip((xi - tab[j]) / (tab[j + 1] - tab[j]), 0.0, 1.0)
    idx, c = cv.chi_grid.interpolation_weights(chi)
    F = cv.f[:, :, n_chi]
    f = np.einsum("xq,xq->x", c, (1.0 - t)[:, None] * F[j[:, None], idx]
                  + t[:, None] * F[j[:, None] + 1, idx])
    out = np.zeros_like(xi)
    nz = xi > 0
    out[nz] = uxi[nz] * f[nz] / np.sqrt(xi[nz])
    return out.reshape(rr.shape)


@dataclass(frozen=True)
class StateLabel:
    """(n_xi, n_chi) assigned to an exact state, or mixed (n_xi = n_chi = None)."""

    n: int
    n_xi: int | None
    n_chi: int | None
    score: float  # squared overlap, or |dE| for energy matching
    adiabatic_energy: float = math.nan

    @property
    def mixed(self) -> bool:
        return self.n_xi is None

    @property
    def pair(self):
        return "mixed" if self.mixed else (self.n_xi, self.n_chi)


def label_exact_states(spectrum, adiabatic: AdiabaticSpectrum, method: str = "overlap",
                       threshold: float | None = None, n_states: int | None = None) -> list[StateLabel]:
    """Assign adiabatic (n_xi, n_chi) labels to the exact eigenstates.

    ``overlap``: squared overlap of the adiabatic channel function with the
    matching (l, L) channel of each exact state; one-to-one assignment
    maximising the total, states below ``threshold`` (default 0.5) are mixed.
    ``energy``: one-to-one assignment minimising |E_exact - E_adiabatic|,
    pairs further apart than ``threshold`` (default 0.5 hbar*omega) are mixed.
    """
    from scipy.optimize import linear_sum_assignment

    n_states = n_states or len(spectrum.energies)
    E = np.asarray(spectrum.energies[:n_states])
    levels = [lv for lv in adiabatic.levels() if lv[0] < E[-1] + 1.5]
    if not levels:
        return [StateLabel(n, None, None, math.nan) for n in range(n_states)]
    Ead = np.array([lv[0] for lv in levels])
    if method == "energy":
        thr = 0.5 if threshold is None else threshold
        cost = np.abs(E[:, None] - Ead[None, :])
        rows, cols = linear_sum_assignment(cost)
        ok = cost[rows, cols] <= thr
        score = cost
    elif method == "overlap":
        thr = 0.5 if threshold is None else threshold
        from .coupled import wavefunction_on_grid

        cv = adiabatic.curves
        try:
            ich = [(c.l, c.L) for c in spectrum.channels].index((cv.l, cv.L))
        except ValueError:
            raise ValueError(f"exact spectrum has no (l={cv.l}, L={cv.L}) channel") from None
        ch = spectrum.channels[ich]
        gr = spectrum.rel_bases[ch.l].grid
        gR = spectrum.com_bases[ch.L].grid
        wts = np.outer(gr.weights, gR.weights)
        exact = np.array([wavefunction_on_grid(spectrum, n)[ich] for n in range(n_states)])
        score = np.empty((n_states, len(levels)))
        for j, (_, nx, nc) in enumerate(levels):
            u = adiabatic_channel_function(adiabatic, nx, nc, gr.points, gR.points)
            score[:, j] = np.einsum("nij,ij->n", exact, u * wts) ** 2
        rows, cols = linear_sum_assignment(-score)
        ok = score[rows, cols] >= thr
    else:
        raise ValueError(f"unknown labelling method {method!r}")
    out = [StateLabel(n, None, None, float(np.max(score[n]) if method == "overlap"
                                           else np.min(score[n]))) for n in range(n_states)]
    for r, c, good in zip(rows, cols, ok):
        if good:
            _, nx, nc = levels[c]
            out[r] = StateLabel(int(r), nx, nc, float(score[r, c]), float(Ead[c]))
    return out
