"""Avoided-crossing (CIR) detection from the fidelity change along r0.

    dF_n(r0) = (1 - |<n(r0)|n(r0 + dr0)>|) / dr0^2

peaks where state n changes character quickly. Two neighbouring states
whose peaks coincide mark an avoided crossing.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .busch import solve_busch_roots
from .coupled import ExactSolver, SpectrumResult, expectation_r, wavefunction_on_grid
from .hyperspherical import adiabatic_spectrum, label_exact_states
from .model import ModelParams, Truncation

log = logging.getLogger(__name__)

WORKERS_ENV = "SHELLCIR_WORKERS"


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ChannelState:
    """Channel functions u_ch(r_i, R_j) with their quadrature weights."""

    channels: tuple
    wr: np.ndarray
    wR: np.ndarray
    values: np.ndarray  # (n_ch, len(wr), len(wR))

    @classmethod
    def from_spectrum(cls, spectrum: SpectrumResult, n: int) -> "ChannelState":
        ch = spectrum.channels[0]
        return cls(tuple(spectrum.channels), spectrum.rel_bases[ch.l].grid.weights,
                   spectrum.com_bases[ch.L].grid.weights, wavefunction_on_grid(spectrum, n))


def state_overlap(a: ChannelState, b: ChannelState) -> float:
    """|sum_ch int int u^a u^b dr dR|."""
    if (a.channels != b.channels or a.values.shape != b.values.shape
            or not np.array_equal(a.wr, b.wr) or not np.array_equal(a.wR, b.wR)):
        raise GridMismatchError("states live on different grids or channel sets")
    return abs(float(np.einsum("cij,cij,i,j->", a.values, b.values, a.wr, a.wR)))


def spectral_overlaps(sa: SpectrumResult, sb: SpectrumResult, n_states: int) -> np.ndarray:
    """|<n(a)|n(b)>| for n < n_states, evaluated in coefficient space.

    The relative bases are shared; only the CoM bases differ between two
    shell radii, so the overlap reduces to the CoM overlap matrices.
    """
    if [tuple(c) for c in sa.channels] != [tuple(c) for c in sb.channels]:
        raise GridMismatchError("different channel sets")
    S = {}
    for L, wa in sa.com_bases.items():
        wb = sb.com_bases[L]
        if not np.array_equal(wa.grid.points, wb.grid.points):
            raise GridMismatchError("different CoM grids")
        S[L] = wa.functions.T @ (wb.functions * wa.grid.weights[:, None])
    out = np.empty(n_states)
    for n in range(n_states):
        ca, cb = sa.coefficients(n), sb.coefficients(n)
        out[n] = abs(sum(float(np.einsum("ab,bd,ad->", ca[k], S[ch.L], cb[k]))
                         for k, ch in enumerate(sa.channels)))
    return out


@dataclass(frozen=True)
class FidelityCurve:
    n: int
    r0: np.ndarray
    delta_F: np.ndarray


@dataclass(eq=False)
class FidelityScan:
    r0: np.ndarray
    delta_r0: float
    energies: np.ndarray  # (len(r0), n_states)
    overlaps: np.ndarray  # (len(r0), n_states)
    params: ModelParams | None = None
    trunc: Truncation | None = None

    @property
    def delta_F(self) -> np.ndarray:
        return (1.0 - np.minimum(self.overlaps, 1.0)) / self.delta_r0**2

    @property
    def n_states(self) -> int:
        return self.energies.shape[1]

    def curves(self) -> list[FidelityCurve]:
        dF = self.delta_F
        return [FidelityCurve(n, self.r0, dF[:, n]) for n in range(self.n_states)]


def scan_point(solver: ExactSolver, r0: float, delta_r0: float, n_states: int,
               overlaps: bool = True) -> np.ndarray:
    """Energies and overlaps at one shell radius, stacked as a (2, n_states) array.

    With ``overlaps=False`` the rows are instead the energies and the
    dominant (channel index, relative index, CoM index) of each state,
    shape (4, n_states).
    """
    a = solver.solve(r0, n_states)
    if not overlaps:
        dom = []
        for n in range(n_states):
            c = a.coefficients(n)
            dom.append(np.unravel_index(int(np.argmax(np.abs(c))), c.shape))
        return np.vstack([a.energies, np.array(dom, float).T])
    b = solver.solve(r0 + delta_r0, n_states)
    return np.stack([a.energies, spectral_overlaps(a, b, n_states)])


_worker_solver: ExactSolver | None = None


def _init_worker(params, trunc, r0_max):
    global _worker_solver
    _worker_solver = ExactSolver(params, trunc, r0_max=r0_max)


def _run_point(args):
    r0, delta_r0, n_states, overlaps = args
    return scan_point(_worker_solver, r0, delta_r0, n_states, overlaps)


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, default)))
    except ValueError:
        return default


def map_points(params: ModelParams, trunc: Truncation | None, r0_values, delta_r0: float,
               n_states: int, r0_max: float, workers: int | None = None,
               overlaps: bool = True, solver: ExactSolver | None = None) -> list[np.ndarray]:
    """scan_point over ``r0_values`` in input order, optionally in worker processes."""
    r0_values = [float(x) for x in r0_values]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(r0_values) < 2:
        solver = solver or ExactSolver(params, trunc, r0_max=r0_max)
        return [scan_point(solver, x, delta_r0, n_states, overlaps) for x in r0_values]
    jobs = [(x, delta_r0, n_states, overlaps) for x in r0_values]
    with ProcessPoolExecutor(workers, initializer=_init_worker,
                             initargs=(params, trunc, r0_max)) as ex:
        return list(ex.map(_run_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def fidelity_scan(params: ModelParams, r0_grid, delta_r0: float = 1e-3, n_states: int = 14,
                  trunc: Truncation | None = None, workers: int | None = None) -> FidelityScan:
    """Energies and dF_n for the lowest ``n_states`` at every r0 of ``r0_grid``."""
    r0_grid = np.asarray(r0_grid, float)
    if delta_r0 <= 0:
        raise ValueError("delta_r0 must be positive")
    if len(r0_grid) > 1 and delta_r0 >= np.min(np.diff(r0_grid)):
        raise ValueError("delta_r0 must be smaller than the r0 grid spacing")
    r0_max = float(r0_grid.max()) + delta_r0 if len(r0_grid) else params.r0
    rows = map_points(params, trunc, r0_grid, delta_r0, n_states, r0_max, workers)
    return scan_from_rows(r0_grid, rows, delta_r0, params, trunc)


def scan_from_rows(r0_grid, rows, delta_r0, params=None, trunc=None) -> FidelityScan:
    rows = np.asarray(rows, float)
    if rows.ndim != 3 or rows.shape[:2] != (len(r0_grid), 2):
        raise ValueError(f"expected rows of shape ({len(r0_grid)}, 2, n_states), got {rows.shape}")
    return FidelityScan(np.asarray(r0_grid, float), float(delta_r0), rows[:, 0].copy(),
                        rows[:, 1].copy(), params, trunc)


# -- detection -------------------------------------------------------------


@dataclass
class AvoidedCrossing:
    r0_star: float
    gap: float
    fwhm: float
    states: tuple[int, int]
    peak_heights: tuple[float, float]
    labels: tuple = ("mixed", "mixed")  # diabatic branches as (lower, upper) below r0_star
    labels_after: tuple = ("mixed", "mixed")
    cls: str = "unclassified"
    notes: list = field(default_factory=list)


@dataclass(frozen=True)
class UnpairedFeature:
    n: int
    r0: float
    height: float


def _quadratic_peak(x: np.ndarray, y: np.ndarray, i: int) -> float:
    if i <= 0 or i >= len(y) - 1:
        return float(x[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return float(x[i])
    h = x[i + 1] - x[i]
    return float(x[i] + 0.5 * h * (y0 - y2) / den)


def _fwhm(x: np.ndarray, y: np.ndarray, i: int) -> float:
    half = 0.5 * y[i]
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < len(y) - 1 and y[hi] > half:
        hi += 1
    if y[lo] > half or y[hi] > half:
        return math.nan
    xl = x[lo] + (half - y[lo]) * (x[lo + 1] - x[lo]) / (y[lo + 1] - y[lo])
    xr = x[hi - 1] + (half - y[hi - 1]) * (x[hi] - x[hi - 1]) / (y[hi] - y[hi - 1])
    return float(xr - xl)


def _min_gap(x: np.ndarray, gap: np.ndarray, center: float, half_window: float) -> float:
    """Minimum of a gap curve near ``center``, refined by a parabola through gap^2."""
    sel = np.nonzero(np.abs(x - center) <= half_window)[0]
    if len(sel) == 0:
        sel = np.array([int(np.argmin(np.abs(x - center)))])
    i = int(sel[np.argmin(gap[sel])])
    g = float(gap[i])
    if 0 < i < len(x) - 1:
        # a two-level crossing has gap^2 exactly quadratic in r0
        c = np.polyfit(x[i - 1:i + 2], gap[i - 1:i + 2] ** 2, 2)
        if c[0] > 0:
            m = c[2] - c[1] ** 2 / (4 * c[0])
            if 0 < m <= g * g:
                g = math.sqrt(m)
    return g


def detect_acs(scan: FidelityScan, noise_factor: float = 10.0, max_offset: int = 1):
    """Pair coinciding fidelity peaks of neighbouring states.

    Returns (crossings, unpaired features). A peak must exceed
    ``noise_factor`` times the median of its own curve.
    """
    x = scan.r0
    dF = scan.delta_F
    if len(x) < 3:
        return [], []
    step = float(np.min(np.diff(x)))
    peaks = []
    for n in range(scan.n_states):
        y = dF[:, n]
        floor = noise_factor * float(np.median(y))
        idx, _ = find_peaks(y, height=max(floor, np.finfo(float).tiny))
        peaks.append(list(idx))
    used = [set() for _ in peaks]
    acs = []
    for n in range(scan.n_states - 1):
        for i in peaks[n]:
            cand = [j for j in peaks[n + 1] if abs(j - i) <= max_offset]
            if not cand:
                continue
            j = min(cand, key=lambda j: (abs(j - i), j))
            used[n].add(i)
            used[n + 1].add(j)
            ya, yb = dF[:, n], dF[:, n + 1]
            r_star = 0.5 * (_quadratic_peak(x, ya, i) + _quadratic_peak(x, yb, j))
            wa, wb = _fwhm(x, ya, i), _fwhm(x, yb, j)
            fw = float(np.nanmean([wa, wb])) if not (math.isnan(wa) and math.isnan(wb)) else math.nan
            win = 2.0 * (fw if math.isfinite(fw) else step) + 2.0 * step
            gap = _min_gap(x, scan.energies[:, n + 1] - scan.energies[:, n], r_star, win)
            acs.append(AvoidedCrossing(r_star, gap, fw, (n, n + 1), (float(ya[i]), float(yb[j]))))
    unpaired = [UnpairedFeature(n, float(x[i]), float(dF[i, n]))
                for n in range(scan.n_states) for i in peaks[n] if i not in used[n]]
    acs.sort(key=lambda a: (a.r0_star, a.states))
    return acs, unpaired


# -- labelling and classification -------------------------------------------


def branch_labels(ac: AvoidedCrossing):
    """Diabatic branch labels: the lower state before the AC continues as the upper one after."""
    lb, ub = ac.labels
    # after the crossing the lower state carries the upper branch and vice versa
    ua, la = ac.labels_after
    first = lb if lb != "mixed" else la
    second = ub if ub != "mixed" else ua
    return first, second


def hyperangular_energy(inv_a0: float, n_chi: int) -> float:
    return solve_busch_roots(inv_a0, n_chi + 1)[n_chi].energy


def classify_ac(ac: AvoidedCrossing, inv_a0: float, mean_r=None) -> str:
    """bound-trap, trap-trap or unclassified from the diabatic branch labels.

    ``mean_r`` maps a branch label to <r> of the exact state carrying it;
    a molecular branch must also satisfy <r> < 1.5.
    """
    a, b = branch_labels(ac)
    if a == "mixed" or b == "mixed":
        return "unclassified"
    ea, eb = hyperangular_energy(inv_a0, a[1]), hyperangular_energy(inv_a0, b[1])
    mol = [lab for lab, e in ((a, ea), (b, eb)) if e < 0]
    if len(mol) == 1:
        if mean_r is not None and not mean_r.get(mol[0], 0.0) < 1.5:
            ac.notes.append(f"molecular branch {mol[0]} has <r> = {mean_r.get(mol[0]):.3g} >= 1.5")
            return "unclassified"
        return "bound-trap"
    if not mol:
        return "trap-trap"
    return "unclassified"


def characterize_acs(acs, params: ModelParams, n_states: int, trunc: Truncation | None = None,
                     offset: float | None = None, r0_limits=(0.0, math.inf),
                     solver: ExactSolver | None = None, method: str = "overlap"):
    """Label the two states on both sides of every crossing and classify it in place."""
    for ac in acs:
        d = offset
        if d is None:
            d = 2.0 * ac.fwhm if math.isfinite(ac.fwhm) else 0.05
            d = min(max(d, 0.02), 0.15)
        lo = max(ac.r0_star - d, r0_limits[0])
        hi = min(ac.r0_star + d, r0_limits[1])
        sv = solver or ExactSolver(params, trunc, r0_max=hi)
        mean_r = {}
        side = []
        for r0 in (lo, hi):
            spec = sv.solve(r0, n_states)
            ad = adiabatic_spectrum(params.inv_a0, r0, 6, 8, L=params.J, l=0)
            labels = label_exact_states(spec, ad, method=method)
            pair = tuple(labels[n].pair for n in ac.states)
            side.append(pair)
            for n in ac.states:
                if labels[n].pair != "mixed" and labels[n].pair[1] == 0:
                    mean_r.setdefault(labels[n].pair, expectation_r(spec, n))
        ac.labels, ac.labels_after = side
        if side[0] != side[1][::-1]:
            ac.notes.append(f"labels do not swap across the crossing: {side[0]} -> {side[1]}")
        ac.cls = classify_ac(ac, params.inv_a0, mean_r)
    return acs


# -- a0-r0 map --------------------------------------------------------------


@dataclass(frozen=True)
class ACMapRow:
    a0: float
    r0_star: float
    cls: str
    labels: tuple
    gap: float
    fwhm: float
    states: tuple


def ac_map(a0_grid, r0_grid, base: ModelParams | None = None, delta_r0: float = 1e-3,
           n_states: int = 14, trunc: Truncation | None = None, workers: int | None = None,
           noise_factor: float = 10.0):
    """Scan + detect + classify for every a0. Returns (rows, failures)."""
    base = base or ModelParams(inv_a0=0.0)
    rows, failures = [], []
    r0_grid = np.asarray(r0_grid, float)
    for a0 in a0_grid:
        try:
            params = ModelParams.from_a0(float(a0), J=base.J, MJ=base.MJ, parity=base.parity,
                                         delta_r0=delta_r0)
            scan = fidelity_scan(params, r0_grid, delta_r0, n_states, trunc, workers)
            acs, _ = detect_acs(scan, noise_factor)
            characterize_acs(acs, params, n_states, trunc,
                             r0_limits=(float(r0_grid.min()), float(r0_grid.max())))
        except Exception as exc:  # recorded, the map goes on
            log.warning("a0=%g failed: %s", a0, exc)
            failures.append((float(a0), repr(exc)))
            continue
        for ac in acs:
            rows.append(ACMapRow(float(a0), ac.r0_star, ac.cls, branch_labels(ac), ac.gap,
                                 ac.fwhm, ac.states))
    return rows, failures


def ac_loci(rows) -> dict:
    """Group map rows into loci keyed by (class, unordered branch labels)."""
    loci: dict = {}
    for row in rows:
        key = (row.cls, tuple(sorted(map(str, row.labels))))
        loci.setdefault(key, []).append((row.a0, row.r0_star))
    return {k: sorted(v) for k, v in loci.items()}


# -- two-level reference model -----------------------------------------------


def two_level_hamiltonian(x, k: float, g: float, rc: float = 0.0) -> np.ndarray:
    a = k * (np.asarray(x, float) - rc)
    out = np.empty(np.shape(a) + (2, 2))
    out[..., 0, 0], out[..., 1, 1] = a, -a
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * g
    return out


def two_level_mixing_angle(x, k: float, g: float, rc: float = 0.0):
    """theta with tan(theta) = (g/2)/(k (x - rc)), in (0, pi)."""
    return np.arctan2(0.5 * g, k * (np.asarray(x, float) - rc))


def two_level_states(theta):
    """Lower and upper eigenvectors for mixing angle theta."""
    theta = np.asarray(theta, float)
    lower = np.stack([-np.sin(0.5 * theta), np.cos(0.5 * theta)], axis=-1)
    upper = np.stack([np.cos(0.5 * theta), np.sin(0.5 * theta)], axis=-1)
    return lower, upper


def two_level_peak_height(k: float, g: float) -> float:
    """Small-step limit of dF at the crossing: (d theta/dx)^2 / 8 = k^2 / (2 g^2)."""
    return k * k / (2.0 * g * g)


def two_level_fwhm(k: float, g: float) -> float:
    return g / k * math.sqrt(math.sqrt(2.0) - 1.0)


def synthetic_scan(r0_grid, delta_r0: float, crossings, spectators=()) -> FidelityScan:
    """Scan of a block-diagonal model: two-level crossings (k, g, rc, offset) plus flat levels.

    Each crossing contributes levels offset -/+ sqrt((k x)^2 + g^2/4); the
    spectator energies are constants. States are ordered by energy at every r0.
    """
    x = np.asarray(r0_grid, float)
    blocks = []
    for k, g, rc, off in crossings:
        blocks.append(("tl", k, g, rc, off))
    for e in spectators:
        blocks.append(("flat", e))

    def solve(xx):
        E, vecs = [], []
        dim = 2 * len(crossings) + len(spectators)
        pos = 0
        for b in blocks:
            if b[0] == "tl":
                _, k, g, rc, off = b
                th = two_level_mixing_angle(xx, k, g, rc)
                lo, up = two_level_states(th)
                e = math.hypot(k * (xx - rc), 0.5 * g)
                for val, v in ((off - e, lo), (off + e, up)):
                    full = np.zeros(dim)
                    full[pos:pos + 2] = v
                    E.append(val)
                    vecs.append(full)
                pos += 2
            else:
                full = np.zeros(dim)
                full[pos] = 1.0
                E.append(b[1])
                vecs.append(full)
                pos += 1
        order = np.argsort(E, kind="stable")
        return np.array(E)[order], np.array(vecs)[order]

    energies, overlaps = [], []
    for xx in x:
        ea, va = solve(xx)
        _, vb = solve(xx + delta_r0)
        energies.append(ea)
        overlaps.append(np.abs(np.einsum("ni,ni->n", va, vb)))
    return FidelityScan(x, delta_r0, np.array(energies), np.array(overlaps))
