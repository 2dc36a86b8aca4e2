"""Busch relation for two zero-range-interacting atoms in an isotropic trap.

The relative s-wave energies E (in hbar*omega) solve

    sqrt(2) Gamma(3/4 - E/2) / Gamma(1/4 - E/2) = a_ho/a0.

The left-hand side is monotone between consecutive poles of the
numerator (E = 2n + 3/2) and vanishes at the poles of the denominator
(E = 2n + 1/2), so each branch is bracketed by those points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import poch

SQRT2 = math.sqrt(2.0)


class Pole(float):
    """Marker returned by :func:`busch_lhs` at a numerator pole."""

    def __new__(cls):
        return super().__new__(cls, math.inf)

    def __repr__(self):
        return "Pole()"


class SeriesDomainError(ValueError):
    pass


class BracketError(RuntimeError):
    pass


@dataclass(frozen=True)
class BuschRoot:
    n_chi: int
    energy: float


def _is_nonpos_int(x: float) -> bool:
    return x <= 0 and abs(x - round(x)) < 1e-14


def busch_lhs(E: float) -> float:
    """sqrt(2) Gamma(3/4 - E/2)/Gamma(1/4 - E/2), or a :class:`Pole`."""
    a, b = 0.75 - 0.5 * E, 0.25 - 0.5 * E
    if _is_nonpos_int(a):
        return Pole()
    if _is_nonpos_int(b):
        return 0.0
    # poch(b, 1/2) = Gamma(b + 1/2)/Gamma(b) without cancelling log-gammas
    return float(SQRT2 * poch(b, 0.5))


def solve_busch_roots(inv_a0: float, n_max: int) -> list[BuschRoot]:
    """The ``n_max`` lowest roots of busch_lhs(E) = inv_a0.

    ``inv_a0 = -inf`` returns the non-interacting ladder 2n + 3/2.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if inv_a0 == -math.inf:
        return [BuschRoot(n, 2.0 * n + 1.5) for n in range(n_max)]
    if inv_a0 == 0.0:
        return [BuschRoot(n, 2.0 * n + 0.5) for n in range(n_max)]
    if not math.isfinite(inv_a0):
        raise ValueError("inv_a0 must be finite or -inf")

    def f(E):
        return busch_lhs(E) - inv_a0

    # the zero of the lhs at a denominator pole is computed exactly, so that
    # end of every bracket sits on the pole itself; only the numerator-pole
    # end is moved inwards
    brackets = []
    eps = 1e-13
    if inv_a0 > 0:
        # molecular branch below E=1/2; lhs grows like sqrt(-E)
        brackets.append((-(inv_a0**2) - 10.0, 0.5))
        # positive branches live between a numerator pole 2n-1/2 and 2n+1/2
        for n in range(1, n_max):
            brackets.append((2 * n - 0.5 + eps, 2 * n + 0.5))
    else:
        for n in range(n_max):
            brackets.append((2 * n + 0.5, 2 * n + 1.5 - eps))
    roots = []
    for n, (lo, hi) in enumerate(brackets):
        flo, fhi = f(lo), f(hi)
        if not (np.sign(flo) != np.sign(fhi)):
            # move off the pole until the sign change shows up
            for step in (1e-10, 1e-8, 1e-6, 1e-4):
                lo2 = lo + step if n or inv_a0 < 0 else lo
                flo = f(lo2)
                if np.sign(flo) != np.sign(fhi):
                    lo = lo2
                    break
            else:
                raise BracketError(f"no sign change of the Busch relation on [{lo}, {hi}]")
        E = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        roots.append(BuschRoot(n, float(E)))
    return roots


def series_small_a0_3d(a0: float) -> float:
    """-(1/a0)^2 + a0^2/8, the molecular root of the isotropic trap for small a0 > 0."""
    if not 0 < a0 < 1:
        raise SeriesDomainError(f"series domain is 0 < a0 < 1, got {a0}")
    return -1.0 / a0**2 + a0**2 / 8.0


def series_large_r0(a0: float) -> float:
    """-(1/a0)^2 + a0^2/24, the molecular hyperangular energy on a thin shell."""
    if not 0 < a0 < 1:
        raise SeriesDomainError(f"series domain is 0 < a0 < 1, got {a0}")
    return -1.0 / a0**2 + a0**2 / 24.0


@dataclass(frozen=True)
class LevelR0Zero:
    energy: float
    n_xi: int
    n_chi: int


def spectrum_r0_zero(inv_a0: float, n_xi_max: int, n_chi_max: int) -> list[LevelR0Zero]:
    """All E_{n_chi} + 2 n_xi + 3/2 for n_xi < n_xi_max, n_chi < n_chi_max, ascending."""
    roots = solve_busch_roots(inv_a0, n_chi_max)
    levels = [LevelR0Zero(r.energy + 2 * nx + 1.5, nx, r.n_chi)
              for r in roots for nx in range(n_xi_max)]
    return sorted(levels, key=lambda v: (v.energy, v.n_chi))
