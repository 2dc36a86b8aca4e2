"""Angular matrix elements in the coupled |(l L) J M> basis."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import eval_legendre
from sympy.physics.wigner import wigner_3j, wigner_6j


def _triangle(a: int, b: int, c: int) -> bool:
    return abs(a - b) <= c <= a + b


@lru_cache(maxsize=None)
def threej0(a: int, b: int, c: int) -> float:
    """(a b c; 0 0 0)."""
    if not _triangle(a, b, c) or (a + b + c) % 2:
        return 0.0
    return float(wigner_3j(a, b, c, 0, 0, 0))


@lru_cache(maxsize=None)
def sixj(a: int, b: int, c: int, d: int, e: int, f: int) -> float:
    return float(wigner_6j(a, b, c, d, e, f))


def reduced_ck(l2: int, k: int, l: int) -> float:
    """<l2 || C^k || l> for the Racah-normalised spherical tensor C^k."""
    return (-1) ** l2 * math.sqrt((2 * l2 + 1) * (2 * l + 1)) * threej0(l2, k, l)


@lru_cache(maxsize=None)
def angular_coupling(l: int, L: int, l2: int, L2: int, J: int, k: int) -> float:
    """<(l2 L2) J M | P_k(rhat . Rhat) | (l L) J M>.

    P_k(rhat.Rhat) = C^k(rhat) . C^k(Rhat); the scalar product of two
    commuting tensors reduces to one 6j symbol. Triangle-violating
    arguments give 0.
    """
    if not (_triangle(l, L, J) and _triangle(l2, L2, J)):
        return 0.0
    a = reduced_ck(l2, k, l)
    if a == 0.0:
        return 0.0
    b = reduced_ck(L2, k, L)
    if b == 0.0:
        return 0.0
    phase = (-1) ** (l + L2 + J)
    return phase * sixj(l2, L2, J, L, l, k) * a * b


def coupled_harmonic_j0(l: int, costheta) -> np.ndarray:
    """[Y_l(rhat) x Y_l(Rhat)]_{00} as a function of cos(rhat, Rhat)."""
    return (-1) ** l * math.sqrt(2 * l + 1) / (4 * math.pi) * eval_legendre(l, costheta)
