"""Parameters, truncations and channel bookkeeping.

Oscillator units throughout: hbar = m = omega = 1, lengths in
a_ho = sqrt(hbar/(m omega)), energies in hbar*omega.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Channel(NamedTuple):
    l: int  # relative angular momentum (even for identical bosons)
    L: int  # centre-of-mass angular momentum


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one two-boson shell-trap problem.

    The interaction is stored as ``inv_a0`` = a_ho/a0 so unitarity is
    ``inv_a0 = 0``. ``inv_a0 = -inf`` is accepted as the non-interacting
    limit a0 -> 0-.
    """

    inv_a0: float
    r0: float = 0.0
    delta_r0: float = 1e-3
    J: int = 0
    MJ: int = 0
    parity: int = 1

    @classmethod
    def from_a0(cls, a0: float, **kw) -> "ModelParams":
        if a0 == 0:
            raise ConfigError(["a0 must be nonzero (use inv_a0=-inf for the non-interacting limit)"])
        return cls(inv_a0=1.0 / a0, **kw)

    @property
    def a0(self) -> float:
        if self.inv_a0 == 0:
            return math.inf
        if math.isinf(self.inv_a0):
            return -0.0
        return 1.0 / self.inv_a0

    def with_r0(self, r0: float) -> "ModelParams":
        return replace(self, r0=float(r0))


@dataclass(frozen=True)
class Truncation:
    """Basis sizes, angular cutoffs and grid settings.

    ``r_extent``/``R_extent`` of ``None`` are resolved from the largest
    shell radius the run will visit (see :func:`resolve_extents`).
    """

    n_rel_max: int = 20
    n_com_max: int = 20
    l_max: int = 6
    k_max: int = 16
    order: int = 10
    r_extent: float | None = None
    R_extent: float | None = None
    h_max: float = 0.5
    n_costheta: int | None = None
    xi_points: int = 400
    xi_min: float = 0.05
    chi_h_max: float = 0.06

    def quadrature_nodes(self) -> int:
        return self.n_costheta if self.n_costheta else max(2 * self.k_max + 8, 48)


def resolve_extents(trunc: Truncation, r0_max: float) -> Truncation:
    r_ext = trunc.r_extent if trunc.r_extent else max(16.0, 2.0 * r0_max + 10.0)
    R_ext = trunc.R_extent if trunc.R_extent else max(12.0, r0_max + 8.0)
    return replace(trunc, r_extent=float(r_ext), R_extent=float(R_ext))


def enumerate_channels(params: ModelParams, trunc: Truncation) -> list[Channel]:
    """Admissible (l, L) pairs for the (J, parity) block, ordered by l then L."""
    J = params.J
    out = []
    for l in range(0, trunc.l_max + 1, 2):
        for L in range(abs(l - J), l + J + 1):
            if (-1) ** (l + L) == params.parity:
                out.append(Channel(l, L))
    if not out:
        raise ConfigError(["no admissible channels"])
    return out


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    trunc: Truncation
    warnings: tuple[str, ...] = field(default=())

    def as_dict(self) -> dict:
        return {"params": asdict(self.params), "trunc": asdict(self.trunc)}


def validate(params: ModelParams, trunc: Truncation, r0_step: float | None = None) -> RunConfig:
    """Check a configuration; raise :class:`ConfigError` listing all problems."""
    errs = []
    if math.isnan(params.inv_a0) or params.inv_a0 == math.inf:
        errs.append("inv_a0 must be finite or -inf")
    if not (params.r0 >= 0 and math.isfinite(params.r0)):
        errs.append(f"r0 must be >= 0, got {params.r0}")
    if not params.delta_r0 > 0:
        errs.append(f"delta_r0 must be > 0, got {params.delta_r0}")
    if r0_step is not None and params.delta_r0 > r0_step:
        errs.append(f"delta_r0={params.delta_r0} larger than r0 scan step {r0_step}")
    if params.J < 0 or abs(params.MJ) > params.J:
        errs.append("need J >= 0 and |MJ| <= J")
    if params.parity not in (1, -1):
        errs.append("parity must be +1 or -1")
    for name in ("n_rel_max", "n_com_max", "order", "xi_points"):
        if getattr(trunc, name) < 1:
            errs.append(f"{name} must be >= 1")
    if trunc.l_max < 0 or trunc.k_max < 0:
        errs.append("l_max and k_max must be >= 0")
    for name in ("r_extent", "R_extent", "h_max", "xi_min", "chi_h_max"):
        v = getattr(trunc, name)
        if v is not None and not v > 0:
            errs.append(f"{name} must be positive")
    if errs:
        raise ConfigError(errs)
    enumerate_channels(params, trunc)
    return RunConfig(params, trunc)
