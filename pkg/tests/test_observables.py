import math

import numpy as np
import pytest

from shellcir.coupled import ExactSolver, expectation_r, wavefunction_on_grid
from shellcir.hyperspherical import adiabatic_curves, adiabatic_spectrum, label_exact_states
from shellcir.model import ModelParams, Truncation
from shellcir.observables import (conditional_density, evaluate_psi, hyperspherical_nodes,
                                  polar_profile, rR_density, sign_changes)

INV = 1 / 0.53


@pytest.fixture(scope="module")
def solver():
    return ExactSolver(ModelParams.from_a0(0.53), r0_max=3.0)


@pytest.fixture(scope="module")
def past_a(solver):
    return solver.solve(2.5, 14)


def test_density_zero_on_axis(past_a):
    rho = np.linspace(0, 5, 26)
    z = np.linspace(-5, 5, 41)
    for n in (0, 4, 11):
        d = conditional_density(past_a, n, rho, z)
        assert np.all(d.values[0] == 0.0)
        assert np.all(d.values >= 0) and np.all(np.isfinite(d.values))
        assert d.meta["state"] == n and d.meta["r0"] == 2.5


def test_rR_density_normalized(past_a):
    for n in range(14):
        assert rR_density(past_a, n).integral() == pytest.approx(1.0, abs=1e-6)


def test_psi_matches_channel_functions(past_a):
    # at cos(r, R) = 1 the J=0 harmonics reduce to sqrt(2l+1)/(4 pi) (-1)^l
    from shellcir.angular import coupled_harmonic_j0
    sp = past_a
    g = sp.rel_bases[0].grid
    G = sp.com_bases[0].grid
    i, j = 57, 40
    r, R = g.points[i], G.points[j]
    rv, Rv = np.array([0, 0, r]), np.array([0, 0, R])
    psi = evaluate_psi(sp, 3, Rv + rv / 2, Rv - rv / 2)
    f = wavefunction_on_grid(sp, 3)
    ref = sum(f[k, i, j] / (r * R) * coupled_harmonic_j0(ch.l, 1.0) for k, ch in enumerate(sp.channels))
    assert psi == pytest.approx(ref, rel=1e-10)


def test_exchange_symmetry(past_a):
    rng = np.random.default_rng(1)
    r1, r2 = rng.normal(size=(2, 50, 3)) * 1.5
    for n in (0, 5, 11):
        assert np.allclose(evaluate_psi(past_a, n, r1, r2), evaluate_psi(past_a, n, r2, r1), atol=1e-12)
    assert all(ch.l % 2 == 0 for ch in past_a.channels)


def test_contact_limit_is_finite(past_a):
    # r1 = r2: regular part of the s-wave channel
    p = np.array([[0.0, 0.0, 2.5]])
    assert np.isfinite(evaluate_psi(past_a, 4, p, p)).all()
    # the limit is approached continuously in the regular part u(r)/r - u(0)/r
    near = evaluate_psi(past_a, 4, p, p + [[0, 0, 1e-7]])
    assert np.isfinite(near).all()


def test_molecular_state_localized_at_pole(past_a):
    r0 = 2.5
    rho = np.linspace(0, r0 + 4, 161)
    z = np.linspace(-r0 - 4, r0 + 4, 321)
    d = conditional_density(past_a, 4, rho, z)
    P, Z = np.meshgrid(rho, z, indexing="ij")
    near = np.hypot(P, Z - r0) < 1.5
    w = np.outer(np.gradient(rho), np.gradient(z))
    assert (d.values * w * near).sum() / (d.values * w).sum() > 0.5


def test_molecular_support(past_a):
    g = rR_density(past_a, 4)
    wr, wR = g.weights
    inside = (wr * (g.x < 3 * 0.53)) @ g.values @ wR
    assert expectation_r(past_a, 4) < 3 * 0.53
    assert inside > 0.95


def test_trap_state_polar_nodes(solver):
    r0 = 2.8
    sp = solver.solve(r0, 14)
    labs = label_exact_states(sp, adiabatic_spectrum(INV, r0))
    n = next(lb.n for lb in labs if lb.pair == (0, 4))
    theta = np.linspace(1e-3, math.pi - 1e-3, 721)
    assert sign_changes(polar_profile(sp, n, theta)) == 4


@pytest.mark.parametrize("r0", [0.3, 1.0, 2.0, 3.0])
def test_node_counts_match_labels(solver, r0):
    sp = solver.solve(r0, 14)
    labs = label_exact_states(sp, adiabatic_spectrum(INV, r0))
    ch = sp.channels[0]
    xi_max = min(sp.rel_bases[0].grid.extent / math.sqrt(2), sp.com_bases[0].grid.extent * math.sqrt(2))
    curves = adiabatic_curves(INV, r0, ch.L, ch.l, 8, xi_max=xi_max, n_xi=200)
    clean = [lb for lb in labs if not lb.mixed and lb.score >= 0.8]
    assert len(clean) >= 6
    for lb in clean:
        assert hyperspherical_nodes(sp, lb.n, curves=curves) == lb.pair


def test_sign_changes_threshold():
    assert sign_changes(np.array([1.0, -1e-9, 1.0, -1.0])) == 1
    assert sign_changes(np.array([1.0, 2.0, 3.0])) == 0


def test_j_nonzero_rejected():
    p = ModelParams(inv_a0=INV, J=1, parity=-1)
    sp = ExactSolver(p, Truncation(n_rel_max=6, n_com_max=6, l_max=2), r0_max=1.0).solve(1.0, 2)
    with pytest.raises(NotImplementedError):
        conditional_density(sp, 0, [0.5], [0.5])
