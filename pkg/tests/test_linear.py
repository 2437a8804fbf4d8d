import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbletower.errors import DomainError
from bubbletower.linear import (SpectralData, apply_L0, build_h_bar, constraint_pairing_printed,
                                inner_constraint_ell, interaction_constant_c, orthogonality_residual,
                                p_profile, phi_bar_shooting, solve_phi_bar, tail_log_slope, tail_slope,
                                unstable_eigenpair)
from bubbletower.radial import RadialField, field_integral
from bubbletower.soliton import Dimension, golden, potential

D7 = Dimension(7)


def test_interaction_constant_matches_golden():
    c, forms = interaction_constant_c(D7, return_forms=True)
    assert c > 0
    assert forms["rel_diff"] < 1e-6
    assert c == pytest.approx(golden(7, "c_n"), rel=1e-8)
    for n in (8, 10, 12):
        assert interaction_constant_c(Dimension(n)) == pytest.approx(golden(n, "c_n"), rel=1e-7)


def test_eigenpair(spec7):
    lam, Z0 = spec7.lambda0, spec7.Z0
    assert lam > 0
    assert spec7.info["eigen"]["doubling_shift"] < 5e-3
    assert spec7.info["eigen"]["rayleigh"] == pytest.approx(lam, rel=1e-8)
    assert float(field_integral(Z0, power=2, tail=False)) == pytest.approx(1.0, rel=1e-3)
    assert np.all(Z0.values[:-1] > 0)
    assert tail_log_slope(Z0, 10.0, 20.0) == pytest.approx(-math.sqrt(lam), rel=0.02)


def test_eigenvalue_stable_under_halving_h(spec7):
    lam2, _, _ = unstable_eigenpair(D7, 40.0, h=0.01, check_doubling=False)
    assert abs(lam2 - spec7.lambda0) / spec7.lambda0 < 5e-3


def test_h_bar(spec7):
    hb = spec7.h_bar
    assert hb.meta["orthogonality"] < 1e-6
    c = spec7.c_interaction
    U0 = D7.alpha_n
    assert hb.values[0] == pytest.approx(c * 2.5 * U0 + D7.pf * U0 ** D7.pf, rel=1e-12)
    # far field: the U^{p-1} part (rho^-4) dominates the Z part (rho^-5) for n = 7
    assert tail_slope(hb, 1e3, 1e4) == pytest.approx(-4.0, abs=0.05)


def test_h_bar_rejects_wrong_constant():
    from bubbletower.errors import StructuralFailure
    with pytest.raises(StructuralFailure):
        build_h_bar(D7, 100.0)


def test_phi_bar_tail_and_residual(spec7):
    ph = spec7.phi_bar
    assert tail_slope(ph, 1e2, 1e3) == pytest.approx(-2.0, abs=0.1)
    r = ph.grid
    L = apply_L0(D7, ph).values
    sel = (r > 1e-2) & (r < 50)
    h = np.diff(r).max() if np.any(sel) else 0
    assert np.max(np.abs(L[sel] - spec7.h_bar.values[sel])) < 1e-3 * np.max(np.abs(spec7.h_bar.values))


def test_phi_bar_two_routes_agree(spec7):
    # bordered finite-volume solve vs. outward shooting in log(rho)
    phi_s = phi_bar_shooting(D7, lambda r: -spec7.h_bar(r), r_max=200.0)
    r = np.geomspace(1e-3, 100.0, 300)
    a = spec7.phi_bar(r)
    b = phi_s(r)
    w = 1.0 + r * r
    assert np.max(w * np.abs(a - b)) / np.max(w * np.abs(b)) < 1e-4


def test_phi_bar_zero_source():
    g = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 2000)])
    zero = RadialField(g, np.zeros(g.size), 7)
    assert np.all(solve_phi_bar(D7, zero, g).values == 0.0)


def test_solvability_enforced():
    g = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 800)])
    bad = RadialField(g, potential(D7, g), 7)
    with pytest.raises(DomainError):
        solve_phi_bar(D7, bad, g)


def test_inner_constraint_closed_forms():
    lam = 7.8
    assert inner_constraint_ell(lambda s: 0.0, lam, 1.0) == 0.0
    for tau0 in (0.0, 0.7, 3.0):
        got = inner_constraint_ell(lambda s: math.exp(-s), lam, tau0)
        assert got == pytest.approx(math.exp(-tau0) / (1 + lam), rel=1e-10)
    p = inner_constraint_ell(lambda s: math.exp(-s), lam, 2.0)
    assert constraint_pairing_printed(lambda s: math.exp(-s), lam, 2.0) == pytest.approx(
        math.exp(-lam * 2.0) * p)


def test_inner_constraint_ode():
    lam = 2.0
    q = lambda s: 1.0 / (1.0 + s) ** 3
    tau = np.linspace(0.5, 3.0, 201)
    p = p_profile(q, lam, tau)
    dp = np.gradient(p, tau, edge_order=2)
    res = dp - lam * p + np.array([q(s) for s in tau])
    assert np.max(np.abs(res[2:-2])) < 5e-4 * np.max(np.abs(p))


def test_inner_constraint_sampled_and_divergent():
    s = np.linspace(0.0, 40.0, 40001)
    got = inner_constraint_ell(np.exp(-s), 3.0, 0.0, tau_samples=s)
    assert got == pytest.approx(0.25, rel=5e-6)
    with pytest.raises(DomainError):
        inner_constraint_ell(lambda x: math.exp(5.0 * x), 3.0, 0.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_inner_constraint_linear(a, b):
    lam = 4.0
    f = lambda s: math.exp(-s)
    g = lambda s: math.exp(-2 * s)
    lhs = inner_constraint_ell(lambda s: a * f(s) + b * g(s), lam, 0.3)
    rhs = a * inner_constraint_ell(f, lam, 0.3) + b * inner_constraint_ell(g, lam, 0.3)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_spectral_json_roundtrip(spec7):
    back = SpectralData.from_json(spec7.to_json())
    assert back.lambda0 == pytest.approx(spec7.lambda0, rel=1e-11)
    assert back.c_interaction == pytest.approx(spec7.c_interaction, rel=1e-11)
    r = np.array([0.0, 0.3, 2.0, 30.0])
    assert np.allclose(back.phi_bar(r), spec7.phi_bar(r), rtol=1e-10)
