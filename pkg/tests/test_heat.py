import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ive

from bubbletower.errors import DomainError
from bubbletower.heat import (QuadConfig, barrier_check_bubble, barrier_check_selfsimilar,
                              barrier_csv, duhamel_Tout, kernel_table, lag_rule, propagate_Zstar)
from bubbletower.norms import WeightSpec
from bubbletower.radial import RadialField, sphere_area


@pytest.fixture(scope="module")
def tab7():
    return kernel_table(7)


def test_angular_factor_at_zero(tab7):
    assert tab7.A(0.0)[0] == pytest.approx(tab7.wallis(), rel=1e-13)
    # n = 7: int_0^pi sin^5 = 16/15
    assert tab7.wallis() == pytest.approx(16.0 / 15.0, rel=1e-14)


@pytest.mark.parametrize("n", [7, 8, 10])
def test_angular_factor_matches_bessel(n):
    # A(z) = sqrt(pi) Gamma(nu + 1/2) (2/z)^nu I_nu(z)
    tab = kernel_table(n)
    nu = (n - 2) / 2.0
    z = np.concatenate([np.linspace(0.01, 29.9, 60), np.geomspace(30.0, 1e4, 40)])
    ref = (math.log(math.sqrt(math.pi)) + math.lgamma(nu + 0.5) + nu * np.log(2.0 / z)
           + np.log(ive(nu, z)))
    assert np.max(np.abs(tab.log_E(z) - ref)) < 1e-10


def test_switch_continuity():
    for n in (7, 8, 9, 12):
        assert kernel_table(n).switch_mismatch() < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 200.0), st.floats(0.01, 5.0))
def test_angular_factor_increasing_log_convex(z, h):
    tab = kernel_table(7)
    la = np.log(tab.A(np.array([z, z + h, z + 2 * h])))
    assert la[1] > la[0]
    assert la[2] - 2 * la[1] + la[0] >= -1e-9 * max(1.0, abs(la[1]))


def test_kernel_preserves_mass(tab7):
    # int K(r, rho, tau) rho^{n-1} d rho over rho ... equals 1 at every r
    rho = np.linspace(0, 40, 40001)
    for r in (0.0, 0.5, 3.0):
        k = tab7.kernel(r, rho, 1.3) * rho ** 6
        assert np.trapezoid(k, rho) == pytest.approx(1.0, rel=1e-6)


def test_kernel_surface_factor():
    # at r = 0 the kernel reduces to the n-dim Gaussian density
    n, tau = 7, 0.8
    tab = kernel_table(n)
    rho = np.array([0.3, 1.0])
    gauss = (4 * math.pi * tau) ** (-n / 2) * np.exp(-rho ** 2 / (4 * tau))
    # the kernel integrates against rho^{n-1} d rho, so it carries |S^{n-1}|
    assert np.allclose(tab.kernel(0.0, rho, tau), sphere_area(n) * gauss, rtol=1e-12)


def test_lag_rule_integrates_powers():
    taus, w = lag_rule(5.0, 1e-4, QuadConfig())
    assert w.sum() == pytest.approx(5.0, rel=1e-13)
    assert np.sum(w * taus ** -0.5) == pytest.approx(2 * math.sqrt(5.0), rel=1e-10)


def test_duhamel_zero_source():
    psi = duhamel_Tout(lambda r, s: 0.0 * r, 1.0, np.array([0.0, 1.0, 5.0]), 2.0, 7)
    assert np.all(psi == 0.0)


def test_duhamel_rejects_backward_time():
    with pytest.raises(DomainError):
        duhamel_Tout(lambda r, s: r, 2.0, np.array([1.0]), 1.0, 7)


def test_duhamel_manufactured():
    # psi = (t - t0) e^{-r^2} solves psi_t - Lap psi = g with zero data at t0
    n, t0 = 7, 1.0

    def g(r, s):
        return np.exp(-r * r) * (1.0 - (s - t0) * (4 * r * r - 2 * n))

    r = np.array([0.0, 0.4, 1.0, 2.0])
    errs = []
    cfg = QuadConfig()
    for _ in range(3):
        psi = duhamel_Tout(g, t0, r, 1.5, n, cfg=cfg, r_lo=1e-3)
        errs.append(np.max(np.abs(psi - 0.5 * np.exp(-r * r))))
        cfg = cfg.refined()
    assert errs[0] < 5e-4
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_duhamel_mass_growth():
    # a time-independent source adds mass linearly
    n, t0, t = 7, 0.0, 0.7
    r = np.linspace(0, 25, 501)
    psi = duhamel_Tout(lambda rho, s: np.exp(-rho ** 2), t0, r, t, n, r_lo=1e-3)
    mass = sphere_area(n) * np.trapezoid(psi * r ** 6, r)
    src = sphere_area(n) * math.gamma(3.5) / 2.0
    assert mass == pytest.approx(t * src, rel=1e-3)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 2.0))
def test_duhamel_linear_positive_comparison(a, b, w):
    r = np.array([0.0, 0.7, 2.5])
    g1 = lambda rho, s: np.exp(-rho ** 2)
    g2 = lambda rho, s: np.exp(-rho ** 2 / w) / s
    p1 = duhamel_Tout(g1, 1.0, r, 1.4, 7)
    p2 = duhamel_Tout(g2, 1.0, r, 1.4, 7)
    pc = duhamel_Tout(lambda rho, s: a * g1(rho, s) + b * g2(rho, s), 1.0, r, 1.4, 7)
    assert np.allclose(pc, a * p1 + b * p2, rtol=1e-10, atol=1e-14)
    assert np.all(p1 > 0) and np.all(p2 > 0)
    # g1 + g2 >= g1 pointwise
    assert np.all(p1 + p2 >= p1)


def _gauss_field(delta, n=7):
    r = np.concatenate([[0.0], np.geomspace(1e-3, 30.0, 600)])
    return RadialField(r, delta * np.exp(-r * r), n)


def test_propagate_gaussian_exact():
    z = _gauss_field(0.01)
    tau = 0.5
    Z = propagate_Zstar(z, 0.0, tau, 0.01, 3.0)
    exact = 0.01 * (1 + 4 * tau) ** -3.5 * np.exp(-z.grid ** 2 / (1 + 4 * tau))
    assert np.max(np.abs(Z.values - exact)) / 0.01 < 1e-4
    assert Z.meta["envelope_C"] > 0


def test_propagate_zero_and_envelope():
    r = np.concatenate([[0.0], np.geomspace(1e-3, 30.0, 200)])
    Z = propagate_Zstar(RadialField(r, 0 * r, 7), 0.0, 1.0, 0.01, 3.0)
    assert np.all(Z.values == 0.0)
    with pytest.raises(DomainError):
        propagate_Zstar(RadialField(r, 0.1 + 0 * r, 7), 0.0, 1.0, 0.01, 3.0)
    with pytest.raises(DomainError):
        propagate_Zstar(RadialField(r, 0 * r, 7), 1.0, 1.0, 0.01, 3.0)


def test_selfsimilar_barrier_small():
    rep = barrier_check_selfsimilar(7, 1.0, "compact", t_hi=4.0, per_decade=6, r_per_decade=8)
    assert rep.fitted_C > 0 and rep.drift < 0.25 and rep.passed
    assert "selfsimilar_compact" in barrier_csv([rep])


def test_selfsimilar_argument_checks():
    with pytest.raises(DomainError):
        barrier_check_selfsimilar(7, 4.0)
    with pytest.raises(DomainError):
        barrier_check_selfsimilar(7, 2.0, "power", m=3)
    with pytest.raises(DomainError):
        barrier_check_selfsimilar(7, 1.0, "box")


def test_bubble_barrier_zero_source(tower7):
    ws = WeightSpec(0.5, 0.1, 4.0, tower7)
    rep = barrier_check_bubble(ws, "w3", scale=0.0, t_span=2.0, per_decade=4, r_per_decade=4)
    assert rep.fitted_C == 0.0 and rep.refined_C == 0.0 and rep.passed
    with pytest.raises(DomainError):
        barrier_check_bubble(ws, "w3*")
