import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbletower.dynamics import (Dj_z_coefficient, FunctionTrajectory, PowerTrajectory,
                                  SampledTrajectory, admissibility, decay_norm, eval_Dj,
                                  lambda0_trajectory, modulation_estimate_constant,
                                  modulation_exponent, modulation_P, modulation_S,
                                  mu0_trajectory, ode_residual, rate_coefficients,
                                  rate_coefficients_printed, rate_exponents,
                                  rate_exponents_recursive, time_window, tower_params,
                                  trajectory_csv)
from bubbletower.errors import DomainError
from bubbletower.soliton import Dimension, golden

C7 = golden(7, "c_n")


def test_rate_exponents_values():
    assert rate_exponents(7, 3) == [0, 2, 12]
    assert rate_exponents(8, 2) == [0, 1]
    with pytest.raises(DomainError):
        rate_exponents(6, 2)


def test_rate_exponents_recursion_exact():
    for n in range(7, 13):
        closed = rate_exponents(n, 5)
        assert closed == rate_exponents_recursive(n, 5)
        assert all(isinstance(a, Fraction) for a in closed)
        assert all(b > a for a, b in zip(closed, closed[1:]))


def test_rate_coefficients():
    assert rate_coefficients(7, 1, C7) == [1.0]
    b = rate_coefficients(7, 2, C7)
    assert b[1] == pytest.approx((2.0 / C7) ** 2, rel=1e-14)
    # the recursion without c does not solve the parameter ODE
    printed = rate_coefficients_printed(7, 2)
    assert printed[1] == pytest.approx(4.0)
    assert abs(printed[1] - b[1]) > 1.0


def test_ode_residual_machine_precision():
    for n in (7, 8, 9, 12):
        c = golden(n, "c_n")
        par = tower_params(n, 3, 10.0, c=c)
        t = time_window(10.0)
        assert np.max(ode_residual(par, t)) < 1e-12


def test_trajectories():
    par = tower_params(7, 3, 10.0, c=C7)
    t = time_window(10.0, 1e2, 50)
    m = mu0_trajectory(par, t)
    assert np.all(m[0] == 1.0)
    assert np.all(m[1] < m[0]) and np.all(m[2] < m[1])
    lam = lambda0_trajectory(par, t)
    assert np.allclose(lam[0], par.beta[1] * t ** -2.0, rtol=1e-13)
    assert np.all(np.diff(lam[1]) < 0)
    with pytest.raises(DomainError):
        mu0_trajectory(par, [1.0])


def test_lambda_exponent_matches_printed_power():
    from bubbletower.dynamics import lambda_exponent_printed
    par = tower_params(9, 3, 1.0, c=golden(9, "c_n"))
    t = np.array([1e2, 1e4])
    for j in (2, 3):
        lam = par.lambda0(j, t)
        slope = math.log(lam[1] / lam[0]) / math.log(t[1] / t[0])
        assert slope == pytest.approx(-float(lambda_exponent_printed(par.dim, j)), rel=1e-12)


def test_Dj_vanishes_and_is_linear():
    par0 = tower_params(7, 2, 10.0, c=C7)
    y = np.linspace(0, 5, 11)
    for j in (1, 2):
        assert np.all(eval_Dj(par0, j, y, 20.0) == 0.0)
    m1 = PowerTrajectory(0.3, -2.5)
    par1 = tower_params(7, 2, 10.0, c=C7, mu1=[PowerTrajectory(0.0, 0.0), m1])
    par2 = tower_params(7, 2, 10.0, c=C7, mu1=[PowerTrajectory(0.0, 0.0), PowerTrajectory(0.6, -2.5)])
    assert np.allclose(eval_Dj(par2, 2, y, 20.0), 2.0 * eval_Dj(par1, 2, y, 20.0), rtol=1e-13)
    with pytest.raises(DomainError):
        eval_Dj(par1, 3, y, 20.0)


def test_Dj_projection_matches_closed_form():
    from bubbletower.radial import geometric_grid, radial_integral
    from bubbletower.soliton import kernel_Zn1
    par = tower_params(7, 2, 10.0, c=C7, mu1=[PowerTrajectory(0.0, 0.0), PowerTrajectory(1e-3, -2.3)])
    g = geometric_grid(1e-4, 1e4, 3000)
    dim = par.dim
    for lin in (False, True):
        num = radial_integral(lambda r: eval_Dj(par, 2, r, 30.0, linearized=lin) * kernel_Zn1(dim, r),
                              g, 7, order=8, weight_sphere=False)
        den = radial_integral(lambda r: kernel_Zn1(dim, r) ** 2, g, 7, order=8, weight_sphere=False)
        assert float(num) / float(den) == pytest.approx(Dj_z_coefficient(par, 2, 30.0, lin), rel=1e-6)


def test_modulation_S_closed_form_and_ode():
    assert modulation_exponent(7, 2) == pytest.approx(3.0)
    t0 = 2.0
    t = np.geomspace(t0, 200.0, 40)
    mu = modulation_S(7, 2, lambda s: s ** -2.0, t0, t)
    assert np.allclose(mu, t ** -3.0 * (t * t - t0 * t0) / 2.0, rtol=1e-10, atol=0)
    assert np.all(modulation_S(7, 2, lambda s: 0.0, t0, t) == 0.0)
    tt = np.linspace(5.0, 6.0, 201)
    beta = lambda s: math.sin(s) / s ** 2
    m = modulation_S(7, 2, beta, t0, tt)
    res = np.gradient(m, tt) + 3.0 / tt * m - np.array([beta(s) for s in tt])
    assert np.max(np.abs(res[2:-2])) < 1e-5


def test_modulation_S_sampled_route():
    t0 = 1.0
    s = np.geomspace(t0, 100.0, 4000)
    got = modulation_S(7, 2, None, t0, [10.0, 100.0], samples=(s, s ** -2.0))
    exact = np.array([10.0, 100.0]) ** -3.0 * (np.array([100.0, 1e4]) - 1.0) / 2.0
    assert np.allclose(got, exact, rtol=1e-4)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_modulation_S_linear(a, b):
    f = lambda s: s ** -2.0
    g = lambda s: math.cos(s) / s ** 3
    t = np.array([3.0, 30.0])
    lhs = modulation_S(7, 2, lambda s: a * f(s) + b * g(s), 1.0, t)
    rhs = a * modulation_S(7, 2, f, 1.0, t) + b * modulation_S(7, 2, g, 1.0, t)
    assert np.allclose(lhs, rhs, rtol=1e-8, atol=1e-14)


def test_modulation_estimate_stable():
    beta = lambda s: s ** -2.0 * (1.0 + 0.5 * math.sin(math.log(s)))
    C1 = modulation_estimate_constant(7, 2, beta, 1.0, 10.0, np.geomspace(10.0, 1e4, 200))
    C2 = modulation_estimate_constant(7, 2, beta, 1.0, 10.0, np.geomspace(10.0, 1e4, 400))
    assert abs(C1 - C2) / C1 < 0.05


def test_modulation_P():
    t = np.array([1.0, 10.0, 100.0])
    assert np.allclose(modulation_P(lambda s: s ** -2.0, t), 1.0 / t, rtol=1e-9)
    assert np.all(modulation_P(lambda s: 0.0, t) == 0.0)
    with pytest.raises(DomainError):
        modulation_P(lambda s: 1.0 / s, t)
    # the norm ratio does not depend on t0
    ratios = []
    for t0 in (10.0, 100.0, 1000.0):
        tt = np.geomspace(t0, 1e3 * t0, 100)
        Xi = lambda s: s ** -2.0 * (2.0 + math.sin(math.log(s)))
        xi = modulation_P(Xi, tt)
        ratios.append(decay_norm(tt, xi, 1.0) / decay_norm(tt, [Xi(s) for s in tt], 2.0))
    assert max(ratios) < 2.0 and max(ratios) / min(ratios) < 1.5


def test_decay_norm():
    t = np.geomspace(1, 1e4, 20001)
    assert decay_norm(t, np.zeros_like(t), 2.0) == 0.0
    assert decay_norm(t, t ** -1.5, 1.5) == pytest.approx(1.0)
    g = t ** -1.0 * (1 + np.sin(np.log(t))) / 2
    assert decay_norm(t, g, 1.0) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(DomainError):
        decay_norm([], [], 1.0)


def test_trajectory_kinds_and_admissibility():
    s = np.geomspace(10, 1000, 400)
    tr = SampledTrajectory(s, 1e-3 * s ** -2.5)
    assert tr.derivative(100.0) == pytest.approx(-2.5e-3 * 100.0 ** -3.5, rel=1e-3)
    f = FunctionTrajectory(lambda t: t ** -3.0)
    assert f.derivative(2.0) == pytest.approx(-3.0 / 16.0, rel=1e-6)
    par = tower_params(7, 2, 10.0, c=C7, mu1=[PowerTrajectory(0.0, 0.0), PowerTrajectory(1e-6, -2.5)])
    flags = admissibility(par, s, 0.1)
    assert flags["mu1_admissible"]
    with pytest.raises(DomainError):
        admissibility(par, s, 5.0)


def test_trajectory_csv_header():
    par = tower_params(7, 2, 10.0, c=C7)
    text = trajectory_csv(par, [10.0, 20.0])
    lines = text.splitlines()
    assert lines[0].startswith("# n=7 k=2 t0=10")
    assert lines[1] == "t,mu0_1,mu0_2,mu1_1,mu1_2,lambda_2"
    assert len(lines) == 4
