"""Rate law of the tower parameters, the error operators of the modulation
step and the one-dimensional solution operators used to invert them."""
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from .errors import DomainError
from .soliton import (as_dimension, kernel_Zn1, potential, soliton_dU)


# ---------------------------------------------------------------------------
# exponents and coefficients
# ---------------------------------------------------------------------------

def rate_exponents(dim, k) -> List[Fraction]:
    """alpha_j = ((n-2)/(n-6))^{j-1} / 2 - 1/2 for j = 1..k, exact."""
    dim = as_dimension(dim)
    if k < 1:
        raise DomainError("tower needs k >= 1")
    q = Fraction(dim.n - 2, dim.n - 6)
    return [q ** (j - 1) / 2 - Fraction(1, 2) for j in range(1, k + 1)]


def rate_exponents_recursive(dim, k) -> List[Fraction]:
    """Same exponents from alpha_j = (2 + (n-2) alpha_{j-1}) / (n-6), alpha_1 = 0.

    This is what matching powers of t in mu_j mu_j' = -c lambda_j^{(n-2)/2}
    gives: 2 alpha_j + 1 = (n-2)/2 (alpha_j - alpha_{j-1}).
    """
    dim = as_dimension(dim)
    out = [Fraction(0)]
    for _ in range(1, k):
        out.append((2 + (dim.n - 2) * out[-1]) / Fraction(dim.n - 6))
    return out[:k]


def rate_coefficients(dim, k, c) -> List[float]:
    """beta_j from coefficient matching: beta_j = (alpha_j/c)^{2/(n-6)} beta_{j-1}^{(n-2)/(n-6)}."""
    dim = as_dimension(dim)
    if not c > 0:
        raise DomainError("interaction constant must be positive")
    n = dim.n
    alpha = rate_exponents(dim, k)
    beta = [1.0]
    for j in range(1, k):
        beta.append((float(alpha[j]) / c) ** (2.0 / (n - 6)) * beta[-1] ** ((n - 2) / (n - 6)))
    return beta


def rate_coefficients_printed(dim, k) -> List[float]:
    """The recursion beta_j = alpha_j^2 beta_{j-1}^{(n-2)/(n-6)}, which omits c.

    Kept for comparison only; it does not solve the parameter ODE.
    """
    dim = as_dimension(dim)
    alpha = rate_exponents(dim, k)
    beta = [1.0]
    for j in range(1, k):
        beta.append(float(alpha[j]) ** 2 * beta[-1] ** ((dim.n - 2) / (dim.n - 6)))
    return beta


def lambda_exponent_printed(dim, j) -> Fraction:
    """Printed decay power of lambda_{0j}: 2/(n-6) ((n-2)/(n-6))^{j-2}."""
    dim = as_dimension(dim)
    return Fraction(2, dim.n - 6) * Fraction(dim.n - 2, dim.n - 6) ** (j - 2)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

class Trajectory:
    """Scalar function of t with a derivative."""

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t):
        raise NotImplementedError


class ZeroTrajectory(Trajectory):
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def derivative(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


@dataclass
class PowerTrajectory(Trajectory):
    """coef * t^power."""

    coef: float
    power: float

    def __call__(self, t):
        return self.coef * np.asarray(t, dtype=float) ** self.power

    def derivative(self, t):
        return self.coef * self.power * np.asarray(t, dtype=float) ** (self.power - 1.0)


class FunctionTrajectory(Trajectory):
    """Callable with an optional analytic derivative; otherwise centred differences."""

    def __init__(self, fun, dfun=None, rel_step=1e-5):
        self.fun, self.dfun, self.rel_step = fun, dfun, rel_step

    def __call__(self, t):
        return np.asarray(self.fun(np.asarray(t, dtype=float)), dtype=float)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.dfun is not None:
            return np.asarray(self.dfun(t), dtype=float)
        h = self.rel_step * np.maximum(np.abs(t), 1.0)
        return (self.fun(t + h) - self.fun(t - h)) / (2.0 * h)


class SampledTrajectory(Trajectory):
    """Samples on an increasing time grid; linear interpolation, centred
    differences inside and one-sided differences at both ends."""

    def __init__(self, t, values):
        self.t = np.asarray(t, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.t.ndim != 1 or self.t.size < 2 or np.any(np.diff(self.t) <= 0):
            raise DomainError("sample times must be increasing with at least 2 entries")
        self.dvalues = np.gradient(self.values, self.t, edge_order=1)

    def __call__(self, t):
        return np.interp(t, self.t, self.values)

    def derivative(self, t):
        return np.interp(t, self.t, self.dvalues)


def as_trajectory(obj) -> Trajectory:
    if obj is None:
        return ZeroTrajectory()
    if isinstance(obj, Trajectory):
        return obj
    if callable(obj):
        return FunctionTrajectory(obj)
    t, v = obj
    return SampledTrajectory(t, v)


@dataclass
class TowerParams:
    """Dimension, number of bubbles, initial time and the parameter trajectories.

    ``mu1`` holds the k corrections of the scales; ``xi_dot`` the velocities of
    the centres, each a callable returning a vector of length n (zero by
    default, the evolver is radial).
    """

    dim: object
    k: int
    t0: float
    c: float
    alpha: Sequence[Fraction] = ()
    beta: Sequence[float] = ()
    mu1: List[Trajectory] = field(default_factory=list)
    xi_dot: List[Optional[Callable]] = field(default_factory=list)

    def __post_init__(self):
        self.dim = as_dimension(self.dim)
        if self.k < 1:
            raise DomainError("tower needs k >= 1")
        if not self.t0 > 0:
            raise DomainError("t0 must be positive")
        if not self.alpha:
            self.alpha = rate_exponents(self.dim, self.k)
        if not self.beta:
            self.beta = rate_coefficients(self.dim, self.k, self.c)
        if not self.mu1:
            self.mu1 = [ZeroTrajectory() for _ in range(self.k)]
        self.mu1 = [as_trajectory(m) for m in self.mu1]
        if not self.xi_dot:
            self.xi_dot = [None] * self.k
        if len(self.mu1) != self.k or len(self.xi_dot) != self.k:
            raise DomainError("need one trajectory per bubble")

    # index j runs over 1..k as in the formulas
    def _check_j(self, j, lo=1):
        if not lo <= j <= self.k:
            raise DomainError("bubble index %d outside %d..%d" % (j, lo, self.k))

    def mu0(self, j, t):
        self._check_j(j)
        return self.beta[j - 1] * np.asarray(t, dtype=float) ** (-float(self.alpha[j - 1]))

    def mu0_dot(self, j, t):
        a = float(self.alpha[j - 1])
        return -a * self.mu0(j, t) / np.asarray(t, dtype=float)

    def lambda0(self, j, t):
        self._check_j(j, 2)
        return self.mu0(j, t) / self.mu0(j - 1, t)

    def mu(self, j, t):
        return self.mu0(j, t) + self.mu1[j - 1](t)

    def mu_dot(self, j, t):
        return self.mu0_dot(j, t) + self.mu1[j - 1].derivative(t)

    def lam(self, j, t):
        return self.mu(j, t) / self.mu(j - 1, t)

    def xi_velocity(self, j, t):
        f = self.xi_dot[j - 1]
        if f is None:
            return np.zeros(self.dim.n)
        return np.asarray(f(t), dtype=float)


def tower_params(dim, k, t0, c=None, **kw):
    """TowerParams with c from the quadrature when not supplied."""
    if c is None:
        from .linear import interaction_constant_c
        c = interaction_constant_c(dim)
    return TowerParams(dim, k, t0, c, **kw)


def time_window(t0, factor=1e3, m=400):
    """Logarithmic sampling of [t0, factor t0]."""
    return np.geomspace(t0, factor * t0, m)


def mu0_trajectory(params, t):
    """Array (k, len(t)) of mu_{0j}(t)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < params.t0 * (1 - 1e-12)):
        raise DomainError("times must satisfy t >= t0")
    return np.array([params.mu0(j, t) for j in range(1, params.k + 1)])


def lambda0_trajectory(params, t):
    """Array (k-1, len(t)) of lambda_{0j}(t), j = 2..k."""
    m = mu0_trajectory(params, t)
    return m[1:] / m[:-1]


def ode_residual(params, t):
    """Relative residual |mu mu' + c lambda^{(n-2)/2}| / (c lambda^{(n-2)/2}), j = 2..k."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = params.dim.n
    out = []
    for j in range(2, params.k + 1):
        rhs = params.c * params.lambda0(j, t) ** ((n - 2) / 2.0)
        out.append(np.abs(params.mu0(j, t) * params.mu0_dot(j, t) + rhs) / rhs)
    return np.array(out).reshape(params.k - 1, t.size)


# ---------------------------------------------------------------------------
# error operators
# ---------------------------------------------------------------------------

def _points(y, n):
    """Radii become points on the first axis; points pass through."""
    y = np.asarray(y, dtype=float)
    if y.ndim >= 1 and y.shape[-1] == n and y.ndim > 1:
        return y
    pts = np.zeros(y.shape + (n,))
    pts[..., 0] = y
    return pts


def _xi_term(params, j, y, t):
    pts = _points(y, params.dim.n)
    r = np.linalg.norm(pts, axis=-1)
    v = params.xi_velocity(j, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        radial = np.where(r > 0, soliton_dU(params.dim, r) / np.where(r > 0, r, 1.0), 0.0)
    return float(params.mu(j, t)) * radial * (pts @ v), r


def eval_Dj(params, j, y, t, linearized=False):
    """D_j at points (or radii) y and time t.

    ``linearized=False`` follows the printed operator.  With
    ``linearized=True`` the lambda-term carries the sign obtained by
    differentiating lambda_j^{(n-2)/2} in mu_{1j}, which is the sign that
    turns the Z-projection into mu_0 (mu_1' + (n-4)/2 alpha_j/t mu_1).
    """
    params._check_j(j)
    dim = params.dim
    n, U0 = dim.n, dim.U0
    t = float(t)
    xterm, r = _xi_term(params, j, y, t)
    Z = kernel_Zn1(dim, r)
    m1 = float(params.mu1[j - 1](t))
    dm1 = float(params.mu1[j - 1].derivative(t))
    if j == 1:
        return (1.0 + m1) * (dm1 * Z + xterm / float(params.mu(1, t)))
    coef = float(params.mu0_dot(j, t)) * m1 + float(params.mu0(j, t)) * dm1
    lam = float(params.lambda0(j, t))
    sign = -1.0 if linearized else 1.0
    pot = sign * (n - 2) / 2.0 * potential(dim, r) * U0 * lam ** ((n - 4) / 2.0) \
        * m1 / float(params.mu0(j - 1, t))
    return coef * Z + pot + xterm


def Dj_z_coefficient(params, j, t, linearized=False):
    """Closed form of int D_j Z / int Z^2 for radial data (no centre motion).

    Uses p int U^{p-1} Z / int Z^2 = -c / U(0).
    """
    n = params.dim.n
    t = float(t)
    m1 = float(params.mu1[j - 1](t))
    dm1 = float(params.mu1[j - 1].derivative(t))
    if j == 1:
        return (1.0 + m1) * dm1
    base = float(params.mu0_dot(j, t)) * m1 + float(params.mu0(j, t)) * dm1
    sign = -1.0 if linearized else 1.0
    lam = float(params.lambda0(j, t))
    return base - sign * (n - 2) / 2.0 * params.c * lam ** ((n - 4) / 2.0) \
        * m1 / float(params.mu0(j - 1, t))


def Ej_bracket(params, j, y, t):
    """[mu mu' - mu0 mu0'] Z - p U^{p-1} [lambda^{(n-2)/2} - lambda0^{(n-2)/2}] U(0) + mu xi'.grad U.

    The full (nonlinear in mu_1) error of the j-th interaction equation.
    """
    params._check_j(j, 2)
    dim = params.dim
    n = dim.n
    t = float(t)
    xterm, r = _xi_term(params, j, y, t)
    mm = float(params.mu(j, t) * params.mu_dot(j, t) - params.mu0(j, t) * params.mu0_dot(j, t))
    dl = float(params.lam(j, t)) ** ((n - 2) / 2.0) - float(params.lambda0(j, t)) ** ((n - 2) / 2.0)
    return mm * kernel_Zn1(dim, r) - potential(dim, r) * dl * dim.U0 + xterm


def Theta_j(params, j, y, t, quad_const=1.0):
    """Remainder operator as printed; the O(.)^2 term is taken with constant ``quad_const``.

    Diagnostic only.
    """
    params._check_j(j, 2)
    dim = params.dim
    n = dim.n
    t = float(t)
    r = np.linalg.norm(_points(y, n), axis=-1)
    m1 = params.mu1[j - 1]
    d_sq = 2.0 * float(m1(t)) * float(m1.derivative(t))
    lam = float(params.lambda0(j, t))
    m0p = float(params.mu0(j - 1, t))
    m1p = float(params.mu1[j - 2](t))
    pot = potential(dim, r)
    return (-d_sq * kernel_Zn1(dim, r)
            - pot * dim.U0 * (n - 2) / 2.0 * lam ** ((n - 2) / 2.0) * m1p / m0p
            + quad_const * pot * lam ** ((n - 2) / 2.0) * ((float(m1(t)) - m1p) / m0p) ** 2)


# ---------------------------------------------------------------------------
# solution operators for the modulation equations
# ---------------------------------------------------------------------------

def modulation_exponent(dim, j):
    """(n-4)/2 alpha_j."""
    dim = as_dimension(dim)
    return (dim.n - 4) / 2.0 * float(rate_exponents(dim, j)[-1])


def modulation_S(dim, j, beta_fn, t0, t, samples=None):
    """mu(t) = t^{-m} int_{t0}^t s^m beta(s) ds with m = (n-4)/2 alpha_j.

    ``beta_fn`` is a callable, or None with ``samples = (s, beta(s))`` on an
    increasing grid starting at t0 (trapezoid rule).
    """
    m = modulation_exponent(dim, j)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if samples is not None:
        s, b = (np.asarray(a, dtype=float) for a in samples)
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            ss = np.append(s[s < ti], ti)
            bb = np.interp(ss, s, b)
            out[i] = integrate.trapezoid((ss / ti) ** m * bb, ss) if ss.size > 1 else 0.0
        return out
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti <= t0:
            out[i] = 0.0
            continue
        # substitute s = t0 * exp(u) so decades carry equal weight
        f = lambda u: (t0 * math.exp(u) / ti) ** m * float(beta_fn(t0 * math.exp(u))) * t0 * math.exp(u)
        out[i] = integrate.quad(f, 0.0, math.log(ti / t0), limit=400, epsabs=0.0, epsrel=1e-11)[0]
    return out


def modulation_P(Xi_fn, t, fit_range=(1e3, 1e6)):
    """xi(t) = int_t^inf Xi(s) ds for scalar or vector Xi.

    The tail is checked by a power-law fit of |Xi| on [t_max f0, t_max f1];
    an exponent >= -1 is rejected as non-integrable.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    far = t.max() * np.geomspace(fit_range[0], fit_range[1], 8)
    vals = np.array([np.linalg.norm(np.atleast_1d(Xi_fn(s))) for s in far])
    if np.all(vals == 0):
        slope = -np.inf
    elif np.any(vals == 0):
        slope = -np.inf if vals[-1] == 0 else 0.0
    else:
        slope = np.polyfit(np.log(far), np.log(vals), 1)[0]
    if slope >= -1.0:
        raise DomainError("Xi has a non-integrable tail (fitted exponent %.3g)" % slope)
    dimn = np.atleast_1d(Xi_fn(float(t[0]))).size
    out = np.zeros((t.size, dimn))
    span = math.log(1e12)
    for i, ti in enumerate(t):
        T = ti * 1e12
        for c in range(dimn):
            # s = ti e^u, then the power-law tail beyond T in closed form
            g = lambda u: float(np.atleast_1d(Xi_fn(ti * math.exp(u)))[c]) * ti * math.exp(u)
            val = integrate.quad(g, 0.0, span, limit=400, epsabs=0.0, epsrel=1e-11)[0]
            if np.isfinite(slope):
                val += float(np.atleast_1d(Xi_fn(T))[c]) * T / (-slope - 1.0)
            out[i, c] = val
    return out[:, 0] if dimn == 1 else out


def decay_norm(t, g, b):
    """sup over samples of |t^b g(t)|."""
    t = np.asarray(t, dtype=float)
    g = np.asarray(g, dtype=float)
    if t.size == 0:
        raise DomainError("empty sampling window")
    return float(np.max(np.abs(t ** b * g)))


def modulation_estimate_constant(dim, j, beta_fn, b, t0, t):
    """(||mu'||_{b+1} + ||mu||_b) / ||beta||_{b+1} for mu = S_j[beta] on samples t."""
    m = modulation_exponent(dim, j)
    mu = modulation_S(dim, j, beta_fn, t0, t)
    beta = np.array([beta_fn(s) for s in t])
    dmu = beta - m / t * mu                     # the ODE gives the derivative exactly
    return (decay_norm(t, dmu, b + 1) + decay_norm(t, mu, b)) / decay_norm(t, beta, b + 1)


def admissibility(params, t, sigma, xi=None):
    """Size of mu_1 and xi in the budget norms; flags when each is <= 1.

    ``xi`` is an optional list of (xi_j(t), xi_j'(t)) sample arrays.
    """
    n = params.dim.n
    alphas = [float(a) for a in params.alpha]
    for a in alphas[1:]:
        if not sigma < (n - 6) / 2.0 * a:
            raise DomainError("sigma must be below (n-6)/2 alpha_j for all j >= 2")
    t = np.asarray(t, dtype=float)
    mu_norm = decay_norm(t, params.mu1[0].derivative(t), 1 + sigma)
    for j in range(2, params.k + 1):
        m1 = params.mu1[j - 1]
        mu_norm += decay_norm(t, m1.derivative(t), 1 + alphas[j - 1] + sigma)
        mu_norm += decay_norm(t, m1(t), alphas[j - 1] + sigma)
    xi_norm = 0.0
    if xi is not None:
        for j, (x, dx) in enumerate(xi, start=1):
            xi_norm += decay_norm(t, dx, 1 + alphas[j - 1] + sigma)
            xi_norm += decay_norm(t, x, alphas[j - 1] + sigma)
    return {"mu1_norm": mu_norm, "xi_norm": xi_norm,
            "mu1_admissible": mu_norm <= 1.0, "xi_admissible": xi_norm <= 1.0}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def trajectory_csv(params, t):
    """CSV text: t, mu0_j, mu1_j, lambda_j with a commented header of constants."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k = params.k
    buf = io.StringIO()
    buf.write("# n=%d k=%d t0=%.12g c=%.12g beta=%s\n" % (
        params.dim.n, k, params.t0, params.c, ",".join("%.12g" % b for b in params.beta)))
    cols = (["t"] + ["mu0_%d" % j for j in range(1, k + 1)] + ["mu1_%d" % j for j in range(1, k + 1)]
            + ["lambda_%d" % j for j in range(2, k + 1)])
    buf.write(",".join(cols) + "\n")
    m0 = mu0_trajectory(params, t)
    m1 = np.array([params.mu1[j](t) for j in range(k)])
    lam = np.array([params.lam(j, t) for j in range(2, k + 1)]).reshape(k - 1, t.size)
    for i in range(t.size):
        row = [t[i]] + list(m0[:, i]) + list(m1[:, i]) + list(lam[:, i])
        buf.write(",".join("%.12g" % v for v in row) + "\n")
    return buf.getvalue()
