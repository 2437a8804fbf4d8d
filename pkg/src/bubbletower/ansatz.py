"""Cut-off functions, the approximate tower u* = Ubar + phi0, its residual
under the heat flow, and the compactly supported perturbation directions.

Everything here is radial with centres at the origin unless an axis offset
``xi`` is given; residuals require radial symmetry.
"""
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .radial import RadialField, laplacian_fd, radial_integral
from .soliton import (as_dimension, energy_closed_form, kernel_Zn1, soliton_dU,
                      soliton_U, soliton_U_minus_U0)

DEFAULT_EPS = 0.02


# ---------------------------------------------------------------------------
# cut-offs
# ---------------------------------------------------------------------------

def base_cutoff(s, nu=0):
    """chi(s): 1 for s <= 1, 0 for s >= 2, quintic smoothstep between (C^2).

    ``nu`` selects the derivative (0, 1 or 2).
    """
    s = np.asarray(s, dtype=float)
    x = np.clip(s - 1.0, 0.0, 1.0)
    inside = (s > 1.0) & (s < 2.0)
    if nu == 0:
        return 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)
    if nu == 1:
        return np.where(inside, -30.0 * x * x * (1.0 - x) ** 2, 0.0)
    if nu == 2:
        return np.where(inside, -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x), 0.0)
    raise DomainError("only derivatives up to order 2 are available")


class _Cut:
    """chi(a r + b) style profile: value, r-derivative and radial Laplacian."""

    def __init__(self, scale, n, r):
        # chi(r / scale)
        s = r / scale
        self.v = base_cutoff(s)
        self.d1 = base_cutoff(s, 1) / scale
        d2 = base_cutoff(s, 2) / scale ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            self.lap = d2 + np.where(r > 0, (n - 1) * self.d1 / np.where(r > 0, r, 1.0), 0.0)

    def __sub__(self, other):
        out = object.__new__(_Cut)
        out.v = self.v - other.v
        out.d1 = self.d1 - other.d1
        out.lap = self.lap - other.lap
        return out


def _zero_cut(r):
    out = object.__new__(_Cut)
    out.v = np.zeros_like(r)
    out.d1 = np.zeros_like(r)
    out.lap = np.zeros_like(r)
    return out


def selfsimilar_cutoff(r, t):
    """chi(|x| / sqrt(t))."""
    return base_cutoff(np.asarray(r, dtype=float) / math.sqrt(t))


def mu_bar(params, j, t):
    """Geometric mean sqrt(mu_j mu_{j-1}); zero for j = k+1."""
    if j == params.k + 1:
        return 0.0
    return math.sqrt(float(params.mu(j, t)) * float(params.mu(j - 1, t)))


def separation_flags(params, t):
    """Indices j where mu_bar_{j+1} >= mu_bar_j / 8 (cut-offs overlap)."""
    return [j for j in range(2, params.k) if mu_bar(params, j + 1, t) >= mu_bar(params, j, t) / 8.0]


def _chi_j(params, j, t, r):
    n = params.dim.n
    upper = _Cut(mu_bar(params, j, t) / 2.0, n, r)            # chi(2 d / mu_bar_j)
    if j == params.k:
        return upper
    return upper - _Cut(2.0 * mu_bar(params, j + 1, t), n, r)  # chi(d / (2 mu_bar_{j+1}))


def interbubble_cutoffs(params, t, r, warn=True):
    """[chi_2, ..., chi_k] sampled at distances r from the centres."""
    r = np.abs(np.asarray(r, dtype=float))
    bad = separation_flags(params, t)
    if bad and warn:
        warnings.warn("inter-bubble cut-offs overlap for j in %s at t=%g" % (bad, t))
    return [_chi_j(params, j, t, r).v for j in range(2, params.k + 1)]


def R_of_t(t, eps=DEFAULT_EPS):
    return float(t) ** eps


def inner_cutoff(params, j, t, r, eps=DEFAULT_EPS):
    """eta_j = chi(|x - xi_j| / (R mu_j))."""
    return base_cutoff(np.abs(r) / (R_of_t(t, eps) * float(params.mu(j, t))))


def annulus_cutoff(params, j, t, r, eps=DEFAULT_EPS):
    """zeta_j = chi(d / (R mu_j)) - chi(d R / mu_j)."""
    R = R_of_t(t, eps)
    m = float(params.mu(j, t))
    d = np.abs(r)
    return base_cutoff(d / (R * m)) - base_cutoff(d * R / m)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def ansatz_grid(params, t, per_decade=40, below=1e-3, far_points=200):
    """Origin, a log grid from below * mu_k to 2.2 sqrt(t) and a uniform far patch.

    The log grid has ``per_decade`` nodes per decade, so every bubble scale is
    resolved by the same relative density.
    """
    mus = [float(params.mu(j, t)) for j in range(1, params.k + 1)]
    lo = below * min(mus)
    hi = 2.2 * math.sqrt(t)
    m = int(math.ceil(per_decade * math.log10(hi / lo))) + 1
    nodes = np.concatenate([[0.0], np.geomspace(lo, hi, m),
                            np.linspace(0.5 * math.sqrt(t), hi, far_points)])
    nodes = np.unique(nodes)
    keep = np.concatenate([[True], np.diff(nodes) > 1e-12 * nodes[1:]])
    return nodes[keep]


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _offsets(params, xi):
    if xi is None:
        return [0.0] * params.k
    if len(xi) != params.k:
        raise DomainError("need one axis offset per bubble")
    return [float(x) for x in xi]


def _bubble(params, j, t, r, xi=0.0):
    n = params.dim.n
    m = float(params.mu(j, t))
    d = np.abs(r - xi)
    return (-1.0) ** (j - 1) * m ** (-(n - 2) / 2.0) * soliton_U(params.dim, d / m)


def assemble_Ubar(params, t, grid, xi=None):
    """chi_bar * sum_j (-1)^{j-1} mu_j^{-(n-2)/2} U((x - xi_j)/mu_j) along an axis."""
    r = np.asarray(grid, dtype=float)
    xs = _offsets(params, xi)
    total = sum(_bubble(params, j, t, r, xs[j - 1]) for j in range(1, params.k + 1))
    return RadialField(r, selfsimilar_cutoff(r, t) * total, params.dim.n,
                       {"profile": "Ubar", "t": t})


def _phi_bar_eval(spec, y, nu=0):
    return spec.phi_bar(y, nu)


def assemble_phi0(params, spec, t, grid, xi=None):
    """sum_{j>=2} chi_j (-1)^{j-1} mu_j^{-(n-2)/2} lambda_{0j}^{(n-2)/2} phi_bar((x - xi_j)/mu_j)."""
    n = params.dim.n
    r = np.asarray(grid, dtype=float)
    xs = _offsets(params, xi)
    out = np.zeros_like(r)
    for j in range(2, params.k + 1):
        m = float(params.mu(j, t))
        d = np.abs(r - xs[j - 1])
        amp = (-1.0) ** (j - 1) * m ** (-(n - 2) / 2.0) * float(params.lambda0(j, t)) ** ((n - 2) / 2.0)
        out += _chi_j(params, j, t, d).v * amp * _phi_bar_eval(spec, d / m)
    return RadialField(r, out, n, {"profile": "phi0", "t": t})


@dataclass(eq=False)
class AnsatzField:
    params: object
    t: float
    u_star: RadialField
    Ubar: RadialField
    phi0: RadialField
    residual: RadialField = None
    info: dict = field(default_factory=dict)

    @property
    def sign_at_origin(self):
        return int(np.sign(self.u_star.values[0]))

    def origin_ratio(self):
        """|u*(0)| mu_k^{(n-2)/2} / U(0); tends to 1 as the innermost bubble dominates."""
        p = self.params
        n = p.dim.n
        return abs(self.u_star.values[0]) * float(p.mu(p.k, self.t)) ** ((n - 2) / 2.0) / p.dim.U0

    def snapshot_csv(self):
        buf = io.StringIO()
        buf.write("r,u_star,Ubar,phi0,residual\n")
        res = self.residual.values if self.residual is not None else np.full(self.u_star.grid.size, np.nan)
        for row in zip(self.u_star.grid, self.u_star.values, self.Ubar.values, self.phi0.values, res):
            buf.write(",".join("%.12g" % v for v in row) + "\n")
        return buf.getvalue()

    def sidecar_json(self, norms=None):
        p = self.params
        doc = {"n": p.dim.n, "k": p.k, "t": self.t,
               "mu": [float(p.mu(j, self.t)) for j in range(1, p.k + 1)],
               "norms": norms or {}}
        return json.dumps(doc, sort_keys=True, indent=1)


def assemble_u_star(params, spec, t, grid=None, xi=None, with_phi0=True):
    """u* = Ubar + phi0 with the components kept for diagnostics."""
    grid = ansatz_grid(params, t) if grid is None else np.asarray(grid, dtype=float)
    ub = assemble_Ubar(params, t, grid, xi)
    ph = assemble_phi0(params, spec, t, grid, xi) if with_phi0 else ub.with_values(np.zeros(grid.size))
    us = RadialField(grid, ub.values + ph.values, params.dim.n, {"profile": "u_star", "t": t})
    return AnsatzField(params, t, us, ub, ph, info={"separation_flags": separation_flags(params, t)})


# ---------------------------------------------------------------------------
# pointwise pieces with analytic radial derivatives
# ---------------------------------------------------------------------------

class _Pieces:
    """Bubbles, corrections and cut-offs at radii r and time t (radial case)."""

    def __init__(self, params, spec, t, r, with_phi0=True):
        dim = params.dim
        n = dim.n
        self.n, self.k, self.dim = n, params.k, dim
        self.r = r
        sq = math.sqrt(t)
        self.cb = _Cut(sq, n, r)
        self.cb_t = base_cutoff(r / sq, 1) * (-0.5 * r / (t * sq))   # d/dt chi(r/sqrt t)
        self.mu = [float(params.mu(j, t)) for j in range(1, params.k + 1)]
        self.mudot = [float(params.mu_dot(j, t)) for j in range(1, params.k + 1)]
        self.U, self.dU, self.y = [], [], []
        for j, m in enumerate(self.mu, start=1):
            s = (-1.0) ** (j - 1)
            y = r / m
            self.y.append(y)
            self.U.append(s * m ** (-(n - 2) / 2.0) * soliton_U(dim, y))
            self.dU.append(s * m ** (-n / 2.0) * soliton_dU(dim, y))
        self.chi = [None, None] + [_chi_j(params, j, t, r) for j in range(2, params.k + 1)]
        self.phi = [None, None]
        self.dphi = [None, None]
        self.H = [None, None]
        self.lam0q = [None, None]
        for j in range(2, params.k + 1):
            m = self.mu[j - 1]
            s = (-1.0) ** (j - 1)
            lq = float(params.lambda0(j, t)) ** ((n - 2) / 2.0)
            self.lam0q.append(lq)
            y = self.y[j - 1]
            if with_phi0:
                self.phi.append(s * m ** (-(n - 2) / 2.0) * lq * spec.phi_bar(y))
                self.dphi.append(s * m ** (-n / 2.0) * lq * spec.phi_bar(y, 1))
                hb = spec.c_interaction * kernel_Zn1(dim, y) + dim.U0 * _pot(dim, y)
                self.H.append(s * m ** (-(n + 2) / 2.0) * lq * hb)
            else:
                z = np.zeros_like(r)
                self.phi.append(z)
                self.dphi.append(z)
                self.H.append(z)

    def u(self):
        out = self.cb.v * sum(self.U)
        for j in range(2, self.k + 1):
            out = out + self.chi[j].v * self.phi[j]
        return out

    def du(self):
        out = self.cb.d1 * sum(self.U) + self.cb.v * sum(self.dU)
        for j in range(2, self.k + 1):
            out = out + self.chi[j].d1 * self.phi[j] + self.chi[j].v * self.dphi[j]
        return out


def _pot(dim, y):
    # p U^{p-1} without importing a circular name
    return dim.pf * dim.n * (dim.n - 2) * (1.0 + y * y) ** -2.0


def _R2(v, p):
    """|1+v|^{p-1}(1+v) - 1 - p v, by its binomial series when |v| < 0.1."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    small = np.abs(v) < 0.1
    vs = v[small]
    acc = np.zeros_like(vs)
    coef = p * (p - 1.0) / 2.0
    term = vs * vs
    for m in range(2, 18):
        acc += coef * term
        coef *= (p - m) / (m + 1.0)
        term = term * vs
    out[small] = acc
    vb = v[~small]
    out[~small] = np.abs(1.0 + vb) ** (p - 1.0) * (1.0 + vb) - 1.0 - p * vb
    return out


def _chi_phi(params, spec, t, r, with_phi0):
    """sum_j chi_j phi_{0j} at time t (for the time derivative by re-assembly)."""
    if params.k < 2 or not with_phi0:
        return np.zeros_like(r)
    pc = _Pieces(params, spec, t, r, with_phi0)
    return sum(pc.chi[j].v * pc.phi[j] for j in range(2, params.k + 1))


def default_dt(params, t):
    """10^-3 t min_j lambda_{0j}(t), or 10^-3 t for a single bubble."""
    if params.k < 2:
        return 1e-3 * t
    return 1e-3 * t * min(float(params.lambda0(j, t)) for j in range(2, params.k + 1))


def residual_S(params, spec, t, grid=None, dt=None, method="stable", with_phi0=True):
    """S[u*] = -u*_t + Laplacian u* + |u*|^{p-1} u* on a radial grid.

    ``method="direct"`` re-assembles u* at t +- dt and applies the discrete
    Laplacian; it loses all digits once the bubbles are well separated, since
    each term is of size mu_k^{-(n+2)/2} while their sum is not.

    ``method="stable"`` evaluates the same expression pointwise, grouping the
    terms around the locally dominant bubble d so that the cancellations
    happen analytically:
      * Laplacian of U_j is -f(U_j) and that of phi_{0j} is -f'(U_j) phi_{0j} + H_j,
      * the d-th interaction bracket -dU_d/dt + H_d + f'(U_d) U_{d-1}(0) is
        formed from mu mu' + c lambda0^{(n-2)/2} and lambda0^q - lambda^q, which
        vanish identically on the rate law,
      * f(u*) is expanded around chi_bar U_d with an exact remainder.
    Only d/dt of chi_j phi_{0j} is taken by central re-assembly.
    """
    dim = params.dim
    n, p = dim.n, dim.pf
    grid = ansatz_grid(params, t) if grid is None else np.asarray(grid, dtype=float)
    r = grid
    dt = default_dt(params, t) if dt is None else dt
    if method == "direct":
        up = assemble_u_star(params, spec, t + dt, r, with_phi0=with_phi0).u_star.values
        um = assemble_u_star(params, spec, t - dt, r, with_phi0=with_phi0).u_star.values
        u = assemble_u_star(params, spec, t, r, with_phi0=with_phi0).u_star.values
        S = -(up - um) / (2 * dt) + laplacian_fd(r, u, n) + np.abs(u) ** (p - 1) * u
        return RadialField(r, S, n, {"profile": "residual", "method": "direct", "t": t})
    if method != "stable":
        raise DomainError("unknown residual method %r" % method)

    pc = _Pieces(params, spec, t, r, with_phi0)
    k = params.k
    cb = pc.cb
    S = np.zeros_like(r)
    live = cb.v > 0
    absU = np.array([np.abs(u) for u in pc.U])
    dom = np.argmax(absU, axis=0) + 1                       # dominant bubble per node
    sumU = sum(pc.U)
    dtU = [-(-1.0) ** (j - 1) * pc.mu[j - 1] ** (-n / 2.0) * pc.mudot[j - 1] * kernel_Zn1(dim, pc.y[j - 1])
           for j in range(1, k + 1)]
    fU = [np.abs(u) ** (p - 1) * u for u in pc.U]
    fpU = [p * np.abs(u) ** (p - 1) for u in pc.U]
    chi_v = [None, cb.v] + [pc.chi[j].v for j in range(2, k + 1)]

    # time derivative of the corrections by re-assembly
    dchiphi = (_chi_phi(params, spec, t + dt, r, with_phi0)
               - _chi_phi(params, spec, t - dt, r, with_phi0)) / (2 * dt)

    # terms that do not depend on the dominant bubble
    common = (-pc.cb_t * sumU + 2.0 * cb.d1 * sum(pc.dU) + cb.lap * sumU - dchiphi)
    for j in range(2, k + 1):
        common = common + 2.0 * pc.chi[j].d1 * pc.dphi[j] + pc.chi[j].lap * pc.phi[j]

    for d in range(1, k + 1):
        sel = live & (dom == d)
        if not np.any(sel):
            continue
        m, md = pc.mu[d - 1], pc.mudot[d - 1]
        y = pc.y[d - 1][sel]
        sgn = (-1.0) ** (d - 1)
        c_d = chi_v[d][sel]
        cbs = cb.v[sel]
        cbp = cbs ** p
        # interaction bracket of bubble d, in y variables
        if d == 1:
            bracket = sgn * m ** (-(n + 2) / 2.0) * (m * md) * kernel_Zn1(dim, y)
            src_prev = 0.0
        else:
            q = (n - 2) / 2.0
            m0 = float(params.mu0(d, t))
            m0d = float(params.mu0_dot(d, t))
            m1 = m - m0
            m1d = md - m0d
            lam0 = float(params.lambda0(d, t))
            lam = float(params.lam(d, t))
            # mu mu' + c_spec lambda0^q, with mu0 mu0' = -c_params lambda0^q exactly
            c_spec = spec.c_interaction if with_phi0 else 0.0
            zc = (c_spec - params.c) * lam0 ** q + (m0 * m1d + m1 * m0d + m1 * m1d)
            if with_phi0:
                # lambda0^q - lambda^q
                dl = -lam0 ** q * math.expm1(q * math.log(lam / lam0))
                bracket = sgn * m ** (-(n + 2) / 2.0) * (zc * kernel_Zn1(dim, y)
                                                         + _pot(dim, y) * dim.U0 * dl)
            else:
                # no correction: zc is then mu mu', and the bracket is the raw interaction
                bracket = sgn * m ** (-(n + 2) / 2.0) * (zc * kernel_Zn1(dim, y)
                                                         - _pot(dim, y) * dim.U0 * lam ** q)
            src_prev = (-1.0) ** (d - 2) * float(params.mu(d - 1, t)) ** (-(n - 2) / 2.0) * dim.U0
        val = c_d * bracket
        # cut-off mismatch around the bracket
        val += (c_d - cbs) * dtU[d - 1][sel]
        if d >= 2:
            val += (cbp - c_d) * fpU[d - 1][sel] * src_prev
        # other bubbles' time derivatives and sources
        for j in range(1, k + 1):
            if j == d:
                continue
            val -= cbs * dtU[j - 1][sel]
            val -= cbs * fU[j - 1][sel]
            if j >= 2:
                val += pc.chi[j].v[sel] * pc.H[j][sel]
        val += (cbp - cbs) * fU[d - 1][sel]
        # linear coupling of bubble d to the others
        others = np.zeros(int(sel.sum()))
        for j in range(1, k + 1):
            if j == d:
                continue
            if j == d - 1:
                mj = float(params.mu(j, t))
                others += (-1.0) ** (j - 1) * mj ** (-(n - 2) / 2.0) * soliton_U_minus_U0(dim, r[sel] / mj)
            else:
                others += pc.U[j - 1][sel]
        val += cbp * fpU[d - 1][sel] * others
        # coupling of f'(.) to the corrections
        cbq = cbs ** (p - 1)
        for j in range(2, k + 1):
            cp = pc.chi[j].v[sel] * pc.phi[j][sel]
            if j == d:
                val += (cbq - 1.0) * fpU[d - 1][sel] * cp
            else:
                val += cp * (cbq * fpU[d - 1][sel] - fpU[j - 1][sel])
        # exact nonlinear remainder of f around chi_bar U_d
        A = cbs * pc.U[d - 1][sel]
        w = cbs * (sumU[sel] - pc.U[d - 1][sel])
        for j in range(2, k + 1):
            w = w + pc.chi[j].v[sel] * pc.phi[j][sel]
        val += np.abs(A) ** (p - 1) * A * _R2(w / A, p)
        S[sel] = val + common[sel]
    return RadialField(r, S, n, {"profile": "residual", "method": "stable", "t": t,
                                 "with_phi0": with_phi0})


def plateau_sup(params, res, t, j=2):
    """sup |S| over the plateau 4 mu_bar_{j+1} <= r <= mu_bar_j / 2 of chi_j."""
    lo = 4.0 * mu_bar(params, j + 1, t)
    hi = mu_bar(params, j, t) / 2.0
    sel = (res.grid >= lo) & (res.grid <= hi)
    return float(np.max(np.abs(res.values[sel])))


# ---------------------------------------------------------------------------
# energy and perturbation directions
# ---------------------------------------------------------------------------

def ansatz_energy(params, spec, t, grid=None, with_phi0=True, order=8):
    """J(u*(., t)) with u* and its radial derivative evaluated in closed form."""
    grid = ansatz_grid(params, t) if grid is None else grid
    n = params.dim.n
    q = 2.0 * n / (n - 2)

    def dens(r):
        pc = _Pieces(params, spec, t, r, with_phi0)
        return 0.5 * pc.du() ** 2 - (n - 2) / (2.0 * n) * np.abs(pc.u()) ** q

    return radial_integral(dens, grid, n, order=order, tail=False)


def energy_gap(params, spec, t, **kw):
    """J(u*) - k S_n."""
    return float(ansatz_energy(params, spec, t, **kw)) - params.k * energy_closed_form(params.dim)


def codimension(n, k):
    """k + n (k-1): one unstable direction per bubble plus translations of the inner ones."""
    if k < 1:
        raise DomainError("k must be positive")
    return k + n * (k - 1)


def perturbation_basis(params, spec, R=None, grid=None, eps=DEFAULT_EPS):
    """Radial directions omega_j and omega~_j at t0 plus the codimension count.

    omega_j(x) = Z0(x / mu0_j(t0)) chi(|x| / (R mu0_j(t0))), omega~_j with U in
    place of Z0.  The n(k-1) translation directions are gradients of omega~_j
    and are reported only as a count.
    """
    dim = params.dim
    t0 = params.t0
    R = R_of_t(t0, eps) if R is None else R
    mus = [float(params.mu0(j, t0)) for j in range(1, params.k + 1)]
    if grid is None:
        grid = np.unique(np.concatenate(
            [[0.0]] + [np.geomspace(1e-3 * m, 2.5 * R * m, 200) for m in mus]))
    grid = np.asarray(grid, dtype=float)
    omega, omega_t = [], []
    for j, m in enumerate(mus, start=1):
        cut = base_cutoff(grid / (R * m))
        omega.append(RadialField(grid, spec.Z0(grid / m) * cut, dim.n,
                                 {"profile": "omega", "j": j, "support": 2 * R * m}))
        omega_t.append(RadialField(grid, soliton_U(dim, grid / m) * cut, dim.n,
                                   {"profile": "omega_tilde", "j": j, "support": 2 * R * m}))
    return {"omega": omega, "omega_tilde": omega_t, "N_k": codimension(dim.n, params.k),
            "radial": params.k, "translations": dim.n * (params.k - 1), "R": R}
