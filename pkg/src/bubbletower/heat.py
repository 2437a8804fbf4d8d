"""Radial heat kernel, the Duhamel operator with zero data at t0, free heat
propagation of initial data, and a harness that fits barrier constants.

The radial kernel is

    K(r, rho, tau) = |S^{n-2}| (4 pi tau)^{-n/2} e^{-(r - rho)^2 / (4 tau)} E(z),
    E(z) = A(z) e^{-z},  z = r rho / (2 tau),
    A(z) = int_0^pi e^{z cos th} sin^{n-2} th d th,

so that psi(r) = int_0^inf K(r, rho, tau) g(rho) rho^{n-1} d rho is the heat
semigroup applied to a radial g.
"""
import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import DomainError, NumericalFailure
from .norms import (diagnostic_lattice, gaussian_field, lattice_sup_ratio,
                    selfsimilar_lattice, weight_eval)
from .radial import RadialField, sphere_area
from .soliton import as_dimension

# ---------------------------------------------------------------------------
# angular factor
# ---------------------------------------------------------------------------


class HeatKernelTable:
    """log E(z) tabulated from the power series on [0, z_switch], asymptotic beyond.

    The series is A(z) = sum_m z^{2m}/(2m)! B(m + 1/2, nu + 1/2), nu = (n-2)/2,
    summed in log space.  Beyond the switch the large-z expansion of the
    modified Bessel function is used; for odd n it terminates and is exact.
    """

    def __init__(self, n, z_switch=30.0, dz=5e-3, n_asym=24):
        dim = as_dimension(n)
        self.n = dim.n
        self.nu = (self.n - 2) / 2.0
        self.zs = float(z_switch)
        self.dz = float(dz)
        m = int(round(self.zs / self.dz))
        # a few nodes past the switch keep the 4-point stencil inside the table
        z = self.dz * np.arange(m + 4)
        self.tab = self._series_log_e(z)
        self.acoef = self._asym_coefficients(n_asym)
        nu = self.nu
        self.logc_asym = (0.5 * math.log(math.pi) + gammaln(nu + 0.5) + nu * math.log(2.0)
                          - 0.5 * math.log(2.0 * math.pi))
        self.logsurf = math.log(sphere_area(self.n - 1))

    def _series_log_e(self, z):
        nu = self.nu
        mmax = int(2.0 * z.max() + 60)
        mm = np.arange(mmax)[:, None]
        logb = gammaln(mm + 0.5) + gammaln(nu + 0.5) - gammaln(mm + nu + 1.0)
        lz = np.log(np.maximum(z, 1e-300))[None, :]
        terms = np.where(mm == 0, logb, 2.0 * mm * lz - gammaln(2.0 * mm + 1.0) + logb)
        top = np.max(terms, axis=0)
        return top + np.log(np.sum(np.exp(terms - top), axis=0)) - z

    def _asym_coefficients(self, count):
        # (-1)^k a_k(nu), a_k = prod_{i<=k} (4 nu^2 - (2i-1)^2) / (k! 8^k)
        mu = 4.0 * self.nu ** 2
        out = [1.0]
        for k in range(1, count):
            out.append(-out[-1] * (mu - (2 * k - 1) ** 2) / (k * 8.0))
        return np.array(out)

    def args(self):
        return self.tab, self.dz, self.zs, self.acoef, self.logc_asym, self.nu

    def log_E(self, z):
        return _kernels.log_ae(np.atleast_1d(np.asarray(z, dtype=float)), *self.args())

    def A(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return np.exp(self.log_E(z) + z)

    def wallis(self):
        """A(0) = int_0^pi sin^{n-2}: sqrt(pi) Gamma((n-1)/2) / Gamma(n/2)."""
        return math.exp(0.5 * math.log(math.pi) + gammaln((self.n - 1) / 2.0) - gammaln(self.n / 2.0))

    def switch_mismatch(self):
        """Relative gap between series and asymptotic branch at the switch point."""
        z = np.array([self.zs])
        ser = self._series_log_e(z)[0]
        w = 1.0 / self.zs
        acc = 0.0
        for c in self.acoef[::-1]:
            acc = acc * w + c
        asym = self.logc_asym - (self.nu + 0.5) * math.log(self.zs) + math.log(acc)
        return abs(math.expm1(asym - ser))

    def kernel(self, r, rho, tau):
        r = np.asarray(r, dtype=float)
        rho = np.asarray(rho, dtype=float)
        z = r * rho / (2.0 * tau)
        le = self.log_E(np.ravel(z)).reshape(np.shape(z))
        return np.exp(self.logsurf - 0.5 * self.n * math.log(4.0 * math.pi * tau)
                      - (r - rho) ** 2 / (4.0 * tau) + le)


_TABLES = {}


def kernel_table(n):
    n = as_dimension(n).n
    if n not in _TABLES:
        _TABLES[n] = HeatKernelTable(n)
    return _TABLES[n]


# ---------------------------------------------------------------------------
# Duhamel operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadConfig:
    """Resolution of the space-time quadrature.

    ``ratio``: growth of the geometric lag panels; ``gl``: Gauss-Legendre nodes
    per panel; ``band``: uniform nodes across r +- ``band_width`` sqrt(tau)
    added to the source grid; ``g_per_decade``: density of the source grid.
    """

    ratio: float = 2.0
    gl: int = 8
    band: int = 41
    band_width: float = 10.0
    g_per_decade: int = 40
    chunk: int = 64

    def refined(self):
        return replace(self, ratio=math.sqrt(self.ratio), band=2 * self.band - 1,
                       g_per_decade=2 * self.g_per_decade)


def lag_rule(span, tau_min, cfg):
    """Nodes and weights on (0, span] for the lag tau = t - s.

    [0, tau_min] uses u = sqrt(tau) with Gauss-Legendre in u; the rest is cut
    into geometric panels, each with Gauss-Legendre nodes.
    """
    if not 0 < tau_min < span:
        tau_min = min(tau_min, 0.5 * span) if tau_min > 0 else 1e-6 * span
    x, w = np.polynomial.legendre.leggauss(cfg.gl)
    um = math.sqrt(tau_min)
    u = 0.5 * um * (x + 1.0)
    taus = [u * u]
    wts = [0.5 * um * w * 2.0 * u]
    edges = [tau_min]
    while edges[-1] * cfg.ratio < span:
        edges.append(edges[-1] * cfg.ratio)
    if span - edges[-1] < 0.2 * (edges[-1] - edges[-2] if len(edges) > 1 else span):
        edges[-1] = span
    else:
        edges.append(span)
    e = np.asarray(edges)
    a, b = e[:-1, None], e[1:, None]
    taus.append((0.5 * (a + b) + 0.5 * (b - a) * x[None, :]).ravel())
    wts.append((0.5 * (b - a) * w[None, :]).ravel())
    return np.concatenate(taus), np.concatenate(wts)


def source_grid(r_lo, r_hi, per_decade):
    m = max(2, int(math.ceil(per_decade * math.log10(r_hi / r_lo))) + 1)
    return np.concatenate([[0.0], np.geomspace(r_lo, r_hi, m)])


def _apply(g, r_q, taus, wtau, s_of_tau, G, n, cfg, table):
    """sum_i wtau_i int K(r, rho, tau_i) g(rho, s_i) rho^{n-1} d rho at r_q."""
    r_q = np.ascontiguousarray(r_q, dtype=float)
    nt = taus.size
    Gv = np.empty((nt, G.size))
    for i in range(nt):
        Gv[i] = g(G, s_of_tau(taus[i]))
    offs = np.linspace(-cfg.band_width, cfg.band_width, cfg.band)
    sq = np.sqrt(taus)
    out = np.empty(r_q.size)
    for c0 in range(0, r_q.size, cfg.chunk):
        rq = r_q[c0:c0 + cfg.chunk]
        B = np.maximum(rq[:, None, None] + sq[None, :, None] * offs[None, None, :], 0.0)
        Bv = np.empty_like(B)
        for i in range(nt):
            Bv[:, i, :] = np.reshape(g(B[:, i, :].ravel(), s_of_tau(taus[i])), B[:, i, :].shape)
        out[c0:c0 + cfg.chunk] = _kernels.duhamel_block(
            rq, taus, wtau, G, Gv, np.ascontiguousarray(B), np.ascontiguousarray(Bv),
            n, table.logsurf, *table.args())
    if not np.all(np.isfinite(out)):
        raise NumericalFailure("non-finite Duhamel value", diagnostics={"t_lags": taus.size})
    return out


def duhamel_Tout(g, t0, r_q, t, n, G=None, tau_min=None, cfg=QuadConfig(), r_lo=None):
    """psi(r, t) = int_{t0}^t int K(r, rho, t - s) g(rho, s) rho^{n-1} d rho ds.

    ``g`` is a vectorised callable g(rho, s).  ``G`` is the source grid; by
    default a geometric grid from ``r_lo`` (1e-3 if not given) out to where
    the kernel is negligible.  ``tau_min`` is the width of the first lag panel
    (default 1e-6 (t - t0)); choose it below the squared smallest source scale.
    """
    n = as_dimension(n).n
    if not t > t0:
        raise DomainError("query time t=%g must exceed t0=%g" % (t, t0))
    table = kernel_table(n)
    span = t - t0
    r_q = np.atleast_1d(np.asarray(r_q, dtype=float))
    if G is None:
        hi = float(np.max(r_q)) + 60.0 * math.sqrt(span) + 1.0
        G = source_grid(1e-3 if r_lo is None else r_lo, hi, cfg.g_per_decade)
    tau_min = 1e-6 * span if tau_min is None else tau_min
    taus, wtau = lag_rule(span, tau_min, cfg)
    return _apply(g, r_q, taus, wtau, lambda tau: t - tau, np.asarray(G, float), n, cfg, table)


def duhamel_on_lattice(g, t0, lattice, n, **kw):
    """duhamel_Tout at every lattice time (list of arrays)."""
    out = []
    for t, grid in zip(lattice.times, lattice.grids):
        out.append(duhamel_Tout(g, t0, grid, t, n, **kw))
    return out


# ---------------------------------------------------------------------------
# free propagation of initial data
# ---------------------------------------------------------------------------

def envelope_violation(z_star, delta, alpha, grid=None):
    """First radius where |z*| > delta / (1 + r^alpha), or None."""
    r = z_star.grid if grid is None else np.asarray(grid, dtype=float)
    bad = np.abs(z_star(r)) > delta / (1.0 + r ** alpha) * (1.0 + 1e-12)
    return float(r[np.argmax(bad)]) if np.any(bad) else None


def propagate_Zstar(z_star, t0, t, delta, alpha, grid=None, cfg=QuadConfig(g_per_decade=160, band=81)):
    """Heat flow Z*(., t) started from z* at t0, on ``grid`` (default: z*'s grid).

    The input must satisfy |z*| <= delta / (1 + r^alpha) on its grid.  The
    result carries ``envelope_C`` = max |Z*| (sqrt(t - t0 + 1) + r)^alpha in
    its metadata.
    """
    bad = envelope_violation(z_star, delta, alpha)
    if bad is not None:
        raise DomainError("initial datum exceeds delta/(1+r^alpha) at r=%g" % bad)
    if not t > t0:
        raise DomainError("propagation needs t > t0")
    n = z_star.n
    table = kernel_table(n)
    r = z_star.grid if grid is None else np.asarray(grid, dtype=float)
    tau = t - t0
    r_hi = float(r[-1]) + 60.0 * math.sqrt(tau) + 1.0
    lo = min(float(z_star.grid[1]), 1e-3)
    G = np.unique(np.concatenate([z_star.grid, source_grid(lo, r_hi, cfg.g_per_decade)]))
    vals = _apply(lambda rho, s: z_star(rho), r, np.array([tau]), np.array([1.0]),
                  lambda _: t0, G, n, cfg, table)
    C = float(np.max(np.abs(vals) * (math.sqrt(tau + 1.0) + r) ** alpha))
    return RadialField(r, vals, n, {"profile": "Zstar", "t": t, "t0": t0, "envelope_C": C})


# ---------------------------------------------------------------------------
# barrier harness
# ---------------------------------------------------------------------------

@dataclass
class BarrierReport:
    case: str
    parameters: str
    fitted_C: float
    argmax_r: float
    argmax_t: float
    lattice_signature: str
    refined_C: float = float("nan")
    drift: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        if self.fitted_C == 0.0 and self.refined_C == 0.0:
            return True
        return (math.isfinite(self.fitted_C) and math.isfinite(self.drift) and self.drift < 0.25)


def barrier_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["case", "parameters", "fitted_C", "argmax_r", "argmax_t", "lattice_signature"])
    for rep in reports:
        w.writerow([rep.case, rep.parameters, "%.10g" % rep.fitted_C, "%.6g" % rep.argmax_r,
                    "%.6g" % rep.argmax_t, rep.lattice_signature])
    return buf.getvalue()


def _fit(psi, lattice, bound, name):
    rep = lattice_sup_ratio(psi, lattice, bound, name)
    return rep.value, rep.argmax_point


def _run_fit(case, params_txt, run, lattice, cfg, bound):
    """Fit on (lattice, cfg) and on the refined pair; drift is relative."""
    psi = run(lattice, cfg)
    C, (ar, at) = _fit(psi, lattice, bound, case)
    fine = lattice.refined()
    psi_f = run(fine, cfg.refined())
    Cf, _ = _fit(psi_f, fine, bound, case)
    drift = abs(Cf - C) / C if C > 0 else (0.0 if Cf == 0 else math.inf)
    return BarrierReport(case, params_txt, C, ar, at, lattice.signature(), Cf, drift), psi


def selfsimilar_profile(kind, m=None):
    if kind == "compact":
        from .ansatz import base_cutoff
        return lambda z: base_cutoff(z)
    if kind == "power":
        if m is None:
            raise DomainError("power profile needs the exponent m")
        return lambda z: 1.0 / (1.0 + np.abs(z) ** m)
    raise DomainError("profile kind must be 'compact' or 'power'")


def barrier_check_selfsimilar(n, d, kind="compact", m=None, t0=1.0, t_hi=100.0,
                              per_decade=30, r_per_decade=20, cfg=QuadConfig()):
    """Source t^{-d-1} h(|x|/sqrt t) from t0; fit C in the matching barrier.

    compact h:  |psi| <= C t^{-d} e^{-|x|^2/(4t)}
    power h:    |psi| <= C t^{m/2-d} / (t^{m/2} + |x|^m),  m > 2d
    """
    n = as_dimension(n).n
    if not 0.0 <= d <= n / 2.0:
        raise DomainError("need 0 <= d <= n/2, got d=%g" % d)
    h = selfsimilar_profile(kind, m)
    if kind == "power" and not m > 2.0 * d:
        raise DomainError("power profile needs m > 2d")

    def g(rho, s):
        return s ** (-d - 1.0) * h(rho / math.sqrt(s))

    if kind == "compact":
        bound = lambda r, t: t ** (-d) * np.exp(-r * r / (4.0 * t))
    else:
        bound = lambda r, t: t ** (m / 2.0 - d) / (t ** (m / 2.0) + r ** m)

    def run(lat, c):
        return duhamel_on_lattice(g, t0, lat, n, cfg=c, r_lo=1e-3)

    lat = selfsimilar_lattice(t0 * 10 ** (1.0 / per_decade), t_hi, per_decade, r_per_decade)
    params_txt = "n=%d;d=%g;h=%s%s;t0=%g" % (n, d, kind, "" if m is None else ";m=%g" % m, t0)
    rep, psi = _run_fit("selfsimilar_" + kind, params_txt, run, lat, cfg, bound)
    rep.extra["sup_psi"] = max(float(np.max(np.abs(v))) for v in psi)
    return rep


_BUBBLE_CASES = {"w11": "w11*", "w1j": "w1j*", "w2j": "w2j*", "w3": "w3*"}


def _source_scale(params, t_hi):
    mus = [float(params.mu(j, t_hi)) for j in range(1, params.k + 1)]
    return min(mus)


def gaussian_exponent_fit(psi, lattice):
    """Exponent e in sup_{r >= 2 sqrt t} |psi| e^{r^2/(4t)} ~ t^{-e} (log-log fit)."""
    ts, amp = [], []
    for t, g, v in zip(lattice.times, lattice.grids, psi):
        sel = g >= 2.0 * math.sqrt(t)
        if np.any(sel):
            a = np.max(np.abs(v[sel]) * np.exp(g[sel] ** 2 / (4.0 * t)))
            if a > 0:
                ts.append(t)
                amp.append(a)
    if len(ts) < 3:
        return float("nan")
    slope = np.polyfit(np.log(ts), np.log(amp), 1)[0]
    return float(-slope)


def barrier_check_bubble(ws, which, j=2, t_span=10.0, per_decade=30, r_per_decade=20,
                         cfg=QuadConfig(), scale=1.0):
    """Feed the weight ``which`` (times ``scale``) through the Duhamel operator.

    The fitted C is the least constant with |psi| <= C (starred weight + G),
    where G is the Gaussian term of the matching conclusion:
      w11 -> w11* + t^{-e} e^{-r^2/4t}, e fitted from the far field,
      w1j -> w1j* + w2j* + t^{-n/2} e^{-r^2/4t},
      w2j -> w2j* + t^{-n/2} e^{-r^2/4t},
      w3  -> w3*.
    """
    from .norms import _canonical
    w = _canonical(which)
    if w not in _BUBBLE_CASES:
        raise DomainError("barrier sources are the unstarred weights")
    par = ws.params
    n = ws.n
    t0 = par.t0
    jj = j if w in ("w1j", "w2j") else None

    def g(rho, s):
        return scale * weight_eval(ws, w, jj, rho, s)

    t_hi = t_span * t0
    tau_min = 1e-2 * _source_scale(par, t_hi) ** 2

    def run(lat, c):
        if scale == 0.0:
            return [np.zeros(gr.size) for gr in lat.grids]
        return duhamel_on_lattice(g, t0, lat, n, cfg=c, tau_min=tau_min,
                                  r_lo=1e-3 * _source_scale(par, t_hi))

    lat = diagnostic_lattice(par, t0 * 10 ** (1.0 / per_decade), t_hi, per_decade, r_per_decade)
    psi = run(lat, cfg)
    extra = {}
    star = _BUBBLE_CASES[w]
    if w == "w11":
        e = gaussian_exponent_fit(psi, lat)
        extra["gaussian_exponent"] = e
        extra["gaussian_exponent_printed"] = 1.0 + 1.5 * ws.sigma
        gauss = gaussian_field(e)
    elif w in ("w1j", "w2j"):
        gauss = gaussian_field(n / 2.0)
    else:
        gauss = None

    def bound(r, t):
        b = weight_eval(ws, star, jj, r, t)
        if w == "w1j":
            b = b + weight_eval(ws, "w2j*", jj, r, t)
        if gauss is not None:
            b = b + gauss(r, t)
        return b

    C, (ar, at) = _fit(psi, lat, bound, w)
    fine = lat.refined()
    Cf, _ = _fit(run(fine, cfg.refined()), fine, bound, w)
    drift = abs(Cf - C) / C if C > 0 else (0.0 if Cf == 0 else math.inf)
    params_txt = "n=%d;k=%d;j=%s;a=%g;sigma=%g;beta=%g;t0=%g" % (
        n, par.k, jj, ws.a, ws.sigma, ws.beta, t0)
    return BarrierReport("bubble_" + w, params_txt, C, ar, at, lat.signature(), Cf, drift, extra)
