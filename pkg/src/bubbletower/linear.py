"""Linearised operator around the soliton: unstable eigenpair, interaction
constant, first-order correction profile and the inner-mode constraint."""
import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, sparse
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse.linalg import spsolve

from .errors import DomainError, NumericalFailure, StructuralFailure
from .radial import (RadialField, fv_laplacian, graded_grid, grid_signature,
                     laplacian_fd, radial_integral, sphere_area)
from .soliton import (as_dimension, default_grid, kernel_Zn1, potential,
                      soliton_U)


def apply_L0(dim, fld):
    """L0 phi = phi'' + (n-1)/r phi' + p U^{p-1} phi by second-order differences."""
    dim = as_dimension(dim)
    if fld.grid.size < 3:
        raise DomainError("need at least 3 nodes")
    vals = laplacian_fd(fld.grid, fld.values, dim.n) + potential(dim, fld.grid) * fld.values
    return fld.with_values(vals, operator="L0")


def apply_L0_mode1(dim, fld):
    """Operator of the first spherical-harmonic sector: L0 - (n-1)/r^2.

    Profiles in this sector are odd (phi ~ a r at the origin), where the
    operator vanishes to leading order; the origin value is set to 0.
    """
    dim = as_dimension(dim)
    r, u = fld.grid, fld.values
    out = np.zeros_like(u)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    d2 = 2.0 * (hm * u[2:] - (hm + hp) * u[1:-1] + hp * u[:-2]) / (hm * hp * (hm + hp))
    d1 = (hm ** 2 * u[2:] + (hp ** 2 - hm ** 2) * u[1:-1] - hp ** 2 * u[:-2]) / (hm * hp * (hm + hp))
    ri = r[1:-1]
    out[1:-1] = d2 + (dim.n - 1) * (d1 / ri - u[1:-1] / ri ** 2) + potential(dim, ri) * u[1:-1]
    out[-1] = out[-2]
    return fld.with_values(out, operator="L0_mode1")


# ---------------------------------------------------------------------------
# unstable eigenpair
# ---------------------------------------------------------------------------

def _fv_eigs(dim, radius, h, lam_lo, lam_hi):
    r = np.arange(0.0, radius + 0.5 * h, h)
    lo, di, up, V = fv_laplacian(r, dim.n)
    pot = potential(dim, r[:-1])
    # symmetric form S = V^{1/2} L V^{-1/2}
    s = np.sqrt(V)
    d = di + pot
    e = up[:-1] * s[:-1] / s[1:]
    vals = eigh_tridiagonal(d, e, select="v", select_range=(lam_lo, lam_hi),
                            eigvals_only=True)
    return r, (lo, d, up, V), np.sort(vals)


def unstable_eigenpair(dim, domain_radius=40.0, tol=5e-3, h=0.02, lam_floor=0.05,
                       lam_max=None, check_doubling=True, r_splice=5.0):
    """Positive eigenvalue of L0 and its normalised, positive eigenfunction.

    The scan window is (lam_floor, lam_max] with lam_max = 10 p.  The floor
    excludes the dilation mode, whose zero eigenvalue the discretisation moves
    by O(h^2) to either side.  Returns (lambda0, Z0, info).
    """
    dim = as_dimension(dim)
    lam_max = 10.0 * dim.pf if lam_max is None else lam_max
    r, (lo, d, up, V), vals = _fv_eigs(dim, domain_radius, h, lam_floor, lam_max)
    if vals.size == 0:
        raise StructuralFailure("no positive eigenvalue of L0 in (%g, %g]" % (lam_floor, lam_max))
    if vals.size > 1:
        raise StructuralFailure("L0 has %d eigenvalues in (%g, %g]: %s"
                                % (vals.size, lam_floor, lam_max, vals))
    lam = float(vals[0])
    near_zero = _fv_eigs(dim, domain_radius, h, -lam_floor, lam_floor)[2]
    info = {"window": (lam_floor, lam_max), "grid_h": h, "domain_radius": domain_radius,
            "near_zero_eigenvalues": near_zero.tolist()}
    if check_doubling:
        lam2 = float(_fv_eigs(dim, 2.0 * domain_radius, h, lam_floor, lam_max)[2][0])
        shift = abs(lam2 - lam) / lam
        info["doubling_shift"] = shift
        if shift > tol:
            raise NumericalFailure("eigenvalue moved by %.3g under domain doubling" % shift, info)
    # core of the eigenvector from the symmetric problem; beyond r_splice the
    # tail is re-solved as a Dirichlet problem so that it stays accurate in
    # relative terms (inward elimination is stable for the decaying mode)
    s = np.sqrt(V)
    e = up[:-1] * s[:-1] / s[1:]
    w, vec = eigh_tridiagonal(d, e, select="v", select_range=(lam_floor, lam_max))
    z = vec[:, 0] / s
    z *= np.sign(z[0])
    m = d.size
    k = min(int(np.searchsorted(r, r_splice)), m - 3)
    ab = np.zeros((3, m - k - 1))
    ab[0, 1:] = up[k + 1:-1]
    ab[1] = d[k + 1:] - lam
    ab[2, :-1] = lo[k + 2:]
    rhs = np.zeros(m - k - 1)
    rhs[0] = -lo[k + 1] * z[k]
    z[k + 1:] = solve_banded((1, 1), ab, rhs)
    if np.any(z[: m // 4] <= 0):
        raise NumericalFailure("eigenfunction changes sign in the core", info)
    norm2 = sphere_area(dim.n) * float(np.sum(V * z * z))
    z = z / math.sqrt(norm2)
    Z0 = RadialField(r, np.concatenate([z, [0.0]]), dim.n, {"profile": "Z0", "lambda0": lam})
    lz = d * z
    lz[1:] += lo[1:] * z[:-1]
    lz[:-1] += up[:-1] * z[1:]
    info["rayleigh"] = float(np.sum(V * z * lz) / np.sum(V * z * z))
    info["eig_residual"] = float(np.max(np.abs(lz - lam * z)))
    return lam, Z0, info


def tail_log_slope(Z0, r_lo=10.0, r_hi=20.0):
    """Slope of log(r^{(n-1)/2} Z0) against r on [r_lo, r_hi]; tends to -sqrt(lambda0)."""
    r = Z0.grid
    sel = (r >= r_lo) & (r <= r_hi)
    y = np.log(r[sel] ** ((Z0.n - 1) / 2.0) * Z0.values[sel])
    return float(np.polyfit(r[sel], y, 1)[0])


# ---------------------------------------------------------------------------
# interaction constant and the correction source
# ---------------------------------------------------------------------------

def interaction_constant_c(dim, grid=None, tol=1e-6, return_forms=False):
    """c = -U(0) p int U^{p-1} Z / int Z^2 = U(0)(n-2)/2 int U^p / int Z^2.

    Both forms are integrated independently; disagreement beyond ``tol``
    raises ``StructuralFailure``.
    """
    dim = as_dimension(dim)
    grid = default_grid() if grid is None else grid
    n, p, U0 = dim.n, dim.pf, dim.U0
    Z = lambda r: kernel_Zn1(dim, r)
    iZ2 = radial_integral(lambda r: Z(r) ** 2, grid, n, order=8, weight_sphere=False)
    iUZ = radial_integral(lambda r: soliton_U(dim, r) ** (p - 1) * Z(r), grid, n, order=8,
                          weight_sphere=False)
    iUp = radial_integral(lambda r: soliton_U(dim, r) ** p, grid, n, order=8,
                          weight_sphere=False)
    for q in (iZ2, iUZ, iUp):
        if q.tail_dominated:
            raise NumericalFailure("quadrature tail dominates an interaction integral")
    c1 = -U0 * p * float(iUZ) / float(iZ2)
    c2 = U0 * (n - 2) / 2.0 * float(iUp) / float(iZ2)
    rel = abs(c1 - c2) / abs(c2)
    if rel > tol or c2 <= 0:
        raise StructuralFailure("the two forms of c disagree: %.15g vs %.15g" % (c1, c2))
    if return_forms:
        return c2, {"form_pairing": c1, "form_mass": c2, "rel_diff": rel}
    return c2


def h_bar_values(dim, c, r):
    """c Z(r) + p U(0) U(r)^{p-1}."""
    dim = as_dimension(dim)
    return c * kernel_Zn1(dim, r) + dim.U0 * potential(dim, r)


def orthogonality_residual(dim, fld):
    """|int h Z rho^{n-1}| / int |h Z| rho^{n-1} for a sampled field h."""
    dim = as_dimension(dim)
    Z = lambda r: kernel_Zn1(dim, r)
    num = radial_integral(lambda r: fld(r) * Z(r), fld.grid, dim.n, order=8, weight_sphere=False)
    den = radial_integral(lambda r: np.abs(fld(r) * Z(r)), fld.grid, dim.n, order=8,
                          weight_sphere=False)
    return abs(float(num)) / float(den) if float(den) > 0 else 0.0


def phi_grid(h=1e-3, r_uniform=1.0, ratio=1.002, r_max=1e5):
    return graded_grid(h, r_uniform, ratio, r_max)


def build_h_bar(dim, c, grid=None, tol=1e-6):
    """Correction source h = c Z + p U(0) U^{p-1}, orthogonal to Z in L^2(R^n).

    Its far field is p U(0) n(n-2) rho^{-4}, faster than the Z part rho^{2-n}
    only for n < 6, so the potential part dominates the tail.
    """
    dim = as_dimension(dim)
    grid = phi_grid() if grid is None else np.asarray(grid, dtype=float)
    fld = RadialField(grid, h_bar_values(dim, c, grid), dim.n,
                      {"profile": "h_bar", "c": c, "tail_exponent": -4.0})
    res = orthogonality_residual(dim, fld)
    if res > tol:
        raise StructuralFailure("h_bar is not orthogonal to Z: relative residual %.3g" % res)
    return fld.with_values(fld.values, orthogonality=res)


def solve_phi_bar(dim, h_bar, grid=None, solvability_tol=1e-6):
    """Solve phi'' + (n-1)/rho phi' + p U^{p-1} phi = -h with phi'(0) = 0.

    Finite volumes on a graded grid, Robin condition rho phi' + 2 phi = 0 at
    the last node (encoding phi ~ A rho^{-2}), and the dilation-mode component
    fixed by int phi Z U^{p-1} rho^{n-1} = 0 through a bordered system.
    """
    dim = as_dimension(dim)
    n = dim.n
    res = orthogonality_residual(dim, h_bar)
    if res > solvability_tol:
        raise DomainError("source violates the solvability condition (residual %.3g)" % res)
    r = phi_grid() if grid is None else np.asarray(grid, dtype=float)
    h = h_bar(r)
    M = r.size - 1
    face = 0.5 * (r[:-1] + r[1:])
    A = face ** (n - 1) / np.diff(r)
    V = np.empty(M + 1)
    V[0] = face[0] ** n / n
    V[1:M] = (face[1:] ** n - face[:-1] ** n) / n
    V[M] = (r[M] ** n - face[-1] ** n) / n
    diag = np.zeros(M + 1)
    diag[:M] -= A
    diag[1:] -= A
    diag[M] -= 2.0 * r[M] ** (n - 2)              # Robin flux r^{n-1} * (-2 phi / r)
    diag += V * potential(dim, r)
    Z = kernel_Zn1(dim, r)
    row = V * Z * potential(dim, r)
    row /= float(np.sum(row * Z))
    # rows divided by the cell volumes: the raw volumes span ~40 decades
    K = sparse.diags([A / V[1:], diag / V, A / V[:-1]], [-1, 0, 1])
    big = sparse.bmat([[K, sparse.csc_matrix(Z[:, None])],
                       [sparse.csr_matrix(row[None, :]), None]], format="csc")
    sol = spsolve(big, np.concatenate([-h, [0.0]]))
    if not np.all(np.isfinite(sol)):
        raise NumericalFailure("correction BVP produced non-finite values")
    phi, kappa = sol[:M + 1], sol[M + 1]
    # the multiplier absorbs the O(h^2) discrete solvability defect
    hz = float(np.sum(V * np.abs(h * Z)))
    rel = abs(kappa) * float(np.sum(V * Z * Z)) / hz if hz > 0 else abs(kappa)
    info = {"multiplier": float(kappa), "multiplier_rel": rel}
    if info["multiplier_rel"] > 1e-4:
        raise NumericalFailure("bordered solve needed a large multiplier", info)
    return RadialField(r, phi, n, {"profile": "phi_bar", "tail_exponent": -2.0, **info})


def phi_bar_shooting(dim, h_fun, r_max=1e3, rtol=1e-12):
    """Independent route: integrate the regular solution outward in log(rho).

    Starts from the origin series phi = -h(0) rho^2 / (2n), then removes the
    dilation-mode component with the same normalisation as ``solve_phi_bar``.
    Returns a callable evaluating phi on [0, r_max].
    """
    dim = as_dimension(dim)
    n = dim.n
    s0 = math.log(1e-4)
    h0 = float(h_fun(np.array([0.0]))[0])
    V0 = float(potential(dim, 0.0))

    def regular(coef, src):
        # coef multiplies the homogeneous start Z, src switches the source on
        r0 = math.exp(s0)
        z0 = float(kernel_Zn1(dim, 0.0))
        phi0 = coef * z0 * (1.0 - V0 * r0 ** 2 / (2 * n)) - src * h0 * r0 ** 2 / (2 * n)
        dphi0 = coef * z0 * (-V0 * r0 / n) - src * h0 * r0 / n

        def rhs(s, y):
            r = math.exp(s)
            hv = float(h_fun(np.array([r]))[0]) if src else 0.0
            return [y[1], -(n - 2) * y[1] - r * r * (float(potential(dim, r)) * y[0] + hv)]

        return integrate.solve_ivp(rhs, (s0, math.log(r_max)), [phi0, r0 * dphi0],
                                   method="DOP853", rtol=rtol, atol=1e-300, dense_output=True)

    part = regular(0.0, 1)
    sgrid = np.linspace(s0, math.log(r_max), 20001)
    rr = np.exp(sgrid)
    ph = part.sol(sgrid)[0]
    Z = kernel_Zn1(dim, rr)
    w = Z * potential(dim, rr) * rr ** n       # extra r from d rho = r ds
    a = -integrate.simpson(ph * w, x=sgrid) / integrate.simpson(Z * w, x=sgrid)

    def phi(r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        small = r < math.exp(s0)
        out[small] = -h0 * r[small] ** 2 / (2 * n) + a * kernel_Zn1(dim, r[small])
        big = ~small
        if np.any(big):
            out[big] = part.sol(np.log(r[big]))[0] + a * kernel_Zn1(dim, r[big])
        return out

    return phi


def tail_slope(fld, r_lo, r_hi):
    """Least-squares slope of log|f| against log r on [r_lo, r_hi]."""
    r = fld.grid
    sel = (r >= r_lo) & (r <= r_hi)
    return float(np.polyfit(np.log(r[sel]), np.log(np.abs(fld.values[sel])), 1)[0])


# ---------------------------------------------------------------------------
# inner-mode constraint
# ---------------------------------------------------------------------------

def _check_tail(vals):
    vals = np.abs(np.asarray(vals, dtype=float))
    peak = float(np.max(vals)) if vals.size else 0.0
    if peak == 0.0:
        return
    if not np.all(np.isfinite(vals)) or vals[-1] > 1e-8 * peak:
        raise DomainError("pairing integrand does not decay: divergent tail")


def inner_constraint_ell(q, lambda0, tau0, tau_samples=None):
    """p(tau0) = int_{tau0}^inf e^{lambda0 (tau0 - s)} q(s) ds.

    ``q`` is either a callable or, when ``tau_samples`` is given, the sampled
    values of q on that increasing grid (trapezoid rule).  The resulting p is
    the bounded solution of dp/dtau - lambda0 p = -q.
    """
    if tau_samples is not None:
        s = np.asarray(tau_samples, dtype=float)
        v = np.asarray(q, dtype=float)
        sel = s >= tau0
        s, v = s[sel], v[sel]
        if s.size < 2:
            raise DomainError("need samples beyond tau0")
        integrand = np.exp(lambda0 * (tau0 - s)) * v
        _check_tail(integrand)
        return float(integrate.trapezoid(integrand, s))
    probe = tau0 + np.concatenate([[0.0], 2.0 ** np.arange(-4, 9)])
    try:
        qv = np.array([q(x) for x in probe], dtype=float)
    except OverflowError:
        raise DomainError("pairing integrand does not decay: divergent tail") from None
    _check_tail(np.exp(lambda0 * (tau0 - probe)) * qv)
    val, _ = integrate.quad(lambda s: math.exp(lambda0 * (tau0 - s)) * q(s), tau0, np.inf,
                            limit=400, epsabs=0.0, epsrel=1e-12)
    return float(val)


def p_profile(q, lambda0, taus):
    """p(tau) on an array of times (see ``inner_constraint_ell``)."""
    return np.array([inner_constraint_ell(q, lambda0, t) for t in np.atleast_1d(taus)])


def constraint_pairing_printed(q, lambda0, tau0):
    """The pairing int_{tau0}^inf e^{-lambda0 s} q(s) ds, equal to e^{-lambda0 tau0} p(tau0)."""
    return math.exp(-lambda0 * tau0) * inner_constraint_ell(q, lambda0, tau0)


# ---------------------------------------------------------------------------
# spectral bundle and its JSON cache
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralData:
    n: int
    lambda0: float
    Z0: RadialField
    c_interaction: float
    h_bar: RadialField
    phi_bar: RadialField
    info: dict = field(default_factory=dict)

    def to_json(self):
        def fld(f):
            return {"grid": [float("%.12g" % x) for x in f.grid],
                    "values": [float("%.12g" % x) for x in f.values],
                    "meta": {k: v for k, v in f.meta.items()
                             if isinstance(v, (int, float, str))}}
        doc = {"n": self.n, "lambda0": float("%.12g" % self.lambda0),
               "c_interaction": float("%.12g" % self.c_interaction),
               "Z0": fld(self.Z0), "h_bar": fld(self.h_bar), "phi_bar": fld(self.phi_bar),
               "info": _jsonable(self.info)}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        n = doc["n"]

        def fld(d):
            # 12-digit rounding can merge neighbouring nodes of very fine grids;
            # keep the first of any duplicate
            g = np.asarray(d["grid"])
            keep = np.concatenate([[True], np.diff(g) > 0])
            return RadialField(g[keep], np.asarray(d["values"])[keep], n, d["meta"])

        return cls(n, doc["lambda0"], fld(doc["Z0"]), doc["c_interaction"], fld(doc["h_bar"]),
                   fld(doc["phi_bar"]), doc.get("info", {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float("%.12g" % obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


DEFAULT_SPECTRAL = {"eig_radius": 40.0, "eig_h": 0.02, "phi_h": 1e-3, "phi_uniform": 1.0, "phi_ratio": 1.002,
                    "phi_rmax": 1e5, "c_tol": 1e-6, "orth_tol": 1e-6}


def spectral_cache_key(n, settings):
    grid = grid_signature(phi_grid(settings["phi_h"], settings["phi_uniform"], settings["phi_ratio"],
                                   settings["phi_rmax"]))
    blob = json.dumps({"n": n, "grid": grid, "settings": settings}, sort_keys=True)
    return "spectral_n%d_%s.json" % (n, hashlib.sha1(blob.encode()).hexdigest()[:12])


def build_spectral_data(dim, cache_dir=None, **overrides):
    """Assemble lambda0, Z0, c, h_bar and phi_bar; optionally cached as JSON."""
    dim = as_dimension(dim)
    settings = dict(DEFAULT_SPECTRAL)
    settings.update(overrides)
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, spectral_cache_key(dim.n, settings))
        if os.path.exists(path):
            with open(path) as fh:
                return SpectralData.from_json(fh.read())
    lam, Z0, einfo = unstable_eigenpair(dim, settings["eig_radius"], h=settings["eig_h"])
    c, cinfo = interaction_constant_c(dim, tol=settings["c_tol"], return_forms=True)
    grid = phi_grid(settings["phi_h"], settings["phi_uniform"], settings["phi_ratio"], settings["phi_rmax"])
    hb = build_h_bar(dim, c, grid, tol=settings["orth_tol"])
    # the correction must satisfy L0 phi = +h_bar, i.e. the solver's source is -h_bar
    phib = solve_phi_bar(dim, hb.with_values(-hb.values), grid)
    data = SpectralData(dim.n, lam, Z0, c, hb, phib,
                        {"eigen": einfo, "c": cinfo, "settings": settings})
    if path is not None:
        with open(path, "w") as fh:
            fh.write(data.to_json())
    return data
