"""Space-time weights around the tower, the weighted sup-norms built from them,
and the inner norms used near each bubble.

All evaluators are radial: the centres sit at the origin unless ``xi`` is
passed, and x enters only through |x - xi_j|.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .ansatz import ansatz_grid, base_cutoff, mu_bar
from .errors import DomainError

# canonical names; the Greek spellings are accepted as aliases
WEIGHT_NAMES = ("w11", "w11*", "w1j", "w1j*", "w2j", "w2j*", "w3", "w3*")
_ALIASES = {"ω11": "w11", "ω11*": "w11*", "ω1j": "w1j", "ω1j*": "w1j*",
            "ω2j": "w2j", "ω2j*": "w2j*", "ω3": "w3", "ω3*": "w3*"}

TINY = 1e-300


@dataclass
class WeightSpec:
    """Exponents of the weight family together with the tower parameters.

    Ranges: 0 < a < n-2, sigma > 0, 2 < beta < n.
    """

    a: float
    sigma: float
    beta: float
    params: object

    def __post_init__(self):
        n = self.params.dim.n
        if not 0.0 < self.a < n - 2:
            raise DomainError("weight exponent a=%g outside (0, %d)" % (self.a, n - 2))
        if not self.sigma > 0.0:
            raise DomainError("sigma must be positive, got %g" % self.sigma)
        if not 2.0 < self.beta < n:
            raise DomainError("beta=%g outside (2, %d)" % (self.beta, n))

    @property
    def n(self):
        return self.params.dim.n

    @property
    def k(self):
        return self.params.k


def _canonical(which):
    w = _ALIASES.get(which, which)
    if w not in WEIGHT_NAMES:
        raise DomainError("unknown weight %r" % (which,))
    return w


def _dist(x, xi):
    x = np.asarray(x, dtype=float)
    if xi is None:
        return np.abs(x)
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1 and xi.size > 1:
        return np.linalg.norm(x - xi, axis=-1)
    return np.abs(x - xi)


def weight_eval(spec, which, j, x, t, xi=None):
    """Pointwise value of one weight at distances (or points) ``x`` and time ``t``.

    ``j`` is ignored for w11 and w3; for the j-families it must lie in 2..k.
    ``xi`` is the relevant centre (origin by default).
    """
    w = _canonical(which)
    par = spec.params
    n, a, sig = spec.n, spec.a, spec.sigma
    t = float(t)
    d = _dist(x, xi)
    if w in ("w11", "w11*"):
        # the starred version trades two powers of decay, not of time
        e = a if w.endswith("*") else 2.0 + a
        return t ** (-1.0 - sig) * (1.0 + d) ** (-e) * base_cutoff(d / math.sqrt(t))
    if w == "w3":
        return (math.sqrt(t) + d) ** (-spec.beta)
    if w == "w3*":
        return (math.sqrt(t) + d) ** (-(spec.beta - 2.0))
    if not 2 <= j <= spec.k:
        raise DomainError("weight %s needs 2 <= j <= k, got j=%r" % (w, j))
    mu = float(par.mu(j, t))
    mb = mu_bar(par, j, t)
    lam = float(par.lam(j, t))
    if w == "w1j":
        return (t ** (-sig) * mu ** (-(n + 2) / 2.0) * lam ** ((n - 2) / 2.0)
                * (1.0 + d / mu) ** (-(2.0 + a)) * base_cutoff(d / mb))
    if w == "w1j*":
        return (t ** (-sig) * mu ** (-(n - 2) / 2.0) * lam ** ((n - 2) / 2.0)
                * (1.0 + d / mu) ** (-a) * base_cutoff(d / mb))
    if w == "w2j":
        return (t ** (-sig) * mb ** (-(n + 2) / 2.0) * lam ** ((n - 2) / 4.0)
                * (1.0 + d / mb) ** (-float(n)))
    # w2j*
    return (t ** (-sig) * mb ** (-(n - 2) / 2.0) * lam ** ((n - 2) / 4.0)
            * (1.0 + d / mb) ** (-(n - 2.0)))


def weight_sum(spec, r, t, starred=False):
    """w11 + w3 + sum_{j=2}^k (w1j + w2j), or the starred counterpart."""
    s = "*" if starred else ""
    tot = weight_eval(spec, "w11" + s, None, r, t) + weight_eval(spec, "w3" + s, None, r, t)
    for j in range(2, spec.k + 1):
        tot = tot + weight_eval(spec, "w1j" + s, j, r, t) + weight_eval(spec, "w2j" + s, j, r, t)
    return tot


def gaussian_field(exponent, t_shift=0.0):
    """(r, t) -> s^{-exponent} exp(-r^2 / (4 s)) with s = t - t_shift."""
    def g(r, t):
        s = float(t) - t_shift
        return s ** (-exponent) * np.exp(-np.asarray(r, dtype=float) ** 2 / (4.0 * s))
    return g


# ---------------------------------------------------------------------------
# diagnostic lattice
# ---------------------------------------------------------------------------

@dataclass
class Lattice:
    """Log-spaced times, each carrying its own radial grid."""

    times: np.ndarray
    grids: List[np.ndarray]
    recipe: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def signature(self):
        hsh = hashlib.sha1()
        hsh.update(np.ascontiguousarray(self.times).tobytes())
        for g in self.grids:
            hsh.update(np.ascontiguousarray(g).tobytes())
        npts = sum(g.size for g in self.grids)
        return "nt=%d,npts=%d,t=[%.6g,%.6g],sha1=%s" % (
            len(self.times), npts, self.times[0], self.times[-1], hsh.hexdigest()[:12])

    def sample(self, h):
        """Evaluate a callable h(r, t) on the lattice (list of arrays)."""
        return [np.asarray(h(g, t), dtype=float) * np.ones_like(g) for t, g in zip(self.times, self.grids)]

    def refined(self, factor=2, times=False):
        """Same recipe with ``factor`` times the radial density (and time density if asked)."""
        rec = dict(self.recipe)
        if not rec:
            raise DomainError("lattice was not built by a recipe; cannot refine")
        if times:
            rec["per_decade"] = rec["per_decade"] * factor
        rec["r_per_decade"] = rec["r_per_decade"] * factor
        builder = rec.pop("builder")
        return builder(**rec)


def _time_nodes(t_lo, t_hi, per_decade):
    if not 0 < t_lo < t_hi:
        raise DomainError("need 0 < t_lo < t_hi")
    m = max(2, int(math.ceil(per_decade * math.log10(t_hi / t_lo))) + 1)
    return np.geomspace(t_lo, t_hi, m)


def diagnostic_lattice(params, t_lo, t_hi, per_decade=30, r_per_decade=40, r_factor=10.0):
    """Times at ``per_decade`` points per decade crossed with the tower grid.

    The radial grid at each time is the bubble-graded ansatz grid extended
    geometrically to ``r_factor`` sqrt(t).
    """
    times = _time_nodes(t_lo, t_hi, per_decade)
    grids = []
    for t in times:
        g = ansatz_grid(params, t, per_decade=r_per_decade, far_points=2 * r_per_decade)
        hi = r_factor * math.sqrt(t)
        if hi > g[-1]:
            m = max(2, int(math.ceil(r_per_decade * math.log10(hi / g[-1]))) + 1)
            g = np.concatenate([g, np.geomspace(g[-1], hi, m)[1:]])
        grids.append(g)
    recipe = dict(builder=lambda **kw: diagnostic_lattice(params, **kw), t_lo=t_lo, t_hi=t_hi,
                  per_decade=per_decade, r_per_decade=r_per_decade, r_factor=r_factor)
    return Lattice(times, grids, recipe)


def selfsimilar_lattice(t_lo, t_hi, per_decade=30, r_per_decade=40, r_lo=1e-2, r_factor=10.0):
    """Lattice for sources without bubbles: r from r_lo to r_factor sqrt(t)."""
    times = _time_nodes(t_lo, t_hi, per_decade)
    grids = []
    for t in times:
        hi = r_factor * math.sqrt(t)
        m = max(2, int(math.ceil(r_per_decade * math.log10(hi / r_lo))) + 1)
        grids.append(np.concatenate([[0.0], np.geomspace(r_lo, hi, m)]))
    recipe = dict(builder=lambda **kw: selfsimilar_lattice(**kw), t_lo=t_lo, t_hi=t_hi,
                  per_decade=per_decade, r_per_decade=r_per_decade, r_lo=r_lo, r_factor=r_factor)
    return Lattice(times, grids, recipe)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

@dataclass
class NormReport:
    norm_name: str
    value: float
    argmax_point: tuple
    lattice_signature: str
    excluded: int = 0

    def to_json(self):
        return json.dumps({"norm_name": self.norm_name, "value": self.value,
                           "argmax_point": list(self.argmax_point),
                           "lattice_signature": self.lattice_signature,
                           "excluded_samples": self.excluded})


def lattice_sup_ratio(values, lattice, denom, name):
    """sup |values| / denom over the lattice; samples with denom underflow are skipped."""
    best, arg, excluded = 0.0, (float("nan"), float("nan")), 0
    for i, (t, g) in enumerate(zip(lattice.times, lattice.grids)):
        h = np.abs(np.asarray(values[i], dtype=float))
        w = np.asarray(denom(g, t), dtype=float)
        ok = np.isfinite(w) & (w > TINY)
        excluded += int(np.count_nonzero(~ok))
        if not np.any(ok):
            continue
        q = np.zeros_like(h)
        q[ok] = h[ok] / w[ok]
        m = int(np.argmax(q))
        if q[m] > best:
            best, arg = float(q[m]), (float(g[m]), float(t))
    return NormReport(name, best, arg, lattice.signature(), excluded)


def norm_a_sigma_beta(h, lattice, spec, starred=False, extra: Optional[Sequence[Callable]] = None):
    """Least M with |h| <= M * (sum of weights) on the lattice.

    ``h`` is a callable h(r, t) or a list of per-time arrays matching the
    lattice.  ``extra`` adds comparison fields (r, t) -> array to the weight
    sum, as needed for conclusions that carry additive Gaussian terms.
    """
    vals = lattice.sample(h) if callable(h) else h
    if len(vals) != len(lattice):
        raise DomainError("sampled field does not match the lattice")
    extra = list(extra or [])

    def denom(r, t):
        w = weight_sum(spec, r, t, starred)
        for e in extra:
            w = w + e(r, t)
        return w

    name = "norm_*a_sigma_beta" if starred else "norm_a_sigma_beta"
    return lattice_sup_ratio(vals, lattice, denom, name)


def inner_norms(values, y, t, a, nu, mu_fn, R_fn, kind="h", n=None):
    """Inner norms on D_2R = {|y| <= 2 R(t)} in the bubble variable y.

    kind="h":   sup |h| (1+|y|)^{2+a} / mu^nu
    kind="phi": sup |phi| (1+|y|)^{n+1} / (R^{n+1-a} mu^nu)

    ``values`` has shape (len(t), len(y)); ``y`` may be shared or of the same
    shape.  Any sample with |y| > 2R(t) raises DomainError.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    v = np.atleast_2d(np.asarray(values, dtype=float))
    yy = np.abs(np.broadcast_to(np.asarray(y, dtype=float), v.shape))
    if v.shape[0] != t.size:
        raise DomainError("values need one row per time")
    mu = np.array([float(mu_fn(s)) for s in t])[:, None]
    R = np.array([float(R_fn(s)) for s in t])[:, None]
    outside = yy > 2.0 * R * (1.0 + 1e-12)
    if np.any(outside):
        i, l = np.argwhere(outside)[0]
        raise DomainError("sample |y|=%g at t=%g lies outside D_2R (2R=%g)"
                          % (yy[i, l], t[i], 2.0 * R[i, 0]))
    if kind == "h":
        q = np.abs(v) * (1.0 + yy) ** (2.0 + a) / mu ** nu
    elif kind == "phi":
        if n is None:
            raise DomainError("the phi inner norm needs the dimension n")
        q = np.abs(v) * (1.0 + yy) ** (n + 1) / (R ** (n + 1 - a) * mu ** nu)
    else:
        raise DomainError("kind must be 'h' or 'phi'")
    return float(np.max(q)) if q.size else 0.0
