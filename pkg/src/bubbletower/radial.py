"""Radial grids, sampled radial fields, quadrature and the finite-volume Laplacian."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError


def sphere_area(n):
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def geometric_grid(r1=1e-4, r_max=1e4, m=2000):
    """Origin plus ``m`` geometrically spaced nodes on [r1, r_max]."""
    if not (0.0 < r1 < r_max) or m < 2:
        raise DomainError("geometric grid needs 0 < r1 < r_max and m >= 2")
    return np.concatenate([[0.0], np.geomspace(r1, r_max, m)])


def log_grid(r_lo, r_hi, per_decade):
    """Origin plus geometric nodes with a given density per decade."""
    m = max(2, int(math.ceil(per_decade * math.log10(r_hi / r_lo))) + 1)
    return geometric_grid(r_lo, r_hi, m)


def graded_grid(h, r_uniform, ratio, r_max):
    """Uniform spacing ``h`` on [0, r_uniform], then geometric growth by ``ratio``.

    The final node is placed exactly at ``r_max``.
    """
    if h <= 0 or ratio < 1.0 or r_max <= r_uniform:
        raise DomainError("graded grid needs h > 0, ratio >= 1, r_max > r_uniform")
    m = int(round(r_uniform / h))
    nodes = list(h * np.arange(m + 1))
    step = h
    r = nodes[-1]
    while r + step * ratio < r_max:
        step *= ratio
        r += step
        nodes.append(r)
    if r_max - nodes[-1] < 0.5 * step:
        nodes[-1] = r_max
    else:
        nodes.append(r_max)
    return np.asarray(nodes)


def grid_signature(grid):
    g = np.asarray(grid)
    return "M=%d,r1=%.6g,rM=%.6g,sum=%.12g" % (g.size - 1, g[1], g[-1], float(np.sum(g)))


# ---------------------------------------------------------------------------
# sampled fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialField:
    """Values of a radial function on nodes 0 = r_0 < r_1 < ... < r_M.

    ``meta`` may carry ``tail_exponent``: beyond r_M the field is continued as
    v(r_M) (r/r_M)^q; otherwise it is taken to vanish there.
    """

    grid: np.ndarray
    values: np.ndarray
    n: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if g.ndim != 1 or g.size < 2 or g[0] != 0.0:
            raise DomainError("radial grid must be 1-D with first node exactly 0")
        if np.any(np.diff(g) <= 0):
            raise DomainError("radial grid must be strictly increasing")
        if v.shape != g.shape:
            raise DomainError("values and grid have different shapes")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DomainError("non-finite value at r=%g" % g[bad])

    def _spline(self):
        sp = self.__dict__.get("_sp")
        if sp is None:
            sp = CubicSpline(self.grid, self.values, bc_type=((1, 0.0), "not-a-knot"))
            object.__setattr__(self, "_sp", sp)
        return sp

    def __call__(self, r, nu=0):
        """Spline interpolant (or its ``nu``-th derivative) at radii ``r``."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.zeros_like(r)
        inside = r <= self.grid[-1]
        out[inside] = self._spline()(r[inside], nu)
        q = self.meta.get("tail_exponent")
        if q is not None and np.any(~inside):
            rm, vm = self.grid[-1], self.values[-1]
            ro = r[~inside]
            coef = 1.0
            for k in range(nu):
                coef *= (q - k)
            out[~inside] = coef * vm * (ro / rm) ** q / ro ** nu
        return out

    def derivative(self):
        return RadialField(self.grid, self(self.grid, 1), self.n, dict(self.meta))

    def with_values(self, values, **meta):
        m = dict(self.meta)
        m.update(meta)
        return RadialField(self.grid, values, self.n, m)

    def sup(self):
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

class QuadValue(float):
    """A float that also carries the tail estimate of a radial quadrature."""

    def __new__(cls, value, tail=0.0, tail_exponent=None, tail_dominated=False):
        obj = float.__new__(cls, value)
        obj.tail = float(tail)
        obj.tail_exponent = tail_exponent
        obj.tail_dominated = bool(tail_dominated)
        return obj


def _panel_nodes(grid, order):
    x, w = np.polynomial.legendre.leggauss(order)
    a = grid[:-1, None]
    b = grid[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x[None, :]
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


def _tail(fun_end, r_end, slope_pts):
    """Power-law extrapolation of int_{r_end}^inf of an integrand ~ C r^q."""
    r1, r2 = slope_pts
    f1, f2 = fun_end(np.array([r1, r2]))
    if f2 == 0.0:
        return 0.0, None, False
    if f1 == 0.0 or np.sign(f1) != np.sign(f2):
        return 0.0, None, True
    q = math.log(abs(f2 / f1)) / math.log(r2 / r1)
    if q >= -1.0:
        return math.inf, q, True
    return -f2 * r2 / (q + 1.0), q, False


def radial_integral(func, grid, n, order=6, tail=True, weight_sphere=True):
    """|S^{n-1}| * int_0^inf func(r) r^{n-1} dr by Gauss-Legendre panels.

    ``func`` is a vectorised callable; panels are the intervals of ``grid``.
    Beyond the last node a power-law tail fitted on the last panel is added.
    """
    grid = np.asarray(grid, dtype=float)
    x, w = _panel_nodes(grid, order)
    integrand = lambda r: func(r) * r ** (n - 1)
    body = float(np.dot(w, integrand(x)))
    t, q, dominated = 0.0, None, False
    if tail:
        t, q, dominated = _tail(integrand, grid[-1], (grid[-2], grid[-1]))
        if not math.isfinite(t):
            t = 0.0
        elif abs(t) > 1e-3 * max(abs(body), 1e-300):
            dominated = True
    area = sphere_area(n) if weight_sphere else 1.0
    return QuadValue(area * (body + t), area * t, q, dominated)


def field_integral(fld, order=6, tail=True, power=1):
    """Integral over R^n of a sampled field (or a power of it) via its spline."""
    f = (lambda r: fld(r)) if power == 1 else (lambda r: fld(r) ** power)
    return radial_integral(f, fld.grid, fld.n, order=order, tail=tail)


# ---------------------------------------------------------------------------
# conservative radial Laplacian
# ---------------------------------------------------------------------------

def fv_laplacian(grid, n):
    """Node-centred finite-volume radial Laplacian on an arbitrary grid.

    Returns (lo, di, up, V) for the rows 0..M-1; node M carries a homogeneous
    Dirichlet value.  Row i reads (lo u_{i-1} + di u_i + up u_{i+1}), and the
    operator is symmetric in the inner product sum_i V_i u_i v_i.
    """
    r = np.asarray(grid, dtype=float)
    M = r.size - 1
    face = 0.5 * (r[:-1] + r[1:])
    A = face ** (n - 1)
    V = np.empty(M)
    V[0] = face[0] ** n / n
    V[1:] = (face[1:M] ** n - face[:M - 1] ** n) / n
    dr = np.diff(r)
    flux = A / dr                    # coupling across face i+1/2
    lo = np.zeros(M)
    up = np.zeros(M)
    di = -flux[:M].copy()
    di[1:] -= flux[:M - 1]
    lo[1:] = flux[:M - 1]
    up[:M - 1] = flux[:M - 1]
    # up[M-1] couples to the Dirichlet node and is dropped
    return lo / V, di / V, up / V, V


def apply_fv(lo, di, up, u):
    out = di * u
    out[1:] += lo[1:] * u[:-1]
    out[:-1] += up[:-1] * u[1:]
    return out


def laplacian_fd(grid, values, n):
    """Radial Laplacian of sampled values at every node, second order.

    Interior nodes use the three-point nonuniform stencil for u'' and
    (n-1)/r u'; the origin uses 2n (u_1 - u_0)/r_1^2 corrected to second order
    by a quadratic fit, and the last node a quadratic extrapolation.
    """
    r = np.asarray(grid, dtype=float)
    u = np.asarray(values, dtype=float)
    out = np.empty_like(u)
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    d2 = 2.0 * (hm * u[2:] - (hm + hp) * u[1:-1] + hp * u[:-2]) / (hm * hp * (hm + hp))
    d1 = (hm ** 2 * u[2:] + (hp ** 2 - hm ** 2) * u[1:-1] - hp ** 2 * u[:-2]) / (hm * hp * (hm + hp))
    out[1:-1] = d2 + (n - 1) * d1 / r[1:-1]
    # origin: u even in r, fit u = a + b r^2 + c r^4 through nodes 0,1,2
    r1, r2 = r[1], r[2]
    mat = np.array([[r1 ** 2, r1 ** 4], [r2 ** 2, r2 ** 4]])
    b, _ = np.linalg.solve(mat, [u[1] - u[0], u[2] - u[0]])
    out[0] = 2.0 * n * b
    out[-1] = 3.0 * out[-2] - 3.0 * out[-3] + out[-4] if r.size > 4 else out[-2]
    return out
