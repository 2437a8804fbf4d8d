"""Soliton profile, nonlinearity, kernel modes and energy of radial fields."""
import math
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources

import numpy as np

from .errors import DomainError
from .radial import RadialField, geometric_grid, radial_integral, sphere_area


@dataclass(frozen=True)
class Dimension:
    """Space dimension n >= 7 with the critical power p = (n+2)/(n-2)."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise DomainError("dimension must be an integer, got %r" % (self.n,))
        if self.n < 7:
            raise DomainError("dimension n=%d is below the admissible range n >= 7" % self.n)
        object.__setattr__(self, "n", int(self.n))

    @property
    def p(self):
        return Fraction(self.n + 2, self.n - 2)

    @property
    def pf(self):
        return (self.n + 2) / (self.n - 2)

    @property
    def alpha_n(self):
        # amplitude fixed by Delta U + U^p = 0
        return (self.n * (self.n - 2)) ** ((self.n - 2) / 4.0)

    @property
    def U0(self):
        return self.alpha_n


def as_dimension(dim):
    return dim if isinstance(dim, Dimension) else Dimension(int(dim))


def soliton_U(dim, r):
    dim = as_dimension(dim)
    r = np.asarray(r, dtype=float)
    return dim.alpha_n * (1.0 + r * r) ** (-(dim.n - 2) / 2.0)


def soliton_dU(dim, r):
    """U'(r)."""
    dim = as_dimension(dim)
    r = np.asarray(r, dtype=float)
    return -dim.alpha_n * (dim.n - 2) * r * (1.0 + r * r) ** (-dim.n / 2.0)


def soliton_U_minus_U0(dim, r):
    """U(r) - U(0) without cancellation for small r."""
    dim = as_dimension(dim)
    r = np.asarray(r, dtype=float)
    return dim.alpha_n * np.expm1(-(dim.n - 2) / 2.0 * np.log1p(r * r))


def rescaled_bubble(dim, mu, xi, x):
    """mu^{-(n-2)/2} U((x - xi)/mu) for points x (last axis = coordinates) or radii."""
    dim = as_dimension(dim)
    if np.any(np.asarray(mu) <= 0):
        raise DomainError("bubble scale mu must be positive")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x.ndim >= 1 and xi.ndim == 1 and x.shape[-1] == xi.shape[0] and xi.shape[0] > 1:
        dist = np.linalg.norm(x - xi, axis=-1)
    else:
        dist = np.abs(x - xi)
    return mu ** (-(dim.n - 2) / 2.0) * soliton_U(dim, dist / mu)


def kernel_Zn1(dim, r):
    """Dilation mode (n-2)/2 U + r U' in closed form; its single zero is r = 1."""
    dim = as_dimension(dim)
    r = np.asarray(r, dtype=float)
    return dim.alpha_n * (dim.n - 2) / 2.0 * (1.0 - r * r) * (1.0 + r * r) ** (-dim.n / 2.0)


def kernel_Zn1_prime(dim, r):
    dim = as_dimension(dim)
    n = dim.n
    r = np.asarray(r, dtype=float)
    q = 1.0 + r * r
    return dim.alpha_n * (n - 2) / 2.0 * (-2.0 * r * q ** (-n / 2.0)
                                          - n * r * (1.0 - r * r) * q ** (-n / 2.0 - 1.0))


def kernel_Z1_radial(dim, r):
    """Radial profile U'(r) of the translation modes."""
    return soliton_dU(dim, r)


def nonlinearity_f(dim, u):
    dim = as_dimension(dim)
    u = np.asarray(u, dtype=float)
    return np.abs(u) ** (dim.pf - 1.0) * u


def f_prime(dim, u):
    dim = as_dimension(dim)
    u = np.asarray(u, dtype=float)
    return dim.pf * np.abs(u) ** (dim.pf - 1.0)


def potential(dim, r):
    """p U(r)^{p-1}, the potential of the linearised operator."""
    dim = as_dimension(dim)
    r = np.asarray(r, dtype=float)
    return dim.pf * dim.n * (dim.n - 2) * (1.0 + r * r) ** -2.0


def default_grid():
    return geometric_grid(1e-4, 1e4, 2000)


def soliton_field(dim, grid=None, mu=1.0):
    dim = as_dimension(dim)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    return RadialField(grid, rescaled_bubble(dim, mu, 0.0, grid), dim.n, {"profile": "U", "mu": mu})


def energy(fld, order=6):
    """J(u) = int 1/2 |grad u|^2 - (n-2)/(2n) |u|^{2n/(n-2)} over R^n.

    Returns a ``QuadValue``; ``tail_dominated`` is set when the power-law tail
    beyond the last node carries more than 1e-3 of the total or does not decay.
    """
    n = fld.n
    q = 2.0 * n / (n - 2)
    dens = lambda r: 0.5 * fld(r, 1) ** 2 - (n - 2) / (2.0 * n) * np.abs(fld(r)) ** q
    return radial_integral(dens, fld.grid, n, order=order, tail=True)


def energy_closed_form(dim):
    """S_n = (1/n) int U^{2n/(n-2)} via the Beta function."""
    dim = as_dimension(dim)
    n = dim.n
    beta = math.gamma(n / 2.0) ** 2 / math.gamma(n)
    return dim.alpha_n ** (2.0 * n / (n - 2)) * sphere_area(n) * 0.5 * beta / n


def steady_residual(dim, grid):
    """Sup of the finite-difference residual U'' + (n-1)/r U' + U^p on a grid."""
    from .radial import laplacian_fd
    dim = as_dimension(dim)
    u = soliton_U(dim, grid)
    res = laplacian_fd(grid, u, dim.n) + nonlinearity_f(dim, u)
    return float(np.max(np.abs(res[1:-1])))


# ---------------------------------------------------------------------------
# golden constants table
# ---------------------------------------------------------------------------

GOLDEN_FILE = "golden_constants.txt"


def load_golden():
    """Parse the versioned constants table: {n: {"alpha_n":..., "S_n":..., "c_n":...}}."""
    text = resources.files("bubbletower").joinpath("data", GOLDEN_FILE).read_text()
    rows = {}
    cols = None
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if s.startswith("# columns:"):
                cols = s.split(":", 1)[1].split()
            continue
        parts = s.split()
        rows[int(parts[0])] = {c: float(v) for c, v in zip(cols[1:], parts[1:])}
    return rows


def golden(n, name):
    return load_golden()[int(n)][name]
