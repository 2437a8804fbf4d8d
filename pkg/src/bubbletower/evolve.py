"""Radial integration of u_t = Laplacian u + |u|^{p-1} u, scale extraction,
rate fitting, and bisection on the unstable directions.

The spatial operator is the finite-volume Laplacian of ``radial.fv_laplacian``
(regular at the origin, Dirichlet at R_max); time stepping is IMEX-theta with
implicit diffusion and explicit reaction, through ``_kernels.imex_advance``.
"""
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import _kernels
from .ansatz import assemble_u_star, perturbation_basis
from .errors import DomainError, NumericalFailure
from .radial import fv_laplacian, graded_grid
from .soliton import as_dimension, energy_closed_form, soliton_U

TERMINATIONS = ("window-complete", "blowup", "collapse", "step-limit")


@dataclass
class SolverConfig:
    """Mesh, stepper and stopping rules.

    The mesh is uniform with spacing ``h`` on [0, r_uniform] and grows
    geometrically by ``ratio`` up to ``r_max``.
    """

    h: float
    r_uniform: float
    ratio: float = 1.03
    r_max: float = 100.0
    theta: float = 1.0
    cfl: float = 0.1
    dt_max: float = math.inf
    blowup_factor: float = 1e3
    collapse_level: float = 0.5
    max_steps: int = 10 ** 6
    react: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError("theta must lie in [0, 1]")
        if not 0.0 < self.cfl <= 0.1:
            raise DomainError("reaction CFL indicator must lie in (0, 0.1]")

    def grid(self):
        return graded_grid(self.h, self.r_uniform, self.ratio, self.r_max)

    def refined(self, factor=2):
        """Spacing / factor everywhere: h / factor and ratio^(1/factor)."""
        d = asdict(self)
        d["h"] = self.h / factor
        d["ratio"] = self.ratio ** (1.0 / factor)
        return SolverConfig(**d)

    @classmethod
    def for_tower(cls, params, t_end, n_uniform=200, ratio=1.03, **kw):
        """Uniform patch of ``n_uniform`` nodes on [0, 10 mu_k(t0)], R_max = 10 sqrt(t_end)."""
        mk = float(params.mu(params.k, params.t0))
        r_u = 10.0 * mk
        return cls(h=r_u / n_uniform, r_uniform=r_u, ratio=ratio,
                   r_max=max(10.0 * math.sqrt(t_end), 10.0), **kw)


@dataclass
class State:
    t: float
    grid: np.ndarray
    u: np.ndarray
    steps: int = 0


class Operator:
    """Finite-volume radial Laplacian on a fixed grid, cached for stepping."""

    def __init__(self, grid, n):
        self.grid = np.asarray(grid, dtype=float)
        self.n = as_dimension(n).n
        self.lo, self.di, self.up, self.V = fv_laplacian(self.grid, self.n)

    def apply(self, u):
        """Discrete Laplacian at the free nodes (the last node is Dirichlet)."""
        out = self.di * u[:-1]
        out[1:] += self.lo[1:] * u[:-2]
        out[:-1] += self.up[:-1] * u[1:-1]
        return out


def _advance(op, state, p, cfg, t_stop, max_steps, cfl=None, u_cap=1e300):
    u_free = np.ascontiguousarray(state.u[:-1])
    u_new, t, steps, dt, status = _kernels.imex_advance(
        u_free, op.lo, op.di, op.up, p, cfg.theta, cfg.dt_max,
        cfg.cfl if cfl is None else cfl, state.t, t_stop, max_steps, cfg.react, u_cap)
    u = np.append(u_new, 0.0)
    return State(t, state.grid, u, state.steps + steps), steps, dt, status


def step(state, dt, n, cfg=None, op=None):
    """One IMEX step of exactly ``dt``.

    Raises NumericalFailure (with the last good state in ``diagnostics``)
    when the result is not finite.
    """
    if not np.all(np.isfinite(state.u)):
        raise DomainError("state is not finite")
    dim = as_dimension(n)
    cfg = cfg or SolverConfig(h=1.0, r_uniform=1.0)
    op = op or Operator(state.grid, dim.n)
    new, _, _, status = _advance(op, state, dim.pf, cfg, state.t + dt, 1, cfl=math.inf)
    if status == 2 or not np.all(np.isfinite(new.u)):
        raise NumericalFailure("non-finite value after one step",
                               diagnostics={"last_good": state})
    return new


def discrete_energy(op, u, n):
    """Finite-volume energy: sum over faces of A (du)^2/(2 dr) minus the potential part.

    This is the Lyapunov functional of the semi-discrete flow.
    """
    r = op.grid
    face = 0.5 * (r[:-1] + r[1:])
    grad = 0.5 * np.sum(face ** (n - 1) * np.diff(u) ** 2 / np.diff(r))
    q = 2.0 * n / (n - 2)
    pot = (n - 2) / (2.0 * n) * np.sum(op.V * np.abs(u[:-1]) ** q)
    from .radial import sphere_area
    return sphere_area(n) * (grad - pot)


# ---------------------------------------------------------------------------
# scale extraction
# ---------------------------------------------------------------------------

@dataclass
class MuEstimate:
    mu: List[float]
    reliable: List[bool]


def _fit_scale(r, v, n, alpha, m_lo, m_hi):
    """Scale mu of alpha mu^{-(n-2)/2} (1 + r^2/mu^2)^{-(n-2)/2} fitted to v > 0 in log space."""
    lv = np.log(v)
    q = (n - 2) / 2.0

    def cost(x):
        m = math.exp(x)
        model = math.log(alpha) - q * x - q * np.log1p((r / m) ** 2)
        return float(np.sum((lv - model) ** 2))

    res = minimize_scalar(cost, bounds=(math.log(m_lo), math.log(m_hi)), method="bounded",
                          options={"xatol": 1e-10})
    return math.exp(res.x)


def extract_mu(state, n, k, prev=None, t=None):
    """Scale estimates mu_1..mu_k from a radial state.

    mu_k comes from the amplitude at the origin, (alpha_n / |u(0)|)^{2/(n-2)}.
    For j < k the single-bubble profile is fitted (log least squares) to the
    values of sign (-1)^{j-1} on the matching annulus
    [2 sqrt(mu_j mu_{j+1}), sqrt(mu_{j-1} mu_j) / 2], whose outer edge is
    0.3 sqrt(t) for j = 1; without ``prev`` a first pass on the wide annulus
    [10 mu_{j+1}, outer edge] seeds a second pass.  Estimates are flagged
    reliable when neighbouring scales are separated by a factor 10.
    """
    dim = as_dimension(n)
    n = dim.n
    r, u = state.grid, state.u
    a = dim.alpha_n
    mu_k = (a / abs(u[0])) ** (2.0 / (n - 2)) if u[0] != 0 else math.inf
    out = [math.nan] * k
    out[k - 1] = mu_k
    t = state.t if t is None else t
    for j in range(k - 1, 0, -1):
        inner = out[j]
        s = (-1.0) ** (j - 1)
        seed = prev[j - 1] if prev is not None and math.isfinite(prev[j - 1]) else None
        up = prev[j - 2] if (prev is not None and j >= 2 and math.isfinite(prev[j - 2])) else None

        def window(m):
            lo = 2.0 * math.sqrt(inner * m) if m else 10.0 * inner
            hi = 0.5 * math.sqrt(m * up) if (j >= 2 and m and up) else 0.3 * math.sqrt(t)
            return lo, hi

        for _ in range(2):
            lo, hi = window(seed)
            sel = (r >= lo) & (r <= hi) & (s * u > 0)
            if not math.isfinite(inner) or np.count_nonzero(sel) < 3:
                seed = None
                break
            seed = _fit_scale(r[sel], s * u[sel], n, a, lo * 1e-3, hi * 1e3)
        if seed is not None:
            out[j - 1] = seed
    rel = []
    for j in range(k):
        good = math.isfinite(out[j])
        if good and j + 1 < k:
            good = math.isfinite(out[j + 1]) and out[j + 1] / out[j] < 0.1
        if good and j > 0:
            good = math.isfinite(out[j - 1]) and out[j] / out[j - 1] < 0.1
        rel.append(bool(good))
    return MuEstimate(out, rel)


def fit_inner_profile(state, n, mu_guess, span=2.0):
    """Least-squares fit of s m^{-(n-2)/2} U(r/m) + b on r <= span * mu_guess.

    Returns (m, b, rms).
    """
    dim = as_dimension(n)
    r, u = state.grid, state.u
    sel = r <= span * mu_guess
    if np.count_nonzero(sel) < 4:
        raise DomainError("inner profile window holds fewer than 4 nodes")
    rr, uu = r[sel], u[sel]
    s = 1.0 if uu[0] > 0 else -1.0
    scale = abs(uu[0])

    def resid(x):
        m = math.exp(x[0])
        return (s * m ** (-(dim.n - 2) / 2.0) * soliton_U(dim, rr / m) + x[1] * scale - uu) / scale

    sol = least_squares(resid, [math.log(mu_guess), 0.0], x_scale=[1.0, 1.0])
    m = math.exp(sol.x[0])
    return m, sol.x[1] * scale, float(np.sqrt(np.mean(sol.fun ** 2)))


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

@dataclass
class EvolveRun:
    config: SolverConfig
    descriptor: dict
    t: List[float] = field(default_factory=list)
    u0: List[float] = field(default_factory=list)
    mu_hat: List[List[float]] = field(default_factory=list)
    reliable: List[List[bool]] = field(default_factory=list)
    J: List[float] = field(default_factory=list)
    sup_u: List[float] = field(default_factory=list)
    dt: List[float] = field(default_factory=list)
    outer_value: List[float] = field(default_factory=list)
    termination: str = "window-complete"
    final_state: Optional[State] = None

    def record(self, st, est, J, dt, outer):
        self.t.append(st.t)
        self.u0.append(float(st.u[0]))
        self.mu_hat.append(list(est.mu))
        self.reliable.append(list(est.reliable))
        self.J.append(float(J))
        self.sup_u.append(float(np.max(np.abs(st.u))))
        self.dt.append(float(dt))
        self.outer_value.append(float(outer))

    def to_csv(self):
        k = len(self.mu_hat[0]) if self.mu_hat else 0
        buf = io.StringIO()
        buf.write(",".join(["t", "u0"] + ["mu_hat_%d" % (j + 1) for j in range(k)]
                           + ["J", "sup_u", "dt"]) + "\n")
        for i in range(len(self.t)):
            row = [self.t[i], self.u0[i]] + self.mu_hat[i] + [self.J[i], self.sup_u[i], self.dt[i]]
            buf.write(",".join("%.12g" % v for v in row) + "\n")
        return buf.getvalue()

    def summary(self, **extra):
        doc = {"classification": self.termination, "samples": len(self.t),
               "t_first": self.t[0] if self.t else None, "t_last": self.t[-1] if self.t else None}
        doc.update(self.descriptor)
        doc.update(extra)
        return json.dumps(doc, sort_keys=True, indent=1, default=float)

    def energy_nonincreasing(self, tol=None):
        """True when J never rises by more than ``tol`` (default max dt * |J|)."""
        J = np.asarray(self.J)
        if J.size < 2:
            return True
        tol = tol if tol is not None else max(self.dt) * max(1.0, float(np.max(np.abs(J))))
        return bool(np.all(np.diff(J) <= tol))


def _inner_amplitude_ratio(u0, n, k, mu_k):
    # signed: 1 on the tower, <1 when the inner bubble collapses, >1 when it concentrates
    dim = as_dimension(n)
    return (-1.0) ** (k - 1) * u0 * mu_k ** ((n - 2) / 2.0) / dim.alpha_n


def run(u_init, grid, t0, t_end, n, cfg, k=1, mu_ref=None, n_out=200, descriptor=None,
        outer_radius=None, classify=True):
    """Integrate from (t0, u_init) to t_end, recording n_out geometric samples.

    ``mu_ref(t)`` is the expected innermost scale used to classify: the run
    stops as ``blowup`` when sup|u| exceeds blowup_factor U(0) mu_ref^{-(n-2)/2}
    with log sup|u| accelerating, and as ``collapse`` when the signed inner
    amplitude ratio falls below ``collapse_level``.  Without ``mu_ref`` the
    scale is frozen at its initial value.  ``classify=False`` only stops on
    non-finite values or the step budget.
    """
    dim = as_dimension(n)
    n = dim.n
    grid = np.asarray(grid, dtype=float)
    u = np.asarray(u_init, dtype=float).copy()
    if u.shape != grid.shape:
        raise DomainError("initial data and grid differ in shape")
    if not np.all(np.isfinite(u)):
        raise DomainError("initial data is not finite")
    u[-1] = 0.0
    op = Operator(grid, n)
    st = State(float(t0), grid, u)
    if mu_ref is None:
        m0 = (dim.alpha_n / abs(u[0])) ** (2.0 / (n - 2)) if u[0] != 0 else 1.0
        mu_ref = lambda _t: m0
    out = EvolveRun(cfg, dict(descriptor or {}))
    # geometric in the lag t - t0, starting on the inner time scale mu^2
    span = t_end - t0
    lag0 = min(1e-3 * span, 0.1 * float(mu_ref(t0)) ** 2)
    marks = t0 + np.geomspace(lag0, span, n_out)
    i_out = int(np.argmin(np.abs(grid - outer_radius))) if outer_radius else None

    def outer(s):
        return s.u[i_out] if i_out is not None else math.nan

    est = extract_mu(st, n, k)
    out.record(st, est, discrete_energy(op, st.u, n), 0.0, outer(st))
    steps_left = cfg.max_steps
    logs = []
    for tm in marks:
        # the cap stops the kernel well past the blow-up threshold, before overflow
        cap = 1e3 * cfg.blowup_factor * dim.alpha_n * float(mu_ref(st.t)) ** (-(n - 2) / 2.0)
        st_new, used, dt, status = _advance(op, st, dim.pf, cfg, tm, steps_left,
                                            u_cap=cap if classify else 1e300)
        steps_left -= used
        if status == 2 or not np.all(np.isfinite(st_new.u)):
            out.termination = "blowup"
            break
        st = st_new
        est = extract_mu(st, n, k, prev=est.mu)
        out.record(st, est, discrete_energy(op, st.u, n), dt, outer(st))
        sup = out.sup_u[-1]
        logs.append(math.log(sup))
        m = float(mu_ref(st.t))
        thr = cfg.blowup_factor * dim.alpha_n * m ** (-(n - 2) / 2.0)
        accel = len(logs) >= 3 and logs[-1] - 2 * logs[-2] + logs[-3] > 0
        if classify and (status == 3 or (sup > thr and accel)):
            out.termination = "blowup"
            break
        ratio = _inner_amplitude_ratio(st.u[0], n, k, m)
        if classify and ratio < cfg.collapse_level:
            out.termination = "collapse"
            break
        if classify and ratio > 1.0 / cfg.collapse_level:
            # inner bubble concentrating: the blow-up branch of the dichotomy
            out.termination = "blowup"
            break
        if status == 1 or steps_left <= 0:
            out.termination = "step-limit"
            break
    out.final_state = st
    return out


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def fit_rates(t, mu_hat, reliable=None, min_decades=1.0):
    """Least-squares slope of log mu_j against log t on the trailing reliable window.

    ``mu_hat`` has shape (len(t), k).  Returns {j: (slope, intercept, (t_a, t_b))}
    with 1-based j.  Raises DomainError when a window spans fewer than
    ``min_decades`` decades.
    """
    t = np.asarray(t, dtype=float)
    M = np.atleast_2d(np.asarray(mu_hat, dtype=float))
    if M.shape[0] != t.size:
        M = M.T
    R = np.ones_like(M, dtype=bool) if reliable is None else np.asarray(reliable, dtype=bool).reshape(M.shape)
    res = {}
    for j in range(M.shape[1]):
        ok = R[:, j] & np.isfinite(M[:, j]) & (M[:, j] > 0)
        # trailing run of reliable samples
        end = len(ok)
        while end > 0 and not ok[end - 1]:
            end -= 1
        start = end
        while start > 0 and ok[start - 1]:
            start -= 1
        if end - start < 2:
            raise DomainError("bubble %d: no reliable window; need %.3g decades" % (j + 1, min_decades))
        ta, tb = t[start], t[end - 1]
        span = math.log10(tb / ta)
        if span < min_decades:
            raise DomainError("bubble %d: reliable window spans %.3g decades; need %.3g"
                              % (j + 1, span, min_decades))
        slope, icpt = np.polyfit(np.log(t[start:end]), np.log(M[start:end, j]), 1)
        res[j + 1] = (float(slope), float(icpt), (float(ta), float(tb)))
    return res


def tracking_horizon(run_, mu_ref, rel=0.15):
    """Last time up to which the extracted innermost scale stays within ``rel`` of mu_ref."""
    k = len(run_.mu_hat[0])
    last = run_.t[0]
    for t, m in zip(run_.t, run_.mu_hat):
        if not (math.isfinite(m[k - 1]) and abs(m[k - 1] / mu_ref(t) - 1.0) <= rel):
            break
        last = t
    return last


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def initial_data(params, spec, grid, ell, basis=None):
    """u*(., t0) + sum_j ell_j mu_j^{-(n-2)/2} omega_j on ``grid``.

    The amplitude factor makes ell_j a perturbation relative to bubble j.
    """
    n = params.dim.n
    base = assemble_u_star(params, spec, params.t0, grid).u_star.values.copy()
    basis = basis or perturbation_basis(params, spec)
    for j, lj in enumerate(ell, start=1):
        if lj == 0.0:
            continue
        m = float(params.mu0(j, params.t0))
        base += lj * m ** (-(n - 2) / 2.0) * basis["omega"][j - 1](grid / 1.0)
    return base


@dataclass
class ShootResult:
    ell: List[float]
    run: EvolveRun
    trials: int
    table: List[tuple]
    bracketed: bool
    horizon: float


def _classify_sign(term):
    # +1 for the concentrating branch, -1 for the collapsing one, 0 otherwise
    return {"blowup": 1, "collapse": -1}.get(term, 0)


def shoot(params, spec, ranges, budget=200, cfg=None, t_end=None, n_out=200, grid=None):
    """Nested bisection on ell_k, ell_{k-1}, ..., innermost first.

    ``ranges`` lists one (lo, hi) pair per bubble.  Each trial integrates
    u*(t0) + sum ell_j mu_j^{-(n-2)/2} omega_j and is classified by the inner
    amplitude.  For every value of an outer parameter the inner ones are
    re-tuned; a bisection stops when its bracket no longer shrinks in double
    precision or the trial budget is spent.
    """
    k = params.k
    if k > 3:
        raise DomainError("shooting is limited to k <= 3")
    if len(ranges) != k:
        raise DomainError("need one ell range per bubble")
    n = params.dim.n
    t0 = params.t0
    t_end = t_end or 10.0 * t0
    cfg = cfg or SolverConfig.for_tower(params, t_end)
    grid = cfg.grid() if grid is None else grid
    basis = perturbation_basis(params, spec)
    mu_ref = lambda t: float(params.mu(k, t))
    outer_r = 0.5 * float(params.mu(1, t0))
    table = []
    left = [int(budget)]
    order = list(range(k - 1, -1, -1))      # level 0 is the innermost bubble

    def trial(ell):
        if left[0] <= 0:
            return None
        left[0] -= 1
        u = initial_data(params, spec, grid, ell, basis)
        rr = run(u, grid, t0, t_end, n, cfg, k=k, mu_ref=mu_ref, n_out=n_out,
                 descriptor={"ell": list(ell)}, outer_radius=outer_r)
        table.append((tuple(ell), rr.termination, rr.t[-1]))
        return rr

    def evaluate(level, ell):
        return tune(level - 1, ell)[0] if level > 0 else trial(ell)

    def tune(level, ell):
        """Bisect ell[order[level]] in place; returns (longest run, bracketed)."""
        idx = order[level]
        lo, hi = ranges[idx]
        ell[idx] = lo
        r_lo = evaluate(level, ell)
        ell[idx] = hi
        r_hi = evaluate(level, ell)
        if r_lo is None or r_hi is None:
            return (r_lo or r_hi), False
        s_lo, s_hi = _classify_sign(r_lo.termination), _classify_sign(r_hi.termination)
        best = max((r_lo, r_hi), key=lambda x: x.t[-1])
        if s_lo * s_hi >= 0:
            ell[idx] = 0.5 * (lo + hi)
            return best, False
        a, b = lo, hi
        while left[0] > 0:
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            ell[idx] = mid
            r_mid = evaluate(level, ell)
            if r_mid is None:
                break
            if r_mid.t[-1] >= best.t[-1]:
                best = r_mid
            s = _classify_sign(r_mid.termination)
            if s == 0:
                break
            if s == s_lo:
                a = mid
            else:
                b = mid
        ell[idx] = 0.5 * (a + b)
        return best, True

    ell = [0.5 * (lo + hi) for lo, hi in ranges]
    best, bracketed = tune(k - 1, ell)
    if best is None:
        raise NumericalFailure("shooting budget exhausted before any trial", diagnostics={"table": table})
    return ShootResult(ell, best, len(table), table, bracketed, tracking_horizon(best, mu_ref))


def stationary_drift(n, cfg, steps=1000, dt=1e-4):
    """sup |u - U| after ``steps`` IMEX steps of size dt started from U."""
    dim = as_dimension(n)
    grid = cfg.grid()
    u = soliton_U(dim, grid)
    u[-1] = 0.0
    op = Operator(grid, dim.n)
    st = State(0.0, grid, u)
    c = SolverConfig(**{**asdict(cfg), "dt_max": dt})
    st, used, _, status = _advance(op, st, dim.pf, c, steps * dt * (1 + 1e-12), steps + 1)
    if status == 2:
        raise NumericalFailure("stationary run produced non-finite values")
    return float(np.max(np.abs(st.u[:-1] - soliton_U(dim, grid[:-1])))), used


def convergence_order(n, cfg, t_end=0.05, dt=1e-4, levels=3):
    """Observed spatial order from runs on cfg, cfg/2, ... against cfg/2^levels.

    Errors are measured at the nodes of the coarsest grid that all finer
    grids share when the spacing is halved.
    """
    dim = as_dimension(n)
    cfgs = [cfg]
    for _ in range(levels):
        cfgs.append(cfgs[-1].refined())
    finals = []
    for c in cfgs:
        grid = c.grid()
        u = soliton_U(dim, grid)
        u[-1] = 0.0
        c2 = SolverConfig(**{**asdict(c), "dt_max": dt})
        st, _, _, _ = _advance(Operator(grid, dim.n), State(0.0, grid, u), dim.pf, c2,
                               t_end, 10 ** 7)
        finals.append((grid, st.u))
    ref_grid, ref_u = finals[-1]
    # nodes of the uniform patch are shared by every level
    probe = finals[0][0][finals[0][0] <= cfg.r_uniform * (1 + 1e-12)]
    ref = np.interp(probe, ref_grid, ref_u)
    errs = [float(np.max(np.abs(np.interp(probe, g, v) - ref))) for g, v in finals[:-1]]
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
    return errs, orders
