"""Hot loops with two interchangeable backends.

Each kernel is written once as a plain loop (compiled with numba when it is
available) and once with vectorised numpy/scipy.  Setting the environment
variable ``BUBBLETOWER_NO_NUMBA=1`` before import selects the numpy versions;
``benchmarks/bench_kernels.py`` times the two against each other.
"""
import math
import os

import numpy as np
from scipy.linalg import solve_banded

_DISABLED = os.environ.get("BUBBLETOWER_NO_NUMBA", "").strip() not in ("", "0")

try:
    if _DISABLED:
        raise ImportError("disabled by BUBBLETOWER_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# tridiagonal solve
# ---------------------------------------------------------------------------

def _thomas_loop(a, b, c, d):
    """Thomas algorithm. a: sub-diagonal (a[0] ignored), b: diagonal,
    c: super-diagonal (c[-1] ignored), d: right-hand side."""
    m = b.shape[0]
    cp = np.empty(m)
    dp = np.empty(m)
    x = np.empty(m)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, m):
        den = b[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den
        dp[i] = (d[i] - a[i] * dp[i - 1]) / den
    x[m - 1] = dp[m - 1]
    for i in range(m - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _thomas_numpy(a, b, c, d):
    ab = np.zeros((3, b.size))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    return solve_banded((1, 1), ab, d, check_finite=False)


# ---------------------------------------------------------------------------
# IMEX time stepping: implicit (theta) diffusion, explicit reaction
# ---------------------------------------------------------------------------

def _imex_advance_loop(u, lo, di, up, p, theta, dt_max, cfl, t, t_stop,
                       max_steps, react, u_cap):
    """Advance u_t = L u + |u|^{p-1} u until t_stop.

    Returns (u, t, steps, last_dt, status) with status 0 = reached t_stop,
    1 = step budget used, 2 = non-finite value, 3 = |u| exceeded u_cap.
    """
    m = u.shape[0]
    a = np.empty(m)
    b = np.empty(m)
    c = np.empty(m)
    rhs = np.empty(m)
    steps = 0
    dt = 0.0
    status = 0
    while t < t_stop:
        if steps >= max_steps:
            status = 1
            break
        umax = 0.0
        for i in range(m):
            au = abs(u[i])
            if au > umax:
                umax = au
        if not (umax < u_cap):
            status = 2 if umax != umax else 3
            break
        dt = dt_max
        if react and umax > 0.0:
            lim = cfl / (p * umax ** (p - 1.0))
            if lim < dt:
                dt = lim
        if t + dt > t_stop:
            dt = t_stop - t
        w = (1.0 - theta) * dt
        for i in range(m):
            lu = di[i] * u[i]
            if i > 0:
                lu += lo[i] * u[i - 1]
            if i < m - 1:
                lu += up[i] * u[i + 1]
            r = u[i] + w * lu
            if react:
                r += dt * abs(u[i]) ** (p - 1.0) * u[i]
            rhs[i] = r
            a[i] = -theta * dt * lo[i]
            b[i] = 1.0 - theta * dt * di[i]
            c[i] = -theta * dt * up[i]
        u = _thomas_compiled(a, b, c, rhs)
        t = t + dt
        steps += 1
    return u, t, steps, dt, status


def _imex_advance_numpy(u, lo, di, up, p, theta, dt_max, cfl, t, t_stop,
                        max_steps, react, u_cap):
    steps = 0
    dt = 0.0
    status = 0
    u = np.array(u, dtype=float)
    while t < t_stop:
        if steps >= max_steps:
            status = 1
            break
        umax = float(np.max(np.abs(u)))
        if not (umax < u_cap):
            status = 2 if umax != umax else 3
            break
        dt = dt_max
        if react and umax > 0.0:
            dt = min(dt, cfl / (p * umax ** (p - 1.0)))
        dt = min(dt, t_stop - t)
        lu = di * u
        lu[1:] += lo[1:] * u[:-1]
        lu[:-1] += up[:-1] * u[1:]
        rhs = u + (1.0 - theta) * dt * lu
        if react:
            rhs += dt * np.abs(u) ** (p - 1.0) * u
        u = _thomas_numpy(-theta * dt * lo, 1.0 - theta * dt * di,
                          -theta * dt * up, rhs)
        t += dt
        steps += 1
    return u, t, steps, dt, status


# ---------------------------------------------------------------------------
# angular factor of the radial heat kernel, in the form log(A(z) e^{-z})
# ---------------------------------------------------------------------------

def _log_ae_loop(z, tab, dz, zs, acoef, logc_asym, nu):
    if z <= zs:
        x = z / dz
        i = int(x)
        if i < 1:
            i = 1
        if i > tab.shape[0] - 3:
            i = tab.shape[0] - 3
        s = x - i
        # four-point Lagrange on nodes i-1, i, i+1, i+2
        return (-s * (s - 1.0) * (s - 2.0) / 6.0 * tab[i - 1]
                + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * tab[i]
                - (s + 1.0) * s * (s - 2.0) / 2.0 * tab[i + 1]
                + (s + 1.0) * s * (s - 1.0) / 6.0 * tab[i + 2])
    w = 1.0 / z
    acc = 0.0
    for k in range(acoef.shape[0] - 1, -1, -1):
        acc = acc * w + acoef[k]
    return logc_asym - (nu + 0.5) * math.log(z) + math.log(acc)


def _log_ae_numpy(z, tab, dz, zs, acoef, logc_asym, nu):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z <= zs
    if np.any(small):
        x = z[small] / dz
        i = np.clip(x.astype(np.int64), 1, tab.size - 3)
        s = x - i
        out[small] = (-s * (s - 1.0) * (s - 2.0) / 6.0 * tab[i - 1]
                      + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * tab[i]
                      - (s + 1.0) * s * (s - 2.0) / 2.0 * tab[i + 1]
                      + (s + 1.0) * s * (s - 1.0) / 6.0 * tab[i + 2])
    big = ~small
    if np.any(big):
        w = 1.0 / z[big]
        acc = np.zeros_like(w)
        for k in range(acoef.size - 1, -1, -1):
            acc = acc * w + acoef[k]
        out[big] = logc_asym - (nu + 0.5) * np.log(z[big]) + np.log(acc)
    return out


# ---------------------------------------------------------------------------
# Duhamel quadrature: sum over lags of the radial heat-kernel integral
# ---------------------------------------------------------------------------

def _duhamel_block_loop(r_q, taus, wtau, G, Gv, B, Bv, n, logsurf,
                        tab, dz, zs, acoef, logc_asym, nu):
    """out[q] = sum_i wtau[i] * int K(r_q, rho, taus[i]) g_i(rho) rho^{n-1} drho.

    The rho-integral is a trapezoid rule on the merged, sorted union of the
    fixed source nodes G (values Gv[i]) and the per-(q, i) band nodes B[q, i]
    (values Bv[q, i]) that resolve the Gaussian around r.
    """
    nq = r_q.shape[0]
    nt = taus.shape[0]
    ng = G.shape[0]
    nb = B.shape[2]
    out = np.zeros(nq)
    for q in range(nq):
        r = r_q[q]
        acc = 0.0
        for i in range(nt):
            tau = taus[i]
            reach = math.sqrt(3000.0 * tau)
            j = np.searchsorted(G, r - reach)
            jend = np.searchsorted(G, r + reach, side="right")
            base = logsurf - 0.5 * n * math.log(4.0 * math.pi * tau)
            inv4t = 1.0 / (4.0 * tau)
            k = 0
            have_prev = False
            prev_rho = 0.0
            prev_f = 0.0
            total = 0.0
            while j < jend or k < nb:
                if k >= nb or (j < jend and G[j] <= B[q, i, k]):
                    rho = G[j]
                    gval = Gv[i, j]
                    j += 1
                else:
                    rho = B[q, i, k]
                    gval = Bv[q, i, k]
                    k += 1
                if rho <= 0.0 or gval == 0.0:
                    f = 0.0
                else:
                    zz = r * rho * 2.0 * inv4t
                    le = _log_ae_compiled(zz, tab, dz, zs, acoef, logc_asym, nu)
                    d = r - rho
                    f = gval * math.exp(base - d * d * inv4t + le
                                        + (n - 1) * math.log(rho))
                if have_prev:
                    total += 0.5 * (rho - prev_rho) * (f + prev_f)
                prev_rho = rho
                prev_f = f
                have_prev = True
            acc += wtau[i] * total
        out[q] = acc
    return out


def _duhamel_block_numpy(r_q, taus, wtau, G, Gv, B, Bv, n, logsurf,
                         tab, dz, zs, acoef, logc_asym, nu):
    nq = r_q.shape[0]
    nt = taus.shape[0]
    out = np.zeros(nq)
    base = logsurf - 0.5 * n * np.log(4.0 * np.pi * taus)
    for q in range(nq):
        r = r_q[q]
        rho = np.concatenate([np.broadcast_to(G, (nt, G.size)), B[q]], axis=1)
        gv = np.concatenate([Gv, Bv[q]], axis=1)
        order = np.argsort(rho, axis=1, kind="stable")
        rho = np.take_along_axis(rho, order, axis=1)
        gv = np.take_along_axis(gv, order, axis=1)
        tt = taus[:, None]
        f = np.zeros_like(rho)
        live = (rho > 0.0) & (gv != 0.0) & ((r - rho) ** 2 < 3000.0 * tt)
        if np.any(live):
            rr = rho[live]
            tl = np.broadcast_to(tt, rho.shape)[live]
            bl = np.broadcast_to(base[:, None], rho.shape)[live]
            le = _log_ae_numpy(r * rr / (2.0 * tl), tab, dz, zs, acoef,
                               logc_asym, nu)
            f[live] = gv[live] * np.exp(bl - (r - rr) ** 2 / (4.0 * tl) + le
                                        + (n - 1) * np.log(rr))
        rows = 0.5 * np.sum(np.diff(rho, axis=1) * (f[:, 1:] + f[:, :-1]), axis=1)
        out[q] = np.dot(wtau, rows)
    return out


# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _thomas_compiled = njit(cache=True)(_thomas_loop)
    _log_ae_compiled = njit(cache=True)(_log_ae_loop)
    _imex_compiled = njit(cache=True)(_imex_advance_loop)
    _duhamel_compiled = njit(cache=True)(_duhamel_block_loop)
else:  # pragma: no cover
    _thomas_compiled = _thomas_loop
    _log_ae_compiled = _log_ae_loop
    _imex_compiled = _imex_advance_loop
    _duhamel_compiled = _duhamel_block_loop

NUMBA_KERNELS = {
    "thomas": _thomas_compiled,
    "imex_advance": _imex_compiled,
    "duhamel_block": _duhamel_compiled,
}
NUMPY_KERNELS = {
    "thomas": _thomas_numpy,
    "imex_advance": _imex_advance_numpy,
    "duhamel_block": _duhamel_block_numpy,
}

_ACTIVE = NUMBA_KERNELS if HAVE_NUMBA else NUMPY_KERNELS


def thomas(a, b, c, d):
    return _ACTIVE["thomas"](np.ascontiguousarray(a, float), np.ascontiguousarray(b, float),
                             np.ascontiguousarray(c, float), np.ascontiguousarray(d, float))


def imex_advance(u, lo, di, up, p, theta, dt_max, cfl, t, t_stop, max_steps,
                 react=True, u_cap=1e300):
    return _ACTIVE["imex_advance"](np.ascontiguousarray(u, float), lo, di, up,
                                   float(p), float(theta), float(dt_max), float(cfl),
                                   float(t), float(t_stop), int(max_steps),
                                   bool(react), float(u_cap))


def duhamel_block(*args):
    return _ACTIVE["duhamel_block"](*args)


def log_ae(z, tab, dz, zs, acoef, logc_asym, nu):
    return _log_ae_numpy(z, tab, dz, zs, acoef, logc_asym, nu)
