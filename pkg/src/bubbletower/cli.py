"""Command line front-end: ``bubbletower <subcommand> [options]``.

Every subcommand reads an optional INI file (``--config``), lets flags
override it, and writes ``<outdir>/<subcommand>/<stamp>/`` containing
``manifest.ini`` (the resolved configuration), CSV and JSON results and a
gnuplot script.  Re-running with ``--config <manifest.ini>`` reproduces the
CSV files byte for byte.

Exit codes: 0 success, 2 usage or domain error, 3 structural failure,
4 numerical failure.
"""
import argparse
import configparser
import datetime
import json
import math
import os
import sys
import warnings

import numpy as np

from .errors import BubbleTowerError, DomainError

DEFAULTS = {
    "global": {"n": "7", "k": "2", "t0": "100", "eps": "0.02", "outdir": "bubbletower_out",
               "cache_dir": ""},
    "constants": {},
    "build-ansatz": {"times": "100,200,500,1000", "a": "0.5", "sigma": "0.1", "beta": "4"},
    "barriers": {"a": "0.5", "sigma": "0.1", "beta": "4", "t_hi_selfsimilar": "100",
                 "r_per_decade": "20", "per_decade": "30", "t0_bubble": "10",
                 "bubble_r_per_decade": "10", "bubble_per_decade": "10", "cases": "all"},
    "evolve": {"mode": "single", "ell": "", "t_end": "", "n_uniform": "200", "ratio": "1.03",
               "budget": "200", "ell_range": "1", "n_out": "200", "zstar_delta": "0",
               "zstar_alpha": "3", "max_steps": "1000000"},
}

# flag name -> (section, key)
_FLAGS = {
    "n": ("global", "n"), "k": ("global", "k"), "t0": ("global", "t0"), "eps": ("global", "eps"),
    "outdir": ("global", "outdir"), "cache_dir": ("global", "cache_dir"),
    "times": ("build-ansatz", "times"),
    "cases": ("barriers", "cases"), "r_per_decade": ("barriers", "r_per_decade"),
    "mode": ("evolve", "mode"), "ell": ("evolve", "ell"), "t_end": ("evolve", "t_end"),
    "n_uniform": ("evolve", "n_uniform"), "budget": ("evolve", "budget"),
    "zstar_delta": ("evolve", "zstar_delta"), "zstar_alpha": ("evolve", "zstar_alpha"),
    "max_steps": ("evolve", "max_steps"),
}


def _parser():
    p = argparse.ArgumentParser(prog="bubbletower", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file (a previous manifest.ini works)")
        sp.add_argument("--n", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--t0", type=float)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--outdir")
        sp.add_argument("--cache-dir", dest="cache_dir")
        sp.add_argument("--stamp", help="output folder name (default: UTC timestamp)")
        sp.add_argument("--no-output", action="store_true", help="print only")

    common(sub.add_parser("constants", help="rate exponents, coefficients and spectral constants"))
    sp = sub.add_parser("build-ansatz", help="assemble u*, its residual and norms")
    common(sp)
    sp.add_argument("--times", help="comma separated list of times")
    sp = sub.add_parser("barriers", help="fit barrier constants of the heat flow")
    common(sp)
    sp.add_argument("--cases", help="comma separated subset or 'all'")
    sp.add_argument("--r-per-decade", dest="r_per_decade", type=int)
    sp = sub.add_parser("evolve", help="integrate the flow or shoot on the unstable directions")
    common(sp)
    sp.add_argument("--mode", choices=["single", "shoot"])
    sp.add_argument("--ell", help="comma separated amplitudes ell_1..ell_k")
    sp.add_argument("--t-end", dest="t_end", type=float)
    sp.add_argument("--n-uniform", dest="n_uniform", type=int)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--zstar-delta", dest="zstar_delta", type=float)
    sp.add_argument("--zstar-alpha", dest="zstar_alpha", type=float)
    sp.add_argument("--max-steps", dest="max_steps", type=int)
    return p


def resolve_config(args):
    """Defaults, then the INI file, then flags; returns a ConfigParser."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise DomainError("config file %s not found" % args.config)
        cp.read(args.config)
    for flag, (sec, key) in _FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            cp.set(sec, key, str(v))
    return cp


def _manifest_text(cp, command):
    keep = configparser.ConfigParser(interpolation=None)
    for sec in ("global", command):
        keep.add_section(sec)
        for key, val in sorted(cp.items(sec)):
            if sec != "global" and cp.has_option("global", key) and key in DEFAULTS["global"]:
                continue
            keep.set(sec, key, val)
    import io
    buf = io.StringIO()
    buf.write("# bubbletower manifest: resolved configuration of the %s run\n" % command)
    keep.write(buf)
    return buf.getvalue()


class Output:
    """Folder <outdir>/<command>/<stamp>/ collecting the run files."""

    def __init__(self, cp, command, stamp=None, enabled=True):
        self.enabled = enabled
        stamp = stamp or datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
        self.path = os.path.join(cp.get("global", "outdir"), command, stamp)
        if enabled:
            os.makedirs(self.path, exist_ok=True)
            self.write("manifest.ini", _manifest_text(cp, command))

    def write(self, name, text):
        if self.enabled:
            with open(os.path.join(self.path, name), "w", newline="") as fh:
                fh.write(text)


def _plot_script(datafile, xcol, ycols, logx=True, logy=True, title=""):
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set title '%s'" % title]
    if logx:
        lines.append("set logscale x")
    if logy:
        lines.append("set logscale y")
    plots = ", ".join("'%s' using %d:(abs($%d)) with linespoints" % (datafile, xcol, c) for c in ycols)
    lines.append("plot " + plots)
    return "\n".join(lines) + "\n"


def _spectral(cp):
    from .linear import build_spectral_data
    from .soliton import Dimension
    cache = cp.get("global", "cache_dir") or None
    return build_spectral_data(Dimension(cp.getint("global", "n")), cache_dir=cache)


def _params(cp, spec, k=None, t0=None):
    from .dynamics import tower_params
    return tower_params(cp.getint("global", "n"), k or cp.getint("global", "k"),
                        t0 or cp.getfloat("global", "t0"), c=spec.c_interaction)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_constants(cp, out):
    from .ansatz import codimension
    from .dynamics import rate_coefficients, rate_exponents, rate_exponents_recursive
    from .soliton import Dimension, energy_closed_form
    n, k = cp.getint("global", "n"), cp.getint("global", "k")
    dim = Dimension(n)
    alpha = rate_exponents(dim, k)
    if alpha != rate_exponents_recursive(dim, k):
        from .errors import StructuralFailure
        raise StructuralFailure("closed form and recursion of the rate exponents disagree")
    spec = _spectral(cp)
    beta = rate_coefficients(dim, k, spec.c_interaction)
    rows = [("j", "alpha_j", "beta_j", "source")]
    for j in range(1, k + 1):
        rows.append((str(j), str(alpha[j - 1]), "%.12g" % beta[j - 1], "exact/recursion"))
    scalars = [("c", "%.12g" % spec.c_interaction, "quadrature"),
               ("lambda0", "%.12g" % spec.lambda0, "eigenvalue (finite volume)"),
               ("S_n", "%.12g" % energy_closed_form(dim), "closed form"),
               ("N_k", str(codimension(n, k)), "closed form")]
    text = ["n = %d, k = %d" % (n, k)]
    text += ["%-3s %-12s %-22s %s" % r for r in rows]
    text += ["%-8s %-22s [%s]" % s for s in scalars]
    print("\n".join(text))
    out.write("rates.csv", "\n".join(",".join(r) for r in rows) + "\n")
    out.write("constants.json", json.dumps({
        "n": n, "k": k, "alpha": [str(a) for a in alpha], "beta": beta,
        "c": spec.c_interaction, "lambda0": spec.lambda0, "S_n": energy_closed_form(dim),
        "N_k": codimension(n, k),
        "provenance": {"alpha": "exact", "beta": "recursion", "c": "quadrature",
                       "lambda0": "eigenvalue", "S_n": "closed form", "N_k": "closed form"}},
        sort_keys=True, indent=1))
    out.write("plot.gp", _plot_script("rates.csv", 1, [3], logx=False, title="beta_j"))
    return 0


def cmd_build_ansatz(cp, out):
    from .ansatz import (ansatz_energy, assemble_u_star, energy_gap, plateau_sup, residual_S)
    from .norms import Lattice, WeightSpec, norm_a_sigma_beta
    from .soliton import energy_closed_form
    spec = _spectral(cp)
    par = _params(cp, spec)
    sec = "build-ansatz"
    times = [float(x) for x in cp.get(sec, "times").split(",") if x.strip()]
    if any(t < par.t0 for t in times):
        raise DomainError("snapshot times must be >= t0")
    ws = None
    if par.k >= 2:
        ws = WeightSpec(cp.getfloat(sec, "a"), cp.getfloat(sec, "sigma"), cp.getfloat(sec, "beta"), par)
    summary = []
    rows = ["t,energy,energy_over_kSn,residual_sup,plateau_with_phi0,plateau_without_phi0,weighted_norm"]
    for t in times:
        A = assemble_u_star(par, spec, t)
        res = residual_S(par, spec, t, A.u_star.grid)
        A.residual = res
        E = float(ansatz_energy(par, spec, t, A.u_star.grid))
        kSn = par.k * energy_closed_form(par.dim)
        rec = {"t": t, "energy": E, "energy_gap": E - kSn, "residual_sup": res.sup(),
               "sign_at_origin": A.sign_at_origin, "origin_ratio": A.origin_ratio()}
        pw = pwo = wn = float("nan")
        if par.k >= 2:
            res0 = residual_S(par, spec, t, A.u_star.grid, with_phi0=False)
            pw, pwo = plateau_sup(par, res, t), plateau_sup(par, res0, t)
            lat = Lattice(np.array([t]), [A.u_star.grid])
            rep = norm_a_sigma_beta([res.values], lat, ws)
            wn = rep.value
            rec.update({"plateau_with_phi0": pw, "plateau_without_phi0": pwo,
                        "weighted_norm": json.loads(rep.to_json())})
        summary.append(rec)
        rows.append("%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g" % (t, E, E / kSn, res.sup(), pw, pwo, wn))
        out.write("snapshot_t%g.csv" % t, A.snapshot_csv())
        out.write("snapshot_t%g.json" % t, A.sidecar_json({"weighted_norm": wn, "residual_sup": res.sup()}))
        print("t=%-10g J=%.10g  J/(kS_n)=%.8f  sup|S|=%.4g  plateau ratio=%.3g  norm=%.4g"
              % (t, E, E / kSn, res.sup(), pw / pwo if pwo else float("nan"), wn))
    out.write("ansatz_summary.csv", "\n".join(rows) + "\n")
    out.write("ansatz_summary.json", json.dumps(summary, sort_keys=True, indent=1, default=float))
    out.write("plot.gp", _plot_script("ansatz_summary.csv", 1, [4, 7], title="residual and weighted norm"))
    return 0


BARRIER_CASES = ("selfsimilar_compact", "selfsimilar_power", "selfsimilar_d0", "zero_source",
                 "w11", "w1j", "w2j", "w3")


def cmd_barriers(cp, out):
    from .heat import BarrierReport, barrier_check_bubble, barrier_check_selfsimilar, barrier_csv
    from .norms import WeightSpec
    sec = "barriers"
    n = cp.getint("global", "n")
    cases = cp.get(sec, "cases")
    cases = BARRIER_CASES if cases == "all" else tuple(c.strip() for c in cases.split(","))
    bad = [c for c in cases if c not in BARRIER_CASES]
    if bad:
        raise DomainError("unknown barrier case(s) %s" % ", ".join(bad))
    rpd = cp.getint(sec, "r_per_decade")
    pd = cp.getint(sec, "per_decade")
    t_hi = cp.getfloat(sec, "t_hi_selfsimilar")
    bpd = cp.getint(sec, "bubble_per_decade")
    brpd = cp.getint(sec, "bubble_r_per_decade")
    reports = []
    for c in cases:
        if c == "selfsimilar_compact":
            rep = barrier_check_selfsimilar(n, n / 2.0, "compact", t_hi=t_hi, per_decade=pd, r_per_decade=rpd)
        elif c == "selfsimilar_power":
            rep = barrier_check_selfsimilar(n, 1.0, "power", m=5.0, t_hi=t_hi, per_decade=pd, r_per_decade=rpd)
        elif c == "selfsimilar_d0":
            rep = barrier_check_selfsimilar(n, 0.0, "compact", t_hi=t_hi, per_decade=pd, r_per_decade=rpd)
            rep.case = "selfsimilar_d0"
        else:
            spec = _spectral(cp)
            par = _params(cp, spec, t0=cp.getfloat(sec, "t0_bubble"))
            ws = WeightSpec(cp.getfloat(sec, "a"), cp.getfloat(sec, "sigma"), cp.getfloat(sec, "beta"), par)
            if c == "zero_source":
                rep = barrier_check_bubble(ws, "w3", scale=0.0, per_decade=bpd, r_per_decade=brpd)
                rep.case = "zero_source"
            else:
                rep = barrier_check_bubble(ws, c, 2, per_decade=bpd, r_per_decade=brpd)
        reports.append(rep)
        print("%-22s C=%-14.6g refined=%-14.6g drift=%-8.3g %s"
              % (rep.case, rep.fitted_C, rep.refined_C, rep.drift, "stable" if rep.passed else "UNSTABLE"))
    out.write("barriers.csv", barrier_csv(reports))
    out.write("barriers.json", json.dumps([{"case": r.case, "parameters": r.parameters,
                                            "fitted_C": r.fitted_C, "refined_C": r.refined_C,
                                            "drift": r.drift, "passed": r.passed, "extra": r.extra}
                                           for r in reports], indent=1, default=float))
    out.write("plot.gp", "set datafile separator ','\nset key autotitle columnhead\n"
                         "plot 'barriers.csv' using 0:3:xticlabels(1) with boxes\n")
    return 0 if all(r.passed for r in reports) else 3


def cmd_evolve(cp, out):
    from .evolve import SolverConfig, fit_rates, initial_data, run, shoot, tracking_horizon
    from .radial import RadialField
    sec = "evolve"
    spec = _spectral(cp)
    par = _params(cp, spec)
    n, k = par.dim.n, par.k
    t_end = cp.get(sec, "t_end")
    t_end = float(t_end) if t_end else 10.0 * par.t0
    cfg = SolverConfig.for_tower(par, t_end, n_uniform=cp.getint(sec, "n_uniform"),
                                 ratio=cp.getfloat(sec, "ratio"),
                                 max_steps=cp.getint(sec, "max_steps"))
    grid = cfg.grid()
    mu_ref = lambda t: float(par.mu(k, t))
    extra = {}
    if cp.get(sec, "mode") == "shoot":
        L = cp.getfloat(sec, "ell_range")
        res = shoot(par, spec, [(-L, L)] * k, budget=cp.getint(sec, "budget"), cfg=cfg,
                    t_end=t_end, n_out=cp.getint(sec, "n_out"), grid=grid)
        r = res.run
        extra = {"tuned_ell": res.ell, "trials": res.trials, "bracketed": res.bracketed,
                 "tracking_horizon": res.horizon}
        out.write("shooting_table.csv", "ell,termination,t_last\n" + "".join(
            "%s,%s,%.12g\n" % (";".join("%.17g" % x for x in e), term, tl) for e, term, tl in res.table))
    else:
        ell_txt = cp.get(sec, "ell")
        ell = [float(x) for x in ell_txt.split(",")] if ell_txt else [0.0] * k
        if len(ell) != k:
            raise DomainError("need %d ell values" % k)
        u0 = initial_data(par, spec, grid, ell)
        delta = cp.getfloat(sec, "zstar_delta")
        if delta:
            alpha = cp.getfloat(sec, "zstar_alpha")
            z = delta / (1.0 + grid ** alpha)
            u0 = u0 + z
            extra["zstar"] = {"delta": delta, "alpha": alpha}
        r = run(u0, grid, par.t0, t_end, n, cfg, k=k, mu_ref=mu_ref, n_out=cp.getint(sec, "n_out"),
                descriptor={"ell": ell}, outer_radius=0.5 * float(par.mu(1, par.t0)))
        extra["tracking_horizon"] = tracking_horizon(r, mu_ref)
    try:
        slopes = fit_rates(r.t, r.mu_hat, r.reliable, min_decades=1.0)
        extra["slopes"] = {str(j): v[0] for j, v in slopes.items()}
    except DomainError as exc:
        extra["slopes"] = str(exc)
    extra["energy_nonincreasing"] = r.energy_nonincreasing()
    out.write("run.csv", r.to_csv())
    out.write("summary.json", r.summary(**extra))
    out.write("plot.gp", _plot_script("run.csv", 1, [2 + j for j in range(1, k + 1)], title="extracted scales"))
    print("termination: %s  t_last=%.6g  samples=%d" % (r.termination, r.t[-1], len(r.t)))
    for key, val in extra.items():
        print("%s: %s" % (key, val))
    return 0


COMMANDS = {"constants": cmd_constants, "build-ansatz": cmd_build_ansatz,
            "barriers": cmd_barriers, "evolve": cmd_evolve}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        cp = resolve_config(args)
        from .soliton import Dimension
        Dimension(cp.getint("global", "n"))
        if cp.getint("global", "k") < 1:
            raise DomainError("k must be positive")
        out = Output(cp, args.command, args.stamp, enabled=not args.no_output)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            code = COMMANDS[args.command](cp, out)
        if out.enabled:
            print("output: %s" % out.path)
        return code
    except BubbleTowerError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return exc.exit_code
    except (ValueError, configparser.Error) as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
