"""Time the numba kernels against the numpy fallback.

Runs each workload once per backend (after a warm-up call so JIT compile
time is excluded) and checks that both backends agree.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from bubbletower import _kernels
from bubbletower.evolve import SolverConfig, Operator, State, _advance
from bubbletower.heat import QuadConfig, duhamel_Tout
from bubbletower.radial import graded_grid
from bubbletower.soliton import Dimension, soliton_U


def _thomas_case():
    rng = np.random.default_rng(0)
    m = 20000
    a, c = rng.uniform(-1, 0, m), rng.uniform(-1, 0, m)
    b = 3.0 + rng.uniform(0, 1, m)
    d = rng.normal(size=m)
    return lambda: _kernels.thomas(a, b, c, d)


def _imex_case():
    dim = Dimension(7)
    cfg = SolverConfig(h=0.02, r_uniform=10.0, r_max=50.0, max_steps=400)
    grid = cfg.grid()
    op = Operator(grid, dim.n)
    u0 = soliton_U(dim, grid)

    def go():
        st = State(0.0, grid, u0.copy())
        return _advance(op, st, dim.pf, cfg, 1.0, 400)[0].u
    return go


def _duhamel_case():
    g = lambda rho, s: np.exp(-rho * rho / (4.0 * s)) / s ** 3
    r = np.geomspace(1e-2, 30.0, 60)
    return lambda: duhamel_Tout(g, 1.0, r, 5.0, 7, cfg=QuadConfig())


CASES = {"thomas": _thomas_case, "imex_advance": _imex_case, "duhamel_block": _duhamel_case}


def bench(repeat=3):
    rows = []
    for name, make in CASES.items():
        fn = make()
        out = {}
        for label, table in (("numba", _kernels.NUMBA_KERNELS), ("numpy", _kernels.NUMPY_KERNELS)):
            _kernels._ACTIVE = table
            res = fn()  # warm-up / compile
            best = np.inf
            for _ in range(repeat):
                t1 = time.perf_counter()
                fn()
                best = min(best, time.perf_counter() - t1)
            out[label] = (best, np.asarray(res, dtype=float))
        _kernels._ACTIVE = _kernels.NUMBA_KERNELS if _kernels.HAVE_NUMBA else _kernels.NUMPY_KERNELS
        a, b = out["numba"][1], out["numpy"][1]
        diff = float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
        rows.append((name, out["numba"][0], out["numpy"][0], diff))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print("backend available: %s" % _kernels.BACKEND)
    print("%-14s %12s %12s %9s %12s" % ("kernel", "numba [s]", "numpy [s]", "speedup", "rel. diff"))
    for name, tn, tp, diff in bench(args.repeat):
        print("%-14s %12.4g %12.4g %9.1f %12.3g" % (name, tn, tp, tp / tn, diff))


if __name__ == "__main__":
    main()
