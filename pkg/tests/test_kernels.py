"""The numba kernels and the numpy fallback compute the same thing."""
import numpy as np
import pytest

from bubbletower import _kernels
from bubbletower.heat import kernel_table
from bubbletower.radial import fv_laplacian

BACKENDS = [_kernels.NUMPY_KERNELS]
if _kernels.HAVE_NUMBA:
    BACKENDS.append(_kernels.NUMBA_KERNELS)


@pytest.fixture(params=BACKENDS, ids=lambda b: "numba" if b is _kernels.NUMBA_KERNELS else "numpy")
def backend(request, monkeypatch):
    monkeypatch.setattr(_kernels, "_ACTIVE", request.param)
    return request.param


def test_thomas_solves(backend):
    rng = np.random.default_rng(1)
    m = 300
    a, c = rng.uniform(-1, 0, m), rng.uniform(-1, 0, m)
    b = 3.0 + rng.uniform(0, 1, m)
    d = rng.normal(size=m)
    x = _kernels.thomas(a.copy(), b.copy(), c.copy(), d.copy())
    A = np.diag(b) + np.diag(a[1:], -1) + np.diag(c[:-1], 1)
    assert np.allclose(A @ x, d, atol=1e-12)


def test_log_ae_scalar_matches_vector():
    tab = kernel_table(7)
    z = np.concatenate([np.linspace(0, 29.99, 500), np.geomspace(30, 1e5, 50)])
    vec = _kernels.log_ae(z, *tab.args())
    scal = np.array([_kernels._log_ae_compiled(float(x), *tab.args()) for x in z])
    assert np.allclose(scal, vec, rtol=1e-13, atol=1e-13)


def test_duhamel_block_backends_match():
    from bubbletower.heat import QuadConfig, lag_rule, source_grid
    tab = kernel_table(7)
    taus, wt = lag_rule(1.0, 1e-4, QuadConfig())
    G = source_grid(1e-3, 30.0, 40)
    Gv = np.exp(-G[None, :] ** 2) * np.ones((taus.size, 1))
    rq = np.array([0.0, 0.5, 2.0])
    offs = np.linspace(-10, 10, 41)
    B = np.ascontiguousarray(np.maximum(rq[:, None, None] + np.sqrt(taus)[None, :, None] * offs, 0.0))
    Bv = np.exp(-B ** 2)
    args = (rq, taus, wt, G, Gv, B, Bv, 7, tab.logsurf) + tab.args()
    a = _kernels.NUMPY_KERNELS["duhamel_block"](*args)
    b = _kernels.NUMBA_KERNELS["duhamel_block"](*args)
    assert np.allclose(a, b, rtol=1e-12)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
def test_imex_backends_match():
    g = np.concatenate([np.linspace(0, 5, 101), 5 * 1.03 ** np.arange(1, 60)])
    lo, di, up, _ = fv_laplacian(g, 7)
    u = np.exp(-g[:-1] ** 2)
    out = []
    for b in (_kernels.NUMPY_KERNELS, _kernels.NUMBA_KERNELS):
        res = b["imex_advance"](u.copy(), lo, di, up, 9 / 5, 1.0, 1e-3, 0.1, 0.0, 0.3, 10 ** 6, True, 1e300)
        out.append(res)
    assert out[0][2] == out[1][2]
    assert np.allclose(out[0][0], out[1][0], rtol=1e-12, atol=1e-14)


def test_backend_flag_recorded():
    assert _kernels.BACKEND in ("numba", "numpy")
