import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubbletower.ansatz import mu_bar
from bubbletower.errors import DomainError
from bubbletower.norms import (Lattice, WeightSpec, diagnostic_lattice, gaussian_field, inner_norms,
                               lattice_sup_ratio, norm_a_sigma_beta, selfsimilar_lattice,
                               weight_eval, weight_sum)


@pytest.fixture(scope="module")
def ws(tower7):
    return WeightSpec(0.5, 0.1, 4.0, tower7)


@pytest.fixture(scope="module")
def lat(tower7):
    return diagnostic_lattice(tower7, 100.0, 1000.0, per_decade=6, r_per_decade=15)


def test_weight_spec_ranges(tower7):
    for a, s, b in ((0.0, 0.1, 4.0), (5.0, 0.1, 4.0), (0.5, 0.0, 4.0), (0.5, 0.1, 2.0), (0.5, 0.1, 7.0)):
        with pytest.raises(DomainError):
            WeightSpec(a, s, b, tower7)


def test_weight_point_values(ws, tower7):
    t = 400.0
    assert weight_eval(ws, "w3", None, 0.0, t) == pytest.approx(t ** -2.0)
    assert weight_eval(ws, "ω3", None, 0.0, t) == pytest.approx(t ** -2.0)
    assert weight_eval(ws, "w11", None, 2 * math.sqrt(t), t) == 0.0
    assert weight_eval(ws, "w11", None, 5 * math.sqrt(t), t) == 0.0
    mu = float(tower7.mu(2, t))
    lam = float(tower7.lam(2, t))
    assert weight_eval(ws, "w1j", 2, 0.0, t) == pytest.approx(t ** -0.1 * mu ** -4.5 * lam ** 2.5, rel=1e-12)
    with pytest.raises(DomainError):
        weight_eval(ws, "w1j", 3, 0.0, t)
    with pytest.raises(DomainError):
        weight_eval(ws, "w9", None, 0.0, t)


def test_weights_positive_on_support(ws, tower7):
    t = 300.0
    r = np.geomspace(1e-9, 10.0, 200)
    for w in ("w3", "w3*", "w2j", "w2j*"):
        assert np.all(weight_eval(ws, w, 2, r, t) > 0)
    mb = mu_bar(tower7, 2, t)
    inside = r < mb
    for w in ("w1j", "w1j*"):
        assert np.all(weight_eval(ws, w, 2, r[inside], t) > 0)


def test_weight_sum_parts(ws):
    t, r = 200.0, np.array([0.0, 1e-6, 0.1, 3.0])
    manual = sum(weight_eval(ws, w, 2, r, t) for w in ("w11", "w3", "w1j", "w2j"))
    assert np.allclose(weight_sum(ws, r, t), manual, rtol=1e-14)


def test_norm_trivial_cases(ws, lat):
    assert norm_a_sigma_beta(lambda r, t: 0.0 * r, lat, ws).value == 0.0
    two = norm_a_sigma_beta(lambda r, t: 2.0 * weight_sum(ws, r, t), lat, ws)
    assert two.value == pytest.approx(2.0, rel=1e-12)
    one = norm_a_sigma_beta(lambda r, t: weight_eval(ws, "w1j", 2, r, t), lat, ws)
    assert one.value <= 1.0 and one.value > 0.99
    star = norm_a_sigma_beta(lambda r, t: weight_sum(ws, r, t, True), lat, ws, starred=True)
    assert star.value == pytest.approx(1.0) and star.norm_name.startswith("norm_*")


def test_norm_report_json(ws, lat):
    rep = norm_a_sigma_beta(lambda r, t: weight_eval(ws, "w3", None, r, t), lat, ws)
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"norm_name", "value", "argmax_point", "lattice_signature"}
    assert doc["lattice_signature"] == lat.signature()


def test_underflow_excluded():
    lat = Lattice(np.array([1.0]), [np.array([0.0, 1.0, 2.0])])
    rep = lattice_sup_ratio([np.array([1.0, 1.0, 1.0])], lat, lambda r, t: np.where(r > 1.5, 0.0, 1.0), "x")
    assert rep.excluded == 1 and rep.value == 1.0


def test_norm_size_mismatch(ws, lat):
    with pytest.raises(DomainError):
        norm_a_sigma_beta([np.zeros(3)], lat, ws)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 2 ** 31))
def test_norm_homogeneous(c, seed, ws, lat):
    rng = np.random.default_rng(seed)
    h = [rng.normal(size=g.size) * weight_sum(ws, g, t) for t, g in zip(lat.times, lat.grids)]
    base = norm_a_sigma_beta(h, lat, ws).value
    scaled = norm_a_sigma_beta([c * v for v in h], lat, ws).value
    assert scaled == pytest.approx(abs(c) * base, rel=1e-12, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_norm_monotone(seed, ws, lat):
    rng = np.random.default_rng(seed)
    h2 = [rng.uniform(0, 1, g.size) * weight_sum(ws, g, t) for t, g in zip(lat.times, lat.grids)]
    h1 = [v * rng.uniform(-1, 1, v.size) for v in h2]
    assert norm_a_sigma_beta(h1, lat, ws).value <= norm_a_sigma_beta(h2, lat, ws).value


def test_lattice_refinement_and_signature(tower7):
    lat = diagnostic_lattice(tower7, 100.0, 1000.0, per_decade=4, r_per_decade=10)
    fine = lat.refined()
    assert len(fine) == len(lat)
    assert all(f.size > g.size for f, g in zip(fine.grids, lat.grids))
    assert fine.signature() != lat.signature()
    both = lat.refined(times=True)
    assert len(both) > len(lat)
    ss = selfsimilar_lattice(1.0, 10.0, 5, 10)
    assert ss.grids[0][0] == 0.0 and ss.grids[-1][-1] == pytest.approx(10 * math.sqrt(10.0))
    with pytest.raises(DomainError):
        Lattice(np.array([1.0]), [np.zeros(2)]).refined()


def test_gaussian_field():
    g = gaussian_field(1.5, t_shift=1.0)
    assert g(0.0, 5.0) == pytest.approx(4.0 ** -1.5)


def test_inner_norms():
    a, nu = 0.5, 2.0
    mu_fn = lambda t: 1.0 / t
    R_fn = lambda t: 3.0
    t = np.array([1.0, 2.0])
    y = np.linspace(0, 6, 31)
    h = np.array([mu_fn(s) ** nu / (1 + y) ** (2 + a) for s in t])
    assert inner_norms(h, y, t, a, nu, mu_fn, R_fn, "h") == pytest.approx(1.0)
    assert inner_norms(np.zeros_like(h), y, t, a, nu, mu_fn, R_fn, "phi", n=7) == 0.0
    with pytest.raises(DomainError):
        inner_norms(h, np.linspace(0, 7, 31), t, a, nu, mu_fn, R_fn)
    with pytest.raises(DomainError):
        inner_norms(h, y, t, a, nu, mu_fn, R_fn, "phi")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_inner_phi_norm_dominates_pointwise(seed):
    # |phi| <= K 2^{n+1-a} mu^nu / (1+|y|)^a on |y| <= 2R
    rng = np.random.default_rng(seed)
    n, a, nu = 7, 0.7, 1.5
    mu_fn = lambda t: t ** -2.0
    R_fn = lambda t: 2.0 + math.log(t)
    t = np.array([1.5, 4.0])
    y = np.linspace(0, 2 * R_fn(1.5), 40)
    phi = rng.normal(size=(2, y.size)) * np.array([mu_fn(s) ** nu for s in t])[:, None]
    K = inner_norms(phi, y, t, a, nu, mu_fn, R_fn, "phi", n=n)
    bound = K * 2 ** (n + 1 - a) * np.array([mu_fn(s) ** nu for s in t])[:, None] / (1 + y) ** a
    assert np.all(np.abs(phi) <= bound * (1 + 1e-12))
