import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pluripot import densities as dn, families as fam, geometry as geo
from pluripot.families import FamilyError


def test_check_ladder():
    assert fam.check_ladder([0.5, 0.1]).tolist() == [0.5, 0.1]
    for bad in ([0.1], [0.1, 0.2], [0.1, -0.05], [0.1, 0.1]):
        with pytest.raises(FamilyError):
            fam.check_ladder(bad)


def test_convergence_verdict_and_rate():
    t = np.array([0.4, 0.2, 0.1, 0.05])
    assert fam.convergence_verdict(3 * t) == "converges"
    assert fam.convergence_verdict([1.0, 0.5, 0.6, 0.2]) != "converges"
    assert fam.fitted_rate(t, 3 * t**2) == pytest.approx(2.0, abs=1e-12)


@given(a=st.floats(-2, 2), k=st.integers(1, 3))
@settings(max_examples=20)
def test_normalize_h_gives_probability(a, k):
    f = geo.euclidean_form(geo.build_torus(1, resolution=16))
    x = f.manifold.coords()
    h = fam.normalize_h(f, a * np.cos(2 * np.pi * k * x[0]) + 0.3)
    w = geo.volume(f).weights / geo.volume(f).V
    assert float(np.sum(np.exp(h) * w)) == pytest.approx(1.0, abs=1e-12)


def test_general_type_sup_bound():
    f = geo.euclidean_form(geo.build_torus(1, resolution=32))
    x = f.manifold.coords()
    exp = fam.general_type_family([0.5, 0.25, 0.125], lambda t: (1 + t) * np.sin(2 * np.pi * x[0]), f)
    d = exp.diagnostics
    assert d["sup_bound_all"] and d["bound_holds"]
    assert all(0 <= m["sup"] <= m["sup_bound"] + 1e-9 for m in d["members"])


def test_general_type_rejects_unbounded_h():
    f = geo.euclidean_form(geo.build_torus(1, resolution=16))
    with pytest.raises(FamilyError):
        fam.general_type_family([0.5, 0.1], lambda t: np.full((16, 16), 1.0 / t), f, h_bound=5.0)


def test_cusp_manufactured():
    fit = fam.cusp_exponent()
    assert fit.conclusive and fit.kappa == pytest.approx(2.0, abs=0.05)
    r = np.array([1e-3, 1e-6])
    assert np.allclose(fam.cusp_potential(r), -2 * np.log(-np.log(r**2)))


@pytest.mark.parametrize("rho", [lambda u: 2 * (1 + 0.5 * np.exp(u)), lambda u: 3.0 + 0 * u])
def test_cusp_robust_to_density(rho):
    fit = fam.cusp_exponent(rho=rho)
    assert fit.kappa == pytest.approx(2.0, abs=0.05)


def test_cy_oscillation_bounded():
    f = geo.euclidean_form(geo.build_torus(1, resolution=32))
    d = fam.cy_oscillation([0.5, 0.25, 0.125, 0.0625], form=f).diagnostics
    assert d["holds"] and d["sup_osc"] <= d["M"]


def test_stable_family_lc():
    f = geo.euclidean_form(geo.build_torus(1, resolution=32))
    d = fam.stable_family_bound([1e-1, 1e-2], dn.SncLocalModel(p=1, a=(-1.0,)), form=f).diagnostics
    assert d["all_comparisons"] and d["bound_holds"]
    assert d["C_eps"] <= d["C_eps_certified"]


def test_stable_family_klt():
    d = fam.stable_family_bound([1e-1, 1e-2], dn.SncLocalModel(p=1, a=(-0.5,), m=2)).diagnostics
    assert not d["lc"] and d["bound_holds"]


def test_noncollapsing():
    exp, rep = fam.noncollapsing_limit([0.4, 0.2, 0.1, 0.05], resolution=32)
    assert rep.verdict == "converges"
    assert rep.rate == pytest.approx(1.0, abs=0.05)
    assert rep.extras["bound_holds"] and rep.extras["monotone"]


def test_pair_current_is_bilinear():
    M = geo.build_torus(2, resolution=8)
    rng = np.random.default_rng(0)
    T1, T2 = (rng.normal(size=tuple(M.shape) + (2, 2)) for _ in range(2))
    for chi, beta in fam.pairing_dictionary(M, count=4, seed=0):
        eta = (chi, beta)
        p = lambda T: fam.pair_current(T, eta, M.cell_volume)
        assert p(T1 + 2 * T2) == pytest.approx(p(T1) + 2 * p(T2), rel=1e-10, abs=1e-12)


def test_base_potential_residual():
    M = geo.build_torus(2, resolution=12)
    u, push, res = fam.base_potential(M, fam.default_collapsing_density(M))
    assert res <= 1e-10
    assert float(np.mean(push)) == pytest.approx(1.0, abs=1e-12)


def test_collapsing_coarse():
    exp, rep = fam.collapsing_fibration(resolution=12)
    e = rep.extras
    assert e["strictly_decreasing"] and e["single_g"]
    assert max(e["vt_error"]) <= 1e-12
    assert max(e["mass_pushforward_error"]) <= 1e-3
