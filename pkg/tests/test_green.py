import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pluripot import geometry as geo, green, psh
from pluripot.green import GreenError

mp.mp.dps = 30


def _theta_green(x, y):
    """Unit square torus, Euclidean form: G = 2 (g - mean g) with
    g = -(1/2 pi) log|theta_1(pi z, e^{-pi})| + y^2/2."""
    q = mp.e ** (-mp.pi)
    z = mp.mpc(x, y)
    g = -mp.log(abs(mp.jtheta(1, mp.pi * z, q))) / (2 * mp.pi) + mp.mpf(y) ** 2 / 2
    s = mp.nsum(lambda n: mp.log(1 - mp.e ** (-2 * mp.pi * n)), [1, mp.inf])
    mean = -(mp.pi / 4 + s) / (2 * mp.pi) + mp.mpf(1) / 6
    return float(2 * (g - mean))


# frozen oracle value at the antipode (0.5, 0.5)
G_ANTIPODE = -0.1103178000763258


def _form(n=1, N=16):
    return geo.euclidean_form(geo.build_torus(n, resolution=N))


@pytest.fixture(scope="module")
def op1():
    return green.torus_operator(_form())


def test_oracle_self_consistency():
    assert _theta_green(0.5, 0.5) == pytest.approx(G_ANTIPODE, abs=1e-13)


@pytest.mark.parametrize("r", [(0.5, 0.5), (0.1, 0.2), (0.3, 0.05), (0.01, 0.0), (0.45, 0.25)])
def test_continuum_green_vs_theta(op1, r):
    val = green.green_continuum(op1, np.array([r]))[0]
    assert val == pytest.approx(_theta_green(*r), abs=1e-10)


def test_laplace_matrix_euclidean():
    assert np.allclose(green.laplace_matrix(0.5 * np.eye(1)), 0.5 * np.eye(2))


@pytest.mark.parametrize("t", [1.0, 0.1, 0.01, 1e-3])
def test_heat_two_routes(op1, t):
    r = np.random.default_rng(0).uniform(-0.5, 0.5, size=(20, 2))
    a = green.heat_kernel_images(op1, r, t)
    b = green.heat_kernel_fourier(op1, r, t)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)


@given(t=st.floats(0.01, 1.0))
@settings(max_examples=10)
def test_heat_mass_one(op1, t):
    # grid quadrature of a periodic analytic function is spectrally accurate
    M = geo.build_torus(1, resolution=64)
    x = M.coords().reshape(2, -1).T
    H = green.heat_kernel(op1, x, t)
    assert float(np.mean(H)) == pytest.approx(1.0, abs=1e-10)


def test_semigroup(op1):
    r = np.array([[0.1, 0.1], [0.3, 0.2]])
    assert green.semigroup_residual(_form(), r, 0.05, 0.02) <= 1e-8


def test_heat_report():
    rep = green.heat_trace_check(_form(), seed=0)
    assert rep.cauchy_schwarz_ok and rep.route_gap <= 1e-10
    d = rep.to_dict()
    assert set(d) >= {"t", "C0_empirical", "mass_error"}


@pytest.mark.parametrize("n, N", [(1, 16), (2, 8)])
def test_discrete_green_residual(n, N):
    G = green.torus_green((0,) * (2 * n), _form(n, N), continuum_inf=False)
    assert green.green_residual(G) <= 1e-6
    w = geo.volume(G.form).weights
    assert abs(float(np.sum(G.values * w))) <= 1e-8


def test_discrete_inf_converges(op1):
    infs = [green.torus_green((0, 0), _form(1, N), continuum_inf=False).inf_G for N in (32, 64)]
    exact = _theta_green(0.5, 0.5)
    e32, e64 = abs(infs[0] - exact), abs(infs[1] - exact)
    assert e64 < e32 / 3


def test_direct_lower_bound(op1):
    lb = green.direct_green_lower_bound(op1)
    assert lb <= G_ANTIPODE
    assert lb == pytest.approx(-0.1262, abs=1e-3)


def test_n2_constant_bound():
    with pytest.raises(GreenError):
        green.green_lower_bound_constant(1, 1, 1, 1)
    c = green.functional_constants(_form(2, 8), count=60, seed=0)
    G = green.torus_green((0, 0, 0, 0), _form(2, 8))
    assert green.green_lower_bound_constant(c.C_S, c.C_P, 2.0, 2) <= G.inf_G


def test_poincare_estimate_below_exact():
    c = green.functional_constants(_form(1, 16), count=100, seed=0)
    assert c.C_P <= c.C_P_exact * (1 + 1e-12)
    assert c.C_P_exact == pytest.approx(1 / (2 * math.pi**2), rel=1e-12)


def test_mean_value_on_dictionary():
    f = _form(1, 16)
    G = green.torus_green((3, 5), f)
    for v in green.psh_dictionary(f, 12, seed=0):
        assert green.mean_value_inequality(psh.make_function(f, v), G).holds


def test_mean_value_fails_for_non_psh():
    f = _form(1, 16)
    x = f.manifold.coords()
    G = green.torus_green((0, 0), f)
    bad = psh.make_function(f, 5 * np.cos(2 * np.pi * x[0]))
    assert not green.mean_value_inequality(bad, G).holds


def test_h1_constants():
    h1 = green.torus_h1_constants(_form(1, 16))
    assert h1.alpha == pytest.approx(math.pi) and h1.alpha_critical == pytest.approx(2 * math.pi)
    assert h1.A == pytest.approx(1.68494, abs=1e-4)
    with pytest.raises(GreenError):
        green.torus_h1_constants(_form(2, 8))


def test_h1_dominates_dictionary_integrals():
    f = _form(1, 32)
    h1 = green.torus_h1_constants(f)
    for v in green.psh_dictionary(f, 12, seed=1):
        v = v - v.max()
        assert float(np.mean(np.exp(-h1.alpha * v))) <= h1.A
