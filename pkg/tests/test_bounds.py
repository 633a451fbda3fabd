import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pluripot import bounds
from pluripot.bounds import HypothesisData, HypothesisError, OrliczFunctions

mp.mp.dps = 40

# frozen oracle: 1 + 4 e^{-3/2} (5 + e sqrt 2), evaluated with mpmath at 40 digits
M_UNIT = float(1 + 4 * mp.e ** mp.mpf(-1.5) * (5 + mp.e * mp.sqrt(2)))


def test_bn_values():
    assert bounds.bn_constant(1) == pytest.approx(4 / math.e**2, abs=1e-12)
    assert bounds.bn_constant(2) == pytest.approx(16 / math.e**2, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_bn_is_minimal(n):
    b = bounds.bn_constant(n)
    x = np.linspace(1e-3, 5, 20001)
    ratio = np.exp(-1 / x) / x ** (2 * n)
    assert ratio.max() <= b**n * (1 + 1e-12)
    assert ratio.max() >= b**n * (1 - 1e-6)


def test_unit_bound_matches_oracle():
    cert = bounds.kolodziej_bound(HypothesisData(1, 1.0, 1.0, 1.0, 2.0))
    assert cert.M == pytest.approx(M_UNIT, abs=1e-9)
    assert M_UNIT == pytest.approx(8.8937, abs=1e-4)


def test_n2_value():
    # same closed form evaluated independently: D = b^2 e^{1/2}, M = 1 + e D^{1/2} sqrt 2 + 5 D^{1/2}
    b = 16 / mp.e**2
    D = b**2 * mp.e ** mp.mpf(0.5)
    ref = 1 + mp.e * mp.sqrt(D) * mp.sqrt(2) + 5 * mp.sqrt(D)
    cert = bounds.kolodziej_bound(HypothesisData(2, 1.0, 1.0, 1.0, 2.0))
    assert cert.M == pytest.approx(float(ref), rel=1e-12)


@given(n=st.integers(1, 3), p=st.floats(1.1, 6), C=st.floats(0.1, 10), alpha=st.floats(0.1, 5),
       A=st.floats(1, 10))
def test_expanded_formula_agrees(n, p, C, alpha, A):
    cert = bounds.kolodziej_bound(HypothesisData(n, alpha, A, C, p))
    assert cert.M == pytest.approx(bounds.kolodziej_M_expanded(n, p, C, alpha, A), rel=1e-12)
    assert cert.extras["sharp_M"] <= cert.M


@given(C=st.floats(0.1, 10), f=st.floats(1.01, 3), A=st.floats(1, 10))
def test_bound_monotone_in_C_and_A(C, f, A):
    m = lambda C_, A_: bounds.kolodziej_bound(HypothesisData(1, 1.0, A_, C_, 2.0)).M
    assert m(C * f, A) > m(C, A)
    assert m(C, A * f) > m(C, A)


@pytest.mark.parametrize("kw", [dict(n=0, alpha=1, A=1, C=1), dict(n=1, alpha=0, A=1, C=1),
                                dict(n=1, alpha=1, A=0.5, C=1), dict(n=1, alpha=1, A=1, C=-1),
                                dict(n=1, alpha=1, A=1, C=1, p=1.0)])
def test_invalid_hypotheses(kw):
    with pytest.raises(HypothesisError):
        bounds.kolodziej_bound(HypothesisData(**kw))


def _scenario(rng):
    n = int(rng.integers(1, 3))
    D = float(np.exp(rng.uniform(-2, 3)))
    S = float(rng.uniform(1, 20))
    b = float(rng.uniform(0.05, 1.0))
    f, a, _ = bounds.admissible_log_profile(D, n, b, S, rng)
    return n, D, f


def test_iteration_on_admissible_profiles():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n, D, f = _scenario(rng)
        s0 = 0.0
        while math.e * D ** (1 / n) * math.exp(-f(s0)) >= 1:
            s0 += 0.5
        r = bounds.giorgio_iteration(f, D, n, s0)
        assert r.recursion_violations == 0
        assert r.s_infinity <= s0 + 5 * D ** (1 / n)
        assert r.s_infinity <= s0 + math.e**2 / (math.e - 1) * D ** (1 / n) + 1e-9


def test_iteration_rejects_low_start():
    with pytest.raises(HypothesisError):
        bounds.giorgio_iteration(lambda s: 0.0, 1.0, 1, 0.0)


def _chi_oracle(t, a):
    return float(mp.quad(lambda x: mp.log1p(x) ** a, [0, t]))


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 7.5, 120.0])
def test_chi_against_quadrature(t):
    o = OrliczFunctions(1, 1.0)
    assert o.chi(t) == pytest.approx(_chi_oracle(t, 2), rel=1e-10, abs=1e-14)
    assert o.chi_closed_form(t) == pytest.approx(_chi_oracle(t, 2), rel=1e-10, abs=1e-12)


def test_chi_zero_and_conjugate_at_one():
    o = OrliczFunctions(1, 1.0)
    assert o.chi(0.0) == 0.0
    assert o.chi_star(1.0) == pytest.approx(1.0, abs=1e-10)


@given(t=st.floats(1e-3, 1e3), eps=st.floats(0.2, 2.0), n=st.integers(1, 2))
def test_legendre_identity(t, eps, n):
    o = OrliczFunctions(n, eps)
    s = o.chi_prime(t)
    assert o.chi(t) + o.chi_star(s) == pytest.approx(t * s, rel=1e-9)


@given(x=st.lists(st.floats(0, 1e4), min_size=1, max_size=20))
def test_chi_many_matches_scalar(x):
    o = OrliczFunctions(1, 0.5)
    v = o.chi_many(np.array(x))
    ref = np.array([o.chi(t) for t in x])
    assert np.allclose(v, ref, rtol=1e-10, atol=1e-13)


def test_luxemburg_norm_of_constant():
    # ||c||_chi = c / chi^{-1}(1) for a probability measure
    o = OrliczFunctions(1, 1.0)
    w = np.full(10, 0.1)
    assert o.luxemburg_norm(np.full(10, 3.0), w) == pytest.approx(3.0 / o.chi_inverse(1.0), rel=1e-10)


def test_orlicz_certificate_finite_and_monotone():
    c1 = bounds.orlicz_bound(HypothesisData(1, 1.0, 1.0, 1.0, None, 1.0, "orlicz"))
    c2 = bounds.orlicz_bound(HypothesisData(1, 1.0, 1.0, 2.0, None, 1.0, "orlicz"))
    assert math.isfinite(c1.M) and c2.M > c1.M
