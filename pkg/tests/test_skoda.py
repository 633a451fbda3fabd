import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pluripot import geometry as geo, skoda
from pluripot.skoda import SkodaError

# frozen oracle: I(1/2) = 2 log 2 - 2 (closed form of the conic integral at t = 1/2)
I_HALF = 2 * math.log(2) - 2


def _conic_oracle(t):
    t = mp.mpf(t)
    phi = lambda a: (mp.log(a * a + a) + mp.log(t * t)) / 4 - mp.log(a * a + a + t * t) / 2 + mp.log(2) / 2
    dens = lambda a: (a * a + t * t * (4 * a + 1)) / (a * a + a + t * t) ** 2
    return float(mp.quad(lambda a: phi(a) * dens(a), [0, t * t, t, 1, mp.inf]))


@pytest.fixture(scope="module")
def p1():
    return geo.fubini_study_atlas(1, 32)[1]


def test_skoda_dictionary_holds(p1):
    reps = [skoda.projective_skoda_check(psi) for psi in skoda.skoda_dictionary(p1, 30, seed=0)]
    assert len(reps) == 30
    assert all(r.lhs < r.rhs for r in reps)


def test_skoda_on_zero(p1):
    # psi = 0: lhs = volume = 1, rhs = 4
    r = skoda.projective_skoda_check(skoda.atlas_function(p1, lambda X: np.zeros(X.shape[1:])))
    assert r.lhs == pytest.approx(1.0, abs=2e-3) and r.rhs == pytest.approx(4.0)


def test_skoda_requires_sup_zero(p1):
    with pytest.raises(SkodaError):
        skoda.projective_skoda_check(skoda.atlas_function(p1, lambda X: np.full(X.shape[1:], -1.0)))


def test_hyperplane_defect_sign():
    _, f = geo.fubini_study_atlas(1, 64)
    d05 = skoda.atlas_psh_defect(skoda.atlas_function(f, skoda.hyperplane_log([1, 1j], 0.5)))
    d15 = skoda.atlas_psh_defect(skoda.atlas_function(f, skoda.hyperplane_log([1, 1j], 1.5)))
    assert d05 == pytest.approx(0.5, abs=0.03)  # exact value 1 - c
    assert d15 < -0.4


def test_lelong_bound_value():
    assert skoda.lelong_bound_value(2.0, 3.0, 0.5, 2) == pytest.approx(3.0)
    with pytest.raises(SkodaError):
        skoda.lelong_bound_value(0.5, 1, 1, 1)


def _rand(rng, n=2):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def test_kernel_inequalities_sampled():
    rng = np.random.default_rng(0)
    for delta in (0.25, 0.5, 0.75):
        for _ in range(100):
            assert skoda.kernel_inequality_check(_rand(rng), _rand(rng), delta).holds


def test_kernel_orthogonal_branch():
    r = skoda.kernel_inequality_check(np.array([1, 0]), np.array([0, 1]), 0.5)
    assert r.G == pytest.approx(0.0, abs=1e-14) and r.holds


@given(x=st.floats(0.05, 3), delta=st.floats(0.05, 0.95))
def test_kernel_printed_mu_differs_by_r2(x, delta):
    r = skoda.kernel_inequality_check(np.array([1, x]), np.array([1, 0]), delta)
    assert r.mu_printed == pytest.approx(r.mu + r.r2, rel=1e-9, abs=1e-12)


def test_kernel_rejects_pole():
    with pytest.raises(SkodaError):
        skoda.kernel_inequality_check(np.array([1, 2j]), np.array([1, 2j]), 0.5)


def _fd_complex_hessian(f, z, h=1e-4):
    """Independent central-difference d dbar via Wirtinger derivatives."""
    n = len(z)
    H = np.zeros((n, n), complex)
    e = np.eye(n)
    for j in range(n):
        for k in range(n):
            def d(a, b):
                return f(z + a + b)
            dx_j, dy_j, dx_k, dy_k = h * e[j], 1j * h * e[j], h * e[k], 1j * h * e[k]
            xx = (d(dx_j, dx_k) - d(dx_j, -dx_k) - d(-dx_j, dx_k) + d(-dx_j, -dx_k)) / (4 * h * h)
            yy = (d(dy_j, dy_k) - d(dy_j, -dy_k) - d(-dy_j, dy_k) + d(-dy_j, -dy_k)) / (4 * h * h)
            xy = (d(dx_j, dy_k) - d(dx_j, -dy_k) - d(-dx_j, dy_k) + d(-dx_j, -dy_k)) / (4 * h * h)
            yx = (d(dy_j, dx_k) - d(dy_j, -dx_k) - d(-dy_j, dx_k) + d(-dy_j, -dx_k)) / (4 * h * h)
            H[j, k] = 0.25 * (xx + yy + 1j * (xy - yx))
    return H


@given(beta=st.floats(0.1, 2.0), seed=st.integers(0, 1000))
def test_power_hessian_matches_finite_differences(beta, seed):
    z = _rand(np.random.default_rng(seed))
    f = lambda w: float(np.sum(np.abs(w) ** 2)) ** beta
    fd = np.sort(np.linalg.eigvalsh(_fd_complex_hessian(f, z)))
    ev = np.sort([v for v, m in skoda.power_hessian_eigenvalues(beta, z) for _ in range(m)])
    assert np.allclose(fd, ev, rtol=1e-6, atol=1e-6)
    assert skoda.power_hessian_bound_holds(beta, z)


def test_power_constant():
    assert skoda.power_hessian_constant(0.5) == pytest.approx(4.0)
    assert skoda.power_hessian_constant(2.0) == pytest.approx(4.0)


def test_conic_against_oracles():
    m = skoda.conic_member(0.5)
    assert float(np.sum(m.values * m.weights)) == pytest.approx(I_HALF, abs=1e-9)
    assert float(np.sum(m.weights)) == pytest.approx(2.0, abs=1e-9)
    for t in (1e-2, 1e-4):
        mm = skoda.conic_member(t)
        assert float(np.sum(mm.values * mm.weights)) == pytest.approx(_conic_oracle(t), abs=1e-8)


def test_conic_fit_and_sup():
    ts = [10.0**-k for k in range(1, 7)]
    fit = skoda.conic_counterexample(ts)
    assert fit.slope == pytest.approx(0.5, abs=0.1)
    assert all(abs(skoda.conic_sup(t)[0]) <= 1e-8 for t in ts)
    assert fit.refinement_change < 1e-6


def test_conic_gap_unbounded():
    gt = skoda.sup_mean_gap(skoda.conic_family([10.0**-k for k in range(1, 7)]))
    assert not gt.bounded and gt.slope < -0.2


def test_conic_ladder_validation():
    with pytest.raises(SkodaError):
        skoda.conic_counterexample([0.1, 0.01])
