import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pluripot import geometry as geo, psh


def _torus(n=1, N=32):
    M = geo.build_torus(n, resolution=N)
    return M, geo.euclidean_form(M)


def _disk(M, c, r):
    x = M.coords()
    d2 = ((x[0] - c[0] + 0.5) % 1 - 0.5) ** 2 + ((x[1] - c[1] + 0.5) % 1 - 0.5) ** 2
    return d2 <= r * r


@pytest.mark.parametrize("k", [1, 2, 3])
def test_ddc_of_cosine(k):
    # d dbar cos(2 pi k x) = (1/4) d^2/dx^2; discrete symbol (2 cos(2 pi k h) - 2) / h^2
    M, f = _torus(1, 32)
    x = M.coords()
    h = 1 / 32
    v = np.cos(2 * np.pi * k * x[0])
    H = psh.ddc(psh.make_function(f, v))
    sym = (2 * math.cos(2 * math.pi * k * h) - 2) / h**2
    assert np.allclose(H[..., 0, 0].real, 0.25 * sym * v, atol=1e-10)
    assert np.allclose(H[..., 0, 0].imag, 0.0, atol=1e-12)


def test_ddc_hermitian_n2():
    M, f = _torus(2, 8)
    rng = np.random.default_rng(0)
    H = psh.ddc(psh.make_function(f, rng.normal(size=M.shape)))
    assert np.allclose(H, np.conj(np.swapaxes(H, -1, -2)), atol=1e-12)


def test_random_psh_is_psh():
    M, f = _torus()
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = psh.random_psh(f, rng)
        phi = psh.make_function(f, v)
        assert psh.is_psh(phi) and v.max() == 0.0


def test_normalizations():
    M, f = _torus(1, 8)
    v = np.arange(64.0).reshape(8, 8)
    assert psh.make_function(f, v, "sup-zero").values.max() == 0
    assert abs(psh.make_function(f, v, "mean-zero").values.mean()) < 1e-12


def test_lelong_analytic():
    assert psh.lelong_number(lambda p: np.log(np.hypot(p[:, 0], p[:, 1])), [0, 0]).value == pytest.approx(1, abs=1e-9)
    r2 = lambda p: np.sum(p**2, axis=1)
    assert psh.lelong_number(lambda p: np.log(r2(p)), [0, 0, 0, 0], n=2).value == pytest.approx(2, abs=1e-9)
    assert psh.lelong_number(lambda p: r2(p), [0, 0]).value == pytest.approx(0, abs=1e-9)


def test_lelong_grid():
    M, f = _torus(1, 256)
    x = M.coords()
    d2 = (x[0] - 0.5) ** 2 + (x[1] - 0.5) ** 2
    est = psh.lelong_number(psh.make_function(f, 0.1 * np.log(d2 + 1e-300)), [0.5, 0.5])
    assert est.value == pytest.approx(0.2, abs=5e-3)


def test_capacity_of_whole_space():
    M, f = _torus(1, 16)
    rep = psh.capacities(np.ones(M.shape, bool), f)
    assert rep.cap == 1.0 and rep.t_cap == 1.0


def test_capacity_of_empty_set():
    M, f = _torus(1, 16)
    rep = psh.capacities(np.zeros(M.shape, bool), f)
    assert rep.cap == 0.0 and rep.t_cap == 0.0


@pytest.mark.parametrize("r", [0.1, 0.25])
def test_capacity_two_routes(r):
    M, f = _torus(1, 24)
    K = _disk(M, (0.5, 0.5), r)
    a = psh.capacities(K, f).cap
    b, _ = psh.capacity_lp(K, f)
    assert a == pytest.approx(b, abs=1e-5)


def test_capacity_monotone():
    M, f = _torus(1, 24)
    caps = [psh.capacities(_disk(M, (0.5, 0.5), r), f) for r in (0.05, 0.1, 0.2, 0.3)]
    assert all(a.cap <= b.cap + 1e-7 for a, b in zip(caps, caps[1:]))
    assert all(a.t_cap <= b.t_cap + 1e-9 for a, b in zip(caps, caps[1:]))
    assert all(psh.capacity_comparison_holds(c) for c in caps)


@given(seed=st.integers(0, 10_000))
def test_capacity_vs_mass_random(seed):
    M, f = _torus(1, 16)
    phi = psh.make_function(f, psh.random_psh(f, np.random.default_rng(seed)))
    s = 0.3 * float(-phi.values.min())
    if s <= 0:
        return
    assert psh.capma_check(phi, s, 0.2)["holds"]


def test_sublevel():
    v = np.array([[-2.0, -1.0], [0.0, -0.5]])
    assert psh.sublevel(v, -0.75).tolist() == [[True, True], [False, False]]
