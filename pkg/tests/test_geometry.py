import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pluripot import geometry as geo
from pluripot.geometry import GeometryError


@pytest.mark.parametrize("n, V", [(1, 1.0), (2, 2.0)])
def test_euclidean_volume(n, V):
    M = geo.build_torus(n, resolution=8)
    assert geo.volume(geo.euclidean_form(M)).V == pytest.approx(V, rel=1e-14)


@given(s=st.floats(0.1, 10), n=st.integers(1, 2))
def test_volume_scales_like_power(s, n):
    M = geo.build_torus(n, resolution=8)
    V1 = geo.volume(geo.euclidean_form(M)).V
    assert geo.volume(geo.euclidean_form(M, s)).V == pytest.approx(s**n * V1, rel=1e-12)


@given(a=st.floats(0.5, 3), b=st.floats(-1, 1), d=st.floats(0.5, 3))
def test_volume_equals_covolume(a, b, d):
    M = geo.build_torus(1, np.array([[a, b], [0.0, d]]), 8)
    rep = geo.volume(geo.euclidean_form(M))
    assert rep.V == pytest.approx(abs(a * d), rel=1e-12)
    assert rep.check()


@given(t=st.floats(1e-4, 5))
def test_fibration_volume_is_binomial(t):
    M = geo.build_torus(2, resolution=8)
    assert geo.volume(geo.fibration_form(M, t)).V == pytest.approx(2 * t + 2 * t * t, abs=1e-12)
    assert geo.vt_expansion(t) == pytest.approx(2 * t + 2 * t * t, abs=1e-12)


def test_product_kind():
    assert geo.build_torus(2, resolution=8).kind == "product-fibration"


@pytest.mark.parametrize("t", [0.0, 0.1, 1.0])
def test_degenerate_form_volume(t):
    M = geo.build_torus(1, resolution=16)
    f = geo.degenerate_form(M, t)
    assert geo.volume(f).V == pytest.approx(1.0 + t, rel=1e-12)
    assert f.flag == ("kahler" if t > 0 else "semipositive")


def test_negative_form_rejected():
    M = geo.build_torus(1, resolution=8)
    with pytest.raises(GeometryError):
        geo.make_form(M, -np.ones(tuple(M.shape) + (1, 1)))


def test_coarse_grid_rejected():
    with pytest.raises(GeometryError):
        geo.build_torus(1, resolution=4)


def test_fubini_study_volume_converges():
    errs = [abs(geo.volume(geo.fubini_study_atlas(1, r)[1]).V - 1.0) for r in (16, 32)]
    assert errs[1] < 1e-3 and errs[1] < errs[0] / 4


@given(x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_chart_transition_is_isometry(x, y):
    z = np.array([[complex(x, y)]])
    if abs(z[0, 0]) < 1e-3:
        return
    assert geo.transition_residual(z, 0, 1) <= 1e-12


def test_partition_of_unity():
    M, _ = geo.fubini_study_atlas(1, 16)
    # every chart point is covered; the weights are bounded by one
    for c in M.charts:
        w = geo.chart_weights(c)
        assert np.all((w >= 0) & (w <= 1))


def test_config_and_csv(tmp_path):
    M, f = geo.manifold_from_config({"kind": "torus", "n": "1", "resolution": "8",
                                     "period_matrix": "2 0; 0 1"})
    assert M.covolume == pytest.approx(2.0)
    v = np.arange(M.size, dtype=float).reshape(M.shape)
    path = tmp_path / "g.csv"
    geo.dump_grid_csv(M, v, path)
    rows = list(csv.reader(open(path)))
    assert rows[0][-1] == "value" and len(rows) == M.size + 1
    assert float(rows[-1][-1]) == M.size - 1
