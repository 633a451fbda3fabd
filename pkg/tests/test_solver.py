import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pluripot import geometry as geo, solver
from pluripot.families import normalize_h
from pluripot.solver import SolverError, TrigMode

MODES1 = [TrigMode(0.01, (1, 0)), TrigMode(0.005, (1, 1), 0.3), TrigMode(0.003, (0, 2), 1.0)]


def _form(n=1, N=32):
    return geo.euclidean_form(geo.build_torus(n, resolution=N))


@pytest.mark.parametrize("n, N", [(1, 32), (2, 8)])
def test_trivial_density_gives_zero(n, N):
    sol = solver.solve_ma(solver.make_problem(_form(n, N)))
    assert np.max(np.abs(sol.values)) <= 1e-8


@given(a=st.floats(-3, 3))
@settings(max_examples=10)
def test_constant_density_lam1(a):
    sol = solver.solve_ma(solver.make_problem(_form(1, 16), f=math.exp(a), lam=1))
    assert np.allclose(sol.values, -a, atol=1e-9)


@pytest.mark.parametrize("lam", [0, 1])
def test_manufactured_second_order(lam):
    errs = []
    for N in (32, 64):
        prob, exact = solver.manufactured_problem(_form(1, N), MODES1, lam)
        sol = solver.solve_ma(prob)
        assert sol.residual <= prob.tol
        errs.append(solver.manufactured_error(sol, exact, lam))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_incompatible_mass_rejected():
    with pytest.raises(SolverError):
        solver.make_problem(_form(), f=2.0)


def test_nonpositive_density_rejected():
    with pytest.raises(SolverError):
        solver.make_problem(_form(), f=np.zeros((32, 32)), lam=1)


def test_normalize_mass():
    f = _form()
    F = solver.normalize_mass(f, np.exp(np.random.default_rng(0).normal(size=(32, 32))))
    solver.make_problem(f, F=F)


def test_comparison_principle():
    f = _form(1, 32)
    x = f.manifold.coords()
    prob = solver.make_problem(f, f=np.exp(0.3 * np.cos(2 * np.pi * x[0])), lam=1)
    sol = solver.solve_ma(prob)
    r = solver.comparison_check(sol.values - 0.5, sol.values + 0.5, prob)
    assert r["holds"]


@given(a=st.floats(-1, 1), b=st.floats(-1, 1), k=st.integers(1, 3))
@settings(max_examples=8)
def test_sup_bound(a, b, k):
    f = _form(1, 32)
    x = f.manifold.coords()
    h = normalize_h(f, a * np.cos(2 * np.pi * k * x[0]) + b * np.sin(2 * np.pi * x[1]))
    sol = solver.solve_ma(solver.make_problem(f, f=np.exp(h), lam=1))
    assert solver.sup_bound_check(sol, h)["holds"]


def test_degenerate_form_regularization():
    M = geo.build_torus(1, resolution=32)
    f = geo.degenerate_form(M, 0.0)
    F = solver.normalize_mass(f, np.ones(M.shape))
    prob = solver.make_problem(f, F=F, eta_t=0.5)
    assert prob.eta == pytest.approx(5e-4)


_BACKEND_SCRIPT = """
import json, numpy as np
from pluripot import _accel, geometry as geo, solver
f = geo.euclidean_form(geo.build_torus(1, resolution=32))
prob, exact = solver.manufactured_problem(f, [solver.TrigMode(0.01, (1, 0)), solver.TrigMode(0.005, (1, 1), 0.3)], 1)
sol = solver.solve_ma(prob)
print(json.dumps({"backend": _accel.BACKEND, "phi": sol.values.ravel().tolist()}))
"""


def test_backends_agree():
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, PLURIPOT_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT], env=env, capture_output=True, text=True,
                             check=True)
        d = json.loads(res.stdout)
        out[d["backend"]] = np.array(d["phi"])
    assert set(out) == {"numba", "numpy"}
    assert np.max(np.abs(out["numba"] - out["numpy"])) <= 1e-10


def test_regularized_solve():
    M = geo.build_torus(1, resolution=32)
    f = geo.degenerate_form(M, 0.0)
    prob = solver.make_problem(f, F=solver.normalize_mass(f, np.ones(M.shape)), eta_t=1.0)
    sol = solver.solve_ma(prob)
    assert sol.residual <= prob.tol
    assert float(np.sum(prob.F) * M.cell_volume) == pytest.approx(geo.volume(prob.form).V, rel=1e-12)
