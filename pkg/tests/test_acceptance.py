"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import time

import mpmath as mp
import numpy as np
import pytest

from pluripot import bounds, cli, densities as dn, families as fam, geometry as geo, green, psh, skoda, solver
from pluripot.bounds import HypothesisData, OrliczFunctions
from pluripot.solver import TrigMode

mp.mp.dps = 40


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return emit


def _torus_form(n, N):
    return geo.euclidean_form(geo.build_torus(n, resolution=N))


# 1 ------------------------------------------------------------------ constants

def test_criterion_01_constants(verdict):
    t0 = time.perf_counter()
    b1, b2 = bounds.bn_constant(1), bounds.bn_constant(2)
    M = bounds.kolodziej_bound(HypothesisData(1, 1.0, 1.0, 1.0, 2.0)).M
    ref = float(1 + 4 * mp.e ** mp.mpf(-1.5) * (5 + mp.e * mp.sqrt(2)))
    dt = time.perf_counter() - t0
    ok = (abs(b1 - 4 / math.e**2) <= 1e-12 and abs(b2 - 16 / math.e**2) <= 1e-12
          and abs(M - ref) <= 1e-9 and dt < 1.0)
    verdict(1, ok, f"b_1={b1:.15g} b_2={b2:.15g} M={M:.12g} |M-ref|={abs(M - ref):.2e} time={dt:.3f}s")


# 2 ------------------------------------------------------------------ iteration

def test_criterion_02_iteration(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_coarse, worst_sharp, violations = -math.inf, -math.inf, 0
    for _ in range(100):
        n = int(rng.integers(1, 3))
        D = float(np.exp(rng.uniform(-2, 3)))
        f, _, _ = bounds.admissible_log_profile(D, n, float(rng.uniform(0.05, 1.0)), float(rng.uniform(1, 20)), rng)
        s0 = 0.0
        while math.e * D ** (1 / n) * math.exp(-f(s0)) >= 1:
            s0 += 0.25
        r = bounds.giorgio_iteration(f, D, n, s0)
        violations += r.recursion_violations
        worst_coarse = max(worst_coarse, r.s_infinity - (s0 + 5 * D ** (1 / n)))
        worst_sharp = max(worst_sharp, r.s_infinity - (s0 + math.e**2 / (math.e - 1) * D ** (1 / n)))
    dt = time.perf_counter() - t0
    ok = worst_coarse <= 0 and worst_sharp <= 1e-9 and violations == 0 and dt < 1.0
    verdict(2, ok, f"max excess coarse={worst_coarse:.3g} sharp={worst_sharp:.3g} violations={violations} "
                   f"time={dt:.3f}s")


# 3 ------------------------------------------------------------------ Orlicz

def test_criterion_03_orlicz(verdict):
    t0 = time.perf_counter()
    o = OrliczFunctions(1, 1.0)  # chi'(t) = log(1+t)^{n+1}
    ts = np.geomspace(1e-3, 1e3, 20)
    err_prime = max(abs(o.chi_prime(t) - float(mp.log1p(t) ** 2)) for t in ts)
    # chi is the antiderivative: increments against mpmath quadrature
    grid = np.concatenate([[0.0], ts])
    err_anti = max(abs((o.chi(b) - o.chi(a)) - float(mp.quad(lambda u: mp.log1p(u) ** 2, [a, b])))
                   / max(1.0, o.chi(b)) for a, b in zip(grid[:-1], grid[1:]))
    err_leg = max(abs(o.chi(t) + o.chi_star(o.chi_prime(t)) - t * o.chi_prime(t)) / max(1.0, t * o.chi_prime(t))
                  for t in ts)
    chi0, cs1 = o.chi(0.0), o.chi_star(1.0)
    dt = time.perf_counter() - t0
    ok = chi0 == 0 and err_prime <= 1e-10 and err_anti <= 1e-10 and err_leg <= 1e-10 \
        and abs(cs1 - 1) <= 1e-10 and dt < 1.0
    verdict(3, ok, f"chi(0)={chi0} chi' err={err_prime:.2e} antiderivative err={err_anti:.2e} "
                   f"Legendre err={err_leg:.2e} chi*(1)={cs1:.12g} time={dt:.3f}s")


# 4 ------------------------------------------------------------------ solver

MODES = {
    1: [TrigMode(0.01, (1, 0)), TrigMode(0.005, (1, 1), 0.3), TrigMode(0.003, (0, 2), 1.0)],
    2: [TrigMode(0.01, (1, 0, 0, 0)), TrigMode(0.008, (0, 1, 1, 0), 0.3), TrigMode(0.006, (0, 0, 0, 1), 1.0),
        TrigMode(0.005, (1, 0, 0, 1), 0.7)],
}


def _ratio(n, grids, lam):
    errs = []
    for N in grids:
        prob, exact = solver.manufactured_problem(_torus_form(n, N), MODES[n], lam)
        errs.append(solver.manufactured_error(solver.solve_ma(prob), exact, lam))
    return errs[0] / errs[1]


def test_criterion_04_solver(verdict):
    r1 = [_ratio(1, (32, 64), lam) for lam in (0, 1)]
    t0 = time.perf_counter()
    r2 = [_ratio(2, (12, 24), lam) for lam in (0, 1)]
    dt2 = time.perf_counter() - t0
    triv = max(float(np.max(np.abs(solver.solve_ma(solver.make_problem(_torus_form(n, N))).values)))
               for n, N in ((1, 64), (2, 24)))
    ok = all(3.5 <= r <= 4.5 for r in r1 + r2) and triv <= 1e-8 and dt2 < 300
    verdict(4, ok, f"n=1 ratios={[round(r, 3) for r in r1]} n=2 ratios={[round(r, 3) for r in r2]} "
                   f"trivial sup|phi|={triv:.1e} n=2 time={dt2:.1f}s")


# 5 ------------------------------------------------------------------ capacities

def _sets(M):
    x = M.coords()

    def wrap(a, c):
        return (a - c + 0.5) % 1.0 - 0.5

    def disk(c, r):
        return wrap(x[0], c[0]) ** 2 + wrap(x[1], c[1]) ** 2 <= r * r

    def square(c, s):
        return (np.abs(wrap(x[0], c[0])) <= s) & (np.abs(wrap(x[1], c[1])) <= s)

    out = [disk((0.5, 0.5), r) for r in (0.03, 0.08, 0.15, 0.25, 0.4)]
    out += [square((0.3, 0.6), s) for s in (0.02, 0.06, 0.12, 0.2, 0.3)]
    out += [disk((0.25, 0.25), r) | disk((0.75, 0.7), r / 2) for r in (0.05, 0.1, 0.15, 0.2, 0.25)]
    out += [disk((0.5, 0.5), r) & ~disk((0.5, 0.5), r / 2) for r in (0.1, 0.16, 0.22, 0.3, 0.4)]
    out += [np.abs(wrap(x[0], 0.5)) <= w for w in (0.02, 0.05, 0.1, 0.2, 0.35)]
    return out


def test_criterion_05_capacity(verdict):
    t0 = time.perf_counter()
    f = _torus_form(1, 32)
    M = f.manifold
    full = psh.capacities(np.ones(M.shape, bool), f)
    v12 = [k for k, K in enumerate(_sets(M)) if not psh.capacity_comparison_holds(psh.capacities(K, f))]
    rng = np.random.default_rng(5)
    v13, cases = [], 0
    for j in range(5):
        phi = psh.make_function(f, psh.random_psh(f, rng))
        span = float(-phi.values.min())
        for frac, delta in ((0.1, 0.1), (0.25, 0.2), (0.4, 0.3), (0.55, 0.1), (0.7, 0.05)):
            cases += 1
            if not psh.capma_check(phi, frac * span, delta)["holds"]:
                v13.append((j, frac, delta))
    dt = time.perf_counter() - t0
    n_cases = len(_sets(M)) + cases
    ok = full.cap == 1.0 and full.t_cap == 1.0 and not v12 and not v13 and n_cases == 50 and dt < 120
    verdict(5, ok, f"Cap(X)={full.cap} T(X)={full.t_cap} cases={n_cases} capacity/extremal violations={len(v12)} "
                   f"capacity/mass violations={len(v13)} time={dt:.1f}s")


# 6 ------------------------------------------------------------------ Skoda

def _fd_eigs(beta, z, h=1e-4):
    f = lambda w: float(np.sum(np.abs(w) ** 2)) ** beta
    n = len(z)
    H = np.zeros((n, n), complex)
    e = np.eye(n)
    for j in range(n):
        for k in range(n):
            def d2(u, v):
                return (f(z + u + v) - f(z + u - v) - f(z - u + v) + f(z - u - v)) / (4 * h * h)
            xx, yy = d2(h * e[j], h * e[k]), d2(1j * h * e[j], 1j * h * e[k])
            xy, yx = d2(h * e[j], 1j * h * e[k]), d2(1j * h * e[j], h * e[k])
            H[j, k] = 0.25 * (xx + yy + 1j * (xy - yx))
    return np.sort(np.linalg.eigvalsh(H))


def test_criterion_06_skoda(verdict):
    t0 = time.perf_counter()
    _, f = geo.fubini_study_atlas(1, 32)
    reps = [skoda.projective_skoda_check(p) for p in skoda.skoda_dictionary(f, 30, seed=0)]
    strict = sum(r.lhs < r.rhs for r in reps)
    rng = np.random.default_rng(6)
    rnd = lambda: rng.normal(size=2) + 1j * rng.normal(size=2)
    kern = sum(skoda.kernel_inequality_check(rnd(), rnd(), d).holds for d in (0.25, 0.5, 0.75) for _ in range(100))
    err = 0.0
    for beta in (0.3, 0.5, 0.8, 1.5):
        for _ in range(5):
            z = rnd()
            ev = np.sort([v for v, m in skoda.power_hessian_eigenvalues(beta, z) for _ in range(m)])
            fd = _fd_eigs(beta, z)
            err = max(err, float(np.max(np.abs(ev - fd) / np.maximum(1.0, np.abs(ev)))))
    dt = time.perf_counter() - t0
    ok = len(reps) == 30 and strict == 30 and kern == 300 and err <= 1e-6 and dt < 60
    verdict(6, ok, f"projective strict={strict}/30 kernel pointwise={kern}/300 eigen FD err={err:.2e} "
                   f"time={dt:.1f}s")


# 7 ------------------------------------------------------------------ conic

def test_criterion_07_conic(verdict):
    t0 = time.perf_counter()
    ts = [10.0**-k for k in range(1, 7)]
    fit = skoda.conic_counterexample(ts)
    sup_err = max(abs(skoda.conic_sup(t)[0]) for t in ts)
    dt = time.perf_counter() - t0
    ok = abs(fit.slope - 0.5) <= 0.1 and sup_err <= 1e-8 and dt < 60
    verdict(7, ok, f"slope={fit.slope:.6f} max|sup phi_t|={sup_err:.1e} time={dt:.1f}s")


# 8 ------------------------------------------------------------------ densities

def test_criterion_08_densities(verdict):
    t0 = time.perf_counter()
    val, _ = dn.wt_integral(dn.SncLocalModel(p=1, a=(-1.0,)), 1.0, 0.25, 1e-6)
    exact = 1 / math.log(2) - 1 / math.log(1e6)
    ladder = [10.0**-k for k in (2, 4, 6, 8, 10, 12)]
    certs, rel = [], 0.0
    for p in (1, 2, 3):
        for dA in (0.0, 0.5, 0.9):
            c = dn.canonical_integrability(dn.SncLocalModel(p=p, a=(0.0,) * p), dA, ladder)
            certs.append(c)
            rel = max(rel, c.extras["max_rel_error"])
    for a, m in (((-1.0,), 1), ((-1.0, -0.5), 2), ((-0.5,), 2), ((-1.0, 0.0), 1), ((-1.0, -0.5, 0.0), 2)):
        certs.append(dn.h2prime_certificate(dn.SncLocalModel(p=len(a), a=a, m=m), 1.0, ladder))
    verdicts = {c.verdict for c in certs}
    dt = time.perf_counter() - t0
    ok = abs(val - exact) <= 1e-9 and verdicts == {"uniformly bounded"} and rel <= 1e-6 and dt < 60
    verdict(8, ok, f"wt={val:.12g} closed form={exact:.12g} ladders={len(certs)} verdicts={sorted(verdicts)} "
                   f"quadrature vs closed form={rel:.1e} time={dt:.1f}s")


# 9 ------------------------------------------------------------------ Green / heat

def test_criterion_09_green(verdict):
    t0 = time.perf_counter()
    res = max(green.green_residual(green.torus_green((0,) * (2 * n), _torus_form(n, N), continuum_inf=False))
              for n, N in ((1, 32), (2, 12)))
    r = np.array([[0.1, 0.1], [0.3, 0.2], [0.5, 0.5]])
    semi = max(green.semigroup_residual(_torus_form(1, 16), r, t, s) for t, s in ((0.05, 0.02), (0.2, 0.1)))
    f = _torus_form(1, 32)
    G = green.torus_green((0, 0), f)
    dic = green.psh_dictionary(f, 12, seed=0)
    reps = [green.mean_value_inequality(psh.make_function(f, v), G) for v in dic]
    held = sum(rp.holds for rp in reps)
    dt = time.perf_counter() - t0
    ok = res <= 1e-6 and semi <= 1e-8 and held == len(dic) and dt < 120
    verdict(9, ok, f"Delta G residual={res:.1e} semigroup={semi:.1e} mean-value held {held}/{len(dic)} "
                   f"(min slack {min(rp.min_slack for rp in reps):.3g}) time={dt:.1f}s")


# 10 ----------------------------------------------------------------- families

def test_criterion_10_families(verdict):
    t0 = time.perf_counter()
    f = _torus_form(1, 64)
    x = f.manifold.coords()
    gt = fam.general_type_family([0.5, 0.25, 0.125, 0.0625],
                                 lambda t: (1 + t) * np.sin(2 * np.pi * x[0]) + t * np.cos(2 * np.pi * x[1]), f)
    a = gt.diagnostics["sup_bound_all"]
    cusp = fam.cusp_exponent()
    b = abs(cusp.kappa - 2.0) <= 0.05
    cy = fam.cy_oscillation([0.5, 0.25, 0.125, 0.0625], form=f).diagnostics
    c = cy["sup_osc"] <= cy["M"]
    _, rep = fam.collapsing_fibration(resolution=24)
    e = rep.extras
    d = (len(rep.t) == 4 and e["strictly_decreasing"] and e["final_over_initial"] < 0.1 and e["single_g"]
         and max(e["vt_error"]) <= 1e-12)
    dt = time.perf_counter() - t0
    ok = a and b and c and d and dt < 900
    verdict(10, ok, f"(a) sup bound={a} (b) kappa={cusp.kappa:.5f} (c) osc={cy['sup_osc']:.4g}<=C={cy['M']:.4g} "
                    f"(d) ladder={[float(v) for v in rep.t]} L1={[float(f'{v:.3g}') for v in rep.distance]} "
                    f"final/initial={e['final_over_initial']:.3f} g_hat={e['g_hat']:.4g} "
                    f"V_t err={max(e['vt_error']):.1e} time={dt:.1f}s")


# 11 ----------------------------------------------------------------- determinism

def test_criterion_11_determinism(verdict, tmp_path):
    codes = [cli.main(["--seed", "0", "--output", str(tmp_path / d), "all"]) for d in ("a", "b")]
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.json"))
    same = [(tmp_path / "a" / p).read_bytes() == (tmp_path / "b" / p).read_bytes() for p in files]
    ok = codes == [0, 0] and len(files) > 10 and all(same)
    verdict(11, ok, f"exit codes={codes} JSON reports={len(files)} byte-identical={sum(same)}/{len(files)}")
