"""Degenerating-family experiments on torus models.

Each experiment solves a ladder of Monge-Ampere problems indexed by ``t``
decreasing to zero and compares the solutions with the uniform estimates
expected of the family: two-sided bounds for general-type families, the
``log log`` cusp profile, uniform oscillation bounds for Calabi-Yau type
families and convergence of potentials and currents in non-collapsing and
collapsing limits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_bvp

from .bounds import HypothesisData, OrliczFunctions, kolodziej_bound, orlicz_bound
from .densities import SncLocalModel, h2prime_certificate
from .geometry import (build_torus, degenerate_form, euclidean_form, fibration_form, make_form, volume,
                       vt_expansion)
from .green import torus_h1_constants
from .psh import QuasiPshFunction, ddc
from .solver import MaProblem, MaSolution, comparison_check, make_problem, solve_ma


class FamilyError(ValueError):
    """Rejected family data."""


# ---------------------------------------------------------------- containers

@dataclass
class FamilyExperiment:
    kind: str
    ladder: np.ndarray
    problems: list
    solutions: list
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ladder": self.ladder.tolist(), "diagnostics": _jsonable(self.diagnostics)}


@dataclass
class ConvergenceReport:
    t: np.ndarray
    distance: np.ndarray
    pairing: np.ndarray
    rate: float
    verdict: str
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "distance": self.distance.tolist(), "pairing": self.pairing.tolist(),
                "rate": self.rate, "verdict": self.verdict, "extras": _jsonable(self.extras)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def check_ladder(ladder) -> np.ndarray:
    t = np.asarray(ladder, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(t <= 0) or np.any(np.diff(t) >= 0):
        raise FamilyError("ladders must be strictly decreasing positive sequences")
    return t


def convergence_verdict(distance, tail=3) -> str:
    d = np.asarray(distance, dtype=float)
    if d.size >= tail and np.all(np.diff(d[-tail:]) < 0):
        return "converges"
    return "inconclusive"


def fitted_rate(t, d) -> float:
    """Slope of ``log d`` against ``log t``."""
    t, d = np.asarray(t, float), np.asarray(d, float)
    ok = d > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(t[ok]), np.log(d[ok]), 1)[0])


def _solve_ladder(build, ladder, workers=1) -> list:
    """Solve ``build(t)`` for every ``t``; results keep ladder order."""
    def one(t):
        prob = build(t)
        return prob, solve_ma(prob)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, ladder))
    return [one(t) for t in ladder]


def _nu_weights(form) -> np.ndarray:
    """Weights of the probability measure ``omega^n / V`` on the grid."""
    w = np.broadcast_to(volume(form).weights, form.manifold.shape)
    return w / w.sum()


# ---------------------------------------------------------------- general type

def normalize_h(form, h) -> np.ndarray:
    """Shift ``h`` so that ``e^h omega^n / V`` is a probability measure on the grid."""
    w = _nu_weights(form)
    return h - math.log(float(np.sum(np.exp(h) * w)))


def general_type_family(ladder, h_family, form=None, p=2.0, workers=1, h_bound=None) -> FamilyExperiment:
    """``(omega + dd^c phi_t)^n = e^{phi_t + h_t} omega^n`` along a ladder.

    ``h_family(t)`` returns a grid field; it is shifted so that
    ``e^{h_t} omega^n / V`` has mass one.  Checks per member
    ``0 <= sup phi_t <= -inf h_t`` and ``phi_t >= sup phi_t - M`` with ``M``
    the L^p bound for densities ``<= e^{osc h}`` and the Green-function
    exponential integrability constants; hence ``||phi_t|| <= max(M, -inf h)``.

    Raises
    ------
    FamilyError
        When some ``h_t`` is not finite, or when ``sup |h_t|`` exceeds
        ``h_bound`` (if given) or grows by a factor above 10 along the ladder.
    """
    t = check_ladder(ladder)
    form = euclidean_form(build_torus(1, resolution=64)) if form is None else form
    hs = [np.asarray(h_family(ti), dtype=float) for ti in t]
    sizes = np.array([float(np.max(np.abs(h))) if np.all(np.isfinite(h)) else math.inf for h in hs])
    if not np.all(np.isfinite(sizes)):
        raise FamilyError("h_t must be finite")
    if h_bound is not None and sizes.max() > h_bound:
        raise FamilyError(f"sup |h_t| = {sizes.max():.6g} exceeds the declared bound {h_bound}")
    if sizes[-1] > 10.0 * max(sizes[0], 1.0) and np.all(np.diff(sizes) > 0):
        raise FamilyError("h_t is not uniformly bounded along the ladder")
    hs = [normalize_h(form, h) for h in hs]
    osc = max(float(h.max() - h.min()) for h in hs)
    h1 = torus_h1_constants(form)
    cert = kolodziej_bound(HypothesisData(form.manifold.n, h1.alpha, h1.A, math.exp(osc), p))
    pairs = _solve_ladder(lambda k: make_problem(form, f=np.exp(hs[k]), lam=1), range(len(t)), workers)
    rows = []
    for (prob, sol), h in zip(pairs, hs):
        v = sol.values
        sup = float(v.max())
        bound = -float(h.min())
        rows.append({"sup": sup, "inf": float(v.min()), "sup_bound": bound,
                     "sup_bound_holds": bool(-1e-9 <= sup <= bound + 1e-9),
                     "lower": bool(float(v.min()) - sup >= -cert.M),
                     "sup_norm": float(np.max(np.abs(v))), "residual": sol.residual})
    sup_norm = max(r["sup_norm"] for r in rows)
    total = max(cert.M, max(r["sup_bound"] for r in rows))
    diag = {"members": rows, "M": cert.M, "alpha": h1.alpha, "A": h1.A, "C": math.exp(osc),
            "sup_norm": sup_norm, "uniform_bound": total,
            "sup_bound_all": all(r["sup_bound_holds"] for r in rows),
            "bound_holds": bool(sup_norm <= total and all(r["lower"] for r in rows)),
            "slack": total - sup_norm}
    return FamilyExperiment("general-type", t, [p for p, _ in pairs], [s for _, s in pairs], diag)


# ---------------------------------------------------------------- cusp exponent

@dataclass
class CuspFit:
    kappa: float
    intercept: float
    r2: float
    rms: float
    conclusive: bool
    radii: np.ndarray
    values: np.ndarray

    def to_dict(self):
        return {"kappa": self.kappa, "intercept": self.intercept, "r2": self.r2, "rms": self.rms,
                "conclusive": self.conclusive}


def cusp_potential(r) -> np.ndarray:
    """``-2 log(-log |z|^2)``."""
    return -2.0 * np.log(-2.0 * np.log(r))


def cusp_exponent(radii=None, rho=None, r_out=0.5, u_in=-1e5, fit_rings=(8, 60)) -> CuspFit:
    """Fit ``phi ~ -kappa log(-log|z|) + b`` for the radial equation ``dd^c phi = e^phi rho i dz dzbar / |z|^2``.

    In ``u = log|z|`` the equation is ``phi_uu = 4 rho(u) e^phi``.  It is solved
    on the annulus ``u_in <= u <= log r_out`` with Dirichlet data of the cusp
    potential at the outer ring and a Neumann condition at the inner ring; the
    fit uses the dyadic rings ``|z| = 2^{-k}``.  ``rho = 2`` makes
    ``-2 log(-log|z|^2)`` an exact solution.

    A fit with ``R^2 < 0.99`` is inconclusive unless its rms residual is below
    1e-3 (a flat profile, where ``R^2`` carries no information).
    """
    rho = (lambda u: 2.0 * np.ones_like(u)) if rho is None else rho
    u_out = math.log(r_out)
    phi_out = float(cusp_potential(r_out))
    # s = log(-u) compresses the long annulus; phi_ss - phi_s = 4 rho u^2 e^phi
    s_in, s_out = math.log(-u_in), math.log(-u_out)

    def ode(s, y):
        u = -np.exp(s)
        return np.vstack([y[1], y[1] + 4.0 * rho(u) * u * u * np.exp(y[0])])

    def bc(ya, yb):
        # outer ring at s_out (small s), inner ring at s_in: phi_u = 0  <=>  phi_s = 0
        return np.array([ya[0] - phi_out, yb[1]])

    s = np.linspace(s_out, s_in, 4000)
    y0 = np.vstack([phi_out - 2.0 * (s - s_out), -2.0 * np.ones_like(s)])
    sol = solve_bvp(ode, bc, s, y0, tol=1e-10, max_nodes=200_000)
    if not sol.success:
        raise FamilyError(f"cusp ODE did not converge: {sol.message}")
    radii = 2.0 ** -np.arange(fit_rings[0], fit_rings[1] + 1, dtype=float) if radii is None else np.asarray(radii)
    sr = np.log(-np.log(radii))
    vals = sol.sol(sr)[0]
    X = np.log(-np.log(radii))
    coef = np.polyfit(X, vals, 1)
    res = vals - np.polyval(coef, X)
    sst = float(np.sum((vals - vals.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / sst if sst > 0 else 1.0
    rms = float(np.sqrt(np.mean(res**2)))
    return CuspFit(float(-coef[0]), float(coef[1]), r2, rms, bool(r2 >= 0.99 or rms <= 1e-3), radii, vals)


# ---------------------------------------------------------------- stable families

def section_norm2(M, center=None, scale=None) -> np.ndarray:
    """``|s|^2`` on a one-dimensional torus: ``scale (sin^2 pi(x-a) + sin^2 pi(y-b)) / pi^2``.

    The zero sits at a cell centre so that every grid value is finite.
    """
    h = M.spacing_u
    a = np.array([0.5 * h[0], 0.5 * h[1]]) if center is None else np.asarray(center)
    u = M.grid_u()
    base = (np.sin(np.pi * (u[0] - a[0])) ** 2 + np.sin(np.pi * (u[1] - a[1])) ** 2) / np.pi**2
    return base if scale is None else scale * base


def loglog_psi(log_s2) -> np.ndarray:
    """``psi = -log(-log |s|^2)`` from ``log |s|^2``."""
    return -np.log(-np.asarray(log_s2))


def _min_hessian(form, v) -> float:
    H = ddc(QuasiPshFunction(form, v))
    return float(np.min(np.real(H[..., 0, 0])))


def scaled_section(form, coefficient) -> tuple:
    """Rescale the metric on ``O(D)`` until ``coefficient * psi`` is ``omega/2``-psh on the grid.

    Returns ``(log(|s|^2 + delta), K)`` with ``|s|^2 = e^{-K} |s_0|^2`` and
    ``delta = e^{-K} h^2``.  The grid-scale regularization makes
    ``log(|s_0|^2 + h^2)`` strictly psh, which removes the stencil defect of
    the harmonic ``log|z - a|^2`` next to the pole; since the regularized
    ``psi`` dominates the singular one, lower bounds through it are stronger.
    The remaining negative part is the curvature term, of size ``1/K``.
    """
    M = form.manifold
    g = float(np.real(np.asarray(form.coeffs)).ravel()[0])
    h2 = float(np.min(M.spacing_u)) ** 2
    log_base = np.log(section_norm2(M) + h2)
    for k in range(1, 40):
        K = 2.0 ** (0.5 * k)
        log_s2 = log_base - K
        if log_s2.max() < 0 and 0.5 * g + coefficient * _min_hessian(form, loglog_psi(log_s2)) >= 0:
            return log_s2, K
    raise FamilyError("could not scale the section")


def _stable_density(model: SncLocalModel, s2, t) -> np.ndarray:
    """Density ``(|t_1|^2 + t)^{a}`` relative to ``omega`` (``a`` from the first branch)."""
    return (s2 + t) ** float(model.a[0])


def stable_family_bound(ladder, model: SncLocalModel, eps=1.0, form=None, certificate=None,
                        workers=1) -> FamilyExperiment:
    """Uniform lower bound ``phi_t >= (n+1+2 eps) psi - C_eps`` by the subsolution pipeline.

    The desk model lives on the one-dimensional unit torus: ``mu_t`` has density
    ``(|s|^2 + t)^{a}`` with ``a`` the first discrepancy of ``model``.  For
    ``a = -1`` (lc branch) each ``t`` solves
    ``(omega/2 + dd^c u) = e^{u + (n+1+2eps) psi} mu_t``, sets
    ``v = u + (n+1+2eps) psi`` and checks that ``v`` is a discrete subsolution
    lying below the solution ``phi_t`` of ``(omega + dd^c phi) = e^phi mu_t``.
    ``C_eps`` is the largest ``||u_t||`` over the ladder.  For klt models
    (``a > -1``) no ``log log`` term is used and the uniform sup norm is reported.

    ``certificate`` defaults to the (H2') certificate of ``model`` on the same
    ladder; an unbounded or missing certificate is rejected.
    """
    t = check_ladder(ladder)
    form = euclidean_form(build_torus(1, resolution=64)) if form is None else form
    M = form.manifold
    if M.n != 1:
        raise FamilyError("the stable desk model is one-dimensional")
    a = float(model.a[0])
    lc = bool(a <= -1.0)
    if certificate is None:
        certificate = h2prime_certificate(model, eps, t) if lc else "klt"
    if certificate is None or (lc and getattr(certificate, "verdict", "") != "uniformly bounded"):
        raise FamilyError("a uniform (H2') certificate is required")
    n = M.n
    coef = (n + 1 + 2 * eps) if lc else 0.0
    log_s2, scale = scaled_section(form, max(coef, 1.0))
    psi = loglog_psi(log_s2)
    s2 = section_norm2(M)
    half = euclidean_form(M, 0.5)
    dens0 = np.broadcast_to(volume(form).weights, M.shape) / M.cell_volume
    rows = []

    def build_pair(ti):
        mu = _stable_density(model, s2, ti) * dens0
        full = make_problem(form, F=mu, lam=1, tol=1e-9)
        shifted = make_problem(half, F=np.exp(coef * psi) * mu, lam=1, tol=1e-9)
        return full, shifted

    def one(ti):
        full, shifted = build_pair(ti)
        return full, solve_ma(full), shifted, solve_ma(shifted)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, t))
    else:
        results = [one(ti) for ti in t]
    o = OrliczFunctions(n, eps)
    h1 = torus_h1_constants(form)
    w = _nu_weights(form)
    for ti, (full, sol, shifted, usol) in zip(t, results):
        u = usol.values
        phi = sol.values
        v = u + coef * psi
        comp = comparison_check(v, phi, full, tol=1e-8)
        # Orlicz certificate for the shifted problem: density of its measure relative to nu
        Vh = float(np.sum(np.broadcast_to(volume(half).weights, M.shape)))
        g_rel = np.exp(u) * shifted.F * M.cell_volume / (w * Vh)
        lux = o.luxemburg_norm(g_rel, w)
        M_orl = orlicz_bound(HypothesisData(n, 2.0 * h1.alpha, h1.A, lux, None, eps, "orlicz")).M
        rows.append({"t": float(ti), "u_sup_norm": float(np.max(np.abs(u))), "u_osc": float(u.max() - u.min()),
                     "orlicz_M": M_orl, "luxemburg": lux, "comparison": comp["holds"],
                     "min_gap": comp["min_gap"], "phi_min": float(phi.min()), "u_sup": float(u.max()),
                     "C_measured": float(np.max(coef * psi - phi))})
    C_eps = max(r["u_sup_norm"] for r in rows)
    # certified: oscillation from the Orlicz bound plus the largest measured sup
    C_cert = max(r["orlicz_M"] for r in rows) + max(abs(r["u_sup"]) for r in rows)
    diag = {"members": rows, "C_eps": C_eps, "C_eps_certified": C_cert, "eps": eps, "lc": lc, "coefficient": coef, "scale": scale,
            "all_comparisons": all(r["comparison"] for r in rows),
            "bound_holds": all(r["C_measured"] <= C_eps + 1e-8 for r in rows),
            "osc_within_orlicz": all(r["u_osc"] <= r["orlicz_M"] for r in rows),
            "sup_norm": max(float(np.max(np.abs(s.values))) for _, s, _, _ in results)}
    return FamilyExperiment("stable-cusp", t, [r[0] for r in results], [r[1] for r in results], diag)


def epsilon_sweep(ladder, model: SncLocalModel, eps_values=(1.0, 0.5, 0.25, 0.125), form=None) -> dict:
    """Certified ``C_eps`` for decreasing ``eps``; the rate is the slope of ``log C`` against ``log eps``."""
    eps_values = np.asarray(eps_values, dtype=float)
    diags = [stable_family_bound(ladder, model, e, form).diagnostics for e in eps_values]
    C = np.array([d["C_eps_certified"] for d in diags])
    return {"eps": eps_values.tolist(), "C_eps_certified": C.tolist(),
            "C_eps_measured": [d["C_eps"] for d in diags], "rate": fitted_rate(eps_values, C),
            "grows": bool(np.all(np.diff(C) > 0))}


# ---------------------------------------------------------------- Calabi-Yau oscillation

def cy_oscillation(ladder, density_family=None, form=None, p=2.0, workers=1) -> FamilyExperiment:
    """``lam = 0`` ladder with densities ``e^{-c_t} mu_t``; ``osc phi_t <= M``.

    ``density_family(t)`` gives the density of ``mu_t`` relative to
    ``omega^n / V``; ``c_t = log int mu_t`` is recorded.  ``M`` is the L^p
    bound with the measured largest ``||e^{-c_t} mu_t||_p`` and the
    Green-function exponential integrability constants.

    Raises
    ------
    FamilyError
        If some density is not positive and finite (its mass cannot be matched).
    """
    t = check_ladder(ladder)
    form = euclidean_form(build_torus(1, resolution=64)) if form is None else form
    M = form.manifold
    if density_family is None:
        x = M.coords()
        density_family = lambda ti: np.exp(np.cos(2 * np.pi * x[0]) * (1 + ti))
    w = _nu_weights(form)
    dens, cs = [], []
    for ti in t:
        d = np.asarray(density_family(ti), dtype=float)
        if np.any(~np.isfinite(d)) or d.min() <= 0:
            raise FamilyError("mass-incompatible density")
        c = math.log(float(np.sum(d * w)))
        cs.append(c)
        dens.append(d * math.exp(-c))
    Cp = max(float(np.sum(w * d**p)) ** (1 / p) for d in dens)
    h1 = torus_h1_constants(form)
    cert = kolodziej_bound(HypothesisData(M.n, h1.alpha, h1.A, Cp, p))
    pairs = _solve_ladder(lambda k: make_problem(form, f=dens[k]), range(len(t)), workers)
    osc = [float(s.values.max() - s.values.min()) for _, s in pairs]
    diag = {"osc": osc, "sup_osc": max(osc), "M": cert.M, "C_p": Cp, "c_t": cs,
            "c_t_bounded": bool(max(abs(c) for c in cs) < math.inf), "c_t_spread": max(cs) - min(cs),
            "holds": bool(max(osc) <= cert.M), "alpha": h1.alpha, "A": h1.A,
            "residuals": [s.residual for _, s in pairs]}
    return FamilyExperiment("calabi-yau", t, [p_ for p_, _ in pairs], [s for _, s in pairs], diag)


# ---------------------------------------------------------------- non-collapsing

def noncollapsing_limit(ladder, resolution=64, density=None, form0=None) -> tuple:
    """Ladder ``omega_t = omega_0 + t omega_X`` with ``omega_0`` vanishing quadratically at one point.

    Solves ``(omega_t + dd^c phi_t) = V_t mu`` for a fixed probability measure
    ``mu`` (relative density ``density`` against ``omega_X``), normalized by
    ``sup phi_t = 0``.  The shared certificate uses ``nu = omega_X / V_X``:
    ``omega_t``-psh functions are ``K omega_X``-psh with
    ``K = sup_t sup omega_t / omega_X``, so (H1) holds with ``alpha / K``.

    Returns ``(FamilyExperiment, ConvergenceReport)``.

    Raises
    ------
    FamilyError
        If ``omega_0`` has nonpositive volume.
    """
    t = check_ladder(ladder)
    M = build_torus(1, resolution=resolution)
    flat = euclidean_form(M)
    x = M.coords()
    if density is None:
        density = 1.0 + 0.4 * np.cos(2 * np.pi * x[0]) * np.sin(2 * np.pi * x[1]) + 0.3 * np.sin(2 * np.pi * x[1])
    density = np.asarray(density, dtype=float)
    w = _nu_weights(flat)
    density = density / float(np.sum(density * w))
    make0 = (lambda s: degenerate_form(M, s)) if form0 is None else form0
    V0 = volume(make0(0.0)).V
    if not V0 > 0:
        raise FamilyError("omega_0 is not big")

    def build(s):
        f_s = make0(s)
        V = volume(f_s).V
        F = density * V / M.covolume
        return make_problem(f_s, F=F)

    sols = []
    probs = []
    for s in list(t) + [0.0]:
        prob = build(s)
        sol = solve_ma(prob)
        v = sol.values - sol.values.max()
        probs.append(prob)
        sols.append((sol, v))
    phi0 = sols[-1][1]
    dist = np.array([float(np.sum(np.abs(v - phi0) * w)) for _, v in sols[:-1]])
    far = _distance_from_zero(M) > 0.1
    local = np.array([float(np.max(np.abs(v - phi0)[far])) for _, v in sols[:-1]])
    # currents omega_s + dd^c phi_s paired with test functions (i dz dzbar = 2 dlambda)
    tests = [chi for chi, _ in pairing_dictionary(M)]
    currents = [np.real(np.asarray(p.form.coeffs)[..., 0, 0] + ddc(s.phi)[..., 0, 0]) for p, (s, _) in
                zip(probs, sols)]
    pair = lambda T, chi: 2.0 * float(np.sum(T * chi)) * M.cell_volume
    pairing = np.array([max(abs(pair(T, chi) - pair(currents[-1], chi)) for chi in tests) for T in currents[:-1]])
    K = max(float(np.max(np.real(np.asarray(make0(s).coeffs)).reshape(-1) / 0.5)) for s in t)
    h1 = torus_h1_constants(flat)
    Cp = float(np.sum(w * (density) ** 2)) ** 0.5
    cert = kolodziej_bound(HypothesisData(1, h1.alpha / K, h1.A, Cp, 2.0))
    sup_norms = [float(np.max(np.abs(v))) for _, v in sols[:-1]]
    predicted = dist[-2] ** 2 / dist[-3] if len(dist) >= 3 and dist[-3] > 0 else math.nan
    extras = {"local_sup": local, "M": cert.M, "sup_norms": sup_norms, "K": K, "V0": V0,
              "bound_holds": bool(max(sup_norms) <= cert.M),
              "predicted_last": predicted,
              "extrapolation_ok": bool(dist[-1] < 2.0 * predicted) if np.isfinite(predicted) else False,
              "monotone": bool(np.all(np.diff(dist) < 0))}
    rep = ConvergenceReport(t, dist, pairing, fitted_rate(t, dist), convergence_verdict(dist), extras)
    exp = FamilyExperiment("non-collapsing", t, probs, [s for s, _ in sols], {"certificate_M": cert.M})
    return exp, rep


def _distance_from_zero(M) -> np.ndarray:
    u = M.grid_u()
    d = u - np.round(u)
    x = np.einsum("ab,b...->a...", M.period_matrix, d)
    return np.sqrt(np.sum(x * x, axis=0))


# ---------------------------------------------------------------- collapsing fibration

def default_collapsing_density(M) -> np.ndarray:
    """``1 + 0.3 cos(2 pi x1) cos(2 pi x2) + 0.2 sin(2 pi y2)`` on the unit 4-torus."""
    x = M.coords()
    return 1.0 + 0.3 * np.cos(2 * np.pi * x[0]) * np.cos(2 * np.pi * x[2]) + 0.2 * np.sin(2 * np.pi * x[3])


def base_potential(M, mu) -> tuple:
    """Solve ``omega_Z + dd^c u = f_* mu`` on the base spectrally.

    Base coordinates are the last two real axes; ``omega_Z`` is Euclidean so
    the equation reads ``(1/2) Delta u = f_* mu - 1``.  Returns
    ``(u, pushforward, residual)``.
    """
    push = mu.mean(axis=(0, 1))
    rhs = push - push.mean()
    N2, N3 = push.shape
    k2 = np.fft.fftfreq(N2, 1.0 / N2)
    k3 = np.fft.fftfreq(N3, 1.0 / N3)
    lap = -(2 * np.pi) ** 2 * (k2[:, None] ** 2 + k3[None, :] ** 2)
    R = np.fft.fft2(rhs)
    U = np.zeros_like(R)
    nz = lap != 0
    U[nz] = R[nz] / (0.5 * lap[nz])
    u = np.real(np.fft.ifft2(U))
    resid = float(np.max(np.abs(np.real(np.fft.ifft2(0.5 * lap * np.fft.fft2(u))) - rhs)))
    return u, push, resid


def pairing_dictionary(M, count=32, seed=0) -> list:
    """Smooth test ``(1,1)``-forms ``chi(x) beta`` with ``beta`` constant positive."""
    rng = np.random.default_rng(seed)
    u = M.grid_u()
    out = []
    for _ in range(count):
        k = rng.integers(-2, 3, size=M.real_dim)
        chi = 1.0 + 0.5 * np.cos(2 * np.pi * np.tensordot(k, u, axes=(0, 0)) + rng.uniform(0, 2 * np.pi))
        Z = rng.normal(size=(M.n, M.n)) + 1j * rng.normal(size=(M.n, M.n))
        out.append((chi, Z @ Z.conj().T / M.n))
    return out


def pair_current(T, eta, cell) -> float:
    """``int T ^ chi beta`` for ``(1,1)``-forms on a complex surface.

    With ``i dz_1 dzbar_1 ^ i dz_2 dzbar_2 = 4 dlambda``,
    ``T ^ beta = 4 (T_11 b_22 + T_22 b_11 - T_12 b_21 - T_21 b_12) dlambda``.
    """
    chi, b = eta
    s = T[..., 0, 0] * b[1, 1] + T[..., 1, 1] * b[0, 0] - T[..., 0, 1] * b[1, 0] - T[..., 1, 0] * b[0, 1]
    return float(np.real(np.sum(4.0 * chi * s)) * cell)


def collapsing_fibration(ladder=(0.2, 0.05, 0.0125, 0.003125), resolution=24, mu=None, region=0.25,
                         workers=1) -> tuple:
    """Collapsing limit on ``E_1 x E_2`` with ``omega_t = f^* omega_Z + t omega_X``.

    Returns ``(FamilyExperiment, ConvergenceReport)``.  The report's
    ``distance`` is ``||phi_t - f^* u||_{L^1}`` (mean-zero representatives,
    probability measure ``dlambda``) and ``pairing`` the largest discrepancy of
    ``omega_t + dd^c phi_t`` against ``f^*(omega_Z + dd^c u)`` over the test
    dictionary.

    Raises
    ------
    FamilyError
        If ``mu`` is not a probability density.
    """
    t = check_ladder(ladder)
    M = build_torus(2, resolution=resolution)
    mu = default_collapsing_density(M) if mu is None else np.asarray(mu, dtype=float)
    if np.any(~np.isfinite(mu)) or mu.min() <= 0 or abs(mu.mean() - 1.0) > 1e-10:
        raise FamilyError("mu must be a positive probability density")
    u, push, base_res = base_potential(M, mu)
    fu = np.broadcast_to(u[None, None, :, :], M.shape)
    cell = M.cell_volume
    dictionary = pairing_dictionary(M)
    # limiting current f^*(omega_Z + dd^c u): only the base block survives
    ub = QuasiPshFunction(euclidean_form(M), np.array(fu))
    Hu = ddc(ub)
    T_inf = np.zeros(tuple(M.shape) + (2, 2), dtype=complex)
    T_inf[..., 1, 1] = 0.5 + Hu[..., 1, 1]

    def build(ti):
        form = fibration_form(M, ti)
        V = volume(form).V
        return make_problem(form, F=V * mu)

    pairs = _solve_ladder(build, t, workers)
    dist, pairing, osc, vt_err, mass_err = [], [], [], [], []
    interior = _interior_base_mask(M, region)
    for ti, (prob, sol) in zip(t, pairs):
        phi = sol.values - sol.values.mean()
        dist.append(float(np.mean(np.abs(phi - (fu - fu.mean())))))
        H = ddc(sol.phi)
        T = np.asarray(prob.form.coeffs) + H
        pairing.append(max(abs(pair_current(T, eta, cell) - pair_current(T_inf, eta, cell)) for eta in dictionary))
        fib = phi.max(axis=(0, 1)) - phi.min(axis=(0, 1))
        osc.append(float(np.max(fib[interior])))
        V = volume(prob.form).V
        vt_err.append(abs(V - vt_expansion(ti)))
        det = np.real(np.linalg.det(T)) * 8.0
        pushed = det.mean(axis=(0, 1))
        mass_err.append(float(np.max(np.abs(pushed - V * push))))
    dist = np.array(dist)
    ratios = np.array(osc) / t
    g_hat = float(ratios.max())
    sandwich = [(ti * (1 + ti)) for ti in t]
    g_sand = max(1.0 + ti for ti in t)
    extras = {"fiber_osc": osc, "g_hat": g_hat, "osc_over_t": ratios,
              "single_g": bool(np.all(np.array(osc) <= g_hat * t + 1e-15)),
              "osc_ratio_spread": float(ratios.max() / max(ratios.min(), 1e-300)),
              "sandwich_density": sandwich, "sandwich_g": g_sand,
              "sandwich_holds": all(ti / g_sand <= s <= g_sand * ti for ti, s in zip(t, sandwich)),
              "vt_error": vt_err, "mass_pushforward_error": mass_err, "base_residual": base_res,
              "strictly_decreasing": bool(np.all(np.diff(dist) < 0)),
              "final_over_initial": float(dist[-1] / dist[0]),
              "residuals": [s.residual for _, s in pairs]}
    rep = ConvergenceReport(t, dist, np.array(pairing), fitted_rate(t, dist), convergence_verdict(dist), extras)
    exp = FamilyExperiment("collapsing-fibration", t, [p for p, _ in pairs], [s for _, s in pairs],
                           {"base_potential_sup": float(np.max(np.abs(u)))})
    return exp, rep


def _interior_base_mask(M, region) -> np.ndarray:
    """Base points at distance >= ``region`` from the base origin (a fixed interior region)."""
    N2, N3 = M.shape[2], M.shape[3]
    a = np.arange(N2) / N2
    b = np.arange(N3) / N3
    da = np.minimum(a, 1 - a)[:, None]
    db = np.minimum(b, 1 - b)[None, :]
    return np.sqrt(da**2 + db**2) >= region
