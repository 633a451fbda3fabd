"""Quasi-psh functions on grids: dd^c, Monge-Ampere measures, Lelong numbers,
extremal functions and capacities.

The complex Hessian of a grid function is built from centred second
differences in lattice coordinates and pulled back to real coordinates.  In
dimension one it reduces to ``phi_{z zbar} = Delta_h phi / 4`` with the 5-point
Laplacian, and then the discrete Monge-Ampere operator is linear, the discrete
maximum principle is exact and the envelope problems become discrete obstacle
problems solved by projected SOR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accel
from .geometry import GeometryError, ModelManifold, ReferenceForm, volume, volume_density

TOL_PSH = 1e-8
TOL_MASS = 1e-6


class PshError(ValueError):
    """Raised for functions that fail the discrete omega-psh test."""


@dataclass(frozen=True, eq=False)
class QuasiPshFunction:
    """Grid function together with its reference form.

    ``singular`` marks grid points carrying ``-inf`` (or an explicit log model);
    they are excluded from Hessian checks and quadrature.
    """

    form: ReferenceForm
    values: np.ndarray
    normalization: str = "none"
    singular: np.ndarray | None = None
    models: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def manifold(self) -> ModelManifold:
        return self.form.manifold

    def regular_mask(self) -> np.ndarray:
        m = np.isfinite(self.values)
        if self.singular is not None:
            m &= ~self.singular
        return m

    def shifted(self, c) -> "QuasiPshFunction":
        return QuasiPshFunction(self.form, self.values + c, "none", self.singular, self.models, dict(self.meta))


def make_function(form: ReferenceForm, values, normalization="none", singular=None, models=()):
    v = np.array(values, dtype=float)
    if v.shape != tuple(form.manifold.shape):
        raise GeometryError("values do not match the grid")
    if normalization == "sup-zero":
        v = v - np.max(v[np.isfinite(v)])
    elif normalization == "mean-zero":
        v = v - np.mean(v[np.isfinite(v)])
    return QuasiPshFunction(form, v, normalization, singular, tuple(models))


# ---------------------------------------------------------------- dd^c

def real_hessian(M: ModelManifold, v) -> np.ndarray:
    """Centred-difference real Hessian in x-coordinates, shape ``(*grid, 2n, 2n)``."""
    d = M.real_dim
    pairs = _accel.all_pairs(d)
    D = _accel.second_differences(np.asarray(v, dtype=float), M.spacing_u, pairs)
    Hu = np.empty(tuple(M.shape) + (d, d))
    for p, (a, b) in enumerate(pairs):
        Hu[..., a, b] = D[p]
        Hu[..., b, a] = D[p]
    if M.is_rectangular:
        L = np.diag(M.period_matrix)
        return Hu / np.outer(L, L)
    Pinv = M.hessian_transform
    return np.einsum("ac,...ab,bd->...cd", Pinv, Hu, Pinv)


def complex_from_real(H) -> np.ndarray:
    """``u_{jk} = ((H_xx + H_yy) + i (H_xy - H_yx)) / 4`` blockwise."""
    H = np.asarray(H)
    n = H.shape[-1] // 2
    X = H[..., 0::2, 0::2]
    Y = H[..., 1::2, 1::2]
    XY = H[..., 0::2, 1::2]
    YX = H[..., 1::2, 0::2]
    out = 0.25 * ((X + Y) + 1j * (XY - YX))
    return out.reshape(H.shape[:-2] + (n, n))


def ddc(phi) -> np.ndarray:
    """Complex Hessian field ``phi_{j kbar}`` (second-order accurate).

    Singular points (and their stencil neighbours) are returned as NaN.
    """
    if isinstance(phi, QuasiPshFunction):
        M, v = phi.manifold, phi.values
        bad = ~phi.regular_mask()
    else:
        raise TypeError("ddc expects a QuasiPshFunction")
    if not M.is_torus:
        raise GeometryError("ddc is implemented on tori")
    vv = np.where(bad, 0.0, v)
    out = complex_from_real(real_hessian(M, vv))
    if np.any(bad):
        spread = bad.copy()
        for a in range(M.real_dim):
            spread = spread | np.roll(bad, 1, a) | np.roll(bad, -1, a)
        # cross differences touch diagonal neighbours
        sp2 = spread.copy()
        for a in range(M.real_dim):
            sp2 = sp2 | np.roll(spread, 1, a) | np.roll(spread, -1, a)
        out[sp2] = np.nan
    return out


def patch_complex_hessian(v, spacing) -> np.ndarray:
    """Complex Hessian on the interior of a non-periodic rectangular patch.

    ``v`` has one axis per real coordinate; one layer of boundary points is
    dropped on every side.
    """
    v = np.asarray(v, dtype=float)
    d = v.ndim
    pairs = _accel.all_pairs(d)
    D = _accel.second_differences_numpy(v, np.asarray(spacing, dtype=float), pairs)
    H = np.empty(v.shape + (d, d))
    for p, (a, b) in enumerate(pairs):
        H[..., a, b] = D[p]
        H[..., b, a] = D[p]
    inner = tuple(slice(1, -1) for _ in range(d))
    return complex_from_real(H[inner])


def psh_defect(phi: QuasiPshFunction) -> float:
    """Most negative eigenvalue of ``g + dd^c phi`` over regular points (0 if none)."""
    g = phi.form.matrix_field()
    h = ddc(phi)
    ok = np.all(np.isfinite(h), axis=(-1, -2))
    lam = np.linalg.eigvalsh(g[ok] + h[ok])
    return float(min(0.0, lam.min())) if lam.size else 0.0


def is_psh(phi: QuasiPshFunction, tol=TOL_PSH) -> bool:
    return psh_defect(phi) >= -tol


# ---------------------------------------------------------------- measures

@dataclass
class PositiveMeasure:
    """Cell masses of a measure absolutely continuous w.r.t. the grid."""

    density: np.ndarray
    weights: np.ndarray
    mass: float
    mass_defect: float = 0.0
    absolutely_continuous: bool = True

    def of(self, mask) -> float:
        return float(np.sum(self.weights[mask]))


def ma_density_raw(form: ReferenceForm, hess) -> np.ndarray:
    """``n! 2^n det(g + hess)`` pointwise (density of the MA form vs Lebesgue)."""
    g = form.matrix_field()
    det = np.real(np.linalg.det(g + hess))
    return volume_density(form, det)


def ma_measure(form: ReferenceForm, phi: QuasiPshFunction, tol=TOL_PSH) -> PositiveMeasure:
    """Normalized Monge-Ampere measure ``V^{-1} (omega + dd^c phi)^n``.

    Raises
    ------
    PshError
        If ``omega + dd^c phi`` has an eigenvalue below ``-tol``.
    """
    M = form.manifold
    h = ddc(phi)
    ok = np.all(np.isfinite(h), axis=(-1, -2))
    h = np.where(ok[..., None, None], h, 0.0)
    lam = np.linalg.eigvalsh(form.matrix_field() + h)[..., 0]
    if np.min(lam[ok]) < -tol:
        raise PshError(f"omega + dd^c phi has eigenvalue {np.min(lam[ok]):.3g}: not omega-psh")
    V = volume(form).V
    dens = np.where(ok, ma_density_raw(form, h), 0.0) / V
    w = dens * M.cell_volume
    mass = float(np.sum(w))
    return PositiveMeasure(dens, w, mass, abs(mass - 1.0), True)


def ma_density_bruteforce(form: ReferenceForm, values, index) -> float:
    """Oracle: determinant at one grid point from explicit neighbour lookups."""
    M = form.manifold
    d = M.real_dim
    hu = M.spacing_u
    idx = np.array(index)
    v = np.asarray(values)

    def at(off):
        return v[tuple((idx + off) % np.asarray(M.shape))]

    Hu = np.zeros((d, d))
    for a in range(d):
        ea = np.eye(d, dtype=int)[a]
        Hu[a, a] = (at(ea) - 2 * at(0 * ea) + at(-ea)) / hu[a] ** 2
        for b in range(a + 1, d):
            eb = np.eye(d, dtype=int)[b]
            Hu[a, b] = Hu[b, a] = (at(ea + eb) - at(ea - eb) - at(-ea + eb) + at(-ea - eb)) / (4 * hu[a] * hu[b])
    Pinv = np.linalg.inv(M.period_matrix)
    Hx = Pinv.T @ Hu @ Pinv
    n = M.n
    C = np.zeros((n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            C[j, k] = 0.25 * (Hx[2 * j, 2 * k] + Hx[2 * j + 1, 2 * k + 1]) + 0.25j * (
                Hx[2 * j, 2 * k + 1] - Hx[2 * j + 1, 2 * k])
    g = np.asarray(form.matrix_field())[tuple(idx)]
    return math.factorial(n) * 2**n * float(np.real(np.linalg.det(g + C))) / volume(form).V


# ---------------------------------------------------------------- Lelong numbers

LELONG_KS = (2, 3, 4, 5, 6)
ANALYTIC_BASE_RADIUS = 2.0**-20


def _circle_means(evaluate, x0, radii, n, n_angles=256):
    """Mean of ``evaluate`` over spheres of the given radii around ``x0``."""
    d = 2 * n
    if n == 1:
        th = 2 * np.pi * (np.arange(n_angles) + 0.5) / n_angles
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        rng = np.random.default_rng(12345)
        g = rng.normal(size=(4 * n_angles, d))
        g = np.concatenate([g, -g])
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    out = []
    for r in radii:
        pts = np.asarray(x0, dtype=float)[None, :] + r * dirs
        out.append(float(np.mean(evaluate(pts))))
    return np.array(out)


@dataclass
class LelongEstimate:
    value: float
    raw: float
    slopes: np.ndarray
    radii: np.ndarray


def lelong_from_means(means, radii) -> LelongEstimate:
    """Secant slopes of sphere means in ``log r`` plus one Richardson step."""
    means = np.asarray(means)
    radii = np.asarray(radii)
    slopes = (means[:-1] - means[1:]) / np.log(radii[:-1] / radii[1:])
    rich = (4.0 * slopes[1:] - slopes[:-1]) / 3.0
    raw = float(rich[-1])
    return LelongEstimate(max(0.0, raw), raw, slopes, radii)


def lelong_number(phi, x, n=None, base_radius=None) -> LelongEstimate:
    """Lelong number of ``phi`` at ``x`` on the dyadic ladder ``r_k = rho 2^{-k}``.

    Parameters
    ----------
    phi : QuasiPshFunction or callable
        Grid functions (dimension one) are read by periodic bilinear
        interpolation with ``rho = 128 h`` so that the smallest radius is two
        cells.  Callables take points of shape ``(m, 2n)`` and use
        ``rho = 2^{-20}``.
    x : array_like
        Real coordinates of the base point.
    """
    if isinstance(phi, QuasiPshFunction):
        M = phi.manifold
        if M.n != 1 or not M.is_rectangular:
            raise GeometryError("grid Lelong numbers are implemented for rectangular 1-D tori")
        L = np.diag(M.period_matrix)
        h = float(np.max(L / np.asarray(M.shape)))
        rho = 2.0 ** (LELONG_KS[-1] + 1) * h if base_radius is None else base_radius
        if rho / 2.0 ** LELONG_KS[0] > 0.5 * float(np.min(L)):
            raise GeometryError("radius ladder leaves the fundamental domain")
        evaluate = lambda p: bilinear_periodic(M, phi.values, p)
        n = 1
    else:
        evaluate = phi
        rho = ANALYTIC_BASE_RADIUS if base_radius is None else base_radius
        n = 1 if n is None else n
    radii = rho * 2.0 ** -np.array(LELONG_KS, dtype=float)
    means = _circle_means(evaluate, np.asarray(x, dtype=float), radii, n)
    return lelong_from_means(means, radii)


def bilinear_periodic(M: ModelManifold, values, pts) -> np.ndarray:
    L = np.diag(M.period_matrix)
    Nx, Ny = M.shape
    fx = (pts[:, 0] / L[0] * Nx) % Nx
    fy = (pts[:, 1] / L[1] * Ny) % Ny
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx, ty = fx - i0, fy - j0
    i1, j1 = (i0 + 1) % Nx, (j0 + 1) % Ny
    v = values
    return ((1 - tx) * (1 - ty) * v[i0, j0] + tx * (1 - ty) * v[i1, j0]
            + (1 - tx) * ty * v[i0, j1] + tx * ty * v[i1, j1])


# ---------------------------------------------------------------- envelopes

def _n1_data(form: ReferenceForm):
    M = form.manifold
    if M.n != 1 or not M.is_rectangular:
        raise GeometryError("envelopes and capacities are implemented on rectangular 1-D tori")
    g = np.real(np.broadcast_to(np.asarray(form.coeffs)[..., 0, 0], tuple(M.shape))).astype(float)
    hx, hy = M.spacing_x
    return np.ascontiguousarray(g), float(hx), float(hy)


def laplacian5(u, hx, hy) -> np.ndarray:
    return ((np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / hx**2
            + (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / hy**2)


def obstacle_envelope(psi, form: ReferenceForm, start, omega=1.5, tol=1e-9, max_sweeps=100_000, kernel=None):
    """Largest ``u <= psi`` with ``g + Delta_h u / 4 >= 0`` by projected SOR.

    Returns
    -------
    u, info : ndarray, dict
        ``info`` holds the sweep count, last update and the complementarity
        residual ``max |min(psi - u, g + Delta_h u / 4)|``.
    """
    g, hx, hy = _n1_data(form)
    kern = _accel.psor_redblack if kernel is None else kernel
    u0 = np.array(np.broadcast_to(start, g.shape), dtype=float)
    u, sweeps, last = kern(u0, np.asarray(psi, dtype=float), 4.0 * g, 1.0 / hx**2, 1.0 / hy**2,
                           omega, tol, max_sweeps)
    slack = g + 0.25 * laplacian5(u, hx, hy)
    gap = np.where(np.isfinite(psi), psi - u, np.inf)
    comp = float(np.max(np.abs(np.minimum(gap, slack))))
    return u, {"sweeps": int(sweeps), "last_update": float(last), "complementarity": comp,
               "min_slack": float(slack.min()), "converged": bool(last < tol)}


def extremal_function(K, form: ReferenceForm, omega=1.5, tol=1e-9, max_sweeps=100_000) -> QuasiPshFunction:
    """Discrete global extremal function ``V_{K, omega}``.

    The largest discretely omega-sh grid function that is ``<= 0`` on ``K``.
    An empty ``K`` returns the ``+inf`` sentinel.
    """
    K = np.asarray(K, dtype=bool)
    if not K.any():
        v = np.full(K.shape, np.inf)
        return QuasiPshFunction(form, v, "none", meta={"empty": True})
    psi = np.where(K, 0.0, np.inf)
    u, info = obstacle_envelope(psi, form, 0.0, omega, tol, max_sweeps)
    return QuasiPshFunction(form, u, "none", meta=info)


def relative_extremal(K, form: ReferenceForm, omega=1.5, tol=1e-9, max_sweeps=100_000):
    """Largest omega-sh ``u`` with ``u <= 0`` everywhere and ``u <= -1`` on ``K``."""
    K = np.asarray(K, dtype=bool)
    psi = np.where(K, -1.0, 0.0)
    return obstacle_envelope(psi, form, -1.0, omega, tol, max_sweeps)


def ma_weights_n1(form: ReferenceForm, u) -> np.ndarray:
    """Cell masses of ``MA(u)`` in dimension one: ``2 (g + Delta_h u / 4) cell / V``."""
    g, hx, hy = _n1_data(form)
    M = form.manifold
    V = volume(form).V
    return 2.0 * (g + 0.25 * laplacian5(u, hx, hy)) * M.cell_volume / V


@dataclass
class CapacityReport:
    mask: np.ndarray
    cap: float
    t_cap: float
    sup_extremal: float
    extremal: QuasiPshFunction | None = None
    relative: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def to_record(self, set_id="K"):
        return {"set_id": set_id, "cap": self.cap, "t_cap": self.t_cap, "sup_extremal": self.sup_extremal}


def capacities(K, form: ReferenceForm, omega=1.5, tol=1e-9, max_sweeps=100_000) -> CapacityReport:
    """Monge-Ampere and Alexander-Taylor capacities of a grid set."""
    K = np.asarray(K, dtype=bool)
    if not K.any():
        return CapacityReport(K, 0.0, 0.0, math.inf, extremal_function(K, form))
    V = extremal_function(K, form, omega, tol, max_sweeps)
    sup_v = float(np.max(V.values))
    h, info = relative_extremal(K, form, omega, tol, max_sweeps)
    cap = float(np.sum(ma_weights_n1(form, h)[K]))
    cap = min(1.0, max(0.0, cap))
    t = math.exp(-max(sup_v, 0.0))
    return CapacityReport(K, cap, t, sup_v, V, h, {"extremal": V.meta, "relative": info})


def capacity_lp(K, form: ReferenceForm):
    """Oracle: maximize ``MA(u)(K)`` over omega-sh ``-1 <= u <= 0`` as a linear program."""
    from scipy.optimize import linprog
    from scipy.sparse import diags, identity, kron

    g, hx, hy = _n1_data(form)
    Nx, Ny = g.shape
    lap = _periodic_lap(Nx, Ny, hx, hy)
    w = ma_weights_n1(form, np.zeros_like(g))  # constant part
    V = volume(form).V
    cell = form.manifold.cell_volume
    # objective: maximize sum_K (2/V) cell (g + lap u / 4)
    Kf = np.asarray(K, dtype=bool).ravel()
    c = -(0.5 * cell / V) * (lap.T @ Kf.astype(float))
    res = linprog(c, A_ub=-0.25 * lap, b_ub=g.ravel(), bounds=[(-1.0, 0.0)] * (Nx * Ny), method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return float(np.sum(w.ravel()[Kf]) - res.fun), res.x.reshape(Nx, Ny)


def envelope_lp(K, form: ReferenceForm):
    """Oracle: the extremal function as the maximizer of ``sum u`` (linear program)."""
    from scipy.optimize import linprog

    g, hx, hy = _n1_data(form)
    Nx, Ny = g.shape
    lap = _periodic_lap(Nx, Ny, hx, hy)
    Kf = np.asarray(K, dtype=bool).ravel()
    bounds = [(None, 0.0) if k else (None, None) for k in Kf]
    res = linprog(-np.ones(Nx * Ny), A_ub=-0.25 * lap, b_ub=g.ravel(), bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(res.message)
    return res.x.reshape(Nx, Ny)


def _periodic_lap(Nx, Ny, hx, hy):
    from scipy.sparse import diags, identity, kron

    def d2(N, h):
        m = diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]).tolil()
        m[0, N - 1] = 1.0
        m[N - 1, 0] = 1.0
        return m.tocsr() / h**2

    return (kron(d2(Nx, hx), identity(Ny)) + kron(identity(Nx), d2(Ny, hy))).tocsr()


def capacity_dictionary_bound(K, form: ReferenceForm, dictionary) -> float:
    """Lower bound ``max_u MA(u)(K)`` over omega-sh ``0 <= u <= 1`` from a dictionary.

    Members violating the constraints are skipped.
    """
    g, hx, hy = _n1_data(form)
    K = np.asarray(K, dtype=bool)
    best = 0.0
    for u in dictionary:
        u = np.asarray(u, dtype=float)
        if u.min() < -1e-12 or u.max() > 1 + 1e-12:
            continue
        if np.min(g + 0.25 * laplacian5(u, hx, hy)) < -1e-12:
            continue
        best = max(best, float(np.sum(ma_weights_n1(form, u)[K])))
    return best


def default_dictionary(form: ReferenceForm, K=None, count=24, seed=0):
    """Admissible test functions: scaled trigonometric bumps and truncated envelopes."""
    M = form.manifold
    g, hx, hy = _n1_data(form)
    x = M.coords()
    L = np.diag(M.period_matrix)
    rng = np.random.default_rng(seed)
    out = [np.zeros(M.shape)]
    for _ in range(count):
        kx, ky = rng.integers(0, 3, size=2)
        if kx == 0 and ky == 0:
            kx = 1
        ph = rng.uniform(0, 2 * np.pi, size=2)
        f = np.cos(2 * np.pi * kx * x[0] / L[0] + ph[0]) * np.cos(2 * np.pi * ky * x[1] / L[1] + ph[1])
        f = (f - f.min()) / max(f.max() - f.min(), 1e-300)
        lap = 0.25 * laplacian5(f, hx, hy)
        scale = min(1.0, float(np.min(g) / max(1e-300, -lap.min())))
        out.append(scale * f)
    if K is not None:
        h, _ = relative_extremal(K, form)
        out.append(h + 1.0)
    return out


# ---------------------------------------------------------------- capacity inequalities

def sublevel(phi_values, level) -> np.ndarray:
    """Strict sublevel set ``{phi < level}``."""
    return np.asarray(phi_values) < level


def capacity_comparison_holds(report: CapacityReport, n=1, slack=1e-3) -> bool:
    """``T <= exp(1 - Cap^{-1/n})`` with additive slack."""
    if report.cap <= 0:
        return report.t_cap <= slack
    return report.t_cap <= math.exp(1.0 - report.cap ** (-1.0 / n)) + slack


def capma_check(phi: QuasiPshFunction, s: float, delta: float, tol=1e-9, sweep_tol=1e-9) -> dict:
    """Compare ``delta^n Cap({phi < -s - delta})`` with ``MA(phi)({phi < -s})``."""
    if not (s > 0 and 0 < delta < 1):
        raise ValueError("need s > 0 and 0 < delta < 1")
    n = phi.manifold.n
    v = phi.values
    small = sublevel(v, -s - delta)
    big = sublevel(v, -s)
    lhs = 0.0
    if small.any():
        lhs = delta**n * capacities(small, phi.form, tol=sweep_tol).cap
    rhs = float(np.sum(ma_weights_n1(phi.form, v)[big])) if big.any() else 0.0
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs + tol), "s": s, "delta": delta}


def random_psh(form: ReferenceForm, rng, modes=4, strength=0.9) -> np.ndarray:
    """Random discretely omega-sh trigonometric polynomial, sup-normalized (dimension one)."""
    M = form.manifold
    g, hx, hy = _n1_data(form)
    x = M.coords()
    L = np.diag(M.period_matrix)
    f = np.zeros(M.shape)
    for _ in range(modes):
        kx, ky = rng.integers(-3, 4, size=2)
        a, b = rng.normal(size=2)
        arg = 2 * np.pi * (kx * x[0] / L[0] + ky * x[1] / L[1])
        f += a * np.cos(arg) + b * np.sin(arg)
    lap = 0.25 * laplacian5(f, hx, hy)
    if lap.min() < 0:
        f *= strength * float(np.min(g)) / float(-lap.min())
    return f - f.max()
