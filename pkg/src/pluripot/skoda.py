"""Uniform integrability experiments.

Lelong bounds for families, the projective Skoda inequality on ``P^N``
atlases, the pointwise kernel inequalities behind it, Hessians of
``|z|^{2 beta}`` and the sup-versus-mean normalization study including the
degenerating conic family ``xy = t z^2``.

Conventions follow :mod:`pluripot.geometry`: coefficient matrices are
``u_{j kbar} = d_j dbar_k u`` and projective volumes are divided by ``pi^N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg as sla

from .geometry import (GeometryError, ReferenceForm, chart_weights, fs_matrix, volume,
                       volume_density)
from .psh import QuasiPshFunction, lelong_number, patch_complex_hessian


class SkodaError(ValueError):
    """Rejected input for a Skoda experiment."""


# ---------------------------------------------------------------- families

@dataclass
class FamilyMember:
    """Sampled function with quadrature weights for ``omega_t^n``.

    ``sup`` may hold an exactly known supremum; otherwise the sample maximum
    is used.  ``poles`` lists real points where Lelong numbers are measured.
    """

    values: np.ndarray
    weights: np.ndarray
    sup: float | None = None
    poles: tuple = ()
    source: object = None

    def sup_value(self) -> float:
        if self.sup is not None:
            return float(self.sup)
        v = np.asarray(self.values)
        return float(np.max(v[np.isfinite(v)]))

    def mean_value(self) -> float:
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        m = np.isfinite(v)
        return float(np.sum(v[m] * w[m]) / np.sum(w))

    def shifted(self, c) -> "FamilyMember":
        sup = None if self.sup is None else self.sup + c
        src = self.source.shifted(c) if isinstance(self.source, QuasiPshFunction) else self.source
        return FamilyMember(np.asarray(self.values) + c, self.weights, sup, self.poles, src)


@dataclass
class PshFamily:
    """Parameter samples ``t`` with one member per sample."""

    t: np.ndarray
    members: list
    n: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t)
        if len(self.t) != len(self.members):
            raise SkodaError("one member per parameter value is required")

    def shifted(self, c) -> "PshFamily":
        return PshFamily(self.t, [m.shifted(c) for m in self.members], self.n, dict(self.meta))

    @property
    def sups(self) -> np.ndarray:
        return np.array([m.sup_value() for m in self.members])

    @property
    def means(self) -> np.ndarray:
        return np.array([m.mean_value() for m in self.members])


def member_from_function(phi: QuasiPshFunction, poles=(), sup=None) -> FamilyMember:
    """Wrap a torus grid function with its volume weights."""
    w = np.broadcast_to(volume(phi.form).weights, phi.values.shape)
    return FamilyMember(phi.values, w, sup, tuple(poles), phi)


def family_from_functions(t, functions: Sequence[QuasiPshFunction], poles=None) -> PshFamily:
    poles = poles if poles is not None else [()] * len(functions)
    members = [member_from_function(f, p) for f, p in zip(functions, poles)]
    n = functions[0].manifold.n if functions else 1
    return PshFamily(np.asarray(t), members, n)


# ---------------------------------------------------------------- Lelong bound

@dataclass
class LelongBoundReport:
    bound: float
    lelong: list
    holds: bool
    violations: list

    def to_dict(self):
        return {"bound": self.bound, "lelong": self.lelong, "holds": self.holds, "violations": self.violations}


def lelong_bound_value(C_theta: float, A: float, V: float, n: int) -> float:
    """``C_Theta * A^{n-1} * V``."""
    if C_theta < 1:
        raise SkodaError("C_Theta must be at least 1")
    if A <= 0 or V <= 0:
        raise SkodaError("A and V must be positive")
    return float(C_theta * A ** (n - 1) * V)


def uniform_lelong_bound(F: PshFamily, C_theta: float, A: float, V: float, tol=1e-2) -> LelongBoundReport:
    """Measure the Lelong numbers of every member and compare with the bound.

    Members with ``poles`` are measured there; the others at their grid
    minimum.  Members without a grid source contribute nothing.
    """
    bound = lelong_bound_value(C_theta, A, V, F.n)
    rows, bad = [], []
    for t, m in zip(F.t, F.members):
        phi = m.source
        if not isinstance(phi, QuasiPshFunction):
            continue
        pts = list(m.poles)
        if not pts:
            v = np.where(np.isfinite(phi.values), phi.values, -np.inf)
            idx = np.unravel_index(int(np.argmin(v)), v.shape)
            pts = [phi.manifold.coords()[(slice(None),) + idx]]
        for p in pts:
            est = lelong_number(phi, p).value
            rows.append({"t": float(np.real(t)), "point": [float(c) for c in p], "lelong": est})
            if est > bound + tol:
                bad.append(rows[-1])
    return LelongBoundReport(bound, rows, not bad, bad)


# ---------------------------------------------------------------- projective Skoda

@dataclass(frozen=True, eq=False)
class AtlasFunction:
    """Function on a ``P^N`` chart atlas given by a callable of homogeneous
    coordinates ``X`` (shape ``(N+1, ...)``).  ``values[k]`` samples chart ``k``.
    """

    form: ReferenceForm
    func: Callable
    values: tuple
    peaks: tuple = ()
    label: str = ""
    singular_distance: Callable | None = None

    @property
    def N(self) -> int:
        return self.form.manifold.n

    def scaled(self, c) -> "AtlasFunction":
        f = _tagged(lambda X, f=self.func: c * f(X), self.singular_distance)
        return atlas_function(self.form, f, self.peaks, f"{c:g}*{self.label}")

    def sup_estimate(self) -> float:
        """Largest of the grid samples and the values at recorded peak points."""
        s = max(float(np.nanmax(v)) for v in self.values)
        for p in self.peaks:
            s = max(s, float(self.func(np.asarray(p, dtype=complex).reshape(-1, 1))[0]))
        return s


def atlas_function(form: ReferenceForm, func, peaks=(), label="") -> AtlasFunction:
    M = form.manifold
    if M.kind != "projective-chart-atlas":
        raise SkodaError("atlas functions live on projective chart atlases")
    with np.errstate(divide="ignore"):
        vals = tuple(np.asarray(func(c.homogeneous()), dtype=float) for c in M.charts)
    return AtlasFunction(form, func, vals, tuple(peaks), label, getattr(func, "singular_distance", None))


def _tagged(f, dist):
    """Attach a chordal distance to the singular set (``None`` for smooth functions)."""
    if dist is not None:
        f.singular_distance = dist
    return f


def _hyperplane_distance(a):
    def dist(X):
        X = np.asarray(X, dtype=complex)
        return np.abs(np.tensordot(np.conj(a), X, axes=(0, 0))) / np.sqrt(np.sum(np.abs(X) ** 2, axis=0))

    return dist


def hyperplane_log(a, c=1.0) -> Callable:
    """``c log(|<X, a>| / (|X| |a|))``: sup zero, Lelong ``c`` along ``<X, a> = 0``."""
    a = np.asarray(a, dtype=complex)
    a = a / np.linalg.norm(a)

    def f(X):
        X = np.asarray(X, dtype=complex)
        num = np.abs(np.tensordot(np.conj(a), X, axes=(0, 0)))
        return c * np.log(num / np.sqrt(np.sum(np.abs(X) ** 2, axis=0)))

    return _tagged(f, _hyperplane_distance(a))


def smoothed_hyperplane_log(a, c=1.0, eta=0.1) -> Callable:
    """``(c/2) log((|<X,a>|^2/|X|^2 + eta) / (1 + eta))``: smooth, sup zero."""
    a = np.asarray(a, dtype=complex)
    a = a / np.linalg.norm(a)

    def f(X):
        X = np.asarray(X, dtype=complex)
        q = np.abs(np.tensordot(np.conj(a), X, axes=(0, 0))) ** 2 / np.sum(np.abs(X) ** 2, axis=0)
        return 0.5 * c * np.log((q + eta) / (1.0 + eta))

    return f


def atlas_psh_defect(psi: AtlasFunction, exclusion=0.3, cells=4.0) -> float:
    """Most negative eigenvalue of ``omega_FS + dd^c psi`` relative to ``omega_FS``
    over chart interiors (``1`` for ``psi = 0``, ``0`` at the boundary of the cone).

    Points within two cells of a ``-inf`` sample, and points at chordal
    distance below ``max(exclusion, cells * h)`` from the singular set, are
    skipped: near a log pole the stencil error grows like ``h^2 / dist^4``.
    """
    M = psi.form.manifold
    worst = np.inf
    for c, v, g in zip(M.charts, psi.values, psi.form.coeffs):
        finite = np.isfinite(v)
        if psi.singular_distance is not None:
            finite &= psi.singular_distance(c.homogeneous()) >= max(exclusion, cells * c.spacing)
        H = patch_complex_hessian(np.where(finite, v, 0.0), [c.spacing] * (2 * c.N))
        inner = tuple(slice(1, -1) for _ in range(2 * c.N))
        ok = finite.copy()
        for a in range(2 * c.N):
            for s in (1, 2):
                ok &= np.roll(finite, s, a) & np.roll(finite, -s, a)
        w = chart_weights(c)[inner] > 0
        ok = ok[inner] & w
        if not np.any(ok):
            continue
        # eigenvalues relative to omega_FS: Cholesky-whitened Hermitian pencil
        L = np.linalg.cholesky(g[inner][ok])
        Li = np.linalg.inv(L)
        S = Li @ (g[inner][ok] + H[ok]) @ np.conj(np.swapaxes(Li, -1, -2))
        lam = np.linalg.eigvalsh(S)
        worst = min(worst, float(lam.min()))
    return worst


@dataclass
class SkodaReport:
    lhs: float
    rhs: float
    holds: bool
    integral: float
    sup: float
    n: int
    d: int

    def to_dict(self):
        return dict(lhs=self.lhs, rhs=self.rhs, holds=self.holds, integral=self.integral,
                    sup=self.sup, n=self.n, d=self.d)


def atlas_integral(form: ReferenceForm, values) -> float:
    """``int f omega^N`` (normalized FS volume) with the partition of unity."""
    M = form.manifold
    dens = volume_density(form)
    tot = 0.0
    for c, v, dd in zip(M.charts, values, dens):
        w = chart_weights(c) * dd * c.cell_volume / M.meta["normalization"]
        m = w > 0
        tot += float(np.sum(w[m] * v[m]))
    return tot


def projective_skoda_check(psi: AtlasFunction, n=None, d=1, sup_tol=None, rtol=0.0) -> SkodaReport:
    """Compare ``int e^{-psi/(nd)} omega^n`` with ``(4n)^n d exp(-(1/nd) int psi omega^n)``.

    Only ``V = P^N`` itself is modelled, so ``n = N`` and ``d = 1``.

    Raises
    ------
    SkodaError
        For ``d != 1``, ``n != N`` or a function whose supremum is not zero.
    """
    N = psi.N
    n = N if n is None else int(n)
    if n != N or d != 1:
        raise SkodaError("only V = P^N (n = N, d = 1) is modelled")
    h = psi.form.manifold.charts[0].spacing
    sup_tol = max(1e-8, 4.0 * h * h) if sup_tol is None else sup_tol
    sup = psi.sup_estimate()
    if abs(sup) > sup_tol:
        raise SkodaError(f"function is not sup-normalized (sup = {sup:.3g})")
    nd = n * d
    with np.errstate(over="ignore"):
        lhs = atlas_integral(psi.form, [np.exp(-v / nd) for v in psi.values])
        mean = atlas_integral(psi.form, [np.where(np.isfinite(v), v, 0.0) for v in psi.values])
    rhs = (4.0 * n) ** n * d * math.exp(-mean / nd)
    return SkodaReport(lhs, rhs, bool(lhs <= rhs * (1.0 + rtol)), mean, sup, n, d)


def skoda_dictionary(form: ReferenceForm, count=30, seed=0) -> list:
    """Sup-normalized test functions on a ``P^N`` atlas.

    Thirds of the list are hyperplane logs ``c log|<X,a>|/|X|``, their smoothed
    versions and maxima of two of them; ``c`` ranges over ``(0, 1]``.
    """
    N = form.manifold.n
    rng = np.random.default_rng(seed)
    out = []

    def rand_dir():
        a = rng.normal(size=N + 1) + 1j * rng.normal(size=N + 1)
        return a / np.linalg.norm(a)

    k = 0
    while len(out) < count:
        c = float(rng.uniform(0.1, 1.0))
        a = rand_dir()
        kind = k % 3
        if kind == 0:
            out.append(atlas_function(form, hyperplane_log(a, c), peaks=[a], label=f"hyp[{c:.3f}]"))
        elif kind == 1:
            eta = float(rng.uniform(0.05, 1.0))
            out.append(atlas_function(form, smoothed_hyperplane_log(a, c, eta), peaks=[a],
                                      label=f"smooth[{c:.3f},{eta:.3f}]"))
        else:
            b = rand_dir()
            f1, f2 = hyperplane_log(a, c), hyperplane_log(b, c)
            d1, d2 = f1.singular_distance, f2.singular_distance
            f = _tagged(lambda X, f1=f1, f2=f2: np.maximum(f1(X), f2(X)),
                        lambda X, d1=d1, d2=d2: np.maximum(d1(X), d2(X)))
            out.append(atlas_function(form, f, peaks=[a, b], label=f"max[{c:.3f}]"))
        k += 1
    return out


# ---------------------------------------------------------------- kernel inequalities

def _unitary_to_e0(y) -> np.ndarray:
    """Unitary ``U`` with ``U y / |y| = e_0``."""
    y = np.asarray(y, dtype=complex)
    y = y / np.linalg.norm(y)
    m = y.size
    B = np.eye(m, dtype=complex)
    B[:, 0] = y
    Q, R = np.linalg.qr(B)
    # fix the phase so that the first column is exactly y
    Q[:, 0] *= R[0, 0] / abs(R[0, 0])
    return np.conj(Q).T


def projective_kernel(x, y) -> float:
    """``G(x, y) = log(|x ^ y| / (|x| |y|))``."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    c = abs(np.vdot(y, x)) ** 2 / (np.vdot(x, x).real * np.vdot(y, y).real)
    return 0.5 * math.log1p(-min(c, 1.0)) if c < 1.0 else -math.inf


def chi_delta(t, delta, k=0):
    """``chi_delta(t) = e^{2 delta t} / (4 delta)`` and its derivatives."""
    return (2.0 * delta) ** k * math.exp(2.0 * delta * t) / (4.0 * delta)


def kernel_matrices(z, delta):
    """Coefficient matrices at chart point ``z`` (pole at the origin).

    Returns ``(fs, omega_G, dd^c chi o G + fs, G)``.
    """
    z = np.asarray(z, dtype=complex)
    r2 = float(np.sum(np.abs(z) ** 2))
    N = z.size
    A = np.outer(np.conj(z), z)
    fs = fs_matrix(z.reshape(N, 1))[0]
    omega_G = 0.5 * (r2 * np.eye(N) - A) / r2**2
    G = 0.5 * math.log(r2) - 0.5 * math.log1p(r2)
    dG = np.conj(z) / (2.0 * r2 * (1.0 + r2))
    hessG = omega_G - fs
    c1 = chi_delta(G, delta, 1)
    c2 = chi_delta(G, delta, 2)
    M2 = fs + c1 * hessG + c2 * np.outer(dG, np.conj(dG))
    return fs, omega_G, M2, G


@dataclass
class KernelReport:
    G: float
    r2: float
    delta: float
    eig_i: np.ndarray
    eig_ii: np.ndarray
    lam: float
    mu: float
    mu_printed: float
    bound_lam: float
    bound_mu: float
    holds_i: bool
    holds_ii: bool
    route: str

    @property
    def holds(self) -> bool:
        return self.holds_i and self.holds_ii

    def to_dict(self):
        return {"G": self.G, "r2": self.r2, "delta": self.delta, "eig_i": self.eig_i.tolist(),
                "eig_ii": self.eig_ii.tolist(), "lam": self.lam, "mu": self.mu,
                "mu_printed": self.mu_printed, "holds_i": self.holds_i, "holds_ii": self.holds_ii,
                "route": self.route}


def kernel_eigen_closed_form(r2, delta):
    """Closed-form eigenvalues relative to ``omega_FS``.

    Returns ``(lam, mu, mu_printed)``; ``mu`` keeps the Fubini-Study term of
    the ``alpha ^ alphabar`` coefficient, ``mu_printed = mu + |z|^2`` omits it.
    ``r2 = inf`` gives the limit on the polar hyperplane.
    """
    u = 0.0 if math.isinf(r2) else 1.0 / r2
    G = -0.5 * math.log1p(u)
    c1 = chi_delta(G, delta, 1)
    c2 = chi_delta(G, delta, 2)
    lam = 1.0 + c1 * u
    mu = 1.0 - c1 + 0.5 * c2 * u
    return lam, mu, mu + (math.inf if u == 0 else r2)


def kernel_inequality_check(x, y, delta: float, tol=1e-12) -> KernelReport:
    """Pointwise check of ``omega_G <= e^{-2G} omega`` and
    ``(delta/2) e^{-2(1-delta)G} omega <= omega + dd^c chi_delta o G``.

    ``x`` and ``y`` are homogeneous coordinates.  The pole ``y`` is moved to
    ``[1:0:...:0]`` by a unitary map and eigenvalues are computed relative to
    ``omega_FS`` with a generalized Hermitian eigensolver.  When ``x`` is
    orthogonal to ``y`` (``G = 0``) the closed-form limit is used.
    """
    if not 0.0 < delta < 1.0:
        raise SkodaError("delta must lie in (0, 1)")
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    G = projective_kernel(x, y)
    if not math.isfinite(G):
        raise SkodaError("x = y is the pole of the kernel")
    N = x.size - 1
    X = _unitary_to_e0(y) @ x
    if abs(X[0]) <= 1e-14 * np.linalg.norm(X):
        lam, mu, mu_p = kernel_eigen_closed_form(math.inf, delta)
        eig_i = np.array([0.0] * (N - 1) + [1.0])
        eig_ii = np.array([lam] * (N - 1) + [mu])
        r2, route = math.inf, "limit"
    else:
        z = X[1:] / X[0]
        fs, omega_G, M2, G = kernel_matrices(z, delta)
        r2 = float(np.sum(np.abs(z) ** 2))
        eig_i = sla.eigh(math.exp(-2.0 * G) * fs - omega_G, fs, eigvals_only=True)
        eig_ii = sla.eigh(M2, fs, eigvals_only=True)
        _, _, mu_p = kernel_eigen_closed_form(r2, delta)
        # fs and M2 share the eigenvectors zbar (radial) and its complement
        v = np.conj(z) / math.sqrt(r2)
        mu = float(np.real(np.vdot(v, M2 @ v) / np.vdot(v, fs @ v)))
        lam = float("nan")
        if N > 1:
            P = np.eye(N) - np.outer(v, np.conj(v))
            e = P[:, int(np.argmax(np.linalg.norm(P, axis=0)))]
            lam = float(np.real(np.vdot(e, M2 @ e) / np.vdot(e, fs @ e)))
        route = "chart"
    scale = math.exp(-2.0 * (1.0 - delta) * G)
    b_lam, b_mu = 0.5 * scale, 0.5 * delta * scale
    holds_i = bool(np.min(eig_i) >= -tol * max(1.0, float(np.max(np.abs(eig_i)))))
    ok_lam = N == 1 or lam >= b_lam * (1 - tol)
    holds_ii = bool(ok_lam and mu >= b_mu * (1 - tol) and np.min(eig_ii) >= b_mu * (1 - tol))
    return KernelReport(G, r2, delta, np.sort(eig_i), np.sort(eig_ii), lam, mu, mu_p, b_lam, b_mu,
                        holds_i, holds_ii, route)


# ---------------------------------------------------------------- power Hessian

def power_hessian_eigenvalues(beta: float, z) -> list:
    """Eigenvalues of ``d dbar |z|^{2 beta}`` as ``[(value, multiplicity), ...]``.

    They are ``beta |z|^{2(beta-1)}`` times ``1`` (multiplicity ``n-1``) and
    ``beta`` (multiplicity one).
    """
    if beta <= 0:
        raise SkodaError("beta must be positive")
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    r2 = float(np.sum(np.abs(z) ** 2))
    if r2 == 0.0:
        raise SkodaError("z = 0 is singular")
    n = z.size
    base = beta * r2 ** (beta - 1.0)
    out = []
    if n > 1:
        out.append((base, n - 1))
    out.append((base * beta, 1))
    return out


def power_hessian_matrix(beta: float, z) -> np.ndarray:
    """``beta u^{beta-1} (I - (1-beta) u^{-1} zbar z^T)`` with ``u = |z|^2``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    u = float(np.sum(np.abs(z) ** 2))
    return beta * u ** (beta - 1.0) * (np.eye(z.size) - (1.0 - beta) / u * np.outer(np.conj(z), z))


def power_hessian_constant(beta: float) -> float:
    """Smallest ``C_beta`` with ``C^{-1} u^{beta-1} I <= d dbar u^beta <= C u^{beta-1} I``."""
    lo = beta * min(1.0, beta)
    hi = beta * max(1.0, beta)
    return max(hi, 1.0 / lo)


def power_hessian_bound_holds(beta: float, z, C=None, rtol=1e-12) -> bool:
    C = power_hessian_constant(beta) if C is None else C
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    u = float(np.sum(np.abs(z) ** 2))
    ev = [v for v, _ in power_hessian_eigenvalues(beta, z)]
    s = u ** (beta - 1.0)
    return min(ev) >= s / C * (1 - rtol) and max(ev) <= C * s * (1 + rtol)


# ---------------------------------------------------------------- sup vs mean

@dataclass
class GapTable:
    t: np.ndarray
    sup: np.ndarray
    mean: np.ndarray
    gap: np.ndarray
    max_gap: float
    slope: float
    bounded: bool

    def rows(self):
        return [{"t": float(np.real(a)), "sup": float(b), "mean": float(c), "gap": float(g)}
                for a, b, c, g in zip(self.t, self.sup, self.mean, self.gap)]


def sup_mean_gap(F: PshFamily, slope_tol=0.05) -> GapTable:
    """``gap(t) = sup phi_t - (1/V_t) int phi_t omega_t^n`` for each member.

    The verdict fits ``gap ~ a log|t| + b``; growth ``a < -slope_tol`` as
    ``t -> 0`` is reported as unbounded.  Families with fewer than three
    distinct nonzero ``|t|`` are judged by finiteness alone.
    """
    sup = F.sups
    mean = F.means
    gap = sup - mean
    at = np.abs(F.t)
    slope = 0.0
    usable = at > 0
    if np.count_nonzero(usable) >= 3 and np.ptp(np.log(at[usable])) > 0:
        slope = float(np.polyfit(np.log(at[usable]), gap[usable], 1)[0])
    bounded = bool(np.all(np.isfinite(gap)) and slope >= -slope_tol)
    return GapTable(F.t, sup, mean, gap, float(np.max(gap)), slope, bounded)


# ---------------------------------------------------------------- conic family

def conic_phi(X) -> np.ndarray:
    """``(1/4)(log(|x|^2+|z|^2) + log|y|^2) - (1/2) log|X|^2 + (log 2)/2`` on ``[x:y:z]``."""
    X = np.asarray(X, dtype=complex)
    a = np.abs(X) ** 2
    with np.errstate(divide="ignore"):
        return 0.25 * (np.log(a[0] + a[2]) + np.log(a[1])) - 0.5 * np.log(a.sum(axis=0)) + 0.5 * math.log(2.0)


def conic_parametrization(w, t) -> np.ndarray:
    """``w -> [w^2 : t : w]`` on ``xy = t z^2``; only ``[1:0:0]`` is missed."""
    w = np.asarray(w, dtype=complex)
    return np.stack([w * w, np.full_like(w, t), w])


def conic_area_density(a, t) -> np.ndarray:
    """Normalized FS area density on ``X_t`` in the variable ``a = |w|^2``.

    The pull-back of ``omega_FS`` by ``w -> [w^2:t:w]`` is radial; per unit
    ``da`` (after integrating the angle and dividing by ``pi``) it equals
    ``(a^2 + t^2 (4a + 1)) / (a^2 + a + t^2)^2``.
    """
    a = np.asarray(a, dtype=float)
    t2 = float(abs(t)) ** 2
    return (a * a + t2 * (4.0 * a + 1.0)) / (a * a + a + t2) ** 2


def conic_nodes(t, nodes_per_decade=10_000, pad=46.0):
    """Uniform nodes in ``s = log a`` covering the support of the integrand.

    The integrand decays like ``e^{s}/t^2`` for ``a << t^2`` and like
    ``e^{-s}`` for ``a >> 1``; the window ``[2 log t - pad, pad]`` leaves tails
    below ``e^{-pad}``.
    """
    lo = 2.0 * math.log(abs(t)) - pad
    hi = pad
    decades = (hi - lo) / math.log(10.0)
    m = int(math.ceil(decades * nodes_per_decade)) + 1
    s = np.linspace(lo, hi, m)
    w = np.full(m, s[1] - s[0])
    w[0] = w[-1] = 0.5 * (s[1] - s[0])
    return s, w


def conic_member(t, nodes_per_decade=10_000) -> FamilyMember:
    """``phi_t`` on ``X_t`` sampled on one ray of the radial parametrization."""
    s, ws = conic_nodes(t, nodes_per_decade)
    a = np.exp(s)
    X = conic_parametrization(np.sqrt(a), t)
    vals = conic_phi(X)
    weights = ws * a * conic_area_density(a, t)
    return FamilyMember(vals, weights, sup=0.0)


def conic_family(ts, nodes_per_decade=10_000) -> PshFamily:
    return PshFamily(np.asarray(ts, dtype=float), [conic_member(t, nodes_per_decade) for t in ts], 1,
                     {"model": "xy = t z^2"})


def conic_sup(t) -> tuple:
    """Supremum of ``phi_t`` and a point realizing it.

    The maximum sits where ``|y|^2 = |x|^2 + |z|^2``, that is ``a^2 + a = t^2``.
    """
    a = 0.5 * (math.sqrt(1.0 + 4.0 * t * t) - 1.0)
    X = conic_parametrization(np.array([math.sqrt(a)]), t)
    return float(conic_phi(X)[0]), a


@dataclass
class ConicFit:
    t: np.ndarray
    integral: np.ndarray
    volume: np.ndarray
    sup_grid: np.ndarray
    slope: float
    intercept: float
    refinement_change: float

    def rows(self):
        return [{"t": float(a), "integral": float(b), "volume": float(c), "sup_grid": float(d)}
                for a, b, c, d in zip(self.t, self.integral, self.volume, self.sup_grid)]


def conic_counterexample(ts, nodes_per_decade=10_000) -> ConicFit:
    """``I(t) = int_{X_t} phi_t omega_t`` on a ladder and the fit ``I ~ a log t + b``.

    ``refinement_change`` is the largest change of ``I`` when the node count
    is halved.
    """
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0) or np.any(ts > 0.5):
        raise SkodaError("t must lie in (0, 1/2]")
    if len(ts) >= 2 and math.log10(ts.max() / ts.min()) < 5 - 1e-9:
        raise SkodaError("the ladder must span at least five decades")
    I, V, S, change = [], [], [], 0.0
    for t in ts:
        m = conic_member(t, nodes_per_decade)
        I.append(float(np.sum(m.values * m.weights)))
        V.append(float(np.sum(m.weights)))
        S.append(float(np.max(m.values)))
        coarse = conic_member(t, max(1, nodes_per_decade // 2))
        change = max(change, abs(float(np.sum(coarse.values * coarse.weights)) - I[-1]))
    I = np.array(I)
    if len(ts) >= 2:
        a, b = np.polyfit(np.log(ts), I, 1)
    else:
        a, b = float("nan"), float(I[0])
    return ConicFit(ts, I, np.array(V), np.array(S), float(a), float(b), change)
