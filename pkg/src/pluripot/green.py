"""Green functions, heat kernels and the mean-value inequality on flat tori.

For a constant Hermitian form ``g`` the Laplacian ``Delta = tr_g dd^c`` is a
constant-coefficient operator ``sum_ab A_ab d_a d_b`` in real coordinates,
so the heat kernel is a lattice sum of Gaussians (images) or, equivalently by
Poisson summation, a theta-type Fourier series.  The Green function
``G(x, .) = int_0^inf (H(x, ., t) - 1/V) dt`` solves
``Delta G = 1/V - delta_x`` with ``delta_x`` taken against ``omega^n``; it is
``+inf`` at ``x`` and has mean zero.

Two versions are provided.  The discrete Green function inverts the grid
operator ``tr_g dd^c_h`` by FFT; with it the mean-value inequality holds
exactly for every function that is psh in the trace sense on the grid.  The
continuum Green function is evaluated by Ewald splitting at time ``t0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import minimize_scalar

from .geometry import GeometryError, ModelManifold, ReferenceForm, volume, volume_density
from .psh import QuasiPshFunction, ddc
from .solver import _coefficients, _symbol, solve_constant_coefficient


class GreenError(ValueError):
    """Unsupported model or invalid time."""


# ---------------------------------------------------------------- operator data

def laplace_matrix(g) -> np.ndarray:
    """Real ``2n x 2n`` matrix ``A`` with ``tr_g dd^c f = sum A_ab d_a d_b f``."""
    ginv = np.linalg.inv(np.asarray(g, dtype=complex))
    n = ginv.shape[0]
    A = np.zeros((2 * n, 2 * n))
    for j in range(n):
        for k in range(n):
            b = ginv[k, j]
            A[2 * j, 2 * k] += 0.25 * b.real
            A[2 * j + 1, 2 * k + 1] += 0.25 * b.real
            A[2 * j, 2 * k + 1] -= 0.25 * b.imag
            A[2 * j + 1, 2 * k] += 0.25 * b.imag
    return 0.5 * (A + A.T)


@dataclass(frozen=True, eq=False)
class TorusOperator:
    """Spectral data of ``Delta_omega`` on a flat torus with a constant form."""

    manifold: ModelManifold
    A: np.ndarray
    density: float      # omega^n = density * Lebesgue
    V: float

    @property
    def n(self) -> int:
        return self.manifold.n

    def mu_matrix(self) -> np.ndarray:
        """``mu_k = k^T B k`` for the mode ``exp(2 pi i k . u)``."""
        Pinv = self.manifold.hessian_transform
        return (2.0 * np.pi) ** 2 * Pinv @ self.A @ Pinv.T

    def shortest_image2(self) -> float:
        """Smallest ``(P m)^T A^{-1} (P m)`` over nonzero integer ``m``."""
        P = self.manifold.period_matrix
        Ai = np.linalg.inv(self.A)
        best = math.inf
        d = P.shape[0]
        for m in itertools.product(range(-2, 3), repeat=d):
            if any(m):
                v = P @ np.array(m, dtype=float)
                best = min(best, float(v @ Ai @ v))
        return best


def torus_operator(form: ReferenceForm) -> TorusOperator:
    M = form.manifold
    if not M.is_torus:
        raise GreenError("Green functions are implemented on flat tori")
    if not form.is_constant:
        raise GreenError("the torus Green function needs a constant form")
    if M.n not in (1, 2):
        raise GreenError("n must be 1 or 2")
    g = np.asarray(form.coeffs)
    dens = float(volume_density(form))
    return TorusOperator(M, laplace_matrix(g), dens, dens * M.covolume)


def _frequency_box(op: TorusOperator, t, cutoff=40.0):
    """Integer frequencies with ``mu_k t <= cutoff`` (a box large enough to contain them)."""
    B = op.mu_matrix()
    lam = float(np.min(np.linalg.eigvalsh(B)))
    K = max(1, int(math.ceil(math.sqrt(cutoff / (t * lam)))))
    d = B.shape[0]
    rng = np.arange(-K, K + 1)
    ks = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mu = np.einsum("ka,ab,kb->k", ks, B, ks)
    keep = (mu * t <= cutoff) & np.any(ks != 0, axis=1)
    return ks[keep].astype(float), mu[keep]


def _image_box(op: TorusOperator, rings):
    d = op.manifold.real_dim
    rng = np.arange(-rings, rings + 1)
    ms = np.stack(np.meshgrid(*([rng] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return ms.astype(float) @ op.manifold.period_matrix.T


def _wrap(op: TorusOperator, r):
    """Reduce displacements to the fundamental cell centred at zero."""
    P = op.manifold.period_matrix
    u = np.asarray(r) @ np.linalg.inv(P).T
    u = u - np.round(u)
    return u @ P.T


# ---------------------------------------------------------------- heat kernel

def _rings(op: TorusOperator, t, cutoff=40.0) -> int:
    """Image rings so that every omitted Gaussian is below ``exp(-cutoff)``."""
    l2 = op.shortest_image2()
    return max(1, int(math.ceil(0.5 + math.sqrt(4.0 * t * cutoff / l2))))


def heat_kernel_images(op: TorusOperator, r, t, rings=None) -> np.ndarray:
    """``H(x, x + r, t)`` against ``omega^n`` as a sum of Gaussian images."""
    if t <= 0:
        raise GreenError("t must be positive")
    rings = _rings(op, t) if rings is None else rings
    r = _wrap(op, np.atleast_2d(r))
    imgs = _image_box(op, rings)
    Ai = np.linalg.inv(op.A)
    d = op.manifold.real_dim
    pref = (4.0 * np.pi * t) ** (-d / 2.0) / math.sqrt(np.linalg.det(op.A)) / op.density
    out = np.zeros(r.shape[0])
    for v in imgs:
        w = r + v
        q = np.einsum("ia,ab,ib->i", w, Ai, w)
        out += np.exp(-q / (4.0 * t))
    return pref * out


def heat_kernel_fourier(op: TorusOperator, r, t, cutoff=40.0) -> np.ndarray:
    """``H(x, x + r, t)`` as the theta series ``(1/V) sum_k exp(-mu_k t) e_k(r)``."""
    if t <= 0:
        raise GreenError("t must be positive")
    r = np.atleast_2d(r)
    ks, mu = _frequency_box(op, t, cutoff)
    u = r @ np.linalg.inv(op.manifold.period_matrix).T
    phase = 2.0 * np.pi * (u @ ks.T)
    return (1.0 + np.cos(phase) @ np.exp(-mu * t)) / op.V


def heat_kernel(op: TorusOperator, r, t) -> np.ndarray:
    """Whichever representation converges faster at time ``t``."""
    t_switch = op.shortest_image2() / 16.0
    return heat_kernel_images(op, r, t) if t < t_switch else heat_kernel_fourier(op, r, t)


# ---------------------------------------------------------------- Green functions

def _ewald_t0(op: TorusOperator) -> float:
    return op.shortest_image2() / 100.0


def green_continuum(op: TorusOperator, r, t0=None, rings=2, cutoff=40.0) -> np.ndarray:
    """Continuum ``G(x, x + r)`` by Ewald splitting at ``t0``.

    ``int_0^t0`` uses images: ``int_0^t0 t^{-n} e^{-a/t} dt`` is ``E_1(a/t0)``
    for ``n = 1`` and ``a^{1-n} Gamma(n-1, a/t0)`` for ``n >= 2``.
    ``int_t0^inf`` uses the Fourier series ``sum e^{-mu t0} e_k / (V mu)``.
    """
    t0 = _ewald_t0(op) if t0 is None else t0
    r = _wrap(op, np.atleast_2d(r))
    n = op.n
    d = 2 * n
    Ai = np.linalg.inv(op.A)
    pref = (4.0 * np.pi) ** (-d / 2.0) / math.sqrt(np.linalg.det(op.A)) / op.density
    real = np.zeros(r.shape[0])
    for v in _image_box(op, rings):
        w = r + v
        a = np.einsum("ia,ab,ib->i", w, Ai, w) / 4.0
        with np.errstate(divide="ignore"):
            if n == 1:
                term = special.exp1(a / t0)
            else:
                term = a ** (1 - n) * special.gamma(n - 1) * special.gammaincc(n - 1, a / t0)
        real += np.where(a > 0, term, np.inf)
    real = pref * real - t0 / op.V
    ks, mu = _frequency_box(op, t0, cutoff)
    u = r @ np.linalg.inv(op.manifold.period_matrix).T
    coef = np.exp(-mu * t0) / mu / op.V
    four = np.empty(u.shape[0])
    for i in range(0, u.shape[0], 256):
        four[i:i + 256] = np.cos(2.0 * np.pi * (u[i:i + 256] @ ks.T)) @ coef
    return real + four


def discrete_laplacian(form: ReferenceForm, v) -> np.ndarray:
    """``tr_g dd^c_h v`` with the same stencils as :func:`pluripot.psh.ddc`."""
    phi = QuasiPshFunction(form, np.asarray(v, dtype=float))
    H = ddc(phi)
    ginv = np.linalg.inv(np.asarray(form.coeffs))
    return np.real(np.einsum("kj,...jk->...", ginv, H))


@dataclass
class GreenFunction:
    """Green function with pole at grid index ``index``.

    ``values`` is the discrete Green function (finite at the pole);
    ``inf_G`` its minimum; ``inf_G_continuum`` the grid minimum of the
    continuum function.
    """

    form: ReferenceForm
    index: tuple
    x: np.ndarray
    values: np.ndarray
    op: TorusOperator
    inf_G: float
    inf_G_continuum: float
    mean: float
    meta: dict = field(default_factory=dict)

    @property
    def manifold(self) -> ModelManifold:
        return self.form.manifold

    @property
    def V(self) -> float:
        return self.op.V

    def evaluate(self, y) -> np.ndarray:
        """Continuum ``G(x, y)`` at real points ``y`` (shape ``(m, 2n)``)."""
        return green_continuum(self.op, np.atleast_2d(y) - self.x[None, :])

    def at(self, index) -> float:
        return float(self.values[tuple(index)])


def torus_green(x_index, form: ReferenceForm, continuum_inf=True) -> GreenFunction:
    """Discrete and continuum Green functions of ``Delta_omega`` with pole at a grid point.

    Raises
    ------
    GreenError
        On non-torus models, non-constant forms or ``n > 2``.
    """
    op = torus_operator(form)
    M = form.manifold
    idx = tuple(int(i) for i in x_index)
    w = float(np.broadcast_to(volume(form).weights, M.shape).flat[0])
    rhs = np.full(M.shape, 1.0 / op.V)
    rhs[idx] -= 1.0 / w
    ginv = np.linalg.inv(np.asarray(form.coeffs))
    B = np.broadcast_to(ginv, tuple(M.shape) + ginv.shape)
    cbar = _coefficients(M, B).reshape(-1, M.size).mean(axis=1)
    G = solve_constant_coefficient(M, cbar, rhs)
    G = G - G.mean()
    x = M.coords()[(slice(None),) + idx]
    inf_c = math.nan
    if continuum_inf:
        if M.size <= 1_024:
            pts = M.coords().reshape(M.real_dim, -1).T
        else:
            # half-period points only; the minimum of a lattice-symmetric G sits there
            halves = np.array(list(itertools.product((0.0, 0.5), repeat=M.real_dim)))
            pts = x[None, :] + halves @ M.period_matrix.T
        vals = green_continuum(op, pts - x[None, :])
        inf_c = float(np.min(vals[np.isfinite(vals)]))
    return GreenFunction(form, idx, x, G, op, float(G.min()), inf_c, float(np.sum(G) * w))


def green_residual(Gf: GreenFunction) -> float:
    """Max deviation of ``Delta_h G`` from ``1/V - delta_x / w``."""
    M = Gf.manifold
    w = float(np.broadcast_to(volume(Gf.form).weights, M.shape).flat[0])
    target = np.full(M.shape, 1.0 / Gf.V)
    target[Gf.index] -= 1.0 / w
    return float(np.max(np.abs(discrete_laplacian(Gf.form, Gf.values) - target)))


def direct_green_lower_bound(op: TorusOperator) -> float:
    """``inf G >= -min_T [T/V + sum_{k != 0} e^{-mu_k T} / (V mu_k)]``.

    From ``G(x,y,t) >= -1/V`` and ``|G(x,y,t)| <= G(x,x,t)``; valid in every
    dimension and used for ``n = 1``.
    """
    def cost(T):
        ks, mu = _frequency_box(op, T, 60.0)
        return T / op.V + float(np.sum(np.exp(-mu * T) / mu)) / op.V

    hi = op.shortest_image2()
    res = minimize_scalar(cost, bounds=(1e-4 * hi, 10.0 * hi), method="bounded",
                          options={"xatol": 1e-10 * hi})
    return -float(res.fun)


def green_lower_bound_constant(C_S: float, C_P: float, V: float, n: int) -> float:
    """``-1/V - n 4^{1/n} C_S (C_P + 1) / (n - 1)``.

    Raises
    ------
    GreenError
        For ``n = 1``, where the denominator vanishes; use
        :func:`direct_green_lower_bound` instead.
    """
    if n < 2:
        raise GreenError("n = 1 is routed to direct_green_lower_bound")
    C = n * 4.0 ** (1.0 / n) * C_S * (C_P + 1.0)
    return -1.0 / V - C / (n - 1)


# ---------------------------------------------------------------- heat ladder

@dataclass
class HeatReport:
    t: np.ndarray
    diag: np.ndarray          # G(x, x, t)
    scaled: np.ndarray        # t^n sup |G(x, y, t)|
    C0_empirical: float
    mass_error: float
    cauchy_schwarz_ok: bool
    route_gap: float

    def to_dict(self):
        return {"t": self.t.tolist(), "diag": self.diag.tolist(), "scaled": self.scaled.tolist(),
                "C0_empirical": self.C0_empirical, "mass_error": self.mass_error,
                "cauchy_schwarz_ok": self.cauchy_schwarz_ok, "route_gap": self.route_gap}


def heat_trace_check(form: ReferenceForm, ts=(1.0, 0.1, 0.01), n_pairs=50, seed=0) -> HeatReport:
    """Theta-series ladder for ``G(x, y, t) = H(x, y, t) - 1/V``.

    ``sup_{x,y} |G|`` sits on the diagonal, so ``C_0`` is the largest
    ``t^n G(x, x, t)``.  Mass conservation is checked by grid quadrature of
    the image sum, and the Cauchy-Schwarz bound on random pairs.
    """
    op = torus_operator(form)
    M = form.manifold
    ts = np.asarray(ts, dtype=float)
    if np.any(ts <= 0):
        raise GreenError("t must be positive")
    rng = np.random.default_rng(seed)
    P = M.period_matrix
    pts = M.coords().reshape(M.real_dim, -1).T
    w = volume(form).weights
    w = np.broadcast_to(w, M.shape).reshape(-1)
    diag, scaled, mass_err, gap = [], [], 0.0, 0.0
    cs_ok = True
    zero = np.zeros((1, M.real_dim))
    for t in ts:
        gd = float(heat_kernel(op, zero, t)[0]) - 1.0 / op.V
        diag.append(gd)
        scaled.append(t**op.n * abs(gd))
        Hgrid = heat_kernel(op, pts, t)
        mass_err = max(mass_err, abs(float(np.sum(Hgrid * w)) - 1.0))
        r = (rng.random((n_pairs, M.real_dim)) @ P.T) - (rng.random((n_pairs, M.real_dim)) @ P.T)
        Gi = heat_kernel_images(op, r, t) - 1.0 / op.V
        Gf = heat_kernel_fourier(op, r, t) - 1.0 / op.V
        gap = max(gap, float(np.max(np.abs(Gi - Gf))))
        if t >= 0.01:
            cs_ok &= bool(np.all(Gi**2 <= gd * gd * (1 + 1e-10) + 1e-300))
    return HeatReport(ts, np.array(diag), np.array(scaled), float(max(scaled)), mass_err, cs_ok, gap)


def semigroup_residual(form: ReferenceForm, r, t, s) -> float:
    """``|H(r, t+s) - int H(0, y, t) H(y, r, s) omega^n|`` by grid quadrature.

    The integrand uses the image sum, the target the theta series.
    """
    op = torus_operator(form)
    M = form.manifold
    pts = M.coords().reshape(M.real_dim, -1).T
    w = np.broadcast_to(volume(form).weights, M.shape).reshape(-1)
    r = np.atleast_2d(r)
    out = 0.0
    for ri in r:
        a = heat_kernel_images(op, pts, t)
        b = heat_kernel_images(op, ri[None, :] - pts, s)
        lhs = float(heat_kernel_fourier(op, ri[None, :], t + s)[0])
        out = max(out, abs(lhs - float(np.sum(a * b * w))))
    return out


# ---------------------------------------------------------------- Sobolev / Poincare

@dataclass
class FunctionalConstants:
    C_S: float
    C_P: float
    C_P_exact: float
    count: int
    seed: int


def _trig_dictionary(M: ModelManifold, count, seed, max_freq=3):
    rng = np.random.default_rng(seed)
    u = M.grid_u()
    d = M.real_dim
    out = [np.ones(M.shape)]
    for _ in range(count - 1):
        f = np.zeros(M.shape)
        for _ in range(int(rng.integers(1, 4))):
            k = rng.integers(-max_freq, max_freq + 1, size=d)
            if not np.any(k):
                k[0] = 1
            ph = rng.uniform(0, 2 * np.pi)
            f += rng.normal() * np.cos(2 * np.pi * np.tensordot(k, u, axes=(0, 0)) + ph)
        out.append(f + rng.normal() * 0.5)
    return out


def _dirichlet_energy(op: TorusOperator, f) -> float:
    """``int grad f . A grad f omega^n`` computed spectrally."""
    M = op.manifold
    F = np.fft.fftn(f) / f.size
    freqs = np.meshgrid(*[np.fft.fftfreq(N, 1.0 / N) for N in M.shape], indexing="ij")
    ks = np.stack(freqs, axis=-1)
    mu = np.einsum("...a,ab,...b->...", ks, op.mu_matrix(), ks)
    return float(np.sum(mu * np.abs(F) ** 2) * op.V)


def functional_constants(form: ReferenceForm, count=200, seed=0) -> FunctionalConstants:
    """Rayleigh-quotient estimates of the Sobolev and Poincare constants.

    ``C_P = sup ||f - mean||_2^2 / ||df||^2`` and
    ``C_S = sup ||f||_{2n/(n-1)}^2 / (||df||^2 + ||f||^2)`` over a random
    trigonometric dictionary that includes the constants.  Rayleigh suprema
    over a subset are lower estimates; ``C_P_exact = 1 / mu_1``.
    """
    op = torus_operator(form)
    M = form.manifold
    n = M.n
    w = np.broadcast_to(volume(form).weights, M.shape)
    V = op.V
    q = 2.0 * n / (n - 1) if n > 1 else 4.0
    CS, CP = 0.0, 0.0
    for f in _trig_dictionary(M, count, seed):
        E = _dirichlet_energy(op, f)
        l2 = float(np.sum(f * f * w))
        lq = float(np.sum(np.abs(f) ** q * w)) ** (2.0 / q)
        CS = max(CS, lq / (E + l2))
        fm = f - float(np.sum(f * w)) / V
        if E > 1e-12:
            CP = max(CP, float(np.sum(fm * fm * w)) / E)
    ks, mu = _frequency_box(op, 1.0, 400.0)
    return FunctionalConstants(CS, CP, 1.0 / float(mu.min()), count, seed)


# ---------------------------------------------------------------- mean value inequality

@dataclass
class MeanValueReport:
    lhs: np.ndarray
    rhs: float
    min_slack: float
    holds: bool
    trace_defect: float

    def to_dict(self):
        return {"rhs": self.rhs, "min_slack": self.min_slack, "holds": self.holds,
                "trace_defect": self.trace_defect, "lhs_min": float(np.min(self.lhs))}


def mean_value_inequality(phi: QuasiPshFunction, G: GreenFunction, tol=1e-10) -> MeanValueReport:
    """``(1/V) int phi omega^n - phi(x) >= n V inf G`` at every grid point ``x``.

    ``trace_defect`` is ``min (n + tr_g dd^c_h phi)``; when it is nonnegative
    the discrete inequality is a theorem.
    """
    form = phi.form
    M = form.manifold
    n = M.n
    w = np.broadcast_to(volume(form).weights, M.shape)
    v = phi.values
    mean = float(np.sum(v * w)) / G.V
    lhs = mean - v
    rhs = n * G.V * G.inf_G
    slack = float(np.min(lhs - rhs))
    tr = float(np.min(n + discrete_laplacian(form, v)))
    return MeanValueReport(lhs, rhs, slack, bool(slack >= -tol * max(1.0, abs(rhs))), tr)


def smoothed_green_potential(form: ReferenceForm, x_index, t_s: float, c: float = None) -> np.ndarray:
    """``-c int_{t_s}^inf G_h(x, ., t) dt`` on the grid: a log-pole potential cut at scale ``sqrt(t_s)``.

    Its discrete Laplacian is ``c (H_h(t_s) - 1/V) >= -c/V``, so ``c <= n V``
    keeps it psh in the trace sense.
    """
    op = torus_operator(form)
    M = form.manifold
    c = M.n * op.V if c is None else c
    ginv = np.linalg.inv(np.asarray(form.coeffs))
    B = np.broadcast_to(ginv, tuple(M.shape) + ginv.shape)
    cbar = _coefficients(M, B).reshape(-1, M.size).mean(axis=1)
    S = _symbol(M, cbar, 0.0)
    delta = np.zeros(M.shape)
    delta[tuple(x_index)] = 1.0
    D = np.fft.fftn(delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        # S < 0 off the zero mode: int_{t_s}^inf e^{S t} dt = -e^{S t_s}/S
        K = np.where(np.abs(S) > 1e-300, -np.exp(S * t_s) / S, 0.0)
    w = float(np.broadcast_to(volume(form).weights, M.shape).flat[0])
    G = np.real(np.fft.ifftn(K * D)) / w
    return -c * (G - G.mean())


def psh_dictionary(form: ReferenceForm, count=12, seed=0) -> list:
    """Grid functions that are psh in the trace sense (``n + tr_g dd^c_h phi >= 0``).

    A constant, smoothed log-pole potentials at random poles and scales, small
    trigonometric perturbations, and convex combinations of these.
    """
    M = form.manifold
    rng = np.random.default_rng(seed)
    out = [np.zeros(M.shape)]
    while len(out) < count:
        kind = len(out) % 3
        if kind == 1:
            idx = tuple(int(rng.integers(0, N)) for N in M.shape)
            out.append(smoothed_green_potential(form, idx, float(rng.uniform(1e-3, 5e-2))))
        elif kind == 2:
            f = _trig_dictionary(M, 2, int(rng.integers(1 << 30)))[1]
            tr = discrete_laplacian(form, f)
            out.append(f * (0.9 * M.n / max(float(np.max(-tr)), 1e-12)))
        else:
            a = float(rng.uniform())
            i, j = rng.integers(0, len(out), size=2)
            out.append(a * out[i] + (1 - a) * out[j])
    return out[:count]


# ---------------------------------------------------------------- exponential integrability

@dataclass
class H1Constants:
    """``int e^{-alpha psi} omega^n / V <= A`` for every sup-normalized omega-psh ``psi``."""

    alpha: float
    A: float
    alpha_critical: float
    green_integral: float
    inf_G_bound: float


def _sector_quadrature(op: TorusOperator, n_theta=24, n_r=32):
    """Nodes and weights for polar quadrature of the fundamental cell around 0.

    Coordinates ``y = L w`` with ``L = A^{1/2}``; the cell is a parallelogram in
    ``w`` whose corners split the angle into sectors with smooth boundary.
    """
    from scipy.linalg import sqrtm

    L = np.real(sqrtm(op.A))
    Q = np.linalg.inv(op.manifold.period_matrix) @ L
    corners = np.array(list(itertools.product((-0.5, 0.5), repeat=2)))
    W = corners @ np.linalg.inv(Q).T
    angles = np.sort(np.mod(np.arctan2(W[:, 1], W[:, 0]), 2 * np.pi))
    angles = np.append(angles, angles[0] + 2 * np.pi)
    gt, wt = np.polynomial.legendre.leggauss(n_theta)
    gr, wr = np.polynomial.legendre.leggauss(n_r)
    pts, wts = [], []
    for a0, a1 in zip(angles[:-1], angles[1:]):
        th = 0.5 * (a1 - a0) * (gt + 1) + a0
        e = np.stack([np.cos(th), np.sin(th)], axis=1)
        R = np.min(0.5 / np.abs(e @ Q.T), axis=1)
        for i in range(n_theta):
            r = 0.5 * R[i] * (gr + 1)
            pts.append(np.outer(r, e[i]))
            wts.append(0.5 * (a1 - a0) * wt[i] * 0.5 * R[i] * wr)
    return np.concatenate(pts), np.concatenate(wts), L


def torus_h1_constants(form: ReferenceForm, alpha=None) -> H1Constants:
    """Exponential integrability constants on a one-dimensional flat torus.

    Writing ``psi = mean(psi) - int G(., z) (omega + dd^c psi)(z)`` and applying
    Jensen to the probability measure ``(omega + dd^c psi)/V`` gives
    ``int e^{-alpha psi} omega / V <= e^{-alpha mean psi} sup_z int e^{alpha V G(., z)} omega / V``,
    and the mean-value inequality bounds ``-mean psi`` by ``-V inf G``.  Near
    the pole ``G ~ -kappa log|w|`` so ``alpha < 2 / (kappa V)`` is needed; the
    default is half the critical exponent.
    """
    op = torus_operator(form)
    if op.n != 1:
        raise GreenError("Green-function exponential integrability holds only for n = 1")
    kappa = 1.0 / (2.0 * np.pi * math.sqrt(np.linalg.det(op.A)) * op.density)
    a_crit = 2.0 / (kappa * op.V)
    alpha = 0.5 * a_crit if alpha is None else float(alpha)
    if not 0 < alpha < a_crit:
        raise GreenError(f"alpha must lie in (0, {a_crit:.6g})")
    w, wts, L = _sector_quadrature(op)
    y = w @ L.T
    r = np.linalg.norm(w, axis=1)
    G = green_continuum(op, y)
    # r * e^{alpha V G} is bounded near the pole; fold the Jacobian in before exponentiating
    vals = np.exp(alpha * op.V * G + np.log(r))
    integral = float(np.sum(vals * wts)) * abs(np.linalg.det(L)) * op.density / op.V
    lb = direct_green_lower_bound(op)
    A = math.exp(-alpha * op.V * lb) * integral
    return H1Constants(float(alpha), float(A), float(a_crit), integral, float(lb))
