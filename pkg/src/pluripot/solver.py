"""Damped Newton solver for complex Monge-Ampere equations on flat tori.

The discrete problem is

    log det(g + H phi) - log(F / (n! 2^n)) - lam * phi - c = 0,

where ``H`` is the centred-difference complex Hessian, ``F`` is the density of
``e^{-lam phi} (omega + dd^c phi)^n`` against Lebesgue measure and ``c`` is a
Lagrange constant used only when ``lam = 0`` (it absorbs the discrete mass
defect and pairs with the mean-zero gauge).

Newton steps use the exact linearization ``sum_ab C_ab(x) D_ab v - lam v - dc``
which is not symmetric, so linear systems are solved by GMRES with an FFT
preconditioner built from the grid-averaged coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from . import _accel
from .geometry import GeometryError, ReferenceForm, make_form, volume, volume_density
from .psh import QuasiPshFunction, complex_from_real, real_hessian


class SolverError(ValueError):
    """Invalid problem data."""


class SolverDivergence(RuntimeError):
    """Damped Newton stagnated; ``last`` holds the final iterate."""

    def __init__(self, msg, last=None, history=None):
        super().__init__(msg)
        self.last = last
        self.history = history or []


@dataclass
class MaProblem:
    """``(omega + dd^c phi)^n = e^{lam phi} F dlambda`` on a torus.

    Attributes
    ----------
    form : ReferenceForm
    F : ndarray
        Lebesgue density, positive.
    lam : {0, 1}
    tol : float
        Sup-norm residual tolerance.
    """

    form: ReferenceForm
    F: np.ndarray
    lam: int = 0
    tol: float = 1e-10
    max_newton: int = 60
    max_halvings: int = 20
    linear_rtol: float = 1e-10
    preconditioner: str = "spectral"
    eta: float = 0.0
    mass_rtol: float = 1e-6


@dataclass
class MaSolution:
    phi: QuasiPshFunction
    residual: float
    steps: int
    mass_defect: float
    lagrange: float = 0.0
    history: list = field(default_factory=list)
    eta: float = 0.0
    gmres_iterations: int = 0

    @property
    def values(self) -> np.ndarray:
        return self.phi.values


def density_from_relative(form: ReferenceForm, f) -> np.ndarray:
    """``F = f n! 2^n det g``: converts a density relative to ``omega^n``."""
    dens = np.broadcast_to(volume_density(form), tuple(form.manifold.shape))
    return np.asarray(f, dtype=float) * dens


def make_problem(form: ReferenceForm, f=None, lam=0, F=None, eta_t=None, **controls) -> MaProblem:
    """Build and validate a problem.

    Parameters
    ----------
    f : array_like, optional
        Density relative to ``omega^n / V``; so ``f = 1`` has solution zero.
    F : array_like, optional
        Lebesgue density given directly (needed for degenerate forms).
    eta_t : float, optional
        Family parameter ``t``.  For forms not flagged Kähler the solver adds
        ``eta omega_X`` with ``eta = 1e-3 t``; for ``lam = 0`` the density is
        then rescaled to the volume of the regularized class.
    """
    M = form.manifold
    if not M.is_torus:
        raise GeometryError("the Monge-Ampere solver runs on tori")
    if lam not in (0, 1):
        raise SolverError("lam must be 0 or 1")
    eta = 0.0
    if form.flag != "kahler" and eta_t is not None and eta_t > 0:
        eta = 1e-3 * float(eta_t)
        form = make_form(M, np.asarray(form.coeffs) + 0.5 * eta * np.eye(M.n), "kahler", form.label + "+eta",
                         tol_closed=np.inf, meta=dict(form.meta))
    if F is None:
        if f is None:
            f = np.ones(M.shape)
        F = density_from_relative(form, np.broadcast_to(f, M.shape))
    F = np.array(np.broadcast_to(F, M.shape), dtype=float)
    if np.any(~np.isfinite(F)) or F.min() <= 0:
        raise SolverError("density must be finite and positive")
    if eta > 0 and lam == 0:
        F = normalize_mass(form, F)
    P = MaProblem(form, F, int(lam), eta=eta, **controls)
    if lam == 0:
        V = volume(form).V
        mass = float(np.sum(F) * M.cell_volume)
        if abs(mass - V) > P.mass_rtol * V:
            raise SolverError(f"incompatible mass: int F = {mass:.10g} but V = {V:.10g}")
    return P


def normalize_mass(form: ReferenceForm, F) -> np.ndarray:
    """Rescale a Lebesgue density so that its integral equals ``V``."""
    M = form.manifold
    return np.asarray(F, dtype=float) * volume(form).V / (np.sum(F) * M.cell_volume)


def cell_average(func, M, order=2) -> np.ndarray:
    """Average ``func(x)`` over each grid cell by tensor Gauss-Legendre nodes.

    ``order = 2`` gives the 4-point rule in dimension one.  ``func`` receives
    real coordinates of shape ``(2n, *grid)``.
    """
    nodes, wts = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * nodes  # on [-1/2, 1/2]
    wts = 0.5 * wts
    u = M.grid_u()
    hu = M.spacing_u
    d = M.real_dim
    acc = np.zeros(M.shape)
    for idx in np.ndindex(*(order,) * d):
        off = np.array([nodes[i] * hu[a] for a, i in enumerate(idx)])
        w = float(np.prod([wts[i] for i in idx]))
        x = np.einsum("ab,b...->a...", M.period_matrix, u + off.reshape((d,) + (1,) * d))
        acc += w * func(x)
    return acc


# ---------------------------------------------------------------- pointwise algebra

def _hermitian_data(A):
    """Return ``(positive_definite, logdet, inverse)`` for a field of Hermitian matrices."""
    n = A.shape[-1]
    if n == 1:
        a = np.real(A[..., 0, 0])
        pd = a > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            return pd, np.log(np.where(pd, a, 1.0)), (1.0 / np.where(pd, a, 1.0))[..., None, None].astype(complex)
    if n == 2:
        a = np.real(A[..., 0, 0])
        d = np.real(A[..., 1, 1])
        b = A[..., 0, 1]
        det = a * d - np.abs(b) ** 2
        pd = (a > 0) & (det > 0)
        safe = np.where(pd, det, 1.0)
        inv = np.empty(A.shape, dtype=complex)
        inv[..., 0, 0] = d / safe
        inv[..., 1, 1] = a / safe
        inv[..., 0, 1] = -b / safe
        inv[..., 1, 0] = -np.conj(b) / safe
        return pd, np.log(safe), inv
    lam = np.linalg.eigvalsh(A)
    pd = lam[..., 0] > 0
    sign, ld = np.linalg.slogdet(A)
    return pd, np.real(ld), np.linalg.inv(A)


def _coefficients(M, B) -> np.ndarray:
    """Stencil coefficients (one per pair a <= b, lattice coordinates) of ``v -> tr(B dd^c v)``."""
    n = M.n
    d = 2 * n
    C = np.zeros(B.shape[:-2] + (d, d))
    for j in range(n):
        for k in range(n):
            b = B[..., k, j]
            C[..., 2 * j, 2 * k] += 0.25 * b.real
            C[..., 2 * j + 1, 2 * k + 1] += 0.25 * b.real
            C[..., 2 * j, 2 * k + 1] -= 0.25 * b.imag
            C[..., 2 * j + 1, 2 * k] += 0.25 * b.imag
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    if M.is_rectangular:
        L = np.diag(M.period_matrix)
        Cu = C / np.outer(L, L)
    else:
        Pinv = M.hessian_transform
        Cu = np.einsum("ac,...cd,bd->...ab", Pinv, C, Pinv)
    pairs = _accel.all_pairs(d)
    out = np.empty((len(pairs),) + tuple(M.shape))
    for p, (a, b) in enumerate(pairs):
        out[p] = Cu[..., a, a] if a == b else 2.0 * Cu[..., a, b]
    return out


def _symbol(M, cbar, lam):
    """Fourier symbol of ``sum_p cbar_p D_p - lam`` on the lattice grid."""
    d = M.real_dim
    hu = M.spacing_u
    thetas = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(N) for N in M.shape], indexing="ij")
    S = np.full(tuple(M.shape), -float(lam))
    for p, (a, b) in enumerate(_accel.all_pairs(d)):
        if a == b:
            S += cbar[p] * (2 * np.cos(thetas[a]) - 2) / hu[a] ** 2
        else:
            S += cbar[p] * (-np.sin(thetas[a]) * np.sin(thetas[b])) / (hu[a] * hu[b])
    return S


def solve_constant_coefficient(M, cbar, rhs, lam=0.0):
    """Solve ``(sum_p cbar_p D_p - lam) v = rhs`` by FFT (mean-zero part when ``lam = 0``)."""
    S = _symbol(M, cbar, lam)
    r = sfft.fftn(rhs)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(np.abs(S) > 1e-300, r / S, 0.0)
    return np.real(sfft.ifftn(v))


def admissible_start(prob: MaProblem) -> np.ndarray:
    """Potential with ``tr_g`` matching ``tau = n (F / (n! 2^n))^{1/n}`` up to a constant.

    Solves ``sum_j phi_{j jbar} = tau - tr g`` (mean-corrected) by FFT; exact
    for ``n = 1``.
    """
    form = prob.form
    M = form.manifold
    n = M.n
    g = form.matrix_field()
    tau = n * (prob.F / (math.factorial(n) * 2.0**n)) ** (1.0 / n)
    rhs = tau - np.real(np.trace(g, axis1=-2, axis2=-1))
    rhs = rhs - rhs.mean()
    B = np.broadcast_to(np.eye(n, dtype=complex), tuple(M.shape) + (n, n))
    cbar = _coefficients(M, B).reshape(len(_accel.all_pairs(2 * n)), -1).mean(axis=1)
    return solve_constant_coefficient(M, cbar, rhs)


# ---------------------------------------------------------------- Newton

def _evaluate(prob: MaProblem, phi, c):
    M = prob.form.manifold
    n = M.n
    A = prob.form.matrix_field() + complex_from_real(real_hessian(M, phi))
    pd, logdet, B = _hermitian_data(A)
    R = logdet - np.log(prob.F / (math.factorial(n) * 2.0**n)) - prob.lam * phi - c
    return bool(pd.all()), R, B


def solve_ma(prob: MaProblem, init=None, init_c=0.0, verbose=False) -> MaSolution:
    """Damped Newton iteration with positivity safeguard.

    Raises
    ------
    SolverDivergence
        When 20 successive halvings fail to decrease the residual.
    """
    form = prob.form
    M = form.manifold
    shape = tuple(M.shape)
    N = M.size
    lam = prob.lam
    pairs = _accel.all_pairs(M.real_dim)
    hu = M.spacing_u

    if init is not None:
        phi = np.array(init, dtype=float)
    elif form.min_eigenvalue() > 0:
        phi = np.zeros(shape)
    else:
        phi = admissible_start(prob)
    if lam == 0:
        phi = phi - phi.mean()
    c = float(init_c) if lam == 0 else 0.0
    ok, R, B = _evaluate(prob, phi, c)
    if not ok:
        phi = admissible_start(prob)
        ok, R, B = _evaluate(prob, phi, c)
        if not ok:
            raise SolverDivergence("no admissible starting point", phi)
    res = float(np.max(np.abs(R)))
    history = [res]
    steps = 0
    total_gm = 0
    while res > prob.tol:
        if steps >= prob.max_newton:
            raise SolverDivergence(f"no convergence after {steps} Newton steps (residual {res:.3g})", phi, history)
        coeffs = _coefficients(M, B)
        cbar = coeffs.reshape(len(pairs), -1).mean(axis=1)
        S = _symbol(M, cbar, lam)

        def J(v):
            return _accel.stencil_apply(v.reshape(shape), coeffs, hu, pairs).ravel() - lam * v

        if lam == 0:
            def A_op(w):
                v, dc = w[:N], w[N]
                return np.concatenate([J(v) - dc, [v.mean()]])

            def prec(w):
                r, s = w[:N].reshape(shape), w[N]
                if prob.preconditioner == "jacobi":
                    dcv = -r.mean()
                    v = (r + dcv) / _jacobi_diag(coeffs, hu, pairs, lam)
                    return np.concatenate([(v - v.mean() + s).ravel(), [dcv]])
                dcv = -r.mean()
                rh = sfft.fftn(r)
                with np.errstate(divide="ignore", invalid="ignore"):
                    vh = np.where(np.abs(S) > 1e-300, rh / S, 0.0)
                v = np.real(sfft.ifftn(vh)) + s
                return np.concatenate([v.ravel(), [dcv]])

            size = N + 1
            rhs = np.concatenate([-R.ravel(), [0.0]])
        else:
            A_op = J

            def prec(w):
                r = w.reshape(shape)
                if prob.preconditioner == "jacobi":
                    return (r / _jacobi_diag(coeffs, hu, pairs, lam)).ravel()
                return np.real(sfft.ifftn(sfft.fftn(r) / S)).ravel()

            size = N
            rhs = -R.ravel()
        count = [0]

        def cb(_):
            count[0] += 1

        Aop = LinearOperator((size, size), matvec=A_op, dtype=float)
        Pop = LinearOperator((size, size), matvec=prec, dtype=float)
        sol, info = gmres(Aop, rhs, rtol=prob.linear_rtol, atol=0.0, restart=60, maxiter=50, M=Pop,
                          callback=cb, callback_type="pr_norm")
        total_gm += count[0]
        dphi = sol[:N].reshape(shape)
        dc = float(sol[N]) if lam == 0 else 0.0
        tau = 1.0
        accepted = False
        for _ in range(prob.max_halvings):
            cand = phi + tau * dphi
            cc = c + tau * dc
            ok2, R2, B2 = _evaluate(prob, cand, cc)
            if ok2:
                r2 = float(np.max(np.abs(R2)))
                if r2 < res:
                    accepted = True
                    break
            tau *= 0.5
        if not accepted:
            raise SolverDivergence("Newton stagnation: no residual decrease over damped trials", phi, history)
        phi, c, R, B, res = cand, cc, R2, B2, r2
        if lam == 0:
            phi = phi - phi.mean()
        steps += 1
        history.append(res)
        if verbose:
            print(f"newton {steps}: residual {res:.3e} step {tau:g} gmres {count[0]}")
    norm = "intrinsic"
    if lam == 0:
        phi = phi - phi.max()
        norm = "sup-zero"
    sol = QuasiPshFunction(form, phi, norm)
    mass = _mass(prob, phi)
    return MaSolution(sol, res, steps, abs(mass - 1.0), c, history, prob.eta, total_gm)


def _jacobi_diag(coeffs, hu, pairs, lam):
    d = np.zeros(coeffs.shape[1:])
    for p, (a, b) in enumerate(pairs):
        if a == b:
            d -= 2.0 * coeffs[p] / hu[a] ** 2
    return d - lam


def _mass(prob: MaProblem, phi) -> float:
    """Total mass of ``V^{-1} (omega + dd^c phi)^n``."""
    form = prob.form
    M = form.manifold
    n = M.n
    A = form.matrix_field() + complex_from_real(real_hessian(M, phi))
    det = np.real(np.linalg.det(A)) if n > 2 else np.real(_hermitian_det(A))
    return float(math.factorial(n) * 2.0**n * np.sum(det) * M.cell_volume / volume(form).V)


def _hermitian_det(A):
    if A.shape[-1] == 1:
        return A[..., 0, 0]
    return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]


# ---------------------------------------------------------------- manufactured solutions

@dataclass(frozen=True)
class TrigMode:
    """``amp * cos(2 pi k . u + phase)`` in lattice coordinates."""

    amp: float
    k: tuple
    phase: float = 0.0


def trig_field(M, modes):
    """Value and analytic real Hessian (x-coordinates) of a trigonometric polynomial."""
    u = M.grid_u()
    d = M.real_dim
    val = np.zeros(M.shape)
    Hu = np.zeros(tuple(M.shape) + (d, d))
    for m in modes:
        k = np.asarray(m.k, dtype=float)
        arg = 2 * np.pi * np.tensordot(k, u, axes=(0, 0)) + m.phase
        val += m.amp * np.cos(arg)
        Hu -= m.amp * np.cos(arg)[..., None, None] * (2 * np.pi) ** 2 * np.outer(k, k)
    Pinv = M.hessian_transform
    Hx = np.einsum("ac,...ab,bd->...cd", Pinv, Hu, Pinv)
    return val, Hx


def manufactured_problem(form: ReferenceForm, modes, lam=0, **controls):
    """Problem whose continuum solution is the given trigonometric polynomial."""
    M = form.manifold
    n = M.n
    val, Hx = trig_field(M, modes)
    A = form.matrix_field() + complex_from_real(Hx)
    det = np.real(np.linalg.det(A))
    if det.min() <= 0:
        raise SolverError("manufactured potential is not strictly omega-psh")
    F = math.factorial(n) * 2.0**n * det * np.exp(-lam * val)
    if lam == 0:
        # continuum mass is V exactly; the grid sum of a trig polynomial is exact too
        pass
    return make_problem(form, F=F, lam=lam, **controls), val


def manufactured_error(sol: MaSolution, exact, lam) -> float:
    """Sup error, comparing mean-zero representatives when ``lam = 0``."""
    v = sol.values
    if lam == 0:
        return float(np.max(np.abs((v - v.mean()) - (exact - exact.mean()))))
    return float(np.max(np.abs(v - exact)))


# ---------------------------------------------------------------- checks

def lp_norm(f, weights, p) -> float:
    w = np.asarray(weights, dtype=float)
    return float((np.sum(w * np.abs(f) ** p) / np.sum(w)) ** (1.0 / p))


def verify_apriori(sol: MaSolution, cert, nu_weights, f_rel, tol=1e-9) -> dict:
    """Check ``-M <= phi <= 0`` against a certificate.

    ``f_rel`` is the density of ``mu`` relative to ``nu``.

    Raises
    ------
    SolverError
        If the measured ``||f||_p`` exceeds the certificate's ``C``.
    """
    if cert.mode in ("Lp", "big"):
        measured = lp_norm(f_rel, nu_weights, cert.p)
        if measured > cert.C * (1 + 1e-12):
            raise SolverError(f"invalid certificate: ||f||_p = {measured:.6g} > C = {cert.C:.6g}")
    v = sol.values
    sup, inf = float(v.max()), float(v.min())
    return {"sup": sup, "inf": inf, "M": cert.M, "slack": cert.M - abs(inf),
            "holds": bool(inf >= -cert.M - tol and abs(sup) <= 1e-12)}


def residual_field(prob: MaProblem, phi, c=0.0) -> np.ndarray:
    ok, R, _ = _evaluate(prob, np.asarray(phi, dtype=float), c)
    return R


def comparison_check(sub, sup, prob: MaProblem, tol=1e-9) -> dict:
    """Check ``sub <= sup`` for a discrete sub- and supersolution (``lam = 1``).

    ``sub`` must satisfy ``R(sub) >= -tol`` and ``sup`` must satisfy
    ``R(sup) <= tol``, where ``R = log det - log F' - phi``.
    """
    if prob.lam != 1:
        raise SolverError("comparison_check needs lam = 1")
    a = np.asarray(getattr(sub, "values", sub), dtype=float)
    b = np.asarray(getattr(sup, "values", sup), dtype=float)
    ok_a, Ra, _ = _evaluate(prob, a, 0.0)
    ok_b, Rb, _ = _evaluate(prob, b, 0.0)
    if not ok_a or Ra.min() < -tol:
        raise SolverError("sub is not a discrete subsolution")
    if not ok_b or Rb.max() > tol:
        raise SolverError("sup is not a discrete supersolution")
    gap = b - a
    return {"holds": bool(gap.min() >= -tol), "min_gap": float(gap.min()), "max_gap": float(gap.max())}


def sup_bound_check(sol: MaSolution, h) -> dict:
    """``0 <= sup phi <= -inf h`` for ``(omega + dd^c phi)^n = e^{phi + h} omega^n``."""
    s = float(sol.values.max())
    bound = -float(np.min(h))
    return {"sup": s, "bound": bound, "holds": bool(-1e-9 <= s <= bound + 1e-9)}
