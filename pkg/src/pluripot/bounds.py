"""Explicit a priori constants for degenerate complex Monge-Ampere equations.

Two families of hypotheses are supported.  In the ``Lp`` mode the density has
a bounded L^p norm against a reference measure satisfying a uniform
exponential integrability bound; in the ``orlicz`` mode only an
L log^{n+eps} L bound is available.  Both produce a :class:`BoundCertificate`
whose ``M`` bounds the sup-normalized solution from below by ``-M``.

The capacity-decay iteration that turns a capacity domination into the
finite threshold ``s_inf`` is simulated by :func:`giorgio_iteration`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special


class HypothesisError(ValueError):
    """Raised when the supplied hypothesis data are inconsistent."""


@dataclass(frozen=True)
class HypothesisData:
    """Constants entering the integrability hypotheses.

    Parameters
    ----------
    n : int
        Complex dimension.
    alpha, A : float
        Exponential integrability exponent and constant of the reference
        measure.  ``A >= 1`` is forced because the measure is a probability
        measure and sup-normalized potentials are nonpositive.
    C : float
        Density constant (L^p norm bound, or Luxemburg norm bound in Orlicz mode).
    p : float, optional
        Lebesgue exponent, ``p > 1``.  Ignored in Orlicz mode.
    eps : float, optional
        Log-power excess for the Orlicz mode, ``eps > 0``.
    mode : {"Lp", "orlicz", "big"}
    """

    n: int
    alpha: float
    A: float
    C: float
    p: float | None = 2.0
    eps: float | None = None
    mode: str = "Lp"

    @property
    def q(self) -> float:
        if self.p is None:
            raise HypothesisError("p is required in Lp mode")
        return self.p / (self.p - 1.0)

    def validate(self):
        if int(self.n) != self.n or self.n < 1:
            raise HypothesisError(f"n must be a positive integer, got {self.n}")
        if not self.alpha > 0:
            raise HypothesisError("alpha must be positive")
        if not self.C > 0:
            raise HypothesisError("C must be positive")
        if self.A < 1:
            raise HypothesisError(
                f"A = {self.A} < 1 is impossible for a probability measure and sup-normalized potentials"
            )
        if self.mode in ("Lp", "big"):
            if self.p is None or not self.p > 1:
                raise HypothesisError("p must exceed 1")
        elif self.mode == "orlicz":
            if self.eps is None or not self.eps > 0:
                raise HypothesisError("eps must be positive")
        else:
            raise HypothesisError(f"unknown mode {self.mode!r}")
        return self


@dataclass
class BoundCertificate:
    """Constants realizing the lower bound ``-M <= phi <= 0``."""

    mode: str
    n: int
    alpha: float
    A: float
    C: float
    b_n: float
    D: float
    s_0: float
    M: float
    p: float | None = None
    q: float | None = None
    eps: float | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def bn_constant(n) -> float:
    """Minimal ``b_n`` with ``exp(-1/x) <= b_n^n x^{2n}`` for all ``x > 0``.

    The ratio ``exp(-1/x) x^{-2n}`` is maximal at ``x = 1/(2n)``, which gives
    ``b_n = (2n)^2 / e^2``.
    """
    if int(n) != n or n < 1:
        raise HypothesisError(f"n must be a positive integer, got {n}")
    return (2.0 * n) ** 2 / math.e**2


def _log_qfact(q):
    return special.gammaln(q + 1.0)


def kolodziej_bound(H: HypothesisData) -> BoundCertificate:
    """Closed-form constant for an L^p density (modes ``Lp`` and ``big``).

    ``D = b_n^n C A^{1/q} e^{alpha/q}``,
    ``s_0 = 1 + e D^{1/n} C (q!)^{1/q} A^{1/q} / alpha`` and
    ``M = s_0 + 5 D^{1/n}``.
    """
    H.validate()
    if H.mode not in ("Lp", "big"):
        raise HypothesisError("kolodziej_bound needs mode 'Lp' or 'big'")
    n, q, C, A, a = H.n, H.q, H.C, H.A, H.alpha
    bn = bn_constant(n)
    D = bn**n * C * A ** (1.0 / q) * math.exp(a / q)
    Dn = D ** (1.0 / n)
    qf = math.exp(_log_qfact(q) / q)
    s0 = 1.0 + math.e * Dn * C * qf * A ** (1.0 / q) / a
    M = s0 + 5.0 * Dn
    return BoundCertificate(mode=H.mode, n=n, alpha=a, A=A, C=C, b_n=bn, D=D, s_0=s0, M=M, p=H.p, q=q,
                            extras={"sharp_M": s0 + math.e**2 / (math.e - 1.0) * Dn})


def kolodziej_M_expanded(n, p, C, alpha, A) -> float:
    """The same ``M`` written as one expression (used to cross-check identities)."""
    q = p / (p - 1.0)
    bn = bn_constant(n)
    qf = math.exp(_log_qfact(q) / q)
    return 1.0 + C ** (1.0 / n) * A ** (1.0 / (n * q)) * math.exp(alpha / (n * q)) * bn * (
        5.0 + math.e / alpha * C * qf * A ** (1.0 / q)
    )


# ---------------------------------------------------------------- iteration

@dataclass
class IterationResult:
    s_sequence: np.ndarray
    deltas: np.ndarray
    s_infinity: float
    coarse_bound: float
    sharp_bound: float
    reached_infinity: bool
    recursion_violations: int


def giorgio_iteration(f: Callable[[float], float], D, n, s_start, kappa=2.0, max_iter=10_000,
                      tiny=1e-300) -> IterationResult:
    """Run ``s_{j+1} = s_j + e D^{1/n} exp(-(kappa-1) f(s_j))``.

    For a nondecreasing ``f >= 0`` obeying
    ``f(s + d) >= kappa f(s) + log d - log(D)/n`` the gain ``f(s_{j+1}) - f(s_j)``
    is at least one, so the increments decay geometrically and the sequence
    stops before ``s_start + e D^{1/n} / (1 - e^{1-kappa})``.

    Parameters
    ----------
    f : callable
        Nondecreasing map to ``[0, +inf]``.
    D, n : float, int
        Domination constant and dimension.
    s_start : float
        Starting level, must give ``delta_0 < 1``.
    kappa : float
        Capacity exponent, ``> 1``.

    Returns
    -------
    IterationResult
        The recursion hypothesis is re-checked along the orbit and the number
        of violations reported.
    """
    if kappa <= 1:
        raise HypothesisError("kappa must exceed 1")
    if D < 0:
        raise HypothesisError("D must be nonnegative")
    e = math.e
    coarse = s_start + 5.0 * D ** (1.0 / n)
    sharp = s_start + e * D ** (1.0 / n) / (1.0 - math.exp(1.0 - kappa))
    if D == 0:
        return IterationResult(np.array([s_start]), np.array([]), float(s_start), coarse, sharp, False, 0)
    Dn = D ** (1.0 / n)
    L = math.log(D) / n
    s = float(s_start)
    fs = f(s)
    delta0 = e * Dn * math.exp(-(kappa - 1.0) * fs) if np.isfinite(fs) else 0.0
    if delta0 >= 1.0:
        raise HypothesisError(f"delta_0 = {delta0:.6g} >= 1: s_start lies below the admissible threshold")
    seq, deltas = [s], []
    violations = 0
    reached = not np.isfinite(fs)
    for _ in range(max_iter):
        if not np.isfinite(fs):
            reached = True
            break
        d = e * Dn * math.exp(-(kappa - 1.0) * fs)
        if d <= tiny or s + d == s:
            break
        s_new = s + d
        f_new = f(s_new)
        if np.isfinite(f_new) and f_new < kappa * fs + math.log(d) - L - 1e-12 * max(1.0, abs(fs)):
            violations += 1
        deltas.append(d)
        seq.append(s_new)
        s, fs = s_new, f_new
    return IterationResult(np.array(seq), np.array(deltas), s, coarse, sharp, reached, violations)


def admissible_log_profile(D, n, b, S, rng=None, a=None):
    """Random profile ``f(s) = a - b log(S - s)`` obeying the doubling recursion.

    For ``b`` in ``(0, 1]`` and ``0 <= s < S`` the worst case of
    ``b log(x - d) - 2 b log x + log d`` over ``0 < d < x <= S`` equals
    ``(1-b) log S + b log b - (1+b) log(1+b)``, which yields the admissible
    upper limit returned as ``a_max``.
    """
    L = math.log(D) / n
    a_max = L + (b - 1.0) * math.log(S) + (b + 1.0) * math.log1p(b) - (b * math.log(b) if b > 0 else 0.0)
    if a is None:
        rng = np.random.default_rng() if rng is None else rng
        a = a_max - rng.uniform(0.0, 2.0)
    if a > a_max + 1e-12:
        raise HypothesisError("profile violates the doubling recursion")

    def f(s):
        if s >= S:
            return math.inf
        return a - b * math.log(S - s)

    return f, a, a_max


# ---------------------------------------------------------------- Orlicz machinery

def _tail_integral(Y, a):
    """``int_0^Y (Y - u)^a e^{-u} du``, so that ``int_0^Y y^a e^y dy = e^Y * it``."""
    if Y <= 0:
        return 0.0
    val, _ = integrate.quad(lambda u: (Y - u) ** a * math.exp(-u), 0.0, Y, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _log_legendre_tail(sig, a):
    """Log of ``int_0^sig (sig^a - (sig-u)^a) e^{-u} du``; ``chi*(s) = e^sig * tail``."""
    if sig <= 0:
        return -math.inf
    # factor sig^a out and write 1 - (1-u/sig)^a without cancellation; e^{-u} kills u > 80
    g = lambda u: -math.expm1(a * math.log1p(-u / sig)) * math.exp(-u) if u < sig else math.exp(-u)
    val, _ = integrate.quad(g, 0.0, min(sig, 80.0), epsabs=0.0, epsrel=1e-13, limit=200)
    return a * math.log(sig) + math.log(val)


@dataclass(frozen=True)
class OrliczFunctions:
    """Young function ``chi`` with ``chi' (t) = log(1+t)^a`` and its conjugate.

    ``a = n + eps``.  ``chi`` is normalized by ``chi(0) = 0``.
    """

    n: int
    eps: float = 1.0

    @property
    def a(self) -> float:
        return self.n + self.eps

    def chi(self, t) -> float:
        if t < 0:
            raise ValueError("chi is defined for t >= 0")
        Y = math.log1p(t)
        return math.exp(Y) * _tail_integral(Y, self.a)

    def chi_prime(self, t) -> float:
        if t < 0:
            raise ValueError("chi is defined for t >= 0")
        return math.log1p(t) ** self.a

    def chi_closed_form(self, t) -> float:
        """Polynomial-times-exponential form, valid for integer ``a``.

        Subtracting the value at zero makes ``chi(0) = 0``.
        """
        a = int(round(self.a))
        if abs(a - self.a) > 1e-12:
            raise ValueError("closed form requires an integer exponent")
        Y = math.log1p(t)
        poly = sum((-1) ** (a - j) * math.factorial(a) / math.factorial(j) * Y**j for j in range(a + 1))
        return (t + 1.0) * poly - (-1) ** a * math.factorial(a)

    def sigma(self, s) -> float:
        return s ** (1.0 / self.a)

    def chi_star(self, s) -> float:
        if s < 0:
            raise ValueError("chi* is evaluated on s >= 0")
        sig = self.sigma(s)
        return math.exp(sig + _log_legendre_tail(sig, self.a)) if sig > 0 else 0.0

    def log_chi_star(self, s) -> float:
        sig = self.sigma(s)
        return sig + _log_legendre_tail(sig, self.a)

    def t_of_s(self, s) -> float:
        return math.expm1(self.sigma(s))

    def chi_inverse(self, y) -> float:
        if y < 0:
            raise ValueError("chi inverse needs y >= 0")
        if y == 0:
            return 0.0
        hi = 1.0
        while self.chi(hi) < y:
            hi *= 2.0
        return optimize.brentq(lambda t: self.chi(t) - y, 0.0, hi, xtol=1e-15, rtol=1e-15)

    def chi_star_inverse_log(self, logy) -> float:
        """Solve ``log chi*(s) = logy`` for ``s``."""
        return math.exp(self.log_chi_star_inverse_log(logy))

    def log_chi_star_inverse_log(self, logy) -> float:
        """``log s`` where ``log chi*(s) = logy``; stable for huge ``y`` and large exponents."""
        g = lambda sig: sig + _log_legendre_tail(sig, self.a) - logy
        lo, hi = 1e-6, max(2.0, 2.0 * abs(logy) + 10.0)
        while g(lo) > 0:
            lo *= 0.1
        while g(hi) < 0:
            hi *= 2.0
        sig = optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-15)
        return self.a * math.log(sig)

    def chi_many(self, x) -> np.ndarray:
        """Vectorized ``chi`` via ``chi(t) = int_0^{log(1+t)} Y^a e^Y dY``.

        The values are sorted and the integral is accumulated over consecutive
        gaps with 20-point Gauss-Legendre rules.
        """
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        Y = np.log1p(flat)
        top = float(Y.max()) if Y.size else 0.0
        # geometric breakpoints resolve the Y^a behaviour at zero
        extra = np.geomspace(1e-14, top, 48) if top > 1e-14 else np.zeros(0)
        ys = np.unique(np.concatenate([[0.0], Y, extra]))
        gx, gw = np.polynomial.legendre.leggauss(20)
        lo, hi = ys[:-1], ys[1:]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = mid[:, None] + half[:, None] * gx[None, :]
        seg = half * np.sum(gw[None, :] * nodes**self.a * np.exp(nodes), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        return cum[np.searchsorted(ys, Y)].reshape(x.shape)

    def luxemburg_norm(self, values, weights, tol=1e-13) -> float:
        """``inf{r > 0 : sum w chi(|f|/r) <= 1}`` by bisection, weights summing to 1."""
        v = np.abs(np.asarray(values, dtype=float)).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if not np.any(v > 0):
            return 0.0
        total = lambda r: float(np.sum(w * self.chi_many(v / r)))
        lo, hi = 1e-300, max(float(v.max()), 1.0)
        while total(hi) > 1.0:
            hi *= 2.0
        lo = hi / 2.0
        while total(lo) <= 1.0:
            lo /= 2.0
        while hi - lo > tol * hi:
            mid = 0.5 * (lo + hi)
            if total(mid) <= 1.0:
                hi = mid
            else:
                lo = mid
        return hi

    def indicator_norm_star(self, mass) -> float:
        """Luxemburg ``chi*`` norm of an indicator of measure ``mass``: ``1/chi*^{-1}(1/mass)``."""
        if mass <= 0:
            return 0.0
        return 1.0 / self.chi_star_inverse_log(-math.log(mass))


def orlicz_machinery(n, eps=1.0):
    """Return ``(chi, chi_star, luxemburg_norm)`` evaluators for ``a = n + eps``."""
    if int(n) != n or n < 1:
        raise HypothesisError("n must be a positive integer")
    if not eps > 0:
        raise HypothesisError("eps must be positive")
    o = OrliczFunctions(int(n), float(eps))
    return o.chi, o.chi_star, o.luxemburg_norm


def psh_chi_star_norm_bound(o: OrliczFunctions, alpha, A, y_max=1e5) -> float:
    """Upper bound on the ``chi*`` Luxemburg norm of sup-normalized potentials.

    If ``int exp(-alpha psi) dnu <= A`` then
    ``int chi*(|psi|/r) dnu <= A sup_y chi*(y/r) e^{-alpha y}``, so the norm is at
    most the root ``r`` of ``log A + max_y [log chi*(y/r) - alpha y] = 0``.
    """
    ys = np.geomspace(1e-8, y_max, 600)

    def G(r):
        v = np.array([o.log_chi_star(y / r) - alpha * y for y in ys])
        k = int(np.argmax(v))
        lo, hi = ys[max(k - 1, 0)], ys[min(k + 1, len(ys) - 1)]
        res = optimize.minimize_scalar(lambda y: -(o.log_chi_star(y / r) - alpha * y), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-12})
        return math.log(A) + max(float(v[k]), -float(res.fun))

    lo, hi = 1e-3, 1.0
    while G(hi) > 0:
        hi *= 2.0
    while G(lo) < 0:
        lo *= 0.5
    return optimize.brentq(G, lo, hi, xtol=1e-13)


def orlicz_bound(H: HypothesisData, n_grid=400, n_kappa=40) -> BoundCertificate:
    """Finite ``M`` under an L log^{n+eps} L density bound.

    Steps: Hölder-Young gives ``mu(K) <= 2 C' r(nu(K))`` with
    ``r(nu) = 1 / chi*^{-1}(1/nu)``, and ``mu(K) <= 1`` trivially; the capacity
    comparison gives ``nu(K) <= A e^alpha exp(-alpha Cap^{-1/n})``.  The
    composition ``Phi(Cap)`` is dominated by ``C''(k) Cap^k`` for every exponent
    ``1 < k <= 1 + eps/n`` because capacities never exceed one.  ``C''(k)`` is a
    sup over a logarithmic capacity grid; at the top exponent the analytic
    small-capacity limit ``2 C' alpha^{-(n+eps)}`` is included.  The
    capacity-decay iteration then gives
    ``M(k) = s_0(k) + e C''(k)^{1/n} / (1 - e^{1-k})`` and the smallest value
    over a ladder of exponents is returned.
    """
    H.validate()
    if H.mode != "orlicz":
        raise HypothesisError("orlicz_bound needs mode 'orlicz'")
    n, eps, Cp, al, A = H.n, float(H.eps), H.C, H.alpha, H.A
    o = OrliczFunctions(n, eps)
    a = o.a
    kappa_max = 1.0 + eps / n

    # u = Cap^{-1/n}; log nu_max = log A + alpha - alpha u, capped at 0
    us = np.geomspace(1.0, 1e7, n_grid)
    log_phi = np.empty(n_grid)
    for k, u in enumerate(us):
        log_nu = min(0.0, math.log(A) + al - al * u)
        log_phi[k] = min(0.0, math.log(2.0 * Cp) - o.log_chi_star_inverse_log(-log_nu))
    log_limit = math.log(2.0 * Cp) - a * math.log(al)

    # m1 bounds the mu-mean of -phi: int (-phi) dmu <= 2 C' ||phi||_{chi*}
    m1 = 2.0 * Cp * psh_chi_star_norm_bound(o, al, A)

    kappas = kappa_max - (kappa_max - 1.0) * (1.0 - np.linspace(0.0, 1.0, n_kappa + 1)[1:]) ** 2
    if 2.0 < kappa_max:
        kappas = np.append(kappas, 2.0)
    best = None
    for kap in np.unique(kappas):
        logC2 = float(np.max(log_phi + kap * n * np.log(us)))
        if kap == kappa_max:
            logC2 = max(logC2, log_limit)
        expo = n / (kap - 1.0)
        log_base = 1.0 + logC2 / n
        with np.errstate(over="ignore"):
            s0 = 1.0 + float(np.exp(math.log(m1) + expo * (math.log(2.0) + log_base)))
            M = s0 + float(np.exp(log_base)) / (1.0 - math.exp(1.0 - kap))
        if best is None or M < best[0]:
            best = (M, s0, float(kap), logC2)
    M, s0, kap, logC2 = best
    C2 = math.exp(logC2)
    return BoundCertificate(mode="orlicz", n=n, alpha=al, A=A, C=Cp, b_n=bn_constant(n), D=C2, s_0=s0, M=M,
                            eps=eps, extras={"kappa": kap, "kappa_max": kappa_max, "C_double_prime": C2,
                                             "m1": m1,
                                             "small_cap_limit": math.exp(log_limit)})


def certificate(H: HypothesisData) -> BoundCertificate:
    """Dispatch on ``H.mode``."""
    if H.mode == "orlicz":
        return orlicz_bound(H)
    return kolodziej_bound(H)
