"""Canonical densities on semi-stable local models.

A local model is the polydisk ``{|z_i| < 1}`` in ``C^{n+1}`` with the map
``z -> z_0 z_1 ... z_p``.  Branch ``i`` (``1 <= i <= p``) is either a
component of the central fiber (``i <= r``) or an exceptional divisor with
discrepancy ``a_i``; branches with ``a_i = -1`` are log canonical.  On the
fiber ``{z_0 ... z_p = t}`` the coordinates ``(z_1, ..., z_n)`` are used and
the canonical density is ``|h|^{2/m} / prod_{i<=r} |z_i|^2``.

All fiber integrals are radial.  With ``rho_i = -log|z_i|`` the fiber becomes
the truncated simplex ``{rho_i >= rho_min, sum rho_i <= L}`` with
``L = -log t``, and ``2 pi r dr = 2 pi e^{-2 rho} d rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, special

LOG2 = math.log(2.0)
DEFAULT_LADDER = tuple(10.0 ** -k for k in range(1, 9))


class DensityError(ValueError):
    """Invalid local model or exponent."""


@dataclass(frozen=True)
class SncLocalModel:
    """Semi-stable local model.

    Parameters
    ----------
    p : int
        Number of branch coordinates besides ``z_0``.
    a : tuple of float
        Discrepancies of branches ``1..p``; entries for ``i <= r`` must be -1.
    r : int
        Branches that are components of the central fiber.
    m : int
        Index: ``m a_i`` must be an integer.
    n : int
        Fiber dimension, at least ``p``.
    h_orders : tuple of int, optional
        Vanishing order of ``h`` along each branch (negative for poles).
        Defaults to the maximal pole ``-(-m a_i)_+`` on exceptional branches
        and zero on central-fiber branches.
    perturbation : float
        ``h = prod z_i^{b_i} (1 + perturbation * z_1)``.
    """

    p: int
    a: tuple
    r: int = 0
    m: int = 1
    n: int | None = None
    h_orders: tuple | None = None
    perturbation: float = 0.0
    A: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        if self.n is None:
            object.__setattr__(self, "n", max(1, self.p))
        if self.h_orders is None:
            b = tuple(0 if i < self.r else -max(0, int(round(-self.m * ai))) for i, ai in enumerate(self.a))
            object.__setattr__(self, "h_orders", b)
        self.validate()

    @property
    def s(self) -> int:
        """Number of log canonical branches (``a_i = -1``)."""
        return sum(1 for x in self.a if x == -1.0)

    @property
    def lc_mask(self) -> np.ndarray:
        return np.array([x == -1.0 for x in self.a])

    @property
    def canonical(self) -> bool:
        return self.r == 0 and all(x >= 0 for x in self.a)

    def validate(self):
        if self.p < 0 or len(self.a) != self.p:
            raise DensityError("need one discrepancy per branch")
        if not 0 <= self.r <= self.p:
            raise DensityError("r must lie in [0, p]")
        if self.m < 1 or int(self.m) != self.m:
            raise DensityError("the index m must be a positive integer")
        if self.n < self.p:
            raise DensityError("fiber dimension n must be at least p")
        for i, x in enumerate(self.a):
            if x < -1.0:
                raise DensityError(f"discrepancy a_{i + 1} = {x} < -1")
            if abs(self.m * x - round(self.m * x)) > 1e-12:
                raise DensityError(f"m a_{i + 1} must be an integer")
            if i < self.r and x != -1.0:
                raise DensityError("central-fiber branches carry a = -1")
        if len(self.h_orders) != self.p:
            raise DensityError("need one order of h per branch")
        for i, (b, x) in enumerate(zip(self.h_orders, self.a)):
            if i < self.r and b < 0:
                raise DensityError("h is holomorphic along the central fiber")
            if i >= self.r and -b > max(0, round(-self.m * x)):
                raise DensityError(f"pole order {-b} exceeds (-m a_{i + 1})_+ on branch {i + 1}")
        if self.canonical and any(b < 0 for b in self.h_orders):
            raise DensityError("canonical models have pole-free h")

    def density_exponents(self) -> np.ndarray:
        """``e_i`` with density ``~ prod |z_i|^{e_i}``."""
        e = np.array([2.0 * b / self.m for b in self.h_orders])
        e[: self.r] -= 2.0
        return e


def model_from_config(sec) -> SncLocalModel:
    """Keys ``p, r, m, a_list`` (comma separated, fractions allowed), optional ``n``."""
    a = [float(Fraction(x.strip())) for x in str(sec.get("a_list", "")).split(",") if x.strip()]
    p = int(sec.get("p", len(a)))
    n = sec.get("n")
    return SncLocalModel(p=p, a=tuple(a), r=int(sec.get("r", 0)), m=int(sec.get("m", 1)),
                         n=int(n) if n is not None else None, A=float(sec.get("A", 1.0)))


# ---------------------------------------------------------------- certificates

@dataclass
class IntegralCertificate:
    t: np.ndarray
    values: np.ndarray
    sup: float
    verdict: str
    bound: float | None = None
    limit: float | None = None
    extras: dict = field(default_factory=dict)

    def rows(self):
        b = self.bound if self.bound is not None else float("nan")
        return [{"t": float(a), "value": float(v), "bound": b} for a, v in zip(self.t, self.values)]

    def to_dict(self):
        return {"t": self.t.tolist(), "values": self.values.tolist(), "sup": self.sup, "verdict": self.verdict,
                "bound": self.bound, "limit": self.limit, **self.extras}


def growth_verdict(t, values, bound=None) -> str:
    """``"uniformly bounded"`` or ``"diverging"``.

    A finite majorant dominating every value settles boundedness.  Otherwise
    the increments between ladder points are fitted against ``L = -log t``:
    decay faster than ``1/L`` per unit of ``L`` means a convergent tail.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        return "diverging"
    if bound is not None and math.isfinite(bound) and np.all(v <= bound * (1 + 1e-9)):
        return "uniformly bounded"
    L = -np.log(np.asarray(t, dtype=float))
    order = np.argsort(L)
    L, v = L[order], v[order]
    dv = np.diff(v) / np.diff(L)
    mid = 0.5 * (L[1:] + L[:-1])
    ok = dv > 0
    if np.count_nonzero(ok) < 3:
        return "uniformly bounded"
    k = np.polyfit(np.log(mid[ok][-4:]), np.log(dv[ok][-4:]), 1)[0]
    return "uniformly bounded" if k < -1.0 - 0.05 else "diverging"


def _simplex_quad(f, p, lo, L, epsrel=1e-11):
    """``int f(rho) d rho`` over ``{rho_i >= lo, sum rho <= L}`` (``p <= 3``)."""
    if p == 0:
        return float(f(np.zeros(0)))
    if L <= p * lo:
        return 0.0
    if p > 3:
        raise DensityError("fiber quadrature is limited to p <= 3")

    def ranges(i):
        def rng(*prev):
            used = sum(prev)
            return [lo, L - used - (p - 1 - i) * lo]
        return rng

    # nquad orders arguments innermost first
    opts = {"epsabs": 0.0, "epsrel": epsrel, "limit": 200}
    val, _ = integrate.nquad(lambda *x: f(np.array(x[::-1])), [ranges(i) for i in reversed(range(p))],
                             opts=[opts] * p)
    return float(val)


# ---------------------------------------------------------------- canonical case

def canonical_closed_form(p, dA, t, R=1.0) -> float:
    """``int prod |z_i|^{-2 dA}`` over ``{|z_i| < R, prod |z_i| > t}`` in ``C^p``.

    In ``rho`` variables this is ``(2 pi)^p int e^{-beta sum rho}`` over the
    truncated simplex, ``beta = 2 - 2 dA``; the sum of ``p`` exponentials is
    Gamma distributed, which gives a regularized incomplete gamma function.
    """
    beta = 2.0 - 2.0 * dA
    lo = -math.log(R)
    L = -math.log(t)
    if L <= p * lo:
        return 0.0
    return (2.0 * math.pi / beta) ** p * math.exp(-beta * p * lo) * float(special.gammainc(p, beta * (L - p * lo)))


def canonical_box_bound(p, dA, t, R=1.0) -> float:
    """Product of one-variable integrals over ``t <= |z_i| < R``."""
    beta = 2.0 - 2.0 * dA
    return (2.0 * math.pi * (R**beta - t**beta) / beta) ** p if t < R else 0.0


def canonical_quadrature(p, dA, t, R=1.0, log_power=0.0) -> float:
    """Fubini reduction to the sum variable ``u = sum rho_i``.

    ``int_{simplex} g(sum rho) = int g(u) (u - p lo)^{p-1} / (p-1)! du`` with
    ``g(u) = (2 pi)^p e^{-beta u} u^{log_power}``.
    """
    beta = 2.0 - 2.0 * dA
    lo = -math.log(R)
    L = -math.log(t)
    if L <= p * lo:
        return 0.0
    if p == 0:
        return 1.0

    def g(u):
        return (2.0 * math.pi) ** p * math.exp(-beta * u) * u**log_power * (u - p * lo) ** (p - 1) / math.factorial(p - 1)

    val, _ = integrate.quad(g, p * lo, L, epsabs=0.0, epsrel=1e-12, limit=400)
    return float(val)


def canonical_integrability(model: SncLocalModel, dA: float, ts=DEFAULT_LADDER, R=1.0,
                            log_power=0.0) -> IntegralCertificate:
    """Ladder of ``int_{V_t} prod_{i<=p} |z_i|^{-2 dA} d lambda`` over the branch coordinates.

    Raises
    ------
    DensityError
        For ``dA >= 1`` (non-integrable exponent) or negative ``dA``.
    """
    if dA >= 1.0:
        raise DensityError("exponent dA >= 1 is not integrable")
    if dA < 0:
        raise DensityError("dA must be nonnegative")
    ts = np.asarray(ts, dtype=float)
    p = model.p
    vals = np.array([canonical_quadrature(p, dA, t, R, log_power) for t in ts])
    if log_power == 0:
        exact = np.array([canonical_closed_form(p, dA, t, R) for t in ts])
        bound = canonical_box_bound(p, dA, 0.0, R)
        limit = (2.0 * math.pi / (2.0 - 2.0 * dA)) ** p * R ** ((2.0 - 2.0 * dA) * p)
        extras = {"closed_form": exact.tolist(), "box_bounds": [canonical_box_bound(p, dA, t, R) for t in ts],
                  "max_rel_error": float(np.max(np.abs(vals - exact) / np.maximum(exact, 1e-300)))}
    else:
        bound, limit, extras = None, None, {}
    return IntegralCertificate(ts, vals, float(np.max(vals)), growth_verdict(ts, vals, bound), bound, limit, extras)


# ---------------------------------------------------------------- weighted integrals

def _lc_weight_antiderivative(rho, eps):
    return -(rho ** (-eps)) / eps


def wt_factor_bound(kind, eps, delta) -> float:
    """One-variable integrals over ``[0, 1/2]``: ``(log 2)^{-eps}/eps`` or ``2^{-delta}/delta``."""
    return LOG2 ** (-eps) / eps if kind == "lc" else 0.5**delta / delta


def wt_integral(model: SncLocalModel, eps: float, delta: float, t: float) -> tuple:
    """``int_{W_t} prod_{i<=s} [r_i (-log r_i)^{1+eps}]^{-1} prod_{i>s} r_i^{delta-1} dr``.

    ``W_t = {r in [0, 1/2]^p : r_1 ... r_p >= t}``.  Returns ``(value, bound)``
    where the bound is the product of the one-variable integrals over the box.
    """
    if eps <= 0:
        raise DensityError("eps must be positive")
    if delta <= 0:
        raise DensityError("delta must be positive")
    klt = [x for x in model.a if x > -1.0]
    if klt and delta >= min((1.0 + x) / 2.0 for x in klt):
        raise DensityError("delta must be below min (1 + a_i)/2 over klt branches")
    p, s = model.p, model.s
    kinds = ["lc"] * s + ["klt"] * (p - s)
    bound = float(np.prod([wt_factor_bound(k, eps, delta) for k in kinds]))
    L = -math.log(t)
    if t >= 2.0**-p:
        return 0.0, bound
    # dr = r d rho, so the lc factor becomes rho^{-1-eps} and the klt one e^{-delta rho}
    def weight(kind, x):
        return x ** (-1.0 - eps) if kind == "lc" else math.exp(-delta * x)

    def last(kind, top):
        if kind == "lc":
            return _lc_weight_antiderivative(top, eps) - _lc_weight_antiderivative(LOG2, eps)
        return (math.exp(-delta * LOG2) - math.exp(-delta * top)) / delta

    # the last coordinate is integrated in closed form
    def inner(rest):
        top = L - float(np.sum(rest))
        if top <= LOG2:
            return 0.0
        out = last(kinds[-1], top)
        for k, x in zip(kinds, rest):
            out *= weight(k, x)
        return out

    val = _simplex_quad(inner, p - 1, LOG2, L - LOG2)
    return val, bound


def wt_closed_form_p1(eps, L, kind="lc", delta=None) -> float:
    """``p = 1``: ``(log 2)^{-eps}/eps - L^{-eps}/eps`` or ``(2^{-delta} - e^{-delta L})/delta``."""
    if L <= LOG2:
        return 0.0
    if kind == "lc":
        return (LOG2 ** (-eps) - L ** (-eps)) / eps
    return (0.5**delta - math.exp(-delta * L)) / delta


# ---------------------------------------------------------------- (H2') certificate

def _h2prime_integrand(model: SncLocalModel, eps, rho):
    """Integrand in ``rho`` variables, Jacobian ``2 pi r^2`` included.

    ``|s_F| = prod_{lc} r_i``, ``|s_klt| = prod_{klt} r_i``; for ``s = 0`` the
    section of the empty divisor has constant norm ``1/2``.
    """
    n = model.n
    k = n + eps
    lc = model.lc_mask
    lF = float(np.sum(rho[lc])) if np.any(lc) else LOG2
    lK = float(np.sum(rho[~lc]))
    weight = (lF**k + lK**k) * (2.0 * lF) ** (-(n + 1 + 2 * eps))
    meas = 1.0
    for is_lc, x, ai in zip(lc, rho, model.a):
        meas *= 2.0 * math.pi * (1.0 if is_lc else math.exp(-2.0 * (1.0 + ai) * x))
    return weight * meas


def h2prime_majorant(model: SncLocalModel, eps, delta=None) -> float | None:
    """Explicit majorant of the (H2') integrals for ``s <= 1``.

    Uses ``l^k <= (k/(e delta))^k e^{delta l}`` for the klt logarithm,
    ``l_F >= rho_1 >= log 2`` and the one-variable integrals over
    ``[log 2, inf)``.  Returns ``None`` when ``s >= 2``.
    """
    n, s = model.n, model.s
    if s >= 2:
        return None
    k = n + eps
    c = 2.0 ** (-(n + 1 + 2 * eps))
    klt = [x for x in model.a if x > -1.0]
    if delta is None:
        delta = min((1.0 + x) for x in klt) if klt else 1.0
    # klt measure factors with and without the e^{delta rho} loss
    def klt_int(ai, loss):
        b = 2.0 * (1.0 + ai) - loss
        return 2.0 * math.pi * math.exp(-b * LOG2) / b

    if s == 1:
        term_a = c * 2.0 * math.pi * LOG2 ** (-eps) / eps * float(np.prod([klt_int(x, 0.0) for x in klt]))
        if not klt:
            return term_a
        lf_pow = LOG2 ** (2.0 - (n + 1 + 2 * eps))
        term_b = (c * (k / (math.e * delta)) ** k * lf_pow * 2.0 * math.pi / LOG2
                  * float(np.prod([klt_int(x, delta) for x in klt])))
        return term_a + term_b
    # s = 0: l_F = log 2 is constant
    lead = (2.0 * LOG2) ** (-(n + 1 + 2 * eps))
    term_a = lead * LOG2**k * float(np.prod([klt_int(x, 0.0) for x in klt]))
    term_b = lead * (k / (math.e * delta)) ** k * float(np.prod([klt_int(x, delta) for x in klt]))
    return term_a + term_b


def h2prime_value(model: SncLocalModel, eps, t) -> float:
    """The (H2') integral on ``V_t`` restricted to ``|z_i| <= 1/2``."""
    L = -math.log(t)
    p = model.p
    if L <= p * LOG2:
        return 0.0
    lc = model.lc_mask
    if np.all(lc):
        return _simplex_quad(lambda rho: _h2prime_integrand(model, eps, rho), p, LOG2, L, epsrel=1e-10)
    # one klt coordinate goes last and is integrated in closed form
    j = int(np.flatnonzero(~lc)[-1])
    order = [i for i in range(p) if i != j]
    a_rest = tuple(model.a[i] for i in order)
    rl = lc[order]
    n, k = model.n, model.n + eps
    b = 2.0 * (1.0 + model.a[j])
    gk = special.gamma(k + 1.0)

    def inner(rho):
        top = L - float(np.sum(rho))
        if top <= LOG2:
            return 0.0
        lF = float(np.sum(rho[rl])) if np.any(rl) else LOG2
        c = float(np.sum(rho[~rl]))
        pref = (2.0 * lF) ** (-(n + 1 + 2 * eps)) * 2.0 * math.pi
        for is_lc, x, ai in zip(rl, rho, a_rest):
            pref *= 2.0 * math.pi * (1.0 if is_lc else math.exp(-2.0 * (1.0 + ai) * x))
        flat = lF**k * (math.exp(-b * LOG2) - math.exp(-b * top)) / b
        # int (c + x)^k e^{-b x} dx over [log 2, top]
        poly = (math.exp(b * c) * b ** (-(k + 1.0)) * gk
                * (special.gammaincc(k + 1.0, b * (c + LOG2)) - special.gammaincc(k + 1.0, b * (c + top))))
        return pref * (flat + poly)

    return _simplex_quad(inner, p - 1, LOG2, L - LOG2, epsrel=1e-10)


def h2prime_certificate(model: SncLocalModel, eps: float, ts=DEFAULT_LADDER, delta=None) -> IntegralCertificate:
    """Ladder of ``int [(-log|s_F|)^{n+eps} + (-log|s_klt|)^{n+eps}] e^{(n+1+2eps) psi_F} dens``.

    Raises
    ------
    DensityError
        For ``eps <= 0``.
    """
    if eps <= 0:
        raise DensityError("eps must be positive")
    ts = np.asarray(ts, dtype=float)
    vals = np.array([h2prime_value(model, eps, t) for t in ts])
    maj = h2prime_majorant(model, eps, delta)
    verdict = growth_verdict(ts, vals, maj)
    return IntegralCertificate(ts, vals, float(np.max(vals)), verdict, maj, None,
                               {"s": model.s, "eps": eps})


# ---------------------------------------------------------------- fiber densities

@dataclass
class DensityTable:
    radii: np.ndarray
    angles: np.ndarray
    density: np.ndarray
    exponents: np.ndarray
    h2_threshold: float
    verdict: str

    def fitted_exponents(self) -> np.ndarray:
        """Slopes of ``log density`` against ``log r`` along each branch axis."""
        p = self.density.ndim - 1
        out = []
        lr = np.log(self.radii)
        for i in range(p):
            idx = [len(self.radii) - 1] * p
            idx[i] = slice(None)
            prof = self.density[tuple(idx) + (0,)]
            ok = np.isfinite(prof) & (prof > 0)
            out.append(np.polyfit(lr[ok], np.log(prof[ok]), 1)[0])
        return np.array(out)


def h2_threshold(model: SncLocalModel) -> float:
    """Largest ``q`` with ``density^q`` locally integrable (``inf`` if bounded)."""
    e = model.density_exponents()
    worst = np.min(e) if e.size else 0.0
    return math.inf if worst >= 0 else 2.0 / (-worst)


def fiber_density(model: SncLocalModel, z) -> np.ndarray:
    """``|h|^{2/m} / prod_{i<=r} |z_i|^2`` at branch coordinates ``z`` (shape ``(p, ...)``)."""
    z = np.asarray(z, dtype=complex)
    h = np.ones(z.shape[1:], dtype=complex)
    for i, b in enumerate(model.h_orders):
        h = h * z[i] ** b
    if model.p:
        h = h * (1.0 + model.perturbation * z[0])
    dens = np.abs(h) ** (2.0 / model.m)
    for i in range(model.r):
        dens = dens / np.abs(z[i]) ** 2
    return dens


def fiber_density_table(model: SncLocalModel, t: float, n_radii=64, n_angles=8) -> DensityTable:
    """Density sampled on log-spaced radii ``[max(t, 1e-12), 1)`` per branch.

    Points with ``prod r_i < t`` lie off the fiber chart and are NaN.  The
    verdict is ``"H2"`` when some ``q > 1`` keeps the density integrable and
    ``"H2'"`` when log canonical branches force ``q <= 1``.
    """
    p = model.p
    radii = np.geomspace(max(t, 1e-12), 1.0, n_radii, endpoint=False)
    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    grids = np.meshgrid(*([radii] * p), angles, indexing="ij")
    th = grids[-1]
    z = np.stack([g * np.exp(1j * th) for g in grids[:-1]]) if p else np.zeros((0,) + th.shape)
    dens = fiber_density(model, z)
    if p:
        prod = np.prod(np.stack(grids[:-1]), axis=0)
        dens = np.where(prod >= t, dens, np.nan)
    thr = h2_threshold(model)
    verdict = "H2" if thr > 1.0 else "H2'"
    return DensityTable(radii, angles, dens, model.density_exponents(), thr, verdict)
