"""Model manifolds, reference forms and volumes.

Two kinds of model are provided.

* Flat complex tori ``C^n / Lambda``.  Real coordinates are ordered
  ``(x_1, y_1, ..., x_n, y_n)`` with ``z_j = x_j + i y_j`` and the lattice is
  given by a real ``2n x 2n`` period matrix ``P``: points are ``x = P u`` with
  ``u`` on a uniform periodic grid of ``[0, 1)^{2n}``.  A block-diagonal ``P``
  with ``n = 2`` is recorded as the product fibration ``E_1 x E_2 -> E_2``.
* Chart atlases of ``P^1`` and ``P^2`` carrying the Fubini-Study form.

A (1,1)-form ``omega = i sum g_{jk} dz_j ^ dzbar_k`` is stored through its
Hermitian coefficient matrix ``g``.  With this convention
``omega^n = n! 2^n det(g) dlambda`` where ``dlambda`` is Lebesgue measure, and
the Euclidean form ``g = Id/2`` gives ``omega = dx ^ dy`` in dimension one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TOL_PSD = 1e-10
TOL_CLOSED = 1e-8
MIN_RESOLUTION = 8
MIN_ATLAS_RESOLUTION = 16


class GeometryError(ValueError):
    """Invalid manifold or form data."""


# ---------------------------------------------------------------- manifolds

@dataclass(frozen=True, eq=False)
class Chart:
    """One affine chart ``{x_k != 0}`` of ``P^N`` sampled on a cell-centred box."""

    index: int
    N: int
    radius: float
    resolution: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / self.resolution

    @property
    def shape(self) -> tuple:
        return (self.resolution,) * (2 * self.N)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** (2 * self.N)

    def axis(self) -> np.ndarray:
        h = self.spacing
        return -self.radius + (np.arange(self.resolution) + 0.5) * h

    def z(self) -> np.ndarray:
        """Complex chart coordinates, shape ``(N, *shape)``."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * (2 * self.N)), indexing="ij")
        return np.stack([mesh[2 * j] + 1j * mesh[2 * j + 1] for j in range(self.N)])

    def homogeneous(self, z=None) -> np.ndarray:
        """Homogeneous coordinates ``[.. : 1 : ..]`` with the 1 in slot ``index``."""
        z = self.z() if z is None else z
        parts = list(z)
        parts.insert(self.index, np.ones_like(parts[0]))
        return np.stack(parts)


@dataclass(frozen=True, eq=False)
class ModelManifold:
    """Immutable description of a grid model.

    Attributes
    ----------
    kind : {"torus", "product-fibration", "projective-chart-atlas"}
    n : int
        Complex dimension.
    shape : tuple of int
        Grid points per real axis (tori) or per chart axis (atlases).
    period_matrix : ndarray or None
        Real ``2n x 2n`` lattice generators (tori only).
    fibration : dict or None
        For products, ``{"fiber_axes": (0, 1), "base_axes": (2, 3)}``:
        ``z_1`` is the fiber and the map is the projection to ``z_2``.
    charts : tuple of Chart or None
    """

    kind: str
    n: int
    shape: tuple
    period_matrix: np.ndarray | None = None
    fibration: dict | None = None
    charts: tuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def is_torus(self) -> bool:
        return self.kind in ("torus", "product-fibration")

    @property
    def real_dim(self) -> int:
        return 2 * self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing_u(self) -> np.ndarray:
        return 1.0 / np.asarray(self.shape, dtype=float)

    @property
    def covolume(self) -> float:
        return abs(float(np.linalg.det(self.period_matrix)))

    @property
    def cell_volume(self) -> float:
        """Lebesgue measure of one grid cell."""
        if self.is_torus:
            return self.covolume / self.size
        return self.charts[0].cell_volume

    @property
    def is_rectangular(self) -> bool:
        P = self.period_matrix
        return P is not None and np.allclose(P, np.diag(np.diag(P)))

    @property
    def spacing_x(self) -> np.ndarray:
        """Real grid spacings, for rectangular lattices."""
        if not self.is_rectangular:
            raise GeometryError("spacing_x needs a rectangular lattice")
        return np.diag(self.period_matrix) / np.asarray(self.shape, dtype=float)

    @property
    def hessian_transform(self) -> np.ndarray:
        """``P^{-1}``: maps u-Hessians to x-Hessians via ``Pinv^T H_u Pinv``."""
        return np.linalg.inv(self.period_matrix)

    def grid_u(self) -> np.ndarray:
        axes = [np.arange(N) / N for N in self.shape]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def coords(self) -> np.ndarray:
        """Real coordinates ``x = P u``, shape ``(2n, *shape)``."""
        return np.einsum("ab,b...->a...", self.period_matrix, self.grid_u())

    def z(self) -> np.ndarray:
        x = self.coords()
        return np.stack([x[2 * j] + 1j * x[2 * j + 1] for j in range(self.n)])


def _as_shape(resolution, ndim):
    if np.isscalar(resolution):
        shape = (int(resolution),) * ndim
    else:
        shape = tuple(int(r) for r in resolution)
    if len(shape) != ndim:
        raise GeometryError(f"need {ndim} resolutions, got {len(shape)}")
    if min(shape) < MIN_RESOLUTION:
        raise GeometryError(f"grid resolution must be >= {MIN_RESOLUTION} on every axis")
    return shape


def build_torus(n: int, period_matrix=None, resolution=32) -> ModelManifold:
    """Flat torus ``R^{2n} / P Z^{2n}`` sampled on a periodic grid.

    Parameters
    ----------
    n : int
        Complex dimension.
    period_matrix : array_like, optional
        Columns generate the lattice.  Defaults to the unit square lattice.
    resolution : int or sequence of int
        Points per real axis, at least 8.
    """
    if int(n) != n or n < 1:
        raise GeometryError("n must be a positive integer")
    n = int(n)
    P = np.eye(2 * n) if period_matrix is None else np.array(period_matrix, dtype=float)
    if P.shape != (2 * n, 2 * n):
        raise GeometryError(f"period matrix must be {2 * n}x{2 * n}")
    det = np.linalg.det(P)
    if not np.isfinite(det) or abs(det) < 1e-12 * max(1.0, np.abs(P).max()) ** (2 * n):
        raise GeometryError("degenerate period matrix")
    shape = _as_shape(resolution, 2 * n)
    fibration = None
    kind = "torus"
    if n == 2 and np.allclose(P[:2, 2:], 0) and np.allclose(P[2:, :2], 0):
        kind = "product-fibration"
        fibration = {"fiber_axes": (0, 1), "base_axes": (2, 3), "fiber_dim": 1, "base_dim": 1}
    P.setflags(write=False)
    return ModelManifold(kind=kind, n=n, shape=shape, period_matrix=P, fibration=fibration)


ATLAS_RADIUS = {1: 2.0, 2: 2.5}


def fubini_study_atlas(N: int, resolution=64):
    """Chart atlas of ``P^N`` with its Fubini-Study form.

    Returns
    -------
    (ModelManifold, ReferenceForm)
        ``N + 1`` charts on ``[-R, R]^{2N}``; integration uses a smooth
        partition of unity and volumes are divided by ``pi^N`` so that the
        hyperplane class has degree one.
    """
    if N not in (1, 2):
        raise GeometryError("projective atlases are limited to N in {1, 2}")
    if int(resolution) < MIN_ATLAS_RESOLUTION:
        raise GeometryError(f"atlas resolution must be >= {MIN_ATLAS_RESOLUTION}")
    R = ATLAS_RADIUS[N]
    charts = tuple(Chart(k, N, R, int(resolution)) for k in range(N + 1))
    M = ModelManifold(kind="projective-chart-atlas", n=N, shape=charts[0].shape, charts=charts,
                      meta={"normalization": math.pi**N})
    coeffs = tuple(fs_matrix(c.z()) for c in charts)
    form = ReferenceForm(M, coeffs, "kahler", "hyperplane", closed_residual=0.0)
    return M, form


def fs_matrix(z) -> np.ndarray:
    """Fubini-Study coefficients ``((1+|z|^2) delta - zbar_j z_k) / (2 (1+|z|^2)^2)``.

    ``z`` has shape ``(N, ...)``; the result has shape ``(..., N, N)``.
    """
    z = np.asarray(z, dtype=complex)
    N = z.shape[0]
    zz = np.moveaxis(z, 0, -1)
    s = 1.0 + np.sum(np.abs(zz) ** 2, axis=-1)
    g = s[..., None, None] * np.eye(N) - np.conj(zz)[..., :, None] * zz[..., None, :]
    return g / (2.0 * s[..., None, None] ** 2)


def _smooth_step(x, a, b):
    """C-infinity step: 0 for x <= a, 1 for x >= b."""
    t = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


def partition_weights(X) -> np.ndarray:
    """Partition of unity subordinate to the standard charts.

    ``X`` holds homogeneous coordinates, shape ``(N+1, ...)``.  Weight ``k``
    vanishes unless ``|x_k|^2 / |x|^2 >= 1 / (2(N+1))``.
    """
    X = np.asarray(X)
    N = X.shape[0] - 1
    r = np.abs(X) ** 2
    r = r / r.sum(axis=0)
    b = 1.0 / (N + 1)
    psi = _smooth_step(r, b / 2.0, b)
    return psi / psi.sum(axis=0)


def chart_weights(chart: Chart) -> np.ndarray:
    return partition_weights(chart.homogeneous())[chart.index]


def chart_owner(chart: Chart) -> np.ndarray:
    """Points of the chart grid owned by it: ``argmax_j |x_j|`` equals the chart index."""
    X = chart.homogeneous()
    return np.argmax(np.abs(X), axis=0) == chart.index


def chart_transition(z, k, l):
    """Map chart-``k`` coordinates to chart ``l`` and return the Jacobian.

    Returns
    -------
    w : ndarray, shape ``(N, ...)``
    J : ndarray, shape ``(..., N, N)`` with ``J[a, j] = dw_a / dz_j``.
    """
    z = np.asarray(z, dtype=complex)
    N = z.shape[0]
    parts = list(z)
    parts.insert(k, np.ones_like(parts[0]))
    X = np.stack(parts)
    if np.any(X[l] == 0):
        raise GeometryError("point outside the target chart")
    w = np.stack([X[j] / X[l] for j in range(N + 1) if j != l])
    # dX_j/dz_m in homogeneous slots; z_m is slot idx_k[m]
    idx_k = [j for j in range(N + 1) if j != k]
    idx_l = [j for j in range(N + 1) if j != l]
    J = np.zeros(z.shape[1:] + (N, N), dtype=complex)
    for a, ja in enumerate(idx_l):
        for m, jm in enumerate(idx_k):
            d_num = 1.0 if ja == jm else 0.0
            d_den = 1.0 if l == jm else 0.0
            J[..., a, m] = d_num / X[l] - X[ja] * d_den / X[l] ** 2
    return w, J


def transition_residual(z, k, l) -> float:
    """Max mismatch between FS in chart ``k`` and the pullback of FS from chart ``l``."""
    w, J = chart_transition(z, k, l)
    gk = fs_matrix(z)
    gl = fs_matrix(w)
    pulled = np.einsum("...aj,...ab,...bk->...jk", J, gl, np.conj(J))
    return float(np.max(np.abs(pulled - gk)))


# ---------------------------------------------------------------- forms

@dataclass(frozen=True, eq=False)
class ReferenceForm:
    """Coefficient field of a closed real (1,1)-form.

    ``coeffs`` has shape ``(*grid, n, n)`` (broadcastable over the grid) for
    tori and is a tuple of per-chart fields for atlases.  ``flag`` is
    ``"kahler"`` or ``"semipositive"``.
    """

    manifold: ModelManifold
    coeffs: object
    flag: str = "kahler"
    label: str = ""
    closed_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.manifold.n

    def matrix_field(self) -> np.ndarray:
        """Coefficients broadcast to the full grid (tori)."""
        g = np.asarray(self.coeffs)
        return np.broadcast_to(g, tuple(self.manifold.shape) + (self.n, self.n))

    @property
    def is_constant(self) -> bool:
        return self.manifold.is_torus and np.asarray(self.coeffs).ndim == 2

    def determinant(self):
        if self.manifold.is_torus:
            return np.real(np.linalg.det(np.asarray(self.coeffs)))
        return tuple(np.real(np.linalg.det(c)) for c in self.coeffs)

    def min_eigenvalue(self) -> float:
        if self.manifold.is_torus:
            return float(np.min(np.linalg.eigvalsh(np.asarray(self.coeffs))))
        return float(min(np.min(np.linalg.eigvalsh(c)) for c in self.coeffs))


def _closedness_residual(M: ModelManifold, g) -> float:
    """Max of ``|d_l g_{jk} - d_j g_{lk}|`` with centred complex derivatives."""
    g = np.asarray(g)
    if g.ndim == 2 or M.n == 1:
        return 0.0
    g = np.broadcast_to(g, tuple(M.shape) + (M.n, M.n))
    Pinv = M.hessian_transform
    hu = M.spacing_u
    du = [(np.roll(g, -1, a) - np.roll(g, 1, a)) / (2 * hu[a]) for a in range(M.real_dim)]
    dx = [sum(Pinv[a, c] * du[a] for a in range(M.real_dim)) for c in range(M.real_dim)]
    dz = [0.5 * (dx[2 * j] - 1j * dx[2 * j + 1]) for j in range(M.n)]
    res = 0.0
    for l in range(M.n):
        for j in range(M.n):
            res = max(res, float(np.max(np.abs(dz[l][..., j, :] - dz[j][..., l, :]))))
    return res


def make_form(M: ModelManifold, coeffs, flag="kahler", label="", tol_psd=TOL_PSD, tol_closed=TOL_CLOSED,
              meta=None) -> ReferenceForm:
    """Validate and wrap a torus coefficient field.

    Raises
    ------
    GeometryError
        On non-Hermitian coefficients, failed positivity for the flag or a
        closedness residual above ``tol_closed``.
    """
    if not M.is_torus:
        raise GeometryError("make_form builds torus forms; use fubini_study_atlas for P^N")
    g = np.asarray(coeffs, dtype=complex)
    if g.shape[-2:] != (M.n, M.n):
        raise GeometryError("coefficient field must end with (n, n)")
    if g.ndim > 2 and g.shape[:-2] != tuple(M.shape):
        raise GeometryError("coefficient field does not match the grid")
    if np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2)))) > 1e-12 * max(1.0, np.abs(g).max()):
        raise GeometryError("coefficients are not Hermitian")
    lam = float(np.min(np.linalg.eigvalsh(g)))
    if flag == "kahler" and not lam > 0:
        raise GeometryError(f"form flagged Kahler has smallest eigenvalue {lam:.3g}")
    if flag == "semipositive" and lam < -tol_psd:
        raise GeometryError(f"form flagged semi-positive has eigenvalue {lam:.3g}")
    if flag not in ("kahler", "semipositive"):
        raise GeometryError(f"unknown flag {flag!r}")
    resid = _closedness_residual(M, g)
    if resid > tol_closed:
        raise GeometryError(f"closedness residual {resid:.3g} exceeds {tol_closed:.1g}")
    g.setflags(write=False)
    return ReferenceForm(M, g, flag, label, resid, dict(meta or {}))


def euclidean_form(M: ModelManifold, scale=1.0) -> ReferenceForm:
    """Flat form ``scale * (i/2) sum dz_j ^ dzbar_j``."""
    return make_form(M, 0.5 * scale * np.eye(M.n), "kahler", f"euclid[{scale:g}]")


def fibration_form(M: ModelManifold, t: float) -> ReferenceForm:
    """``omega_t = f^* omega_Z + t omega_X`` on ``E_1 x E_2``.

    ``omega_Z`` and ``omega_X`` are Euclidean, so ``g_t = diag(t/2, (1+t)/2)``.
    ``t = 0`` gives the semi-positive pull-back form.
    """
    if M.kind != "product-fibration":
        raise GeometryError("fibration_form needs a product fibration")
    if t < 0:
        raise GeometryError("t must be nonnegative")
    flag = "kahler" if t > 0 else "semipositive"
    return make_form(M, np.diag([t / 2.0, (1.0 + t) / 2.0]), flag, "f*omega_Z + t omega_X",
                     meta={"t": t, "base_index": 1})


def vt_expansion(t: float, int_ZX=1.0, int_XX=2.0) -> float:
    """``V_t = 2 t int omega_Z ^ omega_X + t^2 int omega_X^2`` on the product 2-torus."""
    return 2.0 * t * int_ZX + t * t * int_XX


def degenerate_form(M: ModelManifold, t: float = 0.0) -> ReferenceForm:
    """Semi-positive ``omega_0 + t omega_X`` on a one-dimensional torus.

    ``omega_0`` has density proportional to ``sin^2(pi x) + sin^2(pi y)``
    (normalized to unit area) and vanishes quadratically at the origin.
    """
    if M.n != 1 or not M.is_rectangular:
        raise GeometryError("degenerate_form is defined on rectangular one-dimensional tori")
    L = np.diag(M.period_matrix)
    x = M.coords()
    dens = np.sin(np.pi * x[0] / L[0]) ** 2 + np.sin(np.pi * x[1] / L[1]) ** 2
    # continuum mean of dens is 1, so unit area means scaling by 1/area
    g = 0.5 * dens / (L[0] * L[1]) + 0.5 * t
    flag = "kahler" if t > 0 else "semipositive"
    return make_form(M, g[..., None, None], flag, "omega_0 + t omega_X", meta={"t": t})


def form_path(form: ReferenceForm, hess, t: float) -> ReferenceForm:
    """``omega + t dd^c chi`` given the complex Hessian field of ``chi``."""
    g = np.asarray(form.coeffs) + t * np.asarray(hess)
    return make_form(form.manifold, g, "semipositive", form.label, tol_closed=np.inf)


# ---------------------------------------------------------------- volumes

@dataclass
class VolumeReport:
    V: float
    weights: object

    def check(self, rtol=1e-12) -> bool:
        w = self.weights if isinstance(self.weights, tuple) else (self.weights,)
        return abs(sum(float(np.sum(x)) for x in w) - self.V) <= rtol * abs(self.V)


def volume_density(form: ReferenceForm, det=None):
    """``n! 2^n det(g)``, the density of ``omega^n`` against Lebesgue measure."""
    n = form.n
    det = form.determinant() if det is None else det
    c = math.factorial(n) * 2.0**n
    if isinstance(det, tuple):
        return tuple(c * d for d in det)
    return c * det


def volume(form: ReferenceForm, tol_psd=TOL_PSD) -> VolumeReport:
    """Total volume ``int omega^n`` with per-cell weights.

    Raises
    ------
    GeometryError
        If the determinant is negative beyond ``tol_psd``.
    """
    M = form.manifold
    dens = volume_density(form)
    if M.is_torus:
        dens = np.broadcast_to(dens, tuple(M.shape))
        if np.min(dens) < -tol_psd:
            raise GeometryError("negative volume density: form is not semi-positive")
        w = dens * M.cell_volume
        return VolumeReport(float(np.sum(w)), w)
    out = []
    for c, d in zip(M.charts, dens):
        out.append(chart_weights(c) * d * c.cell_volume / M.meta["normalization"])
    return VolumeReport(float(sum(np.sum(x) for x in out)), tuple(out))


# ---------------------------------------------------------------- I/O

def manifold_from_config(sec) -> tuple:
    """Build ``(manifold, form)`` from a flat key-value mapping.

    Keys: ``kind`` (torus | projective), ``n``, ``resolution`` and optionally
    ``period_matrix`` given as rows separated by ``;``.
    """
    kind = sec.get("kind", "torus")
    n = int(sec.get("n", 1))
    res = int(sec.get("resolution", 32))
    if kind.startswith("proj"):
        return fubini_study_atlas(n, res)
    P = None
    if sec.get("period_matrix"):
        P = np.array([[float(v) for v in row.split()] for row in sec["period_matrix"].split(";")])
    M = build_torus(n, P, res)
    return M, euclidean_form(M)


def dump_grid_csv(M: ModelManifold, values, path, name="value"):
    """Write ``index, coordinates, value`` rows for a torus field."""
    x = M.coords().reshape(M.real_dim, -1)
    v = np.asarray(values).reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{a}" for a in range(M.real_dim)] + [name])
        for i in range(v.size):
            w.writerow([i] + [f"{x[a, i]:.12g}" for a in range(M.real_dim)] + [f"{v[i]:.12g}"])


def sample_pairs(shape: Sequence[int], count: int, rng) -> np.ndarray:
    """Random pairs of flat grid indices."""
    size = int(np.prod(shape))
    return rng.integers(0, size, size=(count, 2))
