"""Hot grid kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time.  Setting the environment variable
``PLURIPOT_NO_NUMBA=1`` (or running without numba installed) selects the numpy
implementations.  Both paths evaluate the same floating-point formulas, so they
agree to rounding.
"""

import os

import numpy as np

_DISABLED = os.environ.get("PLURIPOT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by PLURIPOT_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKEND = "numba" if HAVE_NUMBA else "numpy"


def neighbor_table(shape):
    """Flat indices of the periodic +1 / -1 neighbours along every axis.

    Returns an int64 array of shape ``(ndim, 2, N)``.
    """
    shape = tuple(int(s) for s in shape)
    idx = np.arange(int(np.prod(shape)), dtype=np.int64).reshape(shape)
    out = np.empty((len(shape), 2, idx.size), dtype=np.int64)
    for a in range(len(shape)):
        out[a, 0] = np.roll(idx, -1, axis=a).ravel()
        out[a, 1] = np.roll(idx, 1, axis=a).ravel()
    return out


def all_pairs(ndim):
    """Index pairs (a, b) with a <= b, in row-major order."""
    return np.array([(a, b) for a in range(ndim) for b in range(a, ndim)], dtype=np.int64)


# ---------------------------------------------------------------- numpy path

def _d2_numpy(v, spacing, a, b):
    if a == b:
        return (np.roll(v, -1, a) - 2.0 * v + np.roll(v, 1, a)) / spacing[a] ** 2
    vp = np.roll(v, -1, a)
    vm = np.roll(v, 1, a)
    return (np.roll(vp, -1, b) - np.roll(vp, 1, b) - np.roll(vm, -1, b) + np.roll(vm, 1, b)) / (
        4.0 * spacing[a] * spacing[b]
    )


def second_differences_numpy(v, spacing, pairs):
    v = np.asarray(v, dtype=float)
    out = np.empty((len(pairs),) + v.shape)
    for p, (a, b) in enumerate(pairs):
        out[p] = _d2_numpy(v, spacing, int(a), int(b))
    return out


def stencil_apply_numpy(v, coeffs, spacing, pairs):
    v = np.asarray(v, dtype=float)
    acc = np.zeros_like(v)
    for p, (a, b) in enumerate(pairs):
        acc += coeffs[p] * _d2_numpy(v, spacing, int(a), int(b))
    return acc


def psor_redblack_numpy(u, psi, b, wx, wy, omega, tol, max_sweeps):
    u = np.array(u, dtype=float)
    nx, ny = u.shape
    color = (np.add.outer(np.arange(nx), np.arange(ny)) % 2).astype(bool)
    masks = (~color, color)
    denom = 2.0 * wx + 2.0 * wy
    last = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        last = 0.0
        for m in masks:
            nb = wx * (np.roll(u, -1, 0) + np.roll(u, 1, 0)) + wy * (np.roll(u, -1, 1) + np.roll(u, 1, 1))
            upper = (nb + b) / denom
            new = np.minimum(psi, u + omega * (upper - u))
            d = np.abs(new[m] - u[m])
            if d.size:
                last = max(last, float(d.max()))
            u[m] = new[m]
        if last < tol:
            break
    return u, sweeps, last


# ---------------------------------------------------------------- numba path

@njit(cache=True)
def _second_differences_nb(v, nbr, inv, pairs):
    npair = pairs.shape[0]
    n = v.shape[0]
    out = np.empty((npair, n))
    for i in range(n):
        vi = v[i]
        for p in range(npair):
            a = pairs[p, 0]
            b = pairs[p, 1]
            if a == b:
                out[p, i] = (v[nbr[a, 0, i]] - 2.0 * vi + v[nbr[a, 1, i]]) * inv[p]
            else:
                ip = nbr[a, 0, i]
                im = nbr[a, 1, i]
                out[p, i] = (v[nbr[b, 0, ip]] - v[nbr[b, 1, ip]] - v[nbr[b, 0, im]] + v[nbr[b, 1, im]]) * inv[p]
    return out


@njit(cache=True)
def _stencil_apply_nb(v, coeffs, nbr, inv, pairs):
    npair = pairs.shape[0]
    n = v.shape[0]
    out = np.empty(n)
    for i in range(n):
        vi = v[i]
        acc = 0.0
        for p in range(npair):
            a = pairs[p, 0]
            b = pairs[p, 1]
            if a == b:
                d = (v[nbr[a, 0, i]] - 2.0 * vi + v[nbr[a, 1, i]]) * inv[p]
            else:
                ip = nbr[a, 0, i]
                im = nbr[a, 1, i]
                d = (v[nbr[b, 0, ip]] - v[nbr[b, 1, ip]] - v[nbr[b, 0, im]] + v[nbr[b, 1, im]]) * inv[p]
            acc += coeffs[p, i] * d
        out[i] = acc
    return out


@njit(cache=True)
def _psor_redblack_nb(u, psi, b, wx, wy, omega, tol, max_sweeps):
    nx, ny = u.shape
    denom = 2.0 * wx + 2.0 * wy
    last = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        last = 0.0
        for c in range(2):
            # red-black: read a frozen copy so the update matches the vectorised path
            old = u.copy()
            for i in range(nx):
                ip = i + 1 if i + 1 < nx else 0
                im = i - 1 if i > 0 else nx - 1
                for j in range(ny):
                    if (i + j) % 2 != c:
                        continue
                    jp = j + 1 if j + 1 < ny else 0
                    jm = j - 1 if j > 0 else ny - 1
                    nb = wx * (old[ip, j] + old[im, j]) + wy * (old[i, jp] + old[i, jm])
                    upper = (nb + b[i, j]) / denom
                    new = min(psi[i, j], old[i, j] + omega * (upper - old[i, j]))
                    d = abs(new - old[i, j])
                    if d > last:
                        last = d
                    u[i, j] = new
        if last < tol:
            break
    return u, sweeps, last


def _inv_factors(spacing, pairs):
    inv = np.empty(len(pairs))
    for p, (a, b) in enumerate(pairs):
        inv[p] = 1.0 / spacing[a] ** 2 if a == b else 1.0 / (4.0 * spacing[a] * spacing[b])
    return inv


_NBR_CACHE: dict = {}


def _nbr(shape):
    key = tuple(shape)
    tab = _NBR_CACHE.get(key)
    if tab is None:
        tab = neighbor_table(key)
        if len(_NBR_CACHE) > 8:
            _NBR_CACHE.clear()
        _NBR_CACHE[key] = tab
    return tab


def second_differences_numba(v, spacing, pairs):
    v = np.ascontiguousarray(v, dtype=float)
    pairs = np.ascontiguousarray(pairs, dtype=np.int64)
    out = _second_differences_nb(v.ravel(), _nbr(v.shape), _inv_factors(spacing, pairs), pairs)
    return out.reshape((len(pairs),) + v.shape)


def stencil_apply_numba(v, coeffs, spacing, pairs):
    v = np.ascontiguousarray(v, dtype=float)
    pairs = np.ascontiguousarray(pairs, dtype=np.int64)
    c = np.ascontiguousarray(np.broadcast_to(coeffs, (len(pairs),) + v.shape)).reshape(len(pairs), -1)
    out = _stencil_apply_nb(v.ravel(), c, _nbr(v.shape), _inv_factors(spacing, pairs), pairs)
    return out.reshape(v.shape)


def psor_redblack_numba(u, psi, b, wx, wy, omega, tol, max_sweeps):
    u = np.array(u, dtype=float)
    return _psor_redblack_nb(u, np.ascontiguousarray(psi, dtype=float), np.ascontiguousarray(b, dtype=float),
                             float(wx), float(wy), float(omega), float(tol), int(max_sweeps))


# ---------------------------------------------------------------- dispatch

if HAVE_NUMBA:
    second_differences = second_differences_numba
    stencil_apply = stencil_apply_numba
    psor_redblack = psor_redblack_numba
else:  # pragma: no cover
    second_differences = second_differences_numpy
    stencil_apply = stencil_apply_numpy
    psor_redblack = psor_redblack_numpy
