"""Compare the numba and numpy grid kernels: wall time and agreement.

Run ``python benchmarks/bench_kernels.py``.  The numba timings exclude the
first (compiling) call.
"""

import argparse
import timeit

import numpy as np

from pluripot import _accel


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def cases(rng):
    # 4-d stencil on a 24^4 grid (complex dimension 2)
    shape4 = (24,) * 4
    v4 = rng.standard_normal(shape4)
    h4 = np.full(4, 1.0 / 24)
    pairs4 = _accel.all_pairs(4)
    coeffs4 = rng.standard_normal((len(pairs4),) + shape4)
    yield ("second_differences 24^4",
           lambda: _accel.second_differences_numpy(v4, h4, pairs4),
           lambda: _accel.second_differences_numba(v4, h4, pairs4))
    yield ("stencil_apply 24^4",
           lambda: _accel.stencil_apply_numpy(v4, coeffs4, h4, pairs4),
           lambda: _accel.stencil_apply_numba(v4, coeffs4, h4, pairs4))
    # projected SOR on a 64^2 obstacle problem
    N = 64
    x = np.arange(N) / N
    # obstacle -1 on a square, 0 elsewhere
    square = (np.abs(x[:, None] - 0.4) < 0.1) & (np.abs(x[None, :] - 0.4) < 0.1)
    psi = np.where(square, -1.0, 0.0)
    b = np.full((N, N), -1.0)

    def psor(kern):
        return lambda: kern(np.zeros((N, N)), psi, b, N * N, N * N, 1.5, 1e-9, 2000)[0]
    yield ("psor_redblack 64^2", psor(_accel.psor_redblack_numpy), psor(_accel.psor_redblack_numba))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba unavailable (or disabled): nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, f_np, f_nb in cases(rng):
        a, b = np.asarray(f_np()), np.asarray(f_nb())  # warm-up and compile
        t_np, t_nb = _best(f_np, args.repeat), _best(f_nb, args.repeat)
        diff = float(np.max(np.abs(a - b)))
        print(f"{name:28s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
