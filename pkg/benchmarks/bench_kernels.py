"""Timing comparison of the numba and numpy kernel backends.

Runs each hot kernel on representative workloads with both implementations,
checks they agree numerically, and prints a timing table. Run directly:

    python3 benchmarks/bench_kernels.py

The module imports both backends explicitly, so the AUBASE_NO_NUMBA switch
is irrelevant here; it only affects which backend the library binds at
import time.
"""

from __future__ import annotations

import time

import numpy as np

from aubase import _kernels as K
from aubase.wavelet import db8


def _time(fn, *args, repeats: int = 5) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b, tol: float = 1e-9) -> bool:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = max(1.0, float(np.max(np.abs(a))))
    return a.shape == b.shape and float(np.max(np.abs(a - b))) <= tol * scale


def bench() -> list:
    rng = np.random.default_rng(7)
    bank = db8()
    h, g = bank.h, bank.g

    x = rng.normal(size=65536)
    a_half = rng.normal(size=32768)
    d_half = rng.normal(size=32768)
    points = rng.normal(size=(2000, 64))
    refs = rng.normal(size=(400, 64))
    sym = rng.normal(size=(120, 120))
    sym = (sym + sym.T) / 2.0

    cases = [
        ("dwt_level  (n=65536)", K.dwt_level_numpy, K.dwt_level_jit, (x, h, g)),
        ("idwt_level (n=32768)", K.idwt_level_numpy, K.idwt_level_jit, (a_half, d_half, h, g)),
        ("pairwise_sqdist (2000x400x64)", K.pairwise_sqdist_numpy, K.pairwise_sqdist_jit, (points, refs)),
        ("jacobi_sweeps (120x120)", K.jacobi_sweeps_numpy, K.jacobi_sweeps_jit, (sym.copy(), 1e-12, 100)),
    ]

    rows = []
    for name, f_np, f_jit, args in cases:
        if K.HAS_NUMBA:
            f_jit(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])  # compile
        out_np = f_np(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])
        out_jit = f_jit(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])
        ref = out_np[0] if isinstance(out_np, tuple) else out_np
        got = out_jit[0] if isinstance(out_jit, tuple) else out_jit
        ok = _agree(ref, got)
        t_np = _time(f_np, *[a.copy() if isinstance(a, np.ndarray) else a for a in args])
        t_jit = _time(f_jit, *[a.copy() if isinstance(a, np.ndarray) else a for a in args])
        rows.append((name, t_np, t_jit, ok))
    return rows


def main() -> None:
    if not K.HAS_NUMBA:
        print("numba not importable; timing the numpy backend against itself")
    print(f"{'kernel':<32} {'numpy':>10} {'numba':>10} {'speedup':>9}  agree")
    for name, t_np, t_jit, ok in bench():
        ratio = t_np / t_jit if t_jit > 0 else float("inf")
        print(f"{name:<32} {t_np*1e3:>8.2f}ms {t_jit*1e3:>8.2f}ms {ratio:>8.1f}x  {ok}")


if __name__ == "__main__":
    main()
