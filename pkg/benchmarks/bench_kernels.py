"""Element kernels: numba loops against the vectorised numpy versions.

Run with ``python benchmarks/bench_kernels.py [--levels 0 1 2]``. Each row
times one full pass over the triangles of the shipped mesh at the given
refinement level and checks that both backends agree.
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from hicon import _accel, kernels
from hicon.config import load_config
from hicon.mesh import build_unit_cell_mesh, refine_times

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "ellipse.yaml"
VOIGT = np.array([[1.4, 1.0, 0.0], [1.0, 1.4, 0.0], [0.0, 0.0, 0.4]])
CHI = np.array([0.3, -0.2])


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(levels, repeat: int) -> list[dict]:
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is disabled (HICON_DISABLE_NUMBA) or not installed")
    base = build_unit_cell_mesh(load_config(CONFIG).geometry)
    rows = []
    for level in levels:
        mesh = refine_times(base, level)
        coords = mesh.vertices[mesh.triangles]
        for name, f_np, f_nb in (
            ("stiffness", lambda: kernels.element_stiffness_numpy(coords, 2, VOIGT, CHI), lambda: kernels.element_stiffness_numba(coords, 2, VOIGT, CHI)),
            ("mass", lambda: kernels.element_mass_numpy(coords, 2), lambda: kernels.element_mass_numba(coords, 2)),
        ):
            f_nb()  # compile outside the timing
            a, b = f_np(), f_nb()
            diff = max(np.abs(x - y).max() for x, y in zip(a, b) if x is not None)
            t_np, t_nb = best_of(f_np, repeat), best_of(f_nb, repeat)
            rows.append(dict(level=level, n=len(coords), kernel=name, numpy=t_np, numba=t_nb, diff=diff))
    return rows


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'level':>5} {'elements':>9} {'kernel':>10} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max diff':>9}")
    for r in run(args.levels, args.repeat):
        print(
            f"{r['level']:>5} {r['n']:>9} {r['kernel']:>10} {r['numpy']:>10.4f} {r['numba']:>10.4f} "
            f"{r['numpy'] / r['numba']:>8.2f} {r['diff']:>9.1e}"
        )


if __name__ == "__main__":
    main()
