"""Error surfaces of the initial and corrected composites against a fine run.

Writes ``error_{initial,corrected}_N{N}.vtk`` on a uniform grid (open in
ParaView or VisIt) and prints where each maximum sits.  The initial
composite's peak should sit next to a characteristic point (0, +-1); the
corrected one should not.

    python scripts/error_surfaces.py --eps-exponent 10 --n 64 128 --n-ref 512
"""

import argparse
from pathlib import Path

import numpy as np

from hemker.output import emit_field
from hemker.pipeline import run_pipeline
from hemker.verification import default_params


def surfaces(eps_exponent: int, n_values, n_ref: int, resolution: int, out: Path):
    eps = 2.0**-eps_exponent
    ref = run_pipeline(default_params(eps, n_ref))
    for N in n_values:
        run = run_pipeline(default_params(eps, N))
        for label in ("initial", "corrected"):
            path = out / f"error_{label}_eps2m{eps_exponent}_N{N}.vtk"
            X, Y, vals, mask = emit_field(getattr(run, label), resolution, path,
                                          reference=getattr(ref, label), fmt="vtk")
            k = np.nanargmax(np.where(mask, vals, np.nan))
            print(f"N={N:4d} {label:9s} max {vals.flat[k]:.4f} at ({X.flat[k]:+.3f}, {Y.flat[k]:+.3f})  -> {path}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--eps-exponent", type=int, default=10)
    ap.add_argument("--n", type=int, nargs="+", default=[64, 128])
    ap.add_argument("--n-ref", type=int, default=512)
    ap.add_argument("--resolution", type=int, default=257)
    ap.add_argument("--out", type=Path, default=Path("out/surfaces"))
    a = ap.parse_args()
    if a.n_ref < 4 * max(a.n):
        ap.error("--n-ref must be at least 4 times the largest --n")
    surfaces(a.eps_exponent, a.n, a.n_ref, a.resolution, a.out)
