"""Grid refinement study for the 1-D mean-field solver.

Runs the density from N(1, 1) toward the standard normal on successively
halved dx and dt, and prints the largest gap between the discrete KL rate
and the dissipation integral at each level.

    python scripts/pde_refinement.py --levels 3
"""

import argparse
import math

import numpy as np

from steinlab.measures import GridDensity1D
from steinlab.meanfield1d import cfl_limit, dissipation_mismatch, run_pde
from steinlab.models import GaussianKernel, Quadratic


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", type=int, default=256)
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--courant", type=float, default=0.4)
    args = ap.parse_args()

    pot, k = Quadratic(), GaussianKernel(1.0)
    dt = None
    prev = None
    for level in range(args.levels):
        n = args.cells * 2**level
        rho0 = GridDensity1D.from_function(lambda x: np.exp(-(x - 1.0) ** 2 / 2), -12.0, 12.0, n)
        if dt is None:
            limit = 2 * args.courant * cfl_limit(rho0, pot, k)
            dt = args.t_end / math.ceil(args.t_end / limit)
        else:
            dt /= 2
        traj = run_pde(rho0, pot, k, args.t_end, dt)
        gap = float(np.max(dissipation_mismatch(traj)))
        kl = traj.diagnostics["kl"]
        ratio = "" if prev is None else f"  ratio {prev / gap:.2f}"
        print(f"n={n:5d} dt={dt:.5f} mismatch={gap:.3e} KL {kl[0]:.4f}->{kl[-1]:.2e}{ratio}")
        prev = gap


if __name__ == "__main__":
    main()
