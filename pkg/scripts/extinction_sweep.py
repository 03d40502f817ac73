"""Extinction time as a function of lambda below the principal eigenvalue."""
import argparse
import math
from pathlib import Path

import numpy as np

from flatsol.grid import Interval, build_grid, sample
from flatsol.model import make_params
from flatsol.parabolic import EvolutionConfig, evolve, extinction_time
from flatsol.spectral import principal_dirichlet_eigen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--n", type=int, default=257)
    ap.add_argument("--dt", type=float, default=1e-4)
    ap.add_argument("--t-end", type=float, default=20.0)
    ap.add_argument("--fractions", type=float, nargs="+",
                    default=[0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875])
    ap.add_argument("--out", type=Path, default=Path("runs/extinction_sweep.csv"))
    args = ap.parse_args()

    grid = build_grid(Interval(0.0, math.pi), args.n)
    lam1 = principal_dirichlet_eigen(grid).eigenvalue
    v0 = sample(grid, np.sin)
    cfg = EvolutionConfig(dt=args.dt, t_end=args.t_end, stride=20)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w") as fh:
        fh.write("lambda_over_lambda1,lambda,extinction_time\n")
        for f in args.fractions:
            p = make_params(args.alpha, args.beta, f * lam1)
            te = extinction_time(evolve(v0, p, cfg))
            print(f"lambda = {f:.3f} lambda1: T_ext = {te}")
            fh.write(f"{f!r},{f * lam1!r},{'' if te is None else repr(te)}\n")


if __name__ == "__main__":
    main()
