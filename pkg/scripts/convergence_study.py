"""Grid refinement of the flat profile diagnostics and of lambda_1."""
import argparse
import math

from flatsol.grid import Ball, Interval, build_grid
from flatsol.groundstate import equation_residual, find_flat_profile
from flatsol.model import make_params
from flatsol.spectral import principal_dirichlet_eigen


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[257, 513, 1025, 2049, 4097])
    args = ap.parse_args()

    print("lambda_1 errors (interval (0, pi), unit 3-ball)")
    prev = None
    for n in args.sizes:
        e = (abs(principal_dirichlet_eigen(build_grid(Interval(0, math.pi), n)).eigenvalue - 1),
             abs(principal_dirichlet_eigen(build_grid(Ball(3, 1.0), n)).eigenvalue - math.pi**2))
        rate = "" if prev is None else "  rates " + " ".join(
            f"{math.log2(p / c):.2f}" for p, c in zip(prev, e))
        print(f"  n={n:5d}  {e[0]:.3e}  {e[1]:.3e}{rate}")
        prev = e

    print("flat profile, N=1, (0.3, 0.5), lambda=2")
    p = make_params(0.3, 0.5, 2.0, 1)
    for n in args.sizes:
        gs = find_flat_profile(p, n=n)
        print(f"  n={n:5d}  flatness {gs.flatness_defect:.3e}  "
              f"pohozaev/scale {gs.pohozaev_residual / gs.scale:.3e}  "
              f"residual {equation_residual(gs):.3e}")


if __name__ == "__main__":
    main()
