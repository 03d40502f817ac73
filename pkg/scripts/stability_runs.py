"""Perturb flat states in both exponent regimes and report the verdicts.

For each case the flat profile is computed by shooting, perturbed in H^1_0
by delta along several shapes, and evolved; the verdict, the largest
distance reached and (if any) the departure time are printed.
"""
import argparse

from flatsol.groundstate import find_flat_profile
from flatsol.model import classify_exponents, make_params
from flatsol.parabolic import EvolutionConfig, make_perturbation, stability_experiment
from flatsol.spectral import linearized_mu1

CASES = [(1, 0.5, 0.75), (3, 0.3, 0.5), (3, 0.05, 0.1)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1025)
    ap.add_argument("--delta", type=float, default=1e-2)
    ap.add_argument("--epsilon", type=float, default=5e-2)
    ap.add_argument("--t-end", type=float, default=50.0)
    ap.add_argument("--shapes", nargs="+", default=["eigenfunction", "bump", "random"])
    args = ap.parse_args()

    cfg = EvolutionConfig(dt=1e-4, t_end=args.t_end, stride=1000)
    for N, a, b in CASES:
        p = make_params(a, b, 1.0, N)
        gs = find_flat_profile(p, n=args.n)
        lab = classify_exponents(a, b, N).label.value
        mu1 = linearized_mu1(gs).eigenvalue
        print(f"N={N} ({a}, {b}) {lab}: mu1 = {mu1:.4g}")
        for shape in args.shapes:
            pert = make_perturbation(gs.field.grid, shape, args.delta, seed=0, base=gs.field)
            v = stability_experiment(gs, pert, cfg, epsilon=args.epsilon)
            print(f"    {shape:14s} {v.kind.value:10s} max distance {v.max_distance:.4g}"
                  + (f", at t = {v.time:.3g}" if v.time is not None else ""))


if __name__ == "__main__":
    main()
