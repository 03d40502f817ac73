"""Classify a grid of exponent pairs for several dimensions.

Writes one sweep directory per dimension under --out and prints the
fraction of admissible pairs that land in the stable set.  With --plot a
PNG of the labels is saved next to each summary.
"""
import argparse
import csv
from pathlib import Path

from flatsol.harness import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/regime_map"))
    ap.add_argument("--num", type=int, default=50, help="points per axis")
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3, 4, 10])
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    for N in args.dims:
        cfg = {"template": {"kind": "classify", "params": {"dimension": N}},
               "axes": {"alpha": {"start": 0.01, "stop": 0.98, "num": args.num},
                        "beta": {"start": 0.02, "stop": 0.99, "num": args.num}}}
        out = args.out / f"N{N}"
        rep = sweep(cfg, out, parallel=args.parallel)
        h = rep.headline
        print(f"N={N:3d}  stable fraction {h['fraction_StableSet']:.4f}  "
              f"(stable {h['count_StableSet']}, unstable {h['count_UnstableSet']}, "
              f"on curve {h['count_OnCurve']}, skipped {h['failed']})")
        if args.plot:
            _plot(out / "summary.csv", out / "regimes.png", N)


def _plot(summary, png, N):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    colours = {"StableSet": "tab:blue", "UnstableSet": "tab:orange", "OnCurve": "k"}
    with open(summary, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "ok"]
    fig, ax = plt.subplots(figsize=(5, 5))
    for lab, c in colours.items():
        pts = [(float(r["alpha"]), float(r["beta"])) for r in rows if r["label"] == lab]
        if pts:
            ax.scatter(*zip(*pts), s=6, c=c, label=lab)
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    ax.set_title(f"N = {N}")
    ax.legend(loc="lower right")
    fig.savefig(png, dpi=120)
    plt.close(fig)


if __name__ == "__main__":
    main()
