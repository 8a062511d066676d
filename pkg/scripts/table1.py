"""Fitted regularity of every tree, sup and rms block estimators side by side.

    python scripts/table1.py --N 64 --realizations 8
"""
import argparse

from phi43.spectral import TorusGrid
from phi43.trees import Mollifier, generate_trees, regularity_report

from _common import save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--realizations", type=int, default=8)
    p.add_argument("--dt", type=float, default=2e-5)
    p.add_argument("--T", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=6)
    p.add_argument("--out")
    a = p.parse_args()
    g = TorusGrid(3, a.N)
    m = Mollifier("sharp", 1.0 / a.N)
    n = int(round(a.T / a.dt))
    ens = [generate_trees(g, m, a.T, a.dt, a.seed, r, save_every=n // 4) for r in range(a.realizations)]
    table = regularity_report(ens)
    for name, row in table.items():
        print(f"{name:3s} target {row['target']:+.2f}  sup {row['mean']:+.3f} +- {row['std']:.3f}"
              f"  rms {row['rms_mean']:+.3f} +- {row['rms_std']:.3f}")
    save(a.out, "table1.json", {k: {kk: v for kk, v in r.items() if kk != "samples"}
                               for k, r in table.items()})


if __name__ == "__main__":
    main()
