"""Sharp and Gaussian mollifiers on one noise path as delta shrinks.

    python scripts/mollifier_independence.py --ms 1 2 3 4
"""
import argparse

from phi43.estimates import delta_convergence_study
from phi43.spectral import TorusGrid

from _common import cosine_data, save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--ms", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--T", type=float, default=0.25)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--out")
    a = p.parse_args()
    g = TorusGrid(3, a.N)
    rep = delta_convergence_study(g, [2.0**-m for m in a.ms], cosine_data(g), a.T, a.dt, a.seed)
    save(a.out, "mollifier.json", rep.to_dict())


if __name__ == "__main__":
    main()
