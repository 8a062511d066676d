"""Wick cube differences across delta against the raw cube.

    python scripts/necessity.py --alphas -0.6 -1.6
"""
import argparse

from phi43.spectral import TorusGrid
from phi43.trees import renormalization_necessity

from _common import save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--ms", type=int, nargs="+", default=[1, 2, 3, 4])
    p.add_argument("--realizations", type=int, default=8)
    p.add_argument("--alphas", type=float, nargs="+", default=[-0.6, -1.6])
    p.add_argument("--out")
    a = p.parse_args()
    out = {}
    for alpha in a.alphas:
        r = renormalization_necessity(TorusGrid(3, a.N), a.ms, a.realizations, seed=2, alpha=alpha)
        out[str(alpha)] = {"w3_differences": r.w3_differences, "z3_norms": r.z3_norms,
                           "differences_decrease": r.differences_decrease,
                           "raw_increases": r.raw_increases}
    save(a.out, "necessity.json", out)


if __name__ == "__main__":
    main()
