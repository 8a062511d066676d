"""Renormalisation constants: mode sums, Monte Carlo check and scaling in delta.

    python scripts/constants.py --N 64 --ms 2 3 4 5
"""
import argparse

from phi43.spectral import TorusGrid
from phi43.trees import Mollifier, compute_a, constant_scaling, monte_carlo_a

from _common import save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--ms", type=int, nargs="+", default=[2, 3, 4, 5])
    p.add_argument("--family", default="sharp")
    p.add_argument("--mc-realizations", type=int, default=64)
    p.add_argument("--out")
    a = p.parse_args()
    cs = constant_scaling(TorusGrid(3, a.N), a.ms, a.family)
    g32, m = TorusGrid(3, 32), Mollifier(a.family, 1 / 8)
    mc, err = monte_carlo_a(g32, m, a.mc_realizations, seed=1)
    save(a.out, "constants.json", {
        "ms": cs.ms, "a": cs.a, "b": cs.b, "a_slope": cs.a_slope,
        "a_increment_slope": cs.a_increment_slope, "b_slope": cs.b_slope, "b_r2": cs.b_r2,
        "monte_carlo": {"delta": 1 / 8, "N": 32, "a": compute_a(g32, m), "estimate": mc, "stderr": err}})


if __name__ == "__main__":
    main()
