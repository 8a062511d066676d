"""Long solves from initial data of growing size; norm plateau on a late window.

    python scripts/global_bound.py --T 4 --magnitudes 1 5 10
"""
import argparse

from phi43.estimates import global_bound_study
from phi43.spectral import TorusGrid
from phi43.trees import Mollifier

from _common import cosine_data, save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.125)
    p.add_argument("--T", type=float, default=4.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--magnitudes", type=float, nargs="+", default=[1.0, 5.0, 10.0])
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--out")
    a = p.parse_args()
    g = TorusGrid(3, a.N)
    rep = global_bound_study(g, Mollifier("sharp", a.delta), cosine_data(g), a.T, a.dt,
                             a.magnitudes, a.seed, window=(a.T / 2, a.T))
    for r in rep.runs:
        print(f"|phi0|={r.magnitude:g} blow_up={r.blow_up} sup on window={r.window_sup:.4f}")
    save(a.out, "global.json", {"spread": rep.spread, "any_blow_up": rep.any_blow_up,
                                "runs": [{"magnitude": r.magnitude, "window_sup": r.window_sup,
                                          "blow_up": r.blow_up} for r in rep.runs]})


if __name__ == "__main__":
    main()
