"""Transform solve against the direct solve, and the expansion residual, under dt refinement.

    python scripts/oracle_convergence.py --N 32 --dts 5e-4 2.5e-4 1.25e-4
"""
import argparse

import numpy as np

from phi43.spectral import TorusGrid
from phi43.transform import expansion_residual, solve_direct_phi, solve_u
from phi43.trees import Mollifier, generate_trees

from _common import cosine_data, save


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--N", type=int, default=32)
    p.add_argument("--delta", type=float, default=0.125)
    p.add_argument("--T", type=float, default=0.25)
    p.add_argument("--dts", type=float, nargs="+", default=[5e-4, 2.5e-4])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--residual", action="store_true", help="also track the expansion residual")
    p.add_argument("--out")
    a = p.parse_args()
    g = TorusGrid(a.d, a.N)
    m = Mollifier("sharp", a.delta)
    h = min(a.dts)
    phi0 = cosine_data(g)
    rows = []
    for dt in a.dts:
        ens = generate_trees(g, m, a.T, dt, a.seed, noise_substeps=int(round(dt / h)),
                             save_every=max(1, int(round(a.T / 10 / dt))))
        ref = solve_direct_phi(ens, phi0).phi
        tr = solve_u(ens, phi0).phi
        row = {"dt": dt, "relative_difference": float(np.max(np.abs(ref.data - tr.data)) / ref.sup_norm())}
        if a.residual:
            row["expansion_residual"] = expansion_residual(ens, phi0)
        rows.append(row)
        print(row)
    save(a.out, "oracle.json", {"runs": rows})


if __name__ == "__main__":
    main()
