"""``phi43`` command line: gen-trees, solve, verify, study, info.

Exit codes: 0 pass, 1 failed check, 2 usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np
import scipy.fft as sfft

from . import __version__, lp
from .config import ConfigError, RunConfig
from .estimates import (UBoundContext, check_max_principle, check_schauder, check_U_bounds,
                        delta_convergence_study, exact_identity_suite, global_bound_study, lp_suite)
from .io import Manifest, OutputDir, encode_timefield
from .spectral import NumericalFailure
from .transform import choose_n, solve_direct_phi, solve_split, solve_u
from .trees import (TREE_NAMES, Mollifier, TreeEnsemble, generate_trees, regularity_report,
                    renorm_constants)

THREADS_ENV = "PHI43_THREADS"
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
IDENTITY_TOL = 1e-10
TABLE1_TOL = {"R1": 0.25, "R2": 0.25}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phi43", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="master seed (u64)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
        return sp

    common(sub.add_parser("gen-trees", help="sample the stochastic trees"))
    common(sub.add_parser("solve", help="solve one trajectory")).add_argument(
        "--mode", choices=("direct", "transform", "split"), default="transform")
    common(sub.add_parser("verify", help="run a verification suite")).add_argument(
        "--suite", choices=("lp", "schauder", "maxprinciple", "ubounds", "trees"), required=True)
    common(sub.add_parser("study", help="run a multi-solve study")).add_argument(
        "--study", choices=("delta", "mollifier", "global"), required=True)
    common(sub.add_parser("info", help="print the resolved config and constants"))
    return p


def _config(args) -> RunConfig:
    overrides = list(args.override)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        overrides.append(f"seed={args.seed}")
    return RunConfig.load(args.config, overrides)


def _outdir(args, cfg: RunConfig, label: str) -> OutputDir:
    out = args.out or os.path.join("runs", f"{label}-{cfg.config_hash()[:10]}")
    return OutputDir.create(out)


def _manifest(command: str, cfg: RunConfig, constants=None) -> Manifest:
    return Manifest(command, cfg.to_dict(), cfg.config_hash(), __version__,
                    {} if constants is None else {"a": constants.a, "b": constants.b})


def _ensemble(cfg: RunConfig, realization: int = 0, family=None, delta=None) -> TreeEnsemble:
    g = cfg.grid()
    m = Mollifier(family or cfg.family, delta or cfg.delta)
    return TreeEnsemble(g, m, cfg.seed, realization, cfg.dt, cfg.n_steps, renorm_constants(g, m),
                        save_every=cfg.stride, order=cfg.solver.y_order, noise=cfg.noise)


# -- commands -------------------------------------------------------------------------------

def cmd_gen_trees(cfg: RunConfig, out: OutputDir) -> int:
    g = cfg.grid()
    m = Mollifier(cfg.family, cfg.delta)
    C = renorm_constants(g, m)
    man = _manifest("gen-trees", cfg, C)
    for r in range(cfg.experiment.realizations):
        ens = generate_trees(g, m, cfg.T, cfg.dt, cfg.seed, r, cfg.stride, constants=C,
                             order=cfg.solver.y_order, noise=cfg.noise)
        for name in TREE_NAMES:
            out.write_bytes(f"r{r:03d}/{name}.phi4", encode_timefield(ens.fields[name]))
    out.write_json("constants.json", {"a": C.a, "b": C.b, "delta": C.delta, "family": C.family})
    out.write_manifest(man.finish())
    print(f"a={C.a:.10g} b={C.b:.10g} -> {out.path}")
    return EXIT_OK


def _write_result(out: OutputDir, cfg: RunConfig, res, extra: dict) -> None:
    out.write_csv("norms.csv", ["t", "linf_u", "besov_u", "linf_phi"], res.norms_table())
    out.write_jsonl("metrics.jsonl", [{"t": t, "linf_u": a, "besov_u": b, "linf_phi": c}
                                      for t, a, b, c in res.norms_table()])
    out.write_bytes("phi.phi4", encode_timefield(res.phi))
    if res.u is not None:
        out.write_bytes("u.phi4", encode_timefield(res.u))
    body = {"blow_up": res.blow_up, "t_star": res.t_star, "config_hash": cfg.config_hash(),
            "max_picard_iterations": max(res.picard_iterations, default=0)}
    body.update(extra)
    out.write_json("result.json", body)


def cmd_solve(cfg: RunConfig, out: OutputDir, mode: str) -> int:
    ens = _ensemble(cfg)
    phi0 = cfg.initial_field()
    opts = cfg.options()
    man = _manifest(f"solve --mode {mode}", cfg, ens.constants)
    if mode == "direct":
        res = solve_direct_phi(ens, phi0, opts)
        _write_result(out, cfg, res, {"mode": mode})
    elif mode == "transform":
        res = solve_u(ens, phi0, opts)
        extra = {"mode": mode}
        if cfg.experiment.name == "compare" and len(res.phi):
            ref = solve_direct_phi(ens, phi0, opts)
            k = min(len(ref.phi), len(res.phi))
            diff = np.abs(ref.phi.data[:k] - res.phi.data[:k]).reshape(k, -1).max(axis=1)
            scale = max(ref.phi.sup_norm(), 1e-300)
            out.write_csv("oracle.csv", ["t", "linf_diff"], zip(res.times[:k], diff))
            extra["oracle_relative_difference"] = float(diff.max() / scale) if k else None
        _write_result(out, cfg, res, extra)
    else:
        ref = solve_u(ens, phi0, opts)
        if ref.blow_up:
            out.write_json("result.json", {"blow_up": True, "t_star": ref.t_star, "mode": mode,
                                           "config_hash": cfg.config_hash()})
            out.write_manifest(man.finish())
            return EXIT_NUMERIC
        n = cfg.experiment.split_n or choose_n(ref.u, ref.u, cfg.eps)
        sp = solve_split(ens, phi0, n, opts)
        k = min(len(sp.u1), len(ref.u))
        err = float(np.max(np.abs(sp.u1.data[:k] + sp.u2.data[:k] - ref.u.data[:k])))
        rows = [(t, lp.linf(a), lp.linf(b), lp.linf(a + b))
                for t, a, b in zip(sp.u1.times, sp.u1.data, sp.u2.data)]
        out.write_csv("norms.csv", ["t", "linf_u1", "linf_u2", "linf_u"], rows)
        out.write_json("result.json", {"blow_up": sp.blow_up, "t_star": sp.t_star, "mode": mode,
                                       "n": n, "split_error": err,
                                       "u_sup": ref.u.sup_norm(), "config_hash": cfg.config_hash()})
        out.write_manifest(man.finish())
        print(f"split n={n} ||u1+u2-u||={err:.3e}")
        return EXIT_NUMERIC if sp.blow_up else EXIT_OK
    out.write_manifest(man.finish())
    peak = float(np.max(res.linf_phi)) if len(res.linf_phi) else float("nan")
    print(f"{mode}: blow_up={res.blow_up} max|phi|={peak:.6g} -> {out.path}")
    return EXIT_NUMERIC if res.blow_up else EXIT_OK


def cmd_verify(cfg: RunConfig, out: OutputDir, suite: str) -> int:
    g = cfg.grid()
    n = cfg.experiment.samples
    man = _manifest(f"verify --suite {suite}", cfg)
    lines, ok, payload = [], True, {}
    if suite == "lp":
        ident = exact_identity_suite(g, n, cfg.seed)
        for k, v in ident.items():
            if k == "block_bound_field_ratio":
                lines.append(f"{k}: {v:.6g} (reported)")
                continue
            good = v <= IDENTITY_TOL
            ok &= good
            lines.append(f"{k}: max error {v:.3e} {'PASS' if good else 'FAIL'}")
        reps = lp_suite(g, n, cfg.seed)
        payload = {"identities": ident, "estimates": [r.to_dict() for r in reps]}
    elif suite == "schauder":
        reps = [check_schauder(g, n, cfg.seed, variant=v) for v in (1, 2)]
        payload = {"estimates": [r.to_dict() for r in reps]}
    elif suite == "maxprinciple":
        reps = [check_max_principle(g, n, cfg.seed)]
        payload = {"estimates": [r.to_dict() for r in reps]}
    elif suite == "ubounds":
        ctx = UBoundContext.from_ensemble(_ensemble(cfg), eps=cfg.eps)
        reps = list(check_U_bounds(ctx, n, cfg.seed).values())
        payload = {"estimates": [r.to_dict() for r in reps]}
    else:
        ens = [_ensemble(cfg, r) for r in range(cfg.experiment.realizations)]
        for e in ens:
            e.fields = generate_trees(e.grid, e.mollifier, cfg.T, cfg.dt, cfg.seed, e.realization,
                                      cfg.stride, constants=e.constants).fields
        table = regularity_report(ens)
        rows = []
        for name, r in table.items():
            tol = TABLE1_TOL.get(name, 0.2)
            soft = name == "R3"
            good = abs(r["mean"] - r["target"]) <= tol
            ok &= good or soft
            tag = "soft" if soft else ("PASS" if good else "FAIL")
            lines.append(f"{name}: slope {r['mean']:+.3f} +- {r['std']:.3f} (rms {r['rms_mean']:+.3f}) "
                         f"target {r['target']:+.2f} {tag}")
            rows.append((name, r["target"], r["mean"], r["std"], r["rms_mean"], r["rms_std"]))
        out.write_csv("table1.csv", ["tree", "target", "slope", "std", "rms_slope", "rms_std"], rows)
        payload = {"table1": table}
        reps = []
    for r in reps:
        ok &= r.passed
        lines.append(r.summary())
    out.write_json("report.json", payload)
    out.write_manifest(man.finish())
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_study(cfg: RunConfig, out: OutputDir, study: str) -> int:
    g = cfg.grid()
    ex = cfg.experiment
    man = _manifest(f"study --study {study}", cfg)
    phi0 = cfg.initial_field()
    if study in ("delta", "mollifier"):
        fams = [cfg.family] if study == "delta" else list(ex.families)
        rep = delta_convergence_study(g, ex.deltas, phi0, cfg.T, cfg.dt, cfg.seed, fams, ex.alpha,
                                      cfg.stride, cfg.options())
        rows = []
        for fam, v in rep.pairwise.items():
            rows += [(fam, ex.deltas[i], ex.deltas[i + 1], x) for i, x in enumerate(v)]
        out.write_csv("pairwise.csv", ["family", "delta", "delta_next", "difference"], rows)
        if rep.cross_family:
            out.write_csv("cross_family.csv", ["delta", "difference"], zip(ex.deltas, rep.cross_family))
        out.write_json("report.json", rep.to_dict())
        print(json.dumps({"monotone": rep.monotone, "cross_family": rep.cross_family,
                          "cross_monotone": rep.cross_monotone if rep.cross_family else None}))
        code = EXIT_NUMERIC if rep.blow_up else EXIT_OK
    else:
        rep = global_bound_study(g, Mollifier(cfg.family, cfg.delta), phi0, cfg.T, cfg.dt,
                                 ex.magnitudes, cfg.seed, tuple(ex.window), cfg.stride, cfg.options())
        rows = [(r.magnitude, t, b, li) for r in rep.runs for t, b, li in zip(r.times, r.besov_u, r.linf_u)]
        out.write_csv("plateau.csv", ["magnitude", "t", "besov_u", "linf_u"], rows)
        out.write_json("report.json", rep.to_dict())
        print(f"blow-ups: {rep.any_blow_up}; window sup spread {rep.spread:.3g}")
        code = EXIT_NUMERIC if rep.any_blow_up else EXIT_OK
    out.write_manifest(man.finish())
    return code


def cmd_info(cfg: RunConfig) -> int:
    g = cfg.grid()
    C = renorm_constants(g, Mollifier(cfg.family, cfg.delta))
    print(json.dumps({"version": __version__, "config_hash": cfg.config_hash(),
                      "a": C.a, "b": C.b, "steps": cfg.n_steps, "stride": cfg.stride,
                      "modes": int(np.prod(g.spec_shape)), "config": cfg.to_dict()},
                     indent=2, sort_keys=True))
    return EXIT_OK


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = _config(args)
        threads = int(os.environ.get(THREADS_ENV, "1"))
        with sfft.set_workers(max(threads, 1)):
            if args.command == "info":
                return cmd_info(cfg)
            label = {"solve": "mode", "verify": "suite", "study": "study"}.get(args.command)
            out = _outdir(args, cfg, args.command + ("-" + getattr(args, label) if label else ""))
            if args.command == "gen-trees":
                return cmd_gen_trees(cfg, out)
            if args.command == "solve":
                return cmd_solve(cfg, out, args.mode)
            if args.command == "verify":
                return cmd_verify(cfg, out, args.suite)
            return cmd_study(cfg, out, args.study)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
