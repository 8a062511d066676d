import csv
import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phi43 import lp
from phi43.cli import run
from phi43.config import ConfigError, RunConfig, apply_override
from phi43.io import (Manifest, OutputDir, SnapshotError, decode_snapshot, decode_timefield,
                      encode_snapshot, encode_timefield, read_manifest, read_snapshot,
                      resolve_out, snapshot_to_real, write_snapshot)
from phi43.spectral import TimeField, TorusGrid

SMALL = ["--override", "d=2", "--override", "N=16", "--override", "T=0.01",
         "--override", "dt=0.001", "--override", "delta=0.25", "--override", "save_every=5"]


def _run(*argv):
    return run(list(argv))


def _hashes(path):
    return {p.relative_to(path).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(path.rglob("*")) if p.is_file() and p.name != "manifest.json"}


class TestSnapshots:
    @given(st.sampled_from([(1, 8), (2, 4), (2, 16), (3, 4)]), st.integers(0, 2**32 - 1),
           st.floats(0, 10), st.sampled_from(["real", "spectral"]))
    @settings(max_examples=30, deadline=None)
    def test_roundtrip(self, dn, seed, t, kind):
        d, N = dn
        f = np.random.default_rng(seed).standard_normal((N,) * d)
        snap = decode_snapshot(encode_snapshot(f, t, kind))
        assert (snap.d, snap.N, snap.t) == (d, N, t)
        back = snapshot_to_real(snap)
        if kind == "real":
            assert np.array_equal(back, f)
        else:
            assert np.max(np.abs(back - f)) < 1e-12

    def test_spectral_order_single_mode(self):
        # cos(2 pi 3 x) has coefficient 1/2 at k = -3 and k = +3; index of k is k + N/2 - 1
        N = 8
        x = np.arange(N) / N
        snap = decode_snapshot(encode_snapshot(np.cos(2 * np.pi * 3 * x), 0.0, "spectral"))
        expect = np.zeros(N, dtype=complex)
        expect[-3 + N // 2 - 1] = expect[3 + N // 2 - 1] = 0.5
        assert np.allclose(snap.data, expect, atol=1e-15)

    def test_header_layout(self):
        buf = encode_snapshot(np.zeros((4, 4)), 0.25)
        assert buf[:4] == b"PHI4"
        assert len(buf) == 4 + 4 * 4 + 8 + 16 * 8

    def test_rejects_corruption(self):
        buf = encode_snapshot(np.zeros(8), 0.0)
        with pytest.raises(SnapshotError):
            decode_snapshot(b"XXXX" + buf[4:])
        with pytest.raises(SnapshotError):
            decode_snapshot(buf[:10])
        with pytest.raises(SnapshotError):
            decode_snapshot(buf[:-8])
        with pytest.raises(SnapshotError):
            decode_snapshot(buf[:4] + (7).to_bytes(4, "little") + buf[8:])
        with pytest.raises(SnapshotError):
            encode_snapshot(np.zeros((4, 8)), 0.0)

    def test_timefield_and_files(self, tmp_path):
        g = TorusGrid(2, 8)
        tf = TimeField(g, 0.5, np.random.default_rng(0).standard_normal((3, 8, 8)))
        snaps = decode_timefield(encode_timefield(tf, "spectral"))
        assert [s.t for s in snaps] == [0.0, 0.5, 1.0]
        assert np.allclose(np.stack([snapshot_to_real(s) for s in snaps]), tf.data, atol=1e-13)
        write_snapshot(tmp_path / "a.phi4", tf[1], 0.5)
        assert np.array_equal(read_snapshot(tmp_path / "a.phi4").data, tf[1])


class TestOutput:
    def test_missing_parent(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            OutputDir.create(tmp_path / "nope" / "run")

    def test_out_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PHI43_OUT_ROOT", str(tmp_path))
        assert resolve_out("x") == tmp_path / "x"
        assert resolve_out("/abs/x").as_posix() == "/abs/x"

    def test_manifest_inventory(self, tmp_path):
        out = OutputDir.create(tmp_path / "run")
        out.write_csv("a.csv", ["x", "y"], [(1, 0.5)])
        out.write_json("b.json", {"v": np.float64(2.0)})
        out.write_manifest(Manifest("test", {"k": 1}, "h", "0").finish())
        man = read_manifest(out.path)
        assert set(man["files"]) == {"a.csv", "b.json"}
        for name, rec in man["files"].items():
            data = (out.path / name).read_bytes()
            assert rec["sha256"] == hashlib.sha256(data).hexdigest() and rec["bytes"] == len(data)
        assert man["finished"] >= man["started"]


class TestConfig:
    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"Nn": 16})
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"solver": {"tolerance": 1e-9}})

    def test_overrides(self):
        cfg = RunConfig().with_overrides(["solver.max_iter=12", "family=gaussian", "experiment.deltas=[0.5,0.25]"])
        assert cfg.solver.max_iter == 12 and cfg.family == "gaussian"
        assert cfg.experiment.deltas == [0.5, 0.25]
        with pytest.raises(ConfigError):
            apply_override({}, "novalue")
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(["N=abc"])

    @pytest.mark.parametrize("bad", [{"N": 12}, {"dt": -1.0}, {"family": "box"}, {"T": 0.0105},
                                     {"dealias": 1}, {"solver": {"order": 3}}])
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)

    def test_hash_stable_and_complete(self):
        a = RunConfig.from_dict({"N": 32, "seed": 4})
        b = RunConfig.from_dict({"seed": 4, "N": 32})
        assert a.config_hash() == b.config_hash()
        for item in ("seed=5", "solver.tol=1e-9", "initial.amplitude=2.0", "noise=false",
                     "experiment.samples=7"):
            assert a.with_overrides([item]).config_hash() != a.config_hash()

    def test_stability_hint_warns(self):
        with pytest.warns(UserWarning):
            RunConfig(delta=0.01, dt=1e-3, T=0.01)

    def test_file_roundtrip(self, tmp_path):
        p = tmp_path / "c.json"
        cfg = RunConfig.from_dict({"N": 32, "solver": {"tol": 1e-8}})
        p.write_text(json.dumps(cfg.to_dict()))
        assert RunConfig.load(p).config_hash() == cfg.config_hash()
        p.write_text("{bad")
        with pytest.raises(ConfigError):
            RunConfig.load(p)


class TestCLI:
    def test_info(self, capsys):
        assert _run("info", *SMALL) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["steps"] == 10 and out["config"]["N"] == 16

    def test_usage_errors(self, tmp_path, capsys):
        assert _run("info", "--override", "bogus=1") == 2
        assert _run("frobnicate") == 2
        assert _run("info", "--seed", "-1") == 2
        assert _run("gen-trees", *SMALL, "--out", str(tmp_path / "no" / "dir")) == 2
        assert _run("info", "--config", str(tmp_path / "missing.json")) == 2
        assert "error" in capsys.readouterr().err

    def test_gen_trees_byte_identical(self, tmp_path, monkeypatch):
        assert _run("gen-trees", *SMALL, "--seed", "11", "--out", str(tmp_path / "a")) == 0
        monkeypatch.setenv("PHI43_THREADS", "4")
        assert _run("gen-trees", *SMALL, "--seed", "11", "--out", str(tmp_path / "b")) == 0
        ha, hb = _hashes(tmp_path / "a"), _hashes(tmp_path / "b")
        assert ha == hb and "r000/I3.phi4" in ha
        man = read_manifest(tmp_path / "a")
        assert set(man["files"]) == set(ha)
        cfg = RunConfig.from_dict(man["config"])
        assert cfg.config_hash() == man["config_hash"]

    def test_gen_trees_single_mode(self, tmp_path):
        assert _run("gen-trees", *SMALL, "--override", "delta=2.0", "--out", str(tmp_path / "a")) == 0
        C = json.loads((tmp_path / "a" / "constants.json").read_text())
        assert C["a"] == pytest.approx(0.5)

    def test_solve_compare_writes_oracle(self, tmp_path):
        out = tmp_path / "s"
        assert _run("solve", *SMALL, "--mode", "transform", "--override", "experiment.name=compare",
                    "--out", str(out)) == 0
        res = json.loads((out / "result.json").read_text())
        assert res["oracle_relative_difference"] < 1e-2
        assert (out / "oracle.csv").exists() and (out / "metrics.jsonl").exists()
        rows = list(csv.reader((out / "norms.csv").open()))
        assert rows[0] == ["t", "linf_u", "besov_u", "linf_phi"] and len(rows) == 4

    def test_solve_noise_off_closed_form(self, tmp_path):
        out = tmp_path / "s"
        assert _run("solve", *SMALL, "--mode", "direct", "--override", "noise=false",
                    "--override", "initial.shape=constant", "--override", "initial.amplitude=1.5",
                    "--override", "delta=2.0", "--out", str(out)) == 0
        # Z = 0: phi' = -(1 - 3(a - b)) phi - phi^3 with the recorded constants
        C = read_manifest(out)["constants"]
        r = 1.0 - 3.0 * (C["a"] - C["b"])
        rows = list(csv.DictReader((out / "norms.csv").open()))
        t = np.array([float(x["t"]) for x in rows])
        phi = np.array([float(x["linf_phi"]) for x in rows])
        w = (1 / 1.5**2 + 1 / r) * np.exp(2 * r * t) - 1 / r
        assert np.allclose(phi, 1 / np.sqrt(w), atol=1e-6)

    def test_blow_up_threshold_exit_3(self, tmp_path):
        for mode in ("direct", "transform"):
            out = tmp_path / mode
            code = _run("solve", *SMALL, "--mode", mode, "--override", "solver.blowup=0.5",
                        "--out", str(out))
            assert code == 3
            res = json.loads((out / "result.json").read_text())
            assert res["blow_up"] and res["t_star"] == 0.0
            assert (out / "manifest.json").exists()

    def test_split_mode(self, tmp_path):
        out = tmp_path / "s"
        assert _run("solve", *SMALL, "--mode", "split", "--out", str(out)) == 0
        res = json.loads((out / "result.json").read_text())
        assert res["n"] >= 1 and res["split_error"] <= 1e-3 * (1 + res["u_sup"])

    def test_verify_maxprinciple(self, tmp_path, capsys):
        assert _run("verify", *SMALL, "--suite", "maxprinciple", "--override", "experiment.samples=2",
                    "--out", str(tmp_path / "v")) == 0
        assert "PASS" in capsys.readouterr().out

    def test_verify_lp_passes(self, tmp_path):
        assert _run("verify", *SMALL, "--suite", "lp", "--out", str(tmp_path / "v")) == 0
        rep = json.loads((tmp_path / "v" / "report.json").read_text())
        assert len(rep["estimates"]) == 10

    def test_verify_lp_negative_control(self, tmp_path, monkeypatch, capsys):
        orig = lp.DyadicPartition.weights
        monkeypatch.setattr(lp.DyadicPartition, "weights", lambda self: 1.01 * orig(self))
        assert _run("verify", *SMALL, "--suite", "lp", "--override", "experiment.samples=2",
                    "--out", str(tmp_path / "v")) == 1
        assert "partition_of_unity: max error 1.000e-02 FAIL" in capsys.readouterr().out

    def test_verify_trees_table(self, tmp_path, capsys):
        assert _run("verify", *SMALL, "--suite", "trees", "--out", str(tmp_path / "v")) in (0, 1)
        rows = list(csv.DictReader((tmp_path / "v" / "table1.csv").open()))
        assert {r["tree"] for r in rows} == {"Z", "W2", "I3", "I2", "R1", "R2", "R3", "R4"}
        assert "R3" in capsys.readouterr().out

    def test_study_single_delta(self, tmp_path):
        out = tmp_path / "s"
        assert _run("study", *SMALL, "--study", "delta", "--override", "experiment.deltas=[0.25]",
                    "--out", str(out)) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["pairwise"] == {"sharp": []} and rep["cross_family"] == []

    def test_study_two_families(self, tmp_path):
        out = tmp_path / "s"
        assert _run("study", *SMALL, "--study", "mollifier", "--override", "experiment.deltas=[0.5,0.25]",
                    "--out", str(out)) == 0
        rows = list(csv.DictReader((out / "cross_family.csv").open()))
        assert len(rows) == 2 and all(float(r["difference"]) > 0 for r in rows)

    def test_study_global(self, tmp_path):
        out = tmp_path / "s"
        assert _run("study", *SMALL, "--study", "global", "--override", "experiment.window=[0.005,0.01]",
                    "--override", "experiment.magnitudes=[1.0,2.0]", "--out", str(out)) == 0
        rows = list(csv.DictReader((out / "plateau.csv").open()))
        assert {float(r["magnitude"]) for r in rows} == {1.0, 2.0}
