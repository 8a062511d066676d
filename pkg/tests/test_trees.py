import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phi43 import lp
from phi43.spectral import TimeField, TorusGrid, duhamel_time_field
from phi43.trees import (TABLE1, Mollifier, OUNoise, compute_a, compute_b, compute_b_bruteforce,
                         constant_scaling, generate_trees, leibniz_equivalence_check, monte_carlo_a,
                         realization_seed, regularity_report, renorm_constants,
                         renormalization_necessity, resonant_trees_at, sample_Z, stream_trees,
                         tree_fields, wick_powers)


def _a_loop(d, N, mol):
    """Mode-by-mode sum over the full grid; independent of the rfft layout."""
    half = N // 2
    total = 0.0
    for k in itertools.product(range(-half + 1, half + 1), repeat=d):
        k2 = sum(x * x for x in k)
        r = mol.delta * math.sqrt(k2)
        chi = float(r <= 1 + 1e-12) if mol.family == "sharp" else math.exp(-r * r)
        total += chi**2 / (2 * (1 + 4 * math.pi**2 * k2))
    return total


class TestMollifier:
    def test_validation(self):
        with pytest.raises(ValueError):
            Mollifier("boxcar", 0.1)
        with pytest.raises(ValueError):
            Mollifier("sharp", 0.0)

    def test_damping(self):
        g = TorusGrid(2, 16)
        sharp = Mollifier("sharp", 0.25).damping(g)
        assert np.array_equal(sharp, (g.kabs <= 4.0).astype(float))
        gauss = Mollifier("gaussian", 0.25).damping(g)
        assert np.allclose(gauss, np.exp(-(0.25 * g.kabs) ** 2))

    @given(st.sampled_from(["sharp", "gaussian"]), st.floats(0.01, 2.0), st.floats(0.01, 2.0))
    @settings(max_examples=30, deadline=None)
    def test_damping_bounded_and_monotone_in_delta(self, family, d1, d2):
        g = TorusGrid(2, 16)
        lo, hi = sorted((d1, d2))
        a, b = Mollifier(family, lo).damping(g), Mollifier(family, hi).damping(g)
        assert np.all((0 <= b) & (b <= a) & (a <= 1))
        assert a.flat[0] == b.flat[0] == 1.0


class TestConstants:
    def test_a_single_term(self):
        # delta so large that only k = 0 survives: a = 1 / (2 lam_0) = 1/2
        assert compute_a(TorusGrid(3, 16), Mollifier("sharp", 2.0)) == pytest.approx(0.5)

    @pytest.mark.parametrize("d,N,mol", [(1, 16, Mollifier("sharp", 0.2)),
                                         (2, 8, Mollifier("gaussian", 0.3)),
                                         (3, 8, Mollifier("sharp", 0.34))])
    def test_a_mode_loop(self, d, N, mol):
        assert compute_a(TorusGrid(d, N), mol) == pytest.approx(_a_loop(d, N, mol), rel=1e-13)

    @pytest.mark.parametrize("d,N,mol", [(2, 8, Mollifier("sharp", 0.3)),
                                         (3, 8, Mollifier("gaussian", 0.4))])
    def test_b_against_pair_loop(self, d, N, mol):
        g = TorusGrid(d, N)
        assert compute_b(g, mol) == pytest.approx(compute_b_bruteforce(g, mol), rel=1e-10)

    def test_b_rejects_unknown_convention(self):
        with pytest.raises(ValueError):
            compute_b(TorusGrid(1, 8), Mollifier("sharp", 0.5), convention="other")

    def test_monte_carlo_a(self):
        g = TorusGrid(3, 8)
        m = Mollifier("sharp", 0.3)
        est, err = monte_carlo_a(g, m, 16, seed=1, T=40.0)
        assert abs(est - compute_a(g, m)) < 4 * err

    def test_a_divergence_rate(self):
        cs = constant_scaling(TorusGrid(3, 64), range(2, 6), with_b=False)
        assert cs.a_increment_slope == pytest.approx(-1.0, abs=0.05)
        assert all(np.diff(cs.a) > 0)

    def test_b_grows_with_m(self):
        cs = constant_scaling(TorusGrid(3, 32), range(1, 5))
        assert np.all(np.diff(cs.b) > 0)
        assert cs.b_r2 > 0.9


class TestNoise:
    def test_stationary_variance(self):
        g = TorusGrid(2, 8)
        acc = np.zeros(g.spec_shape)
        n = 2000
        for r in range(n):
            acc += np.abs(OUNoise(g, realization_seed(3, r), 0.1).value) ** 2
        ratio = acc / n * 2 * g.lam
        assert np.mean(ratio) == pytest.approx(1.0, rel=0.02)

    def test_one_step_autocorrelation(self):
        g = TorusGrid(1, 8)
        h = 0.01
        num = np.zeros(g.spec_shape)
        den = np.zeros(g.spec_shape)
        for r in range(3000):
            ou = OUNoise(g, realization_seed(4, r), h)
            a = ou.value.copy()
            b = ou.advance()
            num += (a.conj() * b).real
            den += np.abs(a) ** 2
        assert np.allclose(num / den, np.exp(-g.lam * h), atol=0.06)

    def test_substep_coupling_exact(self):
        g = TorusGrid(2, 8)
        m = Mollifier("sharp", 0.3)
        fine = sample_Z(g, m, 0.02, 1e-3, seed=5, noise_substeps=1)
        coarse = sample_Z(g, m, 0.02, 2e-3, seed=5, noise_substeps=2)
        assert np.array_equal(coarse.data, fine.data[::2])

    def test_mollifier_coupling(self):
        g = TorusGrid(2, 16)
        seq = realization_seed(6, 0)
        raw = OUNoise(g, seq, 1e-3).value
        again = OUNoise(g, realization_seed(6, 0), 1e-3).value
        assert np.array_equal(raw, again)
        chi = Mollifier("gaussian", 0.1).damping(g)
        Z = next(stream_trees(g, Mollifier("gaussian", 0.1), renorm_constants(g, Mollifier("gaussian", 0.1)),
                              1e-3, 0, realization_seed(6, 0))).Z
        assert np.allclose(Z, g.ifft(chi * raw), atol=1e-15)


class TestTrees:
    def test_wick_polynomials(self):
        z = np.linspace(-2, 2, 9)
        W2, W3 = wick_powers(None, z, 0.7)
        assert np.allclose(W2, z**2 - 0.7)
        assert np.allclose(W3, z**3 - 2.1 * z)

    def test_noise_off_closed_form(self):
        g = TorusGrid(2, 8)
        m = Mollifier("sharp", 0.3)
        ens = generate_trees(g, m, 0.1, 1e-2, seed=0, noise=False)
        a = ens.a
        t = ens["I2"].times
        assert np.max(np.abs(ens["Z"].data)) == 0.0
        assert np.allclose(ens["W2"].data, -a)
        assert np.allclose(ens["I2"].data, (-a * -np.expm1(-t))[:, None, None], atol=1e-14)
        assert np.max(np.abs(ens["I3"].data)) == 0.0

    def test_integrals_match_duhamel(self):
        g = TorusGrid(2, 16)
        ens = generate_trees(g, Mollifier("sharp", 0.2), 0.02, 1e-3, seed=2)
        assert np.allclose(ens["I2"].data, duhamel_time_field(ens["W2"]).data, atol=1e-13)
        assert np.allclose(ens["I3"].data, duhamel_time_field(ens["W3"]).data, atol=1e-13)
        assert np.max(np.abs(ens["I2"][0])) == 0.0

    def test_deterministic_and_realization_dependent(self):
        g = TorusGrid(2, 8)
        m = Mollifier("sharp", 0.3)
        a = generate_trees(g, m, 0.01, 1e-3, seed=9, realization=0)
        b = generate_trees(g, m, 0.01, 1e-3, seed=9, realization=0)
        c = generate_trees(g, m, 0.01, 1e-3, seed=9, realization=1)
        assert np.array_equal(a["I3"].data, b["I3"].data)
        assert not np.allclose(a["Z"].data, c["Z"].data)

    def test_stream_matches_saved(self):
        g = TorusGrid(2, 8)
        ens = generate_trees(g, Mollifier("sharp", 0.3), 0.02, 1e-3, seed=1, save_every=5)
        saved = [s.I2 for s in ens.stream() if ens.saved(s.n)]
        assert np.array_equal(np.stack(saved), ens["I2"].data)

    def test_step_validation(self):
        g = TorusGrid(1, 8)
        with pytest.raises(ValueError):
            generate_trees(g, Mollifier("sharp", 0.3), 0.0105, 1e-3, seed=0)
        with pytest.raises(ValueError):
            generate_trees(g, Mollifier("sharp", 0.3), 0.01, 1e-3, seed=0, save_every=3)

    def test_wick_mean_zero(self):
        g = TorusGrid(3, 8)
        m = Mollifier("sharp", 0.3)
        C = renorm_constants(g, m)
        vals = []
        for r in range(64):
            state = next(stream_trees(g, m, C, 1e-3, 0, realization_seed(2, r)))
            vals.append(np.mean(state.W2))
        assert abs(np.mean(vals)) < 4 * np.std(vals) / 8

    def test_resonant_tree_definitions(self):
        g = TorusGrid(2, 16)
        rng = np.random.default_rng(0)
        Z, W2, I2, I3 = (rng.standard_normal(g.shape) for _ in range(4))
        r = resonant_trees_at(g, 0.9, Z, W2, I2, I3)
        assert np.allclose(r["R1"], lp.resonant(g, I3, Z))
        assert np.allclose(r["R2"] + 0.3, lp.resonant(g, I2, W2))
        assert np.allclose(r["R4"] + 0.9 * Z, lp.resonant(g, I3, W2))

    def test_leibniz_residual_vanishes_with_dt(self):
        # band |k| <= 4 keeps every product alias-free on N = 32
        g = TorusGrid(2, 32)
        m = Mollifier("sharp", 0.25)
        res = []
        for dt in (4e-4, 2e-4, 1e-4):
            ens = generate_trees(g, m, 0.01, dt, seed=4, noise_substeps=int(round(dt / 1e-4)))
            rep = leibniz_equivalence_check(ens["I2"], ens["W2"])
            res.append(rep.residual_linf / rep.lhs_linf)
        rates = np.log2(np.array(res[:-1]) / np.array(res[1:]))
        assert np.all(rates > 1.5)
        assert res[-1] < 1e-3

    def test_leibniz_needs_three_snapshots(self):
        g = TorusGrid(1, 8)
        with pytest.raises(ValueError):
            leibniz_equivalence_check(TimeField.zeros(g, 0.1, 1), TimeField.zeros(g, 0.1, 1))


class TestStudies:
    def test_regularity_report_structure(self):
        g = TorusGrid(3, 16)
        ens = [generate_trees(g, Mollifier("sharp", 1 / 8), 0.004, 1e-3, seed=0, realization=r)
               for r in range(2)]
        rep = regularity_report(ens)
        assert set(rep) == set(TABLE1)
        for name, row in rep.items():
            assert row["target"] == TABLE1[name]
            assert len(row["samples"]) == 2
            assert math.isfinite(row["mean"]) and math.isfinite(row["rms_mean"])

    def test_tree_fields_complete(self):
        g = TorusGrid(2, 8)
        ens = generate_trees(g, Mollifier("sharp", 0.3), 0.004, 1e-3, seed=0)
        assert set(tree_fields(ens)) >= set(TABLE1) | {"W3"}

    def test_raw_cube_grows(self):
        rep = renormalization_necessity(TorusGrid(3, 16), range(1, 4), 2, seed=0, T=2e-3, dt=1e-3)
        assert rep.raw_increases
        assert len(rep.w3_differences) == 2
