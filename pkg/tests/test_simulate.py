"""Trajectory sampling and the Monte Carlo information estimators."""

import numpy as np
import pytest

from mrpchan.errors import InputError
from mrpchan.exppoly import ExpPolyDensity
from mrpchan.kernels import GeneratorSpec, SemiMarkovKernel, smk_from_generator
from mrpchan.simulate import (
    InverseCdfSampler,
    mc_mi_dynamic,
    mc_mi_static,
    simulate_mrp,
    simulate_mrp_batch,
)


def poisson(rate=0.7):
    return SemiMarkovKernel(("J",), [[ExpPolyDensity.exponential(rate)]])


class TestSampler:
    def test_exponential_inverse(self):
        s = InverseCdfSampler(ExpPolyDensity.exponential(2.0))
        u = np.linspace(1e-6, 1 - 1e-9, 2001)
        t = s.sample(u)
        np.testing.assert_allclose(1 - np.exp(-2.0 * t), u, atol=1e-11)

    def test_signed_mixture_inverse(self, gene_model):
        d = gene_model.f_tau[0]
        s = InverseCdfSampler(d)
        u = np.linspace(1e-5, 1 - 1e-7, 501)
        t = s.sample(u)
        np.testing.assert_allclose(d.cdf(t), u, atol=1e-11)

    def test_sample_moments(self, gene_model):
        d = gene_model.f_tau[0]
        rng = np.random.default_rng(3)
        xs = InverseCdfSampler(d).sample(rng.random(400_000))
        se = xs.std(ddof=1) / np.sqrt(len(xs))
        assert abs(xs.mean() - d.mean()) < 4 * se


class TestSimulateMrp:
    def test_poisson_count_statistics(self):
        # total event count over many runs within 4 sigma of the Poisson law
        k, T, n = 0.7, 50.0, 10_000
        _, _, counts, _ = simulate_mrp_batch(poisson(k), "J", T, seed=5, n=n)
        mean_expect = k * T
        se = np.sqrt(k * T / n)
        assert abs(counts.mean() - mean_expect) < 4 * se

    def test_embedded_frequencies(self, gene_model):
        # empirical successor frequencies within 4 sigma multinomial bounds
        k3 = gene_model.joint_kernel[0]
        times, codes, counts, _ = simulate_mrp_batch(k3, "J", 3000.0, seed=11, n=600)
        P = k3.embedded_matrix
        prev = np.concatenate(
            [np.full((codes.shape[0], 1), k3.index("J")), codes[:, :-1]], axis=1
        )
        valid = codes >= 0
        for i, y in enumerate(k3.states):
            sel = valid & (prev == i)
            tot = int(sel.sum())
            if tot < 100:
                continue
            for j, z in enumerate(k3.states):
                phat = float((codes[sel] == j).mean())
                sigma = np.sqrt(max(P[i, j] * (1 - P[i, j]), 1e-12) / tot)
                assert abs(phat - P[i, j]) < 4 * sigma + 1e-9

    def test_seed_determinism(self, gene_model):
        k3 = gene_model.joint_kernel[0]
        a = simulate_mrp(k3, "J", 200.0, seed=42, index=7)
        b = simulate_mrp(k3, "J", 200.0, seed=42, index=7)
        assert np.array_equal(a.times, b.times) and a.marks == b.marks

    def test_batch_matches_scalar(self, gene_model):
        k3 = gene_model.joint_kernel[0]
        times, codes, counts, _ = simulate_mrp_batch(k3, "J", 150.0, seed=9, n=6)
        for i in range(6):
            tr = simulate_mrp(k3, "J", 150.0, seed=9, index=i)
            np.testing.assert_allclose(times[i][: counts[i]], tr.times, rtol=0, atol=1e-9)
            assert tuple(k3.states[c] for c in codes[i][: counts[i]]) == tr.marks

    def test_absorbing_trajectory_ends_early(self):
        k = smk_from_generator(GeneratorSpec(("a", "b"), ((0.0, 1.0), (0.0, 0.0))))
        tr = simulate_mrp(k, "a", 1000.0, seed=1)
        assert tr.absorbed
        assert len(tr) == 1 and tr.marks == ("b",)

    def test_bad_horizon(self):
        with pytest.raises(InputError):
            simulate_mrp(poisson(), "J", 0.0, seed=0)


class TestMcMiDynamic:
    def test_independent_output_is_zero(self):
        # constant-rate output regardless of input: the joint hazard equals
        # the output hazard term by term
        est = mc_mi_dynamic(poisson(0.9), "J", ExpPolyDensity.exponential(0.9), 50.0, 2000, seed=3)
        assert est.value == pytest.approx(0.0, abs=3 * max(est.stderr, 1e-12))
        assert est.stderr == pytest.approx(0.0, abs=1e-12)

    def test_zero_horizon(self):
        est = mc_mi_dynamic(poisson(0.9), "J", ExpPolyDensity.exponential(0.9), 0.0, 100, seed=3)
        assert est.value == 0.0

    def test_matches_exact_route(self, gene_model):
        from mrpchan.renewal import exact_mi_curve

        k3 = gene_model.joint_kernel[0]
        f_tau = gene_model.f_tau[0]
        y = SemiMarkovKernel(("J",), [[f_tau]], validate=False)
        T = 60.0
        _, mi, _, _ = exact_mi_curve(k3, {"J": 1.0}, "J", y, {"J": 1.0}, "J", T=T, h=0.02)
        est = mc_mi_dynamic(k3, "J", f_tau, T, n_traj=40_000, seed=21)
        assert abs(est.value - mi[-1]) < 3 * est.stderr


class TestMcMiStatic:
    def test_degenerate_priors_give_zero(self, gene_model):
        dens = gene_model.f_tau
        for pi in (0.0, 1.0):
            grid = mc_mi_static(dens, {0: 1 - pi, 1: pi}, [100.0, 300.0], 2000, seed=5)
            for est in grid.estimates:
                assert est.value == pytest.approx(0.0, abs=3 * max(est.stderr, 1e-12))

    def test_identical_blocks_give_zero(self, gene_model):
        d = gene_model.f_tau[0]
        grid = mc_mi_static({0: d, 1: d}, {0: 0.5, 1: 0.5}, [100.0], 2000, seed=5)
        assert grid.estimates[0].value == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_horizon(self, gene_model):
        grid = mc_mi_static(
            gene_model.f_tau, {0: 0.5, 1: 0.5}, [50.0, 150.0, 300.0, 600.0], 30_000, seed=8
        )
        vals = [e.value for e in grid.estimates]
        ses = [e.stderr for e in grid.estimates]
        for (v1, s1), (v2, s2) in zip(zip(vals, ses), zip(vals[1:], ses[1:])):
            assert v2 >= v1 - 3 * np.hypot(s1, s2)

    def test_bounded_by_prior_entropy(self, gene_model):
        pi = 0.3
        grid = mc_mi_static(gene_model.f_tau, {0: 1 - pi, 1: pi}, [2000.0], 5000, seed=13)
        hC = -(pi * np.log(pi) + (1 - pi) * np.log(1 - pi))
        est = grid.estimates[0]
        assert est.value <= hC + 3 * est.stderr

    def test_seed_determinism(self, gene_model):
        a = mc_mi_static(gene_model.f_tau, {0: 0.4, 1: 0.6}, [200.0], 2000, seed=17)
        b = mc_mi_static(gene_model.f_tau, {0: 0.4, 1: 0.6}, [200.0], 2000, seed=17)
        assert a.estimates[0].value == b.estimates[0].value
        assert a.estimates[0].stderr == b.estimates[0].stderr

    def test_chunking_invariance(self, gene_model):
        a = mc_mi_static(gene_model.f_tau, {0: 0.4, 1: 0.6}, [200.0], 3000, seed=17, chunk=500)
        b = mc_mi_static(gene_model.f_tau, {0: 0.4, 1: 0.6}, [200.0], 3000, seed=17, chunk=3000)
        assert a.estimates[0].value == pytest.approx(b.estimates[0].value, rel=1e-12)

    def test_bad_prior(self, gene_model):
        with pytest.raises(InputError):
            mc_mi_static(gene_model.f_tau, {0: 0.5, 1: 0.6}, [100.0], 100, seed=0)

    def test_random_rate_toy_saturates(self):
        # Poisson output with a random rate: information saturates toward the
        # prior entropy, is non-decreasing, and its growth per unit time dies
        dens = {0: ExpPolyDensity.exponential(0.2), 1: ExpPolyDensity.exponential(1.0)}
        grid = mc_mi_static(
            dens, {0: 0.5, 1: 0.5}, [5.0, 20.0, 80.0, 320.0], 20_000, seed=31
        )
        vals = [e.value for e in grid.estimates]
        ses = [e.stderr for e in grid.estimates]
        for (v1, s1), (v2, s2) in zip(zip(vals, ses), zip(vals[1:], ses[1:])):
            assert v2 >= v1 - 3 * np.hypot(s1, s2)
        early_slope = (vals[1] - vals[0]) / 15.0
        late_slope = (vals[3] - vals[2]) / 240.0
        assert late_slope < early_slope / 5.0
        assert vals[-1] <= np.log(2) + 3 * ses[-1]

    def test_equilibrium_start_flag(self, gene_model):
        # age-stationary output start: a valid declared initialization whose
        # early-horizon information differs from the arrival-at-zero one
        arr = mc_mi_static(gene_model.f_tau, {0: 0.5, 1: 0.5}, [60.0], 30_000, seed=6)
        eq = mc_mi_static(
            gene_model.f_tau, {0: 0.5, 1: 0.5}, [60.0], 30_000, seed=6, start="equilibrium"
        )
        assert eq.estimates[0].value > 0
        assert eq.estimates[0].value != arr.estimates[0].value
        with pytest.raises(InputError):
            mc_mi_static(gene_model.f_tau, {0: 0.5, 1: 0.5}, [60.0], 100, seed=6, start="bogus")


class TestHazardConsistency:
    def test_estimator_hazards_match_intensity_module(self, gene_model):
        # the vectorized tables used by the estimator agree with the
        # posterior/hazard machinery on sampled points
        from mrpchan.intensity import hazard_recurrent, theta_init
        from mrpchan.simulate import _log_ratio_tables

        f = gene_model.joint[0]
        k3 = f.marginal_kernel
        tables = _log_ratio_tables(k3, "J")
        for prev in ("J", "ON"):
            th = theta_init(f, (prev, 0.0), xi={"J": "J", "ON": "P_on"}[prev])
            for w in (0.7, 6.0, 25.0):
                got = tables[k3.index(prev)](np.array([w]))[0]
                expect = hazard_recurrent(f, th, "J", w).log_value
                assert got == pytest.approx(expect, rel=1e-10)
