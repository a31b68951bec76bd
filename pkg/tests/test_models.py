"""The shipped models: structure, closed-form identities, oracles."""

import numpy as np
import pytest

from mrpchan.errors import InputError
from mrpchan.filtering import anderson_filter
from mrpchan.kernels import smk_from_generator
from mrpchan.limits import three_state_structure
from mrpchan.models import (
    GeneModelParams,
    LeakageModelParams,
    build_gene_model,
    build_leakage_model,
    gene_generator,
)
from mrpchan.renewal import phi_evolution, renewal_density_exact


class TestGeneModel:
    def test_full_kernel_matches_display(self, gene_model):
        p = gene_model.params
        a = p.k_off * p.R0
        u1, u2 = a + p.k1, p.k_J + p.k2
        k4 = gene_model.full[0]
        assert k4.density("J", "P_off").terms == ((a, 0, u1),)
        assert k4.density("P_on", "I1").terms == ((p.k1, 0, u1),)
        assert k4.density("P_off", "P_on").terms == ((p.k_on, 0, p.k_on),)
        assert k4.density("I1", "J").terms == ((p.k_J, 0, u2),)

    def test_marginal_is_three_state_class(self, gene_model):
        for level in (0, 1):
            assert three_state_structure(gene_model.joint_kernel[level], "J", "ON", "OFF")

    def test_mirrored_rows(self, gene_model):
        # J mirrors ON in outgoing law: identical rows of the marginal kernel
        k3 = gene_model.joint_kernel[0]
        ts = np.linspace(0.1, 80, 23)
        for z in k3.states:
            np.testing.assert_allclose(
                k3.density("J", z).eval(ts), k3.density("ON", z).eval(ts), atol=1e-12
            )

    def test_interarrival_density_proper(self, gene_model):
        for level in (0, 1):
            f_tau = gene_model.f_tau[level]
            assert f_tau.total_mass() == pytest.approx(1.0, abs=1e-9)
            assert np.isfinite(f_tau.mean())

    def test_interarrival_shapes(self, gene_model):
        # unimodal with a heavier tail at the higher repressor level
        t = np.linspace(0.01, 500, 4000)
        f0 = gene_model.f_tau[0].eval(t)
        f1 = gene_model.f_tau[1].eval(t)
        for f in (f0, f1):
            peak = np.argmax(f)
            assert np.all(np.diff(f[:peak]) > 0) and np.all(np.diff(f[peak:]) < 0)
        assert gene_model.f_tau[1].mean() > gene_model.f_tau[0].mean()
        assert f1[-1] > f0[-1]

    def test_no_repressor_limit(self):
        # k_off -> 0: the OFF state is never entered and the output reduces to
        # the two-phase renewal through the intermediate state
        p = GeneModelParams(k_off=1e-12)
        model = build_gene_model(p)
        f_tau = model.f_tau[0]
        direct = anderson_filter(
            smk_from_generator(gene_generator(p, 0)), ["J"]
        ).kernel.density("J", "J")
        ts = np.linspace(0.1, 100, 31)
        np.testing.assert_allclose(f_tau.eval(ts), direct.eval(ts), atol=1e-10)
        # OFF weight in the embedded marginal chain vanishes
        k3 = model.joint_kernel[0]
        assert k3.embedded_matrix[k3.index("J"), k3.index("OFF")] < 1e-9

    def test_invalid_params(self):
        with pytest.raises(InputError):
            GeneModelParams(R0=2.0, R1=2.0)
        with pytest.raises(InputError):
            GeneModelParams(k_on=-1.0)
        with pytest.raises(InputError):
            GeneModelParams(pi=1.5)


class TestLeakageModel:
    def test_kernel_structure(self, leakage_model):
        k = leakage_model.kernel
        p = leakage_model.params
        v1 = p.k_J + p.k_off_R
        vr = p.k_on + p.k_J * p.r
        # self-transition at the jump states with the mirrored exit rate
        assert k.density("J1", "J1").terms == ((p.k_J, 0, v1),)
        assert k.density("Jr", "Jr").terms == ((p.k_J * p.r, 0, vr),)
        assert k.density("1", "J1").terms == ((p.k_J, 0, v1),)
        assert k.density("r", "Jr").terms == ((p.k_J * p.r, 0, vr),)
        np.testing.assert_allclose(k.defects, 0.0, atol=1e-12)

    def test_semi_markov_route_matches_ctmc_oracle(self, leakage_model):
        # E[phi(output rate)] from the finite representation (renewal route)
        # against the promoter matrix exponential
        k = leakage_model.kernel
        eta = {"1": 1.0}
        T, h = 100.0, 0.05
        curve = phi_evolution(k, eta, T=T, h=h, states=["J1", "Jr"])
        total = curve.values["J1"] + curve.values["Jr"]
        oracle = leakage_model.ctmc_phi_oracle(curve.t, p_on0=1.0)
        np.testing.assert_allclose(total, oracle, atol=1e-6)

    def test_stationary_limit_of_oracle(self, leakage_model):
        p = leakage_model.params
        pi_r, pi_1 = leakage_model.ctmc_stationary()
        lo, hi = p.k_J * p.r, p.k_J
        expect = pi_r * lo * np.log(lo) + pi_1 * hi * np.log(hi)
        got = leakage_model.ctmc_phi_oracle(np.array([2000.0]), p_on0=1.0)[0]
        assert got == pytest.approx(expect, abs=1e-12)
        # and the renewal route reaches the same plateau
        r = renewal_density_exact(leakage_model.kernel, {"1": 1.0})
        rate_inf = r["J1"].eval(5000.0) + r["Jr"].eval(5000.0)
        assert rate_inf == pytest.approx(pi_r * lo + pi_1 * hi, rel=1e-9)

    def test_no_leak_contrast_gives_constant_rate(self):
        # r -> 1 is outside the open interval; approach it: output rate tends
        # to a constant and the phi-curve difference to the output collapses
        m = build_leakage_model(LeakageModelParams(r=0.999999))
        curve = phi_evolution(m.kernel, {"1": 1.0}, T=30.0, h=0.05, states=["J1", "Jr"])
        total = curve.values["J1"] + curve.values["Jr"]
        kj = m.params.k_J
        np.testing.assert_allclose(total, kj * np.log(kj), atol=1e-4)

    def test_invalid_leak_fraction(self):
        with pytest.raises(InputError):
            LeakageModelParams(r=1.0)


class TestConfigRoundTrip:
    def test_gene_config(self, gene_model, tmp_path):
        from mrpchan.config import config_to_model, gene_model_config, load_model_config, save_model_config

        cfg = gene_model_config(gene_model.params, 0)
        path = tmp_path / "gene.json"
        save_model_config(cfg, path)
        loaded = load_model_config(path)
        ts = np.linspace(0.1, 50, 17)
        k4 = gene_model.full[0]
        for y in k4.states:
            for z in k4.states:
                np.testing.assert_allclose(
                    loaded.kernel.density(y, z).eval(ts), k4.density(y, z).eval(ts), atol=1e-14
                )
        assert loaded.classes.classes == dict(
            {(y, z): i for (y, z), i in gene_model.classes.classes.items()}
        )
        assert loaded.mark == "J"

    def test_leakage_config(self, leakage_model, tmp_path):
        from mrpchan.config import leakage_model_config, load_model_config, save_model_config

        cfg = leakage_model_config(leakage_model.params)
        path = tmp_path / "leak.json"
        save_model_config(cfg, path)
        loaded = load_model_config(path)
        ts = np.linspace(0.1, 30, 11)
        for y in leakage_model.kernel.states:
            for z in leakage_model.kernel.states:
                np.testing.assert_allclose(
                    loaded.kernel.density(y, z).eval(ts),
                    leakage_model.kernel.density(y, z).eval(ts),
                    atol=1e-14,
                )

    def test_explicit_round_trip(self, gene_model, tmp_path):
        from mrpchan.config import config_to_model, kernel_to_config

        k3 = gene_model.joint_kernel[0]
        cfg = kernel_to_config(k3, name="gene-marginal")
        back = config_to_model(cfg).kernel
        ts = np.linspace(0.1, 60, 13)
        for y in k3.states:
            for z in k3.states:
                np.testing.assert_allclose(
                    back.density(y, z).eval(ts), k3.density(y, z).eval(ts), atol=1e-14
                )

    def test_bad_schema(self):
        from mrpchan.config import config_to_model

        with pytest.raises(InputError):
            config_to_model({"schema": 99, "states": ["a"], "construction": "generator"})
