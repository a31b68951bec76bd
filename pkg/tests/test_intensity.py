"""Posterior recursion, hazards and path densities of the marginal observer."""

import math

import numpy as np
import pytest
from scipy.special import logsumexp

from mrpchan.errors import FilterDegeneracyError, InputError
from mrpchan.exppoly import ExpPolyDensity
from mrpchan.filtering import (
    TransitionClassMap,
    as_filter_output,
    augment,
    anderson_filter,
    coarse_grain,
    marginal_filter,
    observable_states,
)
from mrpchan.intensity import (
    hazard_recurrent,
    hazard_transient,
    log_kernel_at,
    path_log_density,
    theta_init,
    theta_update,
)
from mrpchan.kernels import GeneratorSpec, SemiMarkovKernel, smk_from_generator
from mrpchan.models import GENE_JOINT_CLASSES, GENE_JOINT_COARSE


def poisson_filter(rate=0.8):
    k = SemiMarkovKernel(("J",), [[ExpPolyDensity.exponential(rate)]])
    return as_filter_output(k, {"J": "J"})


def random_marginal_filter(rng, n_states=3):
    """Random irreducible generator model filtered onto random classes."""
    while True:
        rates = rng.uniform(0.1, 2.0, size=(n_states, n_states))
        rates[np.diag_indices(n_states)] = 0.0
        # prune some transitions but keep the chain irreducible
        mask = rng.random((n_states, n_states)) < 0.4
        np.fill_diagonal(mask, True)
        rates[mask] = 0.0
        states = tuple(f"s{i}" for i in range(n_states))
        P = (rates > 0).astype(float)
        from scipy.sparse.csgraph import connected_components

        ncomp, _ = connected_components(P, directed=True, connection="strong")
        if ncomp == 1:
            break
    k = smk_from_generator(GeneratorSpec(states, tuple(map(tuple, rates))))
    classes = {}
    next_class = 1
    for i, y in enumerate(states):
        for j, z in enumerate(states):
            if rates[i][j] > 0:
                # at least two observable classes; some transitions hidden
                c = int(rng.integers(0, 3))
                classes[(y, z)] = 0 if c == 0 else 1 + (next_class + c) % 2
                next_class += 1
    if all(v == 0 for v in classes.values()):
        first = next(iter(classes))
        classes[first] = 1
    cmap = TransitionClassMap(classes)
    aug = augment(k, cmap)
    keep = observable_states(aug)
    if not keep:
        return random_marginal_filter(rng, n_states)
    f = anderson_filter(aug, keep)
    # coarse-grain by the entry class (marks = class indices)
    g = {a: f"m{a[1]}" for a in f.states}
    f = coarse_grain(f, g)
    try:
        from mrpchan.filtering import with_transient

        f = with_transient(f, k, cmap, states[0])
    except Exception:
        pass
    return f


class TestThetaInit:
    def test_single_state(self):
        f = poisson_filter()
        th = theta_init(f, ("J", 0.0))
        np.testing.assert_allclose(th.log_w, [0.0])
        assert th.n_events == 1 and th.t_last == 0.0

    def test_modulated_conditional_is_indicator(self, gene_model):
        f = gene_model.modulated_filter()
        prior = {(1, "J"): 1.0, (0, "J"): 0.0}
        th = theta_init(f, ("J", 0.0), prior=prior)
        expect = [0.0 if s == (1, "J") else -np.inf for s in f.states]
        np.testing.assert_allclose(th.log_w, expect)

    def test_modulated_marginal_is_prior(self, gene_model):
        f = gene_model.modulated_filter()
        prior = {(0, "J"): 0.4, (1, "J"): 0.6}
        th = theta_init(f, ("J", 0.0), prior=prior)
        got = {s: w for s, w in zip(f.states, np.exp(th.log_w))}
        assert got[(0, "J")] == pytest.approx(0.4)
        assert got[(1, "J")] == pytest.approx(0.6)

    def test_transient_init_uses_first_passage(self, gene_model):
        f = gene_model.joint[0]  # carries the transient row from P_on
        th = theta_init(f, ("J", 5.0), xi="P_on")
        # support only on the J group
        mask = f.group_mask("J")
        assert np.all(np.isneginf(th.log_w[~mask]))
        assert logsumexp(th.log_w) == pytest.approx(0.0, abs=1e-12)

    def test_impossible_first_event(self, gene_model):
        f = gene_model.joint[0]
        # from P_on the first observable event cannot be an ON switch
        with pytest.raises(FilterDegeneracyError):
            theta_init(f, ("ON", 3.0), xi="P_on")


class TestThetaUpdate:
    def test_single_state_stays_point_mass(self):
        f = poisson_filter()
        th = theta_init(f, ("J", 0.0))
        for w in (0.3, 2.0, 11.0):
            th = theta_update(f, th, "J", w)
            np.testing.assert_allclose(th.log_w, [0.0])

    def test_modulated_weights_track_block_densities(self, gene_model):
        f = gene_model.modulated_filter()
        prior = {(0, "J"): 0.4, (1, "J"): 0.6}
        th = theta_init(f, ("J", 0.0), prior=prior)
        waits = [12.0, 33.0, 7.5]
        for w in waits:
            th = theta_update(f, th, "J", w)
        # weights proportional to p(c) * prod f_c(W_m)
        raw = np.array(
            [
                math.log(prior[(c, "J")])
                + sum(float(np.log(gene_model.f_tau[c].eval(w))) for w in waits)
                for c in (0, 1)
            ]
        )
        expect = raw - logsumexp(raw)
        got = {s: lw for s, lw in zip(f.states, th.log_w)}
        np.testing.assert_allclose(
            [got[(0, "J")], got[(1, "J")]], expect, atol=1e-10
        )

    def test_bayes_consistency_random_instances(self):
        # posterior from the recursion equals the direct product formula
        rng = np.random.default_rng(123)
        checked = 0
        while checked < 100:
            f = random_marginal_filter(rng)
            th = None
            for z0 in f.marginal_states:
                try:
                    th = theta_init(f, (z0, 0.0))
                    break
                except FilterDegeneracyError:
                    continue
            if th is None:
                continue
            logw_direct = th.log_w.copy()
            ok = True
            for _ in range(int(rng.integers(1, 4))):
                w = float(rng.uniform(0.1, 3.0))
                z = f.marginal_states[int(rng.integers(0, len(f.marginal_states)))]
                try:
                    th = theta_update(f, th, z, w)
                except FilterDegeneracyError:
                    ok = False
                    break
                logq = log_kernel_at(f, w)
                mask = f.group_mask(z)
                with np.errstate(invalid="ignore"):
                    logw_direct = logsumexp(
                        logw_direct[:, None] + logq, axis=0
                    )
                logw_direct = np.where(mask, logw_direct, -np.inf)
                logw_direct = logw_direct - logsumexp(logw_direct)
            if not ok:
                continue
            finite = np.isfinite(th.log_w)
            np.testing.assert_allclose(
                th.log_w[finite], logw_direct[finite], atol=1e-10
            )
            checked += 1

    def test_degenerate_update_raises(self, gene_model):
        f = gene_model.joint[0]
        th = theta_init(f, ("J", 0.0), xi="J")
        # an OFF mark cannot follow ... an ON mark straight after OFF is fine;
        # from J the next observable event cannot be ON
        with pytest.raises(FilterDegeneracyError) as exc:
            theta_update(f, th, "ON", 1.0)
        assert exc.value.mark == "ON"

    def test_long_path_stability(self, gene_model):
        # ten thousand updates on the modulated filter: no NaN, drift bounded
        f = gene_model.modulated_filter()
        prior = {(0, "J"): 0.5, (1, "J"): 0.5}
        th = theta_init(f, ("J", 0.0), prior=prior)
        rng = np.random.default_rng(7)
        for _ in range(10_000):
            th = theta_update(f, th, "J", float(rng.uniform(1.0, 80.0)))
            assert np.all(np.isnan(th.log_w) == False)  # noqa: E712
        assert logsumexp(th.log_w) == pytest.approx(0.0, abs=1e-9)


class TestHazards:
    def test_poisson_recurrent(self):
        f = poisson_filter(0.8)
        th = theta_init(f, ("J", 0.0))
        for v in (0.0, 1.3, 9.0):
            assert hazard_recurrent(f, th, "J", v).value == pytest.approx(0.8, rel=1e-12)

    def test_renewal_hazard_formula(self, gene_model):
        # single-state filter: hazard is f/(1-F)
        fY = gene_model.modulated_filter()
        dens = gene_model.f_tau[0]
        prior = {(0, "J"): 1.0, (1, "J"): 0.0}
        th = theta_init(fY, ("J", 0.0), prior=prior)
        for v in (1.0, 20.0, 90.0):
            expect = dens.eval(v) / dens.survival_from_density().eval(v)
            assert hazard_recurrent(fY, th, "J", v).value == pytest.approx(expect, rel=1e-10)

    def test_mrp_hazard_total_matches_log_survival_derivative(self, gene_model):
        # sum_z Lambda_z(v, ON) = -d/dv ln S_ON(v), by the hazard decomposition
        f = gene_model.joint[0]
        th_on = theta_init(f, ("ON", 0.0), xi="P_on")
        v = 7.0
        total = sum(hazard_recurrent(f, th_on, z, v).value for z in f.marginal_states)
        S = f.marginal_kernel.survival("ON")
        eps = 1e-5
        expect = -(np.log(S.eval(v + eps)) - np.log(S.eval(v - eps))) / (2 * eps)
        assert total == pytest.approx(expect, rel=1e-6)

    def test_point_mass_theta_equals_mrp_hazard(self, gene_model):
        f = gene_model.joint[0]
        k3 = f.marginal_kernel
        th = theta_init(f, ("J", 0.0), xi="J")
        for v in (0.5, 4.0, 30.0):
            got = hazard_recurrent(f, th, "J", v).value
            expect = k3.density("J", "J").eval(v) / k3.survival("J").eval(v)
            assert got == pytest.approx(expect, rel=1e-10)

    def test_transient_poisson(self):
        k = SemiMarkovKernel(("J",), [[ExpPolyDensity.exponential(0.8)]])
        f = marginal_filter(
            k, TransitionClassMap({("J", "J"): 1}), {("J", 1): "J"}, xi="J"
        )
        for t in (0.0, 1.0, 5.0):
            assert hazard_transient(f, "J", t).value == pytest.approx(0.8, rel=1e-10)

    def test_gene_transient_structural_zero(self, gene_model):
        # from P_off there is no direct route to an output arrival
        k4 = gene_model.full[0]
        f = marginal_filter(k4, GENE_JOINT_CLASSES, GENE_JOINT_COARSE, xi="P_off")
        assert hazard_transient(f, "J", 0.0).value == 0.0

    def test_gene_transient_vanishes_at_zero(self, gene_model):
        # from P_on the first arrival needs two steps, so the rate starts at 0
        f = gene_model.joint[0]  # xi = P_on
        vals = [hazard_transient(f, "J", t).value for t in (1e-4, 1e-3, 1e-2)]
        assert vals[0] < vals[1] < vals[2]
        assert vals[0] == pytest.approx(0.0, abs=1e-3)
        # leading order is k1*kJ*t (series expansion of the two-step density)
        p = gene_model.params
        assert vals[2] == pytest.approx(p.k1 * p.k_J * 1e-2, rel=0.05)


class TestPathDensity:
    def test_poisson_path(self):
        f = poisson_filter(0.8)
        th = theta_init(f, ("J", 0.0))
        events = [("J", 1.0), ("J", 2.5), ("J", 4.0)]
        got = path_log_density(f, events, t=6.0, theta0=th)
        assert got == pytest.approx(3 * math.log(0.8) - 0.8 * 6.0, abs=1e-12)

    def test_zero_events_transient_survival(self, gene_model):
        f = gene_model.joint[0]
        t = 12.0
        got = path_log_density(f, [], t=t, xi="P_on")
        used = sum(f.transient_marginal(z).cdf(t) for z in f.marginal_states)
        assert got == pytest.approx(math.log(1 - used), abs=1e-12)

    def test_two_event_path_matches_direct_product(self, gene_model):
        f = gene_model.joint[0]
        th0 = theta_init(f, ("J", 0.0), xi="J")
        events = [("OFF", 4.0), ("ON", 9.0)]
        t = 15.0
        got = path_log_density(f, events, t=t, theta0=th0)
        # direct matrix-product evaluation without the recursion
        n = len(f.states)
        vec = np.exp(th0.log_w)
        for (z, tk), t_prev in zip(events, [0.0, 4.0]):
            w = tk - t_prev
            mat = np.zeros((n, n))
            mask = f.group_mask(z)
            for i in range(n):
                for j in range(n):
                    if mask[j]:
                        mat[i, j] = f.kernel.entries[i][j].eval(w)
            vec = vec @ mat
        surv = np.array([S.eval(t - events[-1][1]) for S in f.kernel.survivals])
        expect = math.log(float(vec @ surv))
        assert got == pytest.approx(expect, abs=1e-10)

    def test_wrong_ordering_rejected(self, gene_model):
        f = gene_model.joint[0]
        th0 = theta_init(f, ("J", 0.0), xi="J")
        with pytest.raises(InputError):
            path_log_density(f, [("OFF", 4.0), ("ON", 3.0)], t=6.0, theta0=th0)

    def test_normalization_small_models(self):
        # integrating exp(path density) over marks and times plus the
        # no-event mass gives 1 (0, 1 and 2 event shells, fine grid); the
        # horizon is kept short so that three-event paths carry no mass
        rng = np.random.default_rng(5)
        for _ in range(3):
            f = random_marginal_filter(rng, n_states=2)
            if f.transient_aug is None:
                continue
            xi = "s0"
            T = 0.15 * float(np.min(f.kernel.mean_sojourns))
            grid = np.linspace(T * 5e-5, T, 220)
            h = grid[1] - grid[0]
            total = math.exp(path_log_density(f, [], t=T, xi=xi))
            marks = f.marginal_states
            for z1 in marks:
                vals1 = np.zeros(len(grid))
                for i1, t1 in enumerate(grid):
                    p1 = math.exp(path_log_density(f, [(z1, t1)], t=T, xi=xi))
                    vals1[i1] = p1
                total += np.trapezoid(vals1, grid)
                for z2 in marks:
                    vals2 = np.zeros(len(grid))
                    for i1, t1 in enumerate(grid):
                        inner = [
                            math.exp(
                                path_log_density(f, [(z1, t1), (z2, t2)], t=T, xi=xi)
                            )
                            for t2 in grid[grid > t1]
                        ]
                        if inner:
                            vals2[i1] = np.trapezoid(inner, grid[grid > t1])
                    total += np.trapezoid(vals2, grid)
            assert total == pytest.approx(1.0, abs=2e-3)
