"""Trajectory generation and Monte Carlo mutual-information estimators.

Sampling follows the embedded-chain mechanism: draw the successor from the
transition matrix, then the holding time by numeric inversion of the
conditional CDF, consuming exactly two uniforms per event.  Every trajectory
owns an RNG stream derived from ``(seed, index)``, so results do not depend
on batching or thread count.  The estimators average path sums of
log-hazard differences evaluated at arrival times (left limits).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import FilterDegeneracyError, InputError
from .exppoly import ExpPolyDensity
from .kernels import SemiMarkovKernel, State

PROB_TOL = 1e-12  # inverse-CDF accuracy, measured in probability
DISCARD_BUDGET = 1e-3  # fraction of degenerate trajectories tolerated per run


@dataclass(frozen=True)
class Trajectory:
    """One realized mark sequence on ``[0, horizon]`` (first event time > 0)."""

    initial: State
    times: np.ndarray
    marks: tuple[State, ...]
    horizon: float
    absorbed: bool = False

    def __len__(self):
        return len(self.marks)


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo value with its standard error (sample std / sqrt(n))."""

    value: float
    stderr: float
    n_samples: int
    seed: int


class InverseCdfSampler:
    """Numeric inverse of a (sub-)probability holding-time CDF.

    A probability-indexed table provides the bracket and starting point; two
    or three guarded Newton steps on the CDF polish each sample to
    ``PROB_TOL`` in probability.
    """

    def __init__(self, density: ExpPolyDensity, table_size: int = 2048):
        self.density = density
        self.mass = density.total_mass()
        if self.mass <= 0:
            raise InputError("cannot sample from a zero-mass density")
        scale = density.timescale()
        hi = scale
        # Expand until the grid covers all but PROB_TOL of the mass.
        for _ in range(200):
            if self.density.cdf(hi) >= self.mass * (1.0 - 1e-15):
                break
            hi *= 1.6
        grid = np.concatenate([[0.0], np.geomspace(scale * 1e-8, hi, table_size - 1)])
        probs = np.asarray(self.density.cdf(grid), dtype=float)
        keep = np.concatenate([[True], np.diff(probs) > 0])
        self.t_table = grid[keep]
        self.p_table = probs[keep]

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Holding times for conditional CDF targets ``u`` in (0, 1)."""
        u = np.asarray(u, dtype=float)
        target = u * self.mass
        pos = np.searchsorted(self.p_table, target).clip(1, len(self.p_table) - 1)
        lo_t, hi_t = self.t_table[pos - 1], self.t_table[pos]
        lo_p, hi_p = self.p_table[pos - 1], self.p_table[pos]
        t = lo_t + (hi_t - lo_t) * (target - lo_p) / (hi_p - lo_p)
        lo, hi = lo_t.copy(), hi_t.copy()
        for _ in range(60):
            F = np.asarray(self.density.cdf(t)) - target
            if np.max(np.abs(F)) <= PROB_TOL:
                break
            above = F > 0
            hi = np.where(above, t, hi)
            lo = np.where(above, lo, t)
            f = np.asarray(self.density.eval(t))
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(f > 0, F / np.where(f > 0, f, 1.0), 0.0)
            t_new = t - step
            bad = (t_new <= lo) | (t_new >= hi) | (f <= 0)
            t = np.where(bad, 0.5 * (lo + hi), t_new)
        return t


class _KernelSampler:
    """Precomputed per-transition samplers and embedded-chain tables."""

    def __init__(self, kernel: SemiMarkovKernel):
        self.kernel = kernel
        self.P = kernel.embedded_matrix
        self.cum = np.cumsum(self.P, axis=1)
        self.row_mass = self.P.sum(axis=1)
        self.samplers: dict[tuple[int, int], InverseCdfSampler] = {}
        for i in range(kernel.n):
            for j in range(kernel.n):
                if self.P[i, j] > 1e-14:
                    self.samplers[(i, j)] = InverseCdfSampler(kernel.entries[i][j])


def _traj_rng(seed: int, index: int, round_: int = 0) -> np.random.Generator:
    key = (seed, index) if round_ == 0 else (seed, index, round_)
    return np.random.default_rng(np.random.SeedSequence(key))


def simulate_mrp(
    kernel: SemiMarkovKernel, z0: State, T: float, seed: int, index: int = 0
) -> Trajectory:
    """Single trajectory; the reference scalar path of the batch engine."""
    if T <= 0:
        raise InputError("horizon must be positive")
    ks = _KernelSampler(kernel)
    rng = _traj_rng(seed, index)
    i = kernel.index(z0)
    t = 0.0
    times: list[float] = []
    marks: list[State] = []
    absorbed = False
    while True:
        u1, u2 = rng.random(), rng.random()
        if ks.row_mass[i] <= 1e-14 or u1 > ks.row_mass[i]:
            absorbed = True
            break
        j = int(np.searchsorted(ks.cum[i], u1))
        w = float(ks.samplers[(i, j)].sample(np.array([u2 / 1.0]))[0])
        t_new = t + w
        if t_new <= t:
            warnings.warn("zero waiting time perturbed by one ulp", RuntimeWarning)
            t_new = np.nextafter(t, np.inf)
        if t_new > T:
            break
        t = t_new
        times.append(t)
        marks.append(kernel.states[j])
        i = j
    return Trajectory(
        initial=z0,
        times=np.array(times),
        marks=tuple(marks),
        horizon=T,
        absorbed=absorbed,
    )


def simulate_mrp_batch(
    kernel: SemiMarkovKernel,
    z0: State,
    T: float,
    seed: int,
    n: int,
    indices: Sequence[int] | None = None,
    block: int = 64,
):
    """Lockstep batch of trajectories with per-trajectory RNG streams.

    Returns ``(times, mark_codes, counts, absorbed)`` where ``times`` is an
    ``(n, K)`` array padded with ``inf`` and mark codes index
    ``kernel.states``.  Row ``r`` is identical to ``simulate_mrp`` with
    ``index = indices[r]``.
    """
    if indices is None:
        indices = range(n)
    indices = list(indices)
    ks = _KernelSampler(kernel)
    gens = [_traj_rng(seed, ix) for ix in indices]
    uni = np.stack([g.random((block, 2)) for g in gens])  # (n, block, 2)
    n_draws = np.full(n, block)

    i0 = kernel.index(z0)
    state = np.full(n, i0, dtype=np.int64)
    t = np.zeros(n)
    active = np.ones(n, dtype=bool)
    absorbed = np.zeros(n, dtype=bool)
    times = [np.full(n, np.inf)]
    codes = [np.full(n, -1, dtype=np.int64)]
    counts = np.zeros(n, dtype=np.int64)
    k = 0
    while active.any():
        if k >= uni.shape[1]:
            # Extend the streams of still-active trajectories.
            extra = np.zeros((n, block, 2))
            for r in np.nonzero(active)[0]:
                extra[r] = gens[r].random((block, 2))
                n_draws[r] += block
            uni = np.concatenate([uni, extra], axis=1)
        u1 = uni[:, k, 0]
        u2 = uni[:, k, 1]
        step_t = np.full(n, np.inf)
        step_c = np.full(n, -1, dtype=np.int64)
        for i in set(state[active]):
            sel = active & (state == i)
            if ks.row_mass[i] <= 1e-14:
                absorbed |= sel
                active &= ~sel
                continue
            absorb = sel & (u1 > ks.row_mass[i])
            absorbed |= absorb
            active &= ~absorb
            sel &= ~absorb
            if not sel.any():
                continue
            succ = np.searchsorted(ks.cum[i], u1[sel])
            for j in np.unique(succ):
                rows = np.nonzero(sel)[0][succ == j]
                w = ks.samplers[(i, j)].sample(u2[rows])
                w = np.maximum(w, 1e-300)
                step_t[rows] = t[rows] + w
                step_c[rows] = j
        over = active & (step_t > T)
        active &= ~over
        fire = active & np.isfinite(step_t)
        t = np.where(fire, step_t, t)
        state = np.where(fire, step_c, state)
        if fire.any():
            row_t = np.full(n, np.inf)
            row_c = np.full(n, -1, dtype=np.int64)
            row_t[fire] = step_t[fire]
            row_c[fire] = step_c[fire]
            times.append(row_t)
            codes.append(row_c)
            counts[fire] += 1
        k += 1
    times_arr = np.stack(times[1:], axis=1) if len(times) > 1 else np.zeros((n, 0))
    codes_arr = np.stack(codes[1:], axis=1) if len(codes) > 1 else np.zeros((n, 0), dtype=np.int64)
    return times_arr, codes_arr, counts, absorbed


def _log_ratio_tables(kernel: SemiMarkovKernel, mark: State):
    """Vectorized ``ln q[y][mark](w) - ln S_y(w)`` per source state."""
    jm = kernel.index(mark)

    def make(y_idx):
        dens = kernel.entries[y_idx][jm]
        surv = kernel.survivals[y_idx]

        def ev(w):
            with np.errstate(divide="ignore", invalid="ignore"):
                num = np.asarray(dens.eval(w))
                den = np.asarray(surv.eval(w))
                return np.where(
                    (num > 0) & (den > 0),
                    np.log(np.maximum(num, 1e-320)) - np.log(np.maximum(den, 1e-320)),
                    -np.inf,
                )

        return ev

    return {i: make(i) for i in range(kernel.n)}


def mc_mi_dynamic(
    joint_kernel: SemiMarkovKernel,
    mark: State,
    output_density: ExpPolyDensity,
    T: float,
    n_traj: int,
    seed: int,
    chunk: int = 20000,
) -> MCEstimate:
    """Monte Carlo estimate of the trajectory mutual information up to ``T``.

    Simulates the joint marginal system started on an arrival of ``mark`` at
    time 0 and accumulates, at every ``mark`` event, the log ratio of the
    joint hazard (known state, age since the last joint event) to the output
    hazard (renewal age since the last ``mark`` event).  Trajectories whose
    filter degenerates are discarded against a 0.1% budget.
    """
    if T < 0:
        raise InputError("horizon must be nonnegative")
    if T == 0.0:
        return MCEstimate(0.0, 0.0, n_traj, seed)
    tables = _log_ratio_tables(joint_kernel, mark)
    out_surv = output_density.survival_from_density()
    jm = joint_kernel.index(mark)

    sums = np.empty(n_traj)
    pos = 0
    bad = 0
    for start in range(0, n_traj, chunk):
        m = min(chunk, n_traj - start)
        times, codes, counts, _ = simulate_mrp_batch(
            joint_kernel, mark, T, seed, m, indices=range(start, start + m)
        )
        if times.shape[1] == 0:
            sums[pos : pos + m] = 0.0
            pos += m
            continue
        prev_code = np.concatenate(
            [np.full((m, 1), jm, dtype=np.int64), codes[:, :-1]], axis=1
        )
        prev_t = np.concatenate([np.zeros((m, 1)), times[:, :-1]], axis=1)
        with np.errstate(invalid="ignore"):
            waits = times - prev_t
        is_mark = codes == jm
        # joint hazard at mark events
        contrib = np.zeros_like(times)
        for y in range(joint_kernel.n):
            sel = is_mark & (prev_code == y)
            if sel.any():
                contrib[sel] = tables[y](waits[sel])
        # output (renewal) hazard: age since previous mark event
        mark_times = np.where(is_mark, times, np.nan)
        prev_mark_t = np.zeros_like(times)
        run = np.zeros(m)
        for kcol in range(times.shape[1]):
            prev_mark_t[:, kcol] = run
            upd = is_mark[:, kcol]
            run = np.where(upd, times[:, kcol], run)
        w_out = times - prev_mark_t
        with np.errstate(divide="ignore", invalid="ignore"):
            f_out = np.asarray(output_density.eval(np.where(is_mark, w_out, 1.0)))
            s_out = np.asarray(out_surv.eval(np.where(is_mark, w_out, 1.0)))
            log_out = np.where(
                (f_out > 0) & (s_out > 0),
                np.log(np.maximum(f_out, 1e-320)) - np.log(np.maximum(s_out, 1e-320)),
                -np.inf,
            )
        contrib = np.where(is_mark, contrib - log_out, 0.0)
        contrib = np.where(np.isfinite(times), contrib, 0.0)
        tot = contrib.sum(axis=1)
        good = np.isfinite(tot)
        bad += int((~good).sum())
        tot = np.where(good, tot, 0.0)
        sums[pos : pos + m] = tot
        pos += m
    if bad > DISCARD_BUDGET * n_traj:
        raise FilterDegeneracyError(
            f"{bad} of {n_traj} trajectories degenerated (> {DISCARD_BUDGET:.1%})"
        )
    value = float(np.mean(sums))
    stderr = float(np.std(sums, ddof=1) / np.sqrt(n_traj))
    return MCEstimate(value=value, stderr=stderr, n_samples=n_traj, seed=seed)


@dataclass(frozen=True)
class StaticMiGrid:
    """Estimates of the static-input information on a horizon grid."""

    T_grid: np.ndarray
    estimates: tuple[MCEstimate, ...]
    prior: Mapping[object, float]


def residual_density(d: ExpPolyDensity) -> ExpPolyDensity:
    """Age-stationary (residual-life) density ``S(t) / E[tau]`` of a proper law."""
    mass = d.total_mass()
    if abs(mass - 1.0) > 1e-9:
        raise InputError("residual density needs a proper holding law")
    surv = d.survival_from_density()
    # the survival of a proper law has no true constant part; drop the
    # floating-point residue of the zero-rate term
    terms = tuple((c, m, r) for c, m, r in surv.terms if not (r == 0 and abs(c) < 1e-9))
    return ExpPolyDensity(terms).scale(1.0 / d.mean())


def mc_mi_static(
    level_densities: Mapping[object, ExpPolyDensity],
    prior: Mapping[object, float],
    T_grid: Sequence[float],
    n_traj: int,
    seed: int,
    chunk: int = 20000,
    start: str = "arrival",
) -> StaticMiGrid:
    """Information between a static level and the output counting process.

    The level is drawn once per trajectory from the prior (first uniform of
    the trajectory's stream); arrivals then follow the level's renewal
    density.  One pass accumulates the estimator at every grid horizon: at
    each arrival the summand is the log ratio of the level-conditional hazard
    to the prior-mixture hazard of the arrival age.

    ``start`` declares the output initialization: ``"arrival"`` conditions on
    an arrival at time 0 (age zero; the default, matching the exact route),
    ``"equilibrium"`` starts the output age-stationary, so the first waiting
    time follows the residual-life law of its level.
    """
    levels = list(level_densities.keys())
    pvec = np.array([float(prior[c]) for c in levels])
    if np.any(pvec < 0) or abs(pvec.sum() - 1.0) > 1e-9:
        raise InputError("prior must be a distribution over the levels")
    if start not in ("arrival", "equilibrium"):
        raise InputError(f"unknown initialization {start!r}")
    T_grid = np.asarray(sorted(T_grid), dtype=float)
    if np.any(T_grid < 0) or len(T_grid) == 0:
        raise InputError("horizon grid must be nonnegative and nonempty")
    T_max = float(T_grid[-1])
    samplers = {c: InverseCdfSampler(level_densities[c]) for c in levels}
    survs = {c: level_densities[c].survival_from_density() for c in levels}
    if start == "equilibrium":
        first_densities = {c: residual_density(level_densities[c]) for c in levels}
    else:
        first_densities = level_densities
    first_samplers = {c: InverseCdfSampler(first_densities[c]) for c in levels}
    first_survs = {c: first_densities[c].survival_from_density() for c in levels}
    log_prior = np.where(pvec > 0, np.log(np.maximum(pvec, 1e-320)), -np.inf)

    per_traj = np.zeros((n_traj, len(T_grid)))
    bad = 0
    for start in range(0, n_traj, chunk):
        m = min(chunk, n_traj - start)
        gens = [_traj_rng(seed, ix) for ix in range(start, start + m)]
        u_level = np.array([g.random() for g in gens])
        cvals = np.searchsorted(np.cumsum(pvec), u_level).clip(0, len(levels) - 1)
        block = 64
        uni = np.stack([g.random((block, 2)) for g in gens])
        t = np.zeros(m)
        active = np.ones(m, dtype=bool)
        # log-posterior over levels (normalized each step)
        logw = np.tile(log_prior, (m, 1))
        cum = np.zeros((m, len(T_grid)))
        k = 0
        while active.any():
            if k >= uni.shape[1]:
                extra = np.zeros((m, block, 2))
                for r in np.nonzero(active)[0]:
                    extra[r] = gens[r].random((block, 2))
                uni = np.concatenate([uni, extra], axis=1)
            u2 = uni[:, k, 1]  # u1 (successor draw) is trivial for one state
            first = k == 0
            smp = first_samplers if first else samplers
            dens = first_densities if first else level_densities
            srv = first_survs if first else survs
            w = np.zeros(m)
            for ci, c in enumerate(levels):
                sel = active & (cvals == ci)
                if sel.any():
                    w[sel] = smp[c].sample(u2[sel])
            t_new = t + w
            over = active & (t_new > T_max)
            active &= ~over
            if not active.any():
                break
            fire = active
            # log f_c(w), log S_c(w) for all levels at the fired waits
            wf = w[fire]
            logf = np.stack(
                [np.asarray(_safe_log_arr(dens[c].eval(wf))) for c in levels],
                axis=1,
            )
            logs = np.stack(
                [np.asarray(_safe_log_arr(srv[c].eval(wf))) for c in levels], axis=1
            )
            lw = logw[fire]
            log_mix_f = logsumexp(lw + logf, axis=1)
            log_mix_s = logsumexp(lw + logs, axis=1)
            own = cvals[fire]
            own_logf = logf[np.arange(own.size), own]
            own_logs = logs[np.arange(own.size), own]
            summand = (own_logf - own_logs) - (log_mix_f - log_mix_s)
            # accumulate into every horizon bucket the arrival falls under
            tf = t_new[fire]
            buckets = np.searchsorted(T_grid, tf, side="left")
            rows = np.nonzero(fire)[0]
            for b in range(len(T_grid)):
                hit = buckets <= b
                if hit.any():
                    cum[rows[hit], b] += summand[hit]
            # posterior update
            new_lw = lw + logf
            norm = logsumexp(new_lw, axis=1)
            degen = ~np.isfinite(norm)
            if degen.any():
                bad += int(degen.sum())
                active[rows[degen]] = False
            new_lw = new_lw - norm[:, None]
            logw[fire] = new_lw
            t = np.where(fire, t_new, t)
            k += 1
        per_traj[start : start + m] = cum
    if bad > DISCARD_BUDGET * n_traj:
        raise FilterDegeneracyError(
            f"{bad} of {n_traj} trajectories degenerated (> {DISCARD_BUDGET:.1%})"
        )
    estimates = []
    for j in range(len(T_grid)):
        col = per_traj[:, j]
        estimates.append(
            MCEstimate(
                value=float(col.mean()),
                stderr=float(col.std(ddof=1) / np.sqrt(n_traj)),
                n_samples=n_traj,
                seed=seed,
            )
        )
    return StaticMiGrid(T_grid=T_grid, estimates=tuple(estimates), prior=dict(prior))


def _safe_log_arr(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.log(np.maximum(v, 1e-320)), -np.inf)
