"""Posterior filter statistics, hazard functions and path densities.

The marginal observer sees only marks and waiting times; its belief over the
filtered augmented states is a log-domain weight vector updated by a linear
recursion and renormalized with log-sum-exp.  Hazards are ratios of belief-
weighted densities to belief-weighted survivals, evaluated at left limits of
the backward recurrence time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import FilterDegeneracyError, InputError
from .filtering import FilterOutput

# Weights below exp(LOG_FLOOR) are treated as structurally zero.
LOG_FLOOR = -745.0


@dataclass(frozen=True)
class ThetaState:
    """Normalized log-posterior over the filter's kept states.

    ``t_last`` is the absolute time of the most recent marginal event, so the
    backward recurrence time at query time ``t`` is ``t - t_last``.
    ``pre_first`` marks the transient phase before any marginal event.
    """

    log_w: np.ndarray
    n_events: int = 0
    t_last: float = 0.0
    pre_first: bool = False

    def __post_init__(self):
        object.__setattr__(self, "log_w", np.asarray(self.log_w, dtype=float))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_w)


@dataclass(frozen=True)
class HazardEval:
    """Conditional event rate of one marginal mark (kept in the log domain)."""

    state: object
    log_value: float

    @property
    def value(self) -> float:
        return float(np.exp(self.log_value))


def _safe_log(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(values > 0.0, np.log(np.maximum(values, 1e-320)), -np.inf)
    return out


def theta_init(
    f: FilterOutput,
    first_event: tuple,
    xi=None,
    prior=None,
) -> ThetaState:
    """Belief right after the first marginal event ``(mark, time)``.

    ``time == 0`` means the process starts on an arrival: the belief is the
    prior (or the maximum-entropy choice over the augmented copies of ``xi``)
    restricted to the mark's group.  ``time > 0`` uses the first-passage
    densities from ``xi`` carried by the filter output.
    """
    z0, that0 = first_event
    if f.g is None:
        raise InputError("filter output has no coarse-graining")
    mask = f.group_mask(z0)
    if not mask.any():
        raise InputError(f"mark {z0!r} has no states in the filtered space")
    n = len(f.states)
    if that0 < 0:
        raise InputError("first event time must be nonnegative")
    if that0 == 0.0:
        if prior is not None:
            base = np.array([float(prior.get(a, 0.0)) for a in f.states])
            logb = _safe_log(base)
        elif xi is not None:
            # Maximum-entropy over the augmented copies of xi.
            copies = np.array([_base_state(a) == xi for a in f.states])
            logb = np.where(copies, 0.0, -np.inf)
        else:
            logb = np.zeros(n)
        logw = np.where(mask, logb, -np.inf)
    else:
        if f.transient_aug is None or (xi is not None and f.xi != xi):
            raise InputError("transient initialization needs the first-passage row")
        dens = np.array(
            [f.transient_aug[a].eval(that0) if mask[i] else 0.0 for i, a in enumerate(f.states)]
        )
        logw = _safe_log(dens)
        if prior is not None:
            logw = logw + _safe_log(np.array([float(prior.get(a, 0.0)) for a in f.states]))
    norm = logsumexp(logw)
    if not np.isfinite(norm):
        raise FilterDegeneracyError(
            f"impossible first event ({z0!r}, {that0})", mark=z0, waiting=that0
        )
    return ThetaState(log_w=logw - norm, n_events=1, t_last=that0, pre_first=False)


def _base_state(alpha):
    """Original state underlying an augmented label ``(z, i)`` or ``(c, (z, i))``."""
    if isinstance(alpha, tuple) and len(alpha) == 2 and isinstance(alpha[1], int):
        return alpha[0]
    return alpha


def log_kernel_at(f: FilterOutput, w: float) -> np.ndarray:
    """Matrix ``log q[alpha][beta](w)`` of the filtered kernel at one waiting time."""
    n = len(f.states)
    out = np.full((n, n), -np.inf)
    for i in range(n):
        for j in range(n):
            d = f.kernel.entries[i][j]
            if d.terms:
                out[i, j] = d.log_eval(w)
    return out


def theta_update(f: FilterOutput, theta: ThetaState, mark, waiting: float) -> ThetaState:
    """One observation step: multiply by the mark's kernel columns and renormalize."""
    new, _ = _update_core(f, theta, mark, waiting)
    return new


def _update_core(f: FilterOutput, theta: ThetaState, mark, waiting: float):
    if waiting <= 0:
        raise InputError(f"waiting time must be positive, got {waiting}")
    mask = f.group_mask(mark)
    logq = log_kernel_at(f, waiting)
    # (theta q)(beta) in the log domain, restricted to the mark's group.
    cand = theta.log_w[:, None] + logq
    with np.errstate(invalid="ignore"):
        logw = logsumexp(cand, axis=0)
    logw = np.where(mask, logw, -np.inf)
    norm = float(logsumexp(logw))
    if not np.isfinite(norm):
        raise FilterDegeneracyError(
            f"posterior collapsed at mark {mark!r} after waiting {waiting}",
            mark=mark,
            waiting=waiting,
        )
    new = ThetaState(
        log_w=logw - norm,
        n_events=theta.n_events + 1,
        t_last=theta.t_last + waiting,
        pre_first=False,
    )
    return new, norm


def log_survival_vector(f: FilterOutput, v: float) -> np.ndarray:
    return np.array([_safe_log(np.array(S.eval(v))) for S in f.kernel.survivals])


def hazard_recurrent(f: FilterOutput, theta: ThetaState, z, v: float) -> HazardEval:
    """Event rate of mark ``z`` a time ``v`` after the last marginal event."""
    if v < 0:
        raise InputError("backward recurrence time must be nonnegative")
    fbar = f.fbar[z]
    lognum = logsumexp(theta.log_w + _safe_log(np.array([d.eval(v) for d in fbar])))
    logden = logsumexp(theta.log_w + log_survival_vector(f, v))
    if not np.isfinite(logden):
        raise FilterDegeneracyError(f"survival mass vanished at recurrence time {v}")
    return HazardEval(state=z, log_value=float(lognum - logden))


def hazard_transient(f: FilterOutput, z, t: float) -> HazardEval:
    """Event rate of mark ``z`` before the first marginal event, from state ``xi``."""
    if f.transient_aug is None:
        raise InputError("transient hazard needs the first-passage row")
    if t < 0:
        raise InputError("time must be nonnegative")
    num = f.transient_marginal(z).eval(t)
    used = sum(f.transient_marginal(y).cdf(t) for y in f.marginal_states)
    den = 1.0 - used
    if den <= 1e-14:
        raise FilterDegeneracyError(f"transient survival vanished at t={t}")
    return HazardEval(state=z, log_value=float(_safe_log(np.array(num)) - np.log(den)))


def transient_log_survival(f: FilterOutput, t: float) -> float:
    """``log P(no marginal event by t)`` from the declared initial state."""
    if f.transient_aug is None:
        raise InputError("needs the first-passage row")
    used = sum(f.transient_marginal(y).cdf(t) for y in f.marginal_states)
    return float(_safe_log(np.array(1.0 - used)))


def path_log_density(
    f: FilterOutput,
    events: Sequence[tuple],
    t: float,
    theta0: ThetaState | None = None,
    xi=None,
    prior=None,
) -> float:
    """Log density of an observed marginal path up to time ``t``.

    ``events`` is a strictly increasing list of ``(mark, time)`` pairs.  With
    ``theta0`` the process starts on a marginal event at time 0 (the belief
    supplied); with ``xi`` it starts in that original state and the first
    factor is the first-passage density.  The result includes the probability
    of seeing no further event on ``(t_n, t]``.
    """
    times = [e[1] for e in events]
    if any(b <= a for a, b in zip(times, times[1:])) or (times and times[0] <= 0):
        raise InputError("event times must be strictly increasing and positive")
    if times and times[-1] > t:
        raise InputError("events extend past the evaluation time")
    total = 0.0
    if theta0 is not None:
        theta = theta0
        start = 0
    elif xi is not None:
        if not events:
            return transient_log_survival(f, t)
        z1, t1 = events[0]
        dens = f.transient_marginal(z1).eval(t1)
        total += float(_safe_log(np.array(dens)))
        theta = theta_init(f, (z1, t1), xi=xi, prior=prior)
        start = 1
    else:
        raise InputError("either theta0 or xi must be given")
    for z, tk in events[start:]:
        theta, lognorm = _update_core(f, theta, z, tk - theta.t_last)
        total += lognorm
    v = t - theta.t_last
    total += float(logsumexp(theta.log_w + log_survival_vector(f, v)))
    return total
