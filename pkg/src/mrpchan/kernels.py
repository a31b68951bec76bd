"""Semi-Markov kernels over a finite mark space and their generative constructions.

A kernel is a square matrix of exponential-polynomial densities
``q[y][z](t)``; row sums give the sojourn density of each state, integrals
give the embedded transition matrix.  Three constructions are provided:
from a Markov jump process generator, from an embedded chain with
conditional holding densities, and from competing independent clocks.

The regularity condition for countable state spaces (some time at which every
state's sojourn CDF stays below one) holds automatically here: state spaces
are finite and all holding densities are absolutely continuous, so no runtime
check is needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

from .errors import InputError
from .exppoly import EPS_MASS, ExpPolyDensity

State = Hashable


@dataclass(frozen=True)
class GeneratorSpec:
    """Off-diagonal rate matrix of a Markov jump process; diagonal is ignored."""

    states: tuple[State, ...]
    rates: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.states)
        if len(self.rates) != n or any(len(row) != n for row in self.rates):
            raise InputError("rate matrix shape does not match the state list")
        for i, row in enumerate(self.rates):
            for j, lam in enumerate(row):
                if i != j and lam < 0:
                    raise InputError(
                        f"negative rate {lam} for {self.states[i]} -> {self.states[j]}"
                    )

    def exit_rate(self, i: int) -> float:
        return sum(lam for j, lam in enumerate(self.rates[i]) if j != i)


class SemiMarkovKernel:
    """Matrix of holding-time densities ``q[y][z]`` on an ordered state list.

    Immutable after construction; derived summaries (embedded chain, sojourn
    densities, survivals, mean sojourns, absorption defects) are cached.
    """

    def __init__(self, states: Sequence[State], entries, validate: bool = True):
        self.states = tuple(states)
        n = len(self.states)
        if len(set(self.states)) != n:
            raise InputError("duplicate state labels")
        rows = []
        for row in entries:
            row = tuple(row)
            if len(row) != n:
                raise InputError("kernel matrix must be square over the state list")
            rows.append(row)
        if len(rows) != n:
            raise InputError("kernel matrix must be square over the state list")
        self.entries: tuple[tuple[ExpPolyDensity, ...], ...] = tuple(rows)
        self._index = {s: i for i, s in enumerate(self.states)}
        if validate:
            self._validate()

    # -- access --------------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state: State) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise InputError(f"unknown state {state!r}") from None

    def density(self, y: State, z: State) -> ExpPolyDensity:
        return self.entries[self.index(y)][self.index(z)]

    # -- derived summaries -----------------------------------------------------

    @cached_property
    def embedded_matrix(self) -> np.ndarray:
        """Transition matrix of the embedded chain, ``P[y, z] = int q[y][z]``."""
        P = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                d = self.entries[i][j]
                P[i, j] = d.total_mass() if d.terms or d.atom else 0.0
        return P

    @cached_property
    def sojourn_densities(self) -> tuple[ExpPolyDensity, ...]:
        out = []
        for i in range(self.n):
            f = ExpPolyDensity.zero()
            for j in range(self.n):
                f = f + self.entries[i][j]
            out.append(f)
        return tuple(out)

    @cached_property
    def survivals(self) -> tuple[ExpPolyDensity, ...]:
        """Survival ``S_y(t) = 1 - sum_z Q[y][z](t)`` of each state's sojourn."""
        return tuple(f.survival_from_density() for f in self.sojourn_densities)

    @cached_property
    def mean_sojourns(self) -> np.ndarray:
        """``mu_y = int_0^inf S_y``; infinite for fully absorbing states."""
        mu = np.zeros(self.n)
        for i, f in enumerate(self.sojourn_densities):
            defect = self.defects[i]
            mu[i] = np.inf if defect > EPS_MASS else f.mean()
        return mu

    @cached_property
    def defects(self) -> np.ndarray:
        """Absorption defect ``F_y(inf) = 1 - sum_z P[y, z]`` per state."""
        return 1.0 - self.embedded_matrix.sum(axis=1)

    def survival(self, y: State) -> ExpPolyDensity:
        return self.survivals[self.index(y)]

    def sojourn_density(self, y: State) -> ExpPolyDensity:
        return self.sojourn_densities[self.index(y)]

    def relabel(self, mapping) -> "SemiMarkovKernel":
        """Same kernel with states renamed through ``mapping`` (a callable or dict)."""
        get = mapping.__getitem__ if isinstance(mapping, dict) else mapping
        return SemiMarkovKernel(
            tuple(get(s) for s in self.states), self.entries, validate=False
        )

    # -- validation -------------------------------------------------------------

    def _validate(self):
        for i, row in enumerate(self.entries):
            for j, d in enumerate(row):
                try:
                    d.validate_density()
                except InputError as e:
                    raise InputError(
                        f"entry {self.states[i]!r} -> {self.states[j]!r}: {e}"
                    ) from None
        P = self.embedded_matrix
        for i in range(self.n):
            s = P[i].sum()
            if s > 1.0 + EPS_MASS:
                raise InputError(
                    f"row {self.states[i]!r} mass {s} exceeds 1 (super-stochastic)"
                )
        # Survival must stay within [0, 1] and be non-increasing on a grid.
        for i, S in enumerate(self.survivals):
            if not S.terms:
                continue
            grid = self.sojourn_densities[i].validation_grid(256)
            vals = S.eval(grid)
            if np.min(vals) < -1e-8 or np.max(vals) > 1.0 + 1e-8:
                raise InputError(f"survival of {self.states[i]!r} leaves [0, 1]")
            if np.max(np.diff(vals)) > 1e-8:
                raise InputError(f"survival of {self.states[i]!r} is not non-increasing")


def smk_from_generator(g: GeneratorSpec) -> SemiMarkovKernel:
    """Kernel of a Markov jump process: ``q[y][z](t) = L(y,z) exp(-u_y t)``.

    ``u_y`` is the exit rate of ``y``; the embedded chain is ``L(y,z)/u_y``.
    """
    n = len(g.states)
    entries = []
    for i in range(n):
        u = g.exit_rate(i)
        row = []
        for j in range(n):
            lam = g.rates[i][j]
            if i == j or lam == 0:
                row.append(ExpPolyDensity.zero())
            else:
                row.append(ExpPolyDensity(((lam, 0, u),)))
        entries.append(row)
    return SemiMarkovKernel(g.states, entries)


def smk_from_conditional(states, P, holding) -> SemiMarkovKernel:
    """Kernel from an embedded chain and conditional holding densities.

    ``q[y][z](t) = P[y, z] * f[y][z](t)`` where each ``f[y][z]`` is a proper
    probability density (mass 1); entries with ``P[y, z] == 0`` may pass None.
    """
    P = np.asarray(P, dtype=float)
    n = len(states)
    if P.shape != (n, n):
        raise InputError("transition matrix shape does not match the state list")
    if np.any(P < 0) or np.any(P.sum(axis=1) > 1.0 + EPS_MASS):
        raise InputError("embedded transition matrix must be sub-stochastic")
    entries = []
    for i in range(n):
        row = []
        for j in range(n):
            if P[i, j] == 0:
                row.append(ExpPolyDensity.zero())
                continue
            f = holding[i][j]
            if f is None:
                raise InputError(f"missing holding density for positive P[{i},{j}]")
            mass = f.total_mass()
            if abs(mass - 1.0) > EPS_MASS:
                raise InputError(
                    f"holding density for {states[i]!r}->{states[j]!r} has mass {mass}"
                )
            row.append(f.scale(P[i, j]))
        entries.append(row)
    return SemiMarkovKernel(states, entries)


def smk_from_competing(states, clocks) -> SemiMarkovKernel:
    """Kernel from independent competing clocks per row.

    ``clocks[i][j]`` is the density of the clock ringing for transition
    ``states[i] -> states[j]`` (None when there is no such clock); the
    smallest draw wins: ``q[y][z] = f[y][z] * prod_{x != z} (1 - F[y][x])``.
    """
    n = len(states)
    entries = []
    for i in range(n):
        survs = []
        for j in range(n):
            f = clocks[i][j]
            survs.append(None if f is None else f.survival_from_density())
        row = []
        for j in range(n):
            f = clocks[i][j]
            if f is None:
                row.append(ExpPolyDensity.zero())
                continue
            q = f
            for x in range(n):
                if x != j and survs[x] is not None:
                    q = q.pointwise_mul(survs[x])
            row.append(q)
        entries.append(row)
    return SemiMarkovKernel(states, entries)
