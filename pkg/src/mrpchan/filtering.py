"""Marginalization of Markov renewal dynamics onto observable transitions.

Three steps: (i) augment the state space with transition classes so that a
state records *how* it was entered, (ii) project the kernel onto the
observable classes by summing the convolution series over excursions through
the hidden block (done exactly in the Laplace domain), and (iii) coarse-grain
the augmented labels to the marginal mark space.  A modified run of step (ii)
with a fresh start node yields the first-passage densities out of an
arbitrary initial state (the transient row).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Hashable, Mapping

import numpy as np

from .errors import InputError
from .exppoly import ExpPolyDensity
from .kernels import SemiMarkovKernel, State
from .laplace import (
    RationalLT,
    invert_factored,
    lt_factored,
    mat_mul,
    neumann_series,
)

AugState = tuple[State, int]

# Mass threshold below which an embedded-chain entry counts as structurally zero.
P_POSITIVE = 1e-14


@dataclass(frozen=True)
class TransitionClassMap:
    """Class index for every ordered transition; class 0 is unobservable.

    Transitions sharing a class ``i > 0`` are indistinguishable in the
    marginal trajectories.
    """

    classes: Mapping[tuple[State, State], int]

    def __post_init__(self):
        for (y, z), i in self.classes.items():
            if i < 0:
                raise InputError(f"negative class index {i} for {(y, z)}")

    def class_of(self, y: State, z: State) -> int | None:
        return self.classes.get((y, z))

    def validate_cover(self, kernel: SemiMarkovKernel):
        P = kernel.embedded_matrix
        for i, y in enumerate(kernel.states):
            for j, z in enumerate(kernel.states):
                if P[i, j] > P_POSITIVE and (y, z) not in self.classes:
                    raise InputError(f"transition {y!r} -> {z!r} has no class")


def augment(kernel: SemiMarkovKernel, classes: TransitionClassMap) -> SemiMarkovKernel:
    """Augmented kernel on ``(state, entry-class)`` pairs.

    Entry ``((y, j), (z, i))`` equals ``q[y][z]`` when transition ``y -> z``
    carries class ``i``, else zero.  Summing over classes of the target
    recovers the original kernel.
    """
    classes.validate_cover(kernel)
    P = kernel.embedded_matrix
    nodes: list[AugState] = []
    for i, y in enumerate(kernel.states):
        for j, z in enumerate(kernel.states):
            if P[i, j] > P_POSITIVE:
                node = (z, classes.class_of(y, z))
                if node not in nodes:
                    nodes.append(node)
    entries = []
    for y, _j in nodes:
        row = []
        for z, i in nodes:
            if classes.class_of(y, z) == i and P[kernel.index(y), kernel.index(z)] > P_POSITIVE:
                row.append(kernel.density(y, z))
            else:
                row.append(ExpPolyDensity.zero())
        entries.append(row)
    return SemiMarkovKernel(nodes, entries, validate=False)


def observable_states(aug: SemiMarkovKernel) -> tuple[AugState, ...]:
    """Members of the augmented space entered by an observable transition."""
    return tuple(s for s in aug.states if s[1] != 0)


@dataclass(frozen=True)
class FilterOutput:
    """Filtered kernel on the observable augmented space, plus the coarse-graining.

    ``kernel`` lives on the kept labels ``alpha``; ``lt`` is its exact
    Laplace transform.  After ``coarse_grain``, ``g`` maps kept labels to
    marginal marks; if ``g`` is injective the relabeled kernel is itself a
    valid semi-Markov kernel on the marginal marks.  ``transient_aug`` holds
    the first-passage densities from the declared initial state.
    """

    kernel: SemiMarkovKernel
    lt: tuple[tuple[RationalLT, ...], ...]
    g: Mapping[AugState, State] | None = None
    injective: bool | None = None
    marginal_kernel: SemiMarkovKernel | None = None
    xi: State | None = None
    transient_aug: Mapping[AugState, ExpPolyDensity] | None = None

    @property
    def states(self) -> tuple[AugState, ...]:
        return self.kernel.states

    @cached_property
    def marginal_states(self) -> tuple[State, ...]:
        if self.g is None:
            raise InputError("no coarse-graining attached yet")
        seen = []
        for a in self.states:
            m = self.g[a]
            if m not in seen:
                seen.append(m)
        return tuple(seen)

    @cached_property
    def fbar(self) -> Mapping[State, tuple[ExpPolyDensity, ...]]:
        """Per marginal mark ``z``, the vector ``alpha -> sum_{beta in g^-1(z)} q[alpha][beta]``."""
        out = {}
        for z in self.marginal_states:
            cols = [j for j, b in enumerate(self.states) if self.g[b] == z]
            vec = []
            for i in range(len(self.states)):
                f = ExpPolyDensity.zero()
                for j in cols:
                    f = f + self.kernel.entries[i][j]
                vec.append(f)
            out[z] = tuple(vec)
        return out

    def group_mask(self, z: State) -> np.ndarray:
        return np.array([self.g[b] == z for b in self.states])

    def transient_marginal(self, z: State) -> ExpPolyDensity:
        """First observable event density into marginal mark ``z`` from ``xi``."""
        if self.transient_aug is None:
            raise InputError("no transient row attached; call with_transient first")
        f = ExpPolyDensity.zero()
        for a, d in self.transient_aug.items():
            if self.g[a] == z:
                f = f + d
        return f


def anderson_filter(kernel: SemiMarkovKernel, keep) -> FilterOutput:
    """Project an MrP kernel onto the subset ``keep`` of its states.

    Partitions the kernel into blocks (kept/hidden), sums the hidden-block
    convolution series as a geometric series of Laplace transforms and
    inverts the result entrywise.  Hidden states never reached from the kept
    ones are dropped before checking convergence.
    """
    keep = list(keep)
    for s in keep:
        kernel.index(s)
    keep_set = set(keep)
    if len(keep_set) != len(keep):
        raise InputError("duplicate states in keep set")
    P = kernel.embedded_matrix

    hidden_all = [s for s in kernel.states if s not in keep_set]
    reach = _reachable_hidden(kernel, keep, hidden_all, P)

    ki = [kernel.index(s) for s in keep]
    hi = [kernel.index(s) for s in reach]

    a = [[lt_factored(kernel.entries[i][j]) for j in ki] for i in ki]
    if hi:
        b = [[lt_factored(kernel.entries[i][j]) for j in hi] for i in ki]
        c = [[lt_factored(kernel.entries[i][j]) for j in ki] for i in hi]
        d = [[lt_factored(kernel.entries[i][j]) for j in hi] for i in hi]
        series = neumann_series(d)
        corr = mat_mul(mat_mul(b, series), c)
        q_fact = [
            [a[i][j] + corr[i][j] for j in range(len(ki))] for i in range(len(ki))
        ]
    else:
        q_fact = a
    entries = [[invert_factored(f) for f in row] for row in q_fact]
    q_lt = [[f.to_rational() for f in row] for row in q_fact]
    filtered = SemiMarkovKernel(keep, entries, validate=False)
    return FilterOutput(kernel=filtered, lt=tuple(tuple(row) for row in q_lt))


def _reachable_hidden(kernel, keep, hidden, P):
    """Hidden states reachable from the kept block before returning to it."""
    idx = {s: i for i, s in enumerate(kernel.states)}
    frontier = list(keep)
    seen_hidden: list = []
    visited = set(keep)
    while frontier:
        y = frontier.pop()
        for z in kernel.states:
            if P[idx[y], idx[z]] > P_POSITIVE and z not in visited:
                if z in hidden:
                    visited.add(z)
                    seen_hidden.append(z)
                    frontier.append(z)
    return [s for s in hidden if s in seen_hidden]


def coarse_grain(f: FilterOutput, g: Mapping[AugState, State]) -> FilterOutput:
    """Attach a surjective relabeling of the kept states to marginal marks.

    When ``g`` is injective the marginal system is again an MrP and the
    relabeled kernel is exposed; otherwise only the grouped columns are
    available (through ``fbar``) and the marginal process is history
    dependent.
    """
    missing = [a for a in f.states if a not in g]
    if missing:
        raise InputError(f"coarse-graining misses states {missing}")
    marks = [g[a] for a in f.states]
    injective = len(set(marks)) == len(marks)
    marginal = f.kernel.relabel(dict(zip(f.states, marks))) if injective else None
    return replace(f, g=dict(g), injective=injective, marginal_kernel=marginal)


def transient_row(
    kernel: SemiMarkovKernel,
    classes: TransitionClassMap,
    keep,
    xi: State,
) -> dict[AugState, ExpPolyDensity]:
    """First-passage densities from ``xi`` into each kept augmented state.

    Runs the filter once more with a fresh transient copy of ``xi`` adjoined
    to the kept set; the copy has the outgoing row of ``xi`` and no incoming
    transitions, so its filtered row is exactly the density of the first
    observable event.
    """
    kernel.index(xi)
    aug = augment(kernel, classes)
    fresh: AugState = (xi, -1)  # entry class -1: artificial start marker
    states = (fresh,) + aug.states
    zero = ExpPolyDensity.zero()
    entries = [[zero] * len(states)]
    P = kernel.embedded_matrix
    for z, i in aug.states:
        if classes.class_of(xi, z) == i and P[kernel.index(xi), kernel.index(z)] > P_POSITIVE:
            entries[0][states.index((z, i))] = kernel.density(xi, z)
    for row_state, row in zip(aug.states, aug.entries):
        entries.append([zero] + list(row))
    extended = SemiMarkovKernel(states, entries, validate=False)
    filtered = anderson_filter(extended, [fresh] + list(keep))
    out = {}
    for a in keep:
        out[a] = filtered.kernel.density(fresh, a)
    return out


def with_transient(
    f: FilterOutput,
    kernel: SemiMarkovKernel,
    classes: TransitionClassMap,
    xi: State,
) -> FilterOutput:
    """Return a copy of ``f`` carrying the transient row from ``xi``."""
    row = transient_row(kernel, classes, list(f.states), xi)
    return replace(f, xi=xi, transient_aug=row)


def marginal_filter(
    kernel: SemiMarkovKernel,
    classes: TransitionClassMap,
    g: Mapping[AugState, State],
    xi: State | None = None,
    keep=None,
) -> FilterOutput:
    """Full pipeline: augment, filter onto observable classes, coarse-grain.

    ``g`` may mention unreachable augmented labels; only kept ones are used.
    ``keep`` overrides the kept set (defaults to every state entered by an
    observable class); it must be a subset of the augmented space.
    """
    aug = augment(kernel, classes)
    if keep is None:
        keep = observable_states(aug)
    else:
        missing = [s for s in keep if s not in set(aug.states)]
        if missing:
            raise InputError(f"keep set names unreachable augmented states {missing}")
    f = anderson_filter(aug, keep)
    f = coarse_grain(f, {a: g[a] for a in f.states})
    if xi is not None:
        f = with_transient(f, kernel, classes, xi)
    return f


def as_filter_output(kernel: SemiMarkovKernel, g: Mapping[State, State]) -> FilterOutput:
    """Wrap an already-filtered kernel (e.g. a modulated block matrix) for the
    posterior/hazard machinery, attaching the coarse-graining ``g``."""
    lt = tuple(tuple(lt_factored(d).to_rational() for d in row) for row in kernel.entries)
    return coarse_grain(FilterOutput(kernel=kernel, lt=lt), g)


@dataclass(frozen=True)
class ModulatedKernel:
    """Block-diagonal kernel over ``(level, state)`` with a prior on levels.

    A static random level ``c`` chooses the block; filtering acts on each
    block independently.
    """

    kernel: SemiMarkovKernel
    prior: Mapping[Hashable, float]
    levels: tuple[Hashable, ...]


def modulated_kernel(models: Mapping[Hashable, SemiMarkovKernel], prior) -> ModulatedKernel:
    """Assemble the block-diagonal kernel of a statically modulated family."""
    levels = tuple(models.keys())
    pr = {c: float(prior[c]) for c in levels}
    total = sum(pr.values())
    if any(p < 0 for p in pr.values()) or abs(total - 1.0) > 1e-9:
        raise InputError(f"prior must be a distribution over levels (sum {total})")
    states: list = []
    for c in levels:
        states.extend((c, s) for s in models[c].states)
    zero = ExpPolyDensity.zero()
    entries = []
    for c in levels:
        m = models[c]
        for row in m.entries:
            full = []
            for c2 in levels:
                if c2 == c:
                    full.extend(row)
                else:
                    full.extend([zero] * models[c2].n)
            entries.append(full)
    return ModulatedKernel(
        kernel=SemiMarkovKernel(states, entries, validate=False),
        prior=pr,
        levels=levels,
    )
