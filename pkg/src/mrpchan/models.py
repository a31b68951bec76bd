"""Model zoo: the regulated-promoter channel and the leaky-promoter example.

Both models are Markov jump processes represented as finite-state marked
point processes whose filtered marginals are analytically tractable; they
drive the acceptance suite and the command-line surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.linalg import expm

from .errors import InputError
from .exppoly import ExpPolyDensity
from .filtering import (
    FilterOutput,
    ModulatedKernel,
    TransitionClassMap,
    marginal_filter,
    modulated_kernel,
)
from .kernels import GeneratorSpec, SemiMarkovKernel, smk_from_competing, smk_from_generator
from .limits import interarrival_density


@dataclass(frozen=True)
class GeneModelParams:
    """Kinetics of the repressor-regulated promoter with one intermediate step.

    ``k_off`` is per concentration unit and per second; the repressor binding
    rate is ``k_off * R``.  Concentrations are dimensionless multipliers of
    ``k_off`` (normalized volume).  ``pi`` is the prior probability of the
    high-concentration level ``R1``.
    """

    k_on: float = 0.0023
    k_off: float = 0.0027
    k1: float = 0.165
    k2: float = 0.165
    k_J: float = 0.165
    R0: float = 1.0
    R1: float = 10.0
    pi: float = 0.5

    def __post_init__(self):
        for name in ("k_on", "k_off", "k1", "k2", "k_J", "R0", "R1"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if not 0.0 <= self.pi <= 1.0:
            raise InputError("pi must be a probability")
        if self.R0 == self.R1:
            raise InputError("the two concentrations must differ")

    def concentration(self, level: int) -> float:
        return (self.R0, self.R1)[level]


GENE_STATES = ("J", "P_on", "P_off", "I1")

# Observable transition classes of the joint (input, output) marginal:
# 1 = on-switching, 2 = off-switching, 3 = output arrivals; intermediate
# traffic through I1 is hidden.
GENE_JOINT_CLASSES = TransitionClassMap(
    {
        ("J", "P_off"): 2,
        ("J", "I1"): 0,
        ("P_on", "P_off"): 2,
        ("P_on", "I1"): 0,
        ("P_off", "P_on"): 1,
        ("I1", "J"): 3,
        ("I1", "P_on"): 0,
    }
)
GENE_JOINT_COARSE = {("J", 3): "J", ("P_on", 1): "ON", ("P_off", 2): "OFF"}

# For the output alone, only arrivals at J are observable.
GENE_OUTPUT_CLASSES = TransitionClassMap(
    {
        ("J", "P_off"): 0,
        ("J", "I1"): 0,
        ("P_on", "P_off"): 0,
        ("P_on", "I1"): 0,
        ("P_off", "P_on"): 0,
        ("I1", "J"): 1,
        ("I1", "P_on"): 0,
    }
)
GENE_OUTPUT_COARSE = {("J", 1): "J"}


def gene_generator(params: GeneModelParams, level: int) -> GeneratorSpec:
    a = params.k_off * params.concentration(level)
    k1, k2, kJ, kon = params.k1, params.k2, params.k_J, params.k_on
    rates = (
        (0.0, 0.0, a, k1),
        (0.0, 0.0, a, k1),
        (0.0, kon, 0.0, 0.0),
        (kJ, k2, 0.0, 0.0),
    )
    return GeneratorSpec(GENE_STATES, rates)


@dataclass(frozen=True)
class GeneModel:
    """All filtered views of the promoter channel, per concentration level."""

    params: GeneModelParams
    full: Mapping[int, SemiMarkovKernel]  # 4-state joint model
    joint: Mapping[int, FilterOutput]  # (input, output) marginal, injective
    output: Mapping[int, FilterOutput]  # output marginal (single state J)
    classes: TransitionClassMap = field(default=GENE_JOINT_CLASSES)

    @cached_property
    def joint_kernel(self) -> Mapping[int, SemiMarkovKernel]:
        return {c: f.marginal_kernel for c, f in self.joint.items()}

    @cached_property
    def f_tau(self) -> Mapping[int, ExpPolyDensity]:
        """Inter-arrival density of the output for each concentration level."""
        return {c: f.kernel.density(("J", 1), ("J", 1)) for c, f in self.output.items()}

    @cached_property
    def prior(self) -> dict[int, float]:
        return {0: 1.0 - self.params.pi, 1: self.params.pi}

    @cached_property
    def modulated_output(self) -> ModulatedKernel:
        """Block-diagonal single-state kernels of the statically modulated output."""
        blocks = {
            c: SemiMarkovKernel(("J",), [[self.f_tau[c]]], validate=False)
            for c in (0, 1)
        }
        return modulated_kernel(blocks, self.prior)

    def modulated_filter(self) -> FilterOutput:
        """Filter-output view of the modulated output (coarse-grains all blocks to J)."""
        from .filtering import as_filter_output

        mk = self.modulated_output
        return as_filter_output(mk.kernel, {s: "J" for s in mk.kernel.states})


def build_gene_model(params: GeneModelParams | None = None) -> GeneModel:
    """Construct the promoter channel: full kernels plus both filtered marginals."""
    params = params or GeneModelParams()
    full = {}
    joint = {}
    output = {}
    for level in (0, 1):
        k4 = smk_from_generator(gene_generator(params, level))
        full[level] = k4
        joint[level] = marginal_filter(
            k4, GENE_JOINT_CLASSES, GENE_JOINT_COARSE, xi="P_on"
        )
        output[level] = marginal_filter(
            k4, GENE_OUTPUT_CLASSES, GENE_OUTPUT_COARSE, xi="P_on"
        )
    return GeneModel(params=params, full=full, joint=joint, output=output)


@dataclass(frozen=True)
class LeakageModelParams:
    """Two-state promoter with leaky output: rate ``k_J`` when on, ``k_J * r`` off."""

    k_on: float = 0.05
    k_off_R: float = 0.08
    k_J: float = 0.4
    r: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise InputError("leak fraction must lie in (0, 1)")
        for name in ("k_on", "k_off_R", "k_J"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")


LEAKAGE_STATES = ("r", "1", "J1", "Jr")


@dataclass(frozen=True)
class LeakageModel:
    params: LeakageModelParams
    kernel: SemiMarkovKernel  # finite representation with jump states J1, Jr

    def intensity_levels(self) -> dict:
        """Output rate as a function of the current state."""
        p = self.params
        return {
            "r": p.k_J * p.r,
            "Jr": p.k_J * p.r,
            "1": p.k_J,
            "J1": p.k_J,
        }

    def ctmc_generator(self) -> np.ndarray:
        """Two-state generator of the promoter alone, order (r, 1)."""
        p = self.params
        return np.array([[-p.k_on, p.k_on], [p.k_off_R, -p.k_off_R]])

    def ctmc_phi_oracle(self, ts: np.ndarray, p_on0: float) -> np.ndarray:
        """``E[phi(output rate at t)]`` from the promoter's matrix exponential.

        The output rate depends only on the promoter state, so the expectation
        is a two-point mixture weighted by the occupation probabilities.
        """
        p = self.params
        G = self.ctmc_generator()
        eta = np.array([1.0 - p_on0, p_on0])
        lo, hi = p.k_J * p.r, p.k_J
        out = np.empty(len(ts))
        for i, t in enumerate(np.asarray(ts, dtype=float)):
            occ = eta @ expm(G * t)
            out[i] = occ[0] * lo * np.log(lo) + occ[1] * hi * np.log(hi)
        return out

    def ctmc_stationary(self) -> np.ndarray:
        p = self.params
        tot = p.k_on + p.k_off_R
        return np.array([p.k_off_R / tot, p.k_on / tot])


def build_leakage_model(params: LeakageModelParams | None = None) -> LeakageModel:
    """Finite-state representation of the leaky promoter with two jump states.

    Jump states mirror the promoter state they were emitted from, so the
    chain is an irreducible Markov jump process with self-transitions at the
    jump states (built from competing exponential clocks).
    """
    params = params or LeakageModelParams()
    p = params
    e = ExpPolyDensity.exponential
    none = None
    # rows/cols in LEAKAGE_STATES order: r, 1, J1, Jr
    clocks = [
        [none, e(p.k_on), none, e(p.k_J * p.r)],
        [e(p.k_off_R), none, e(p.k_J), none],
        [e(p.k_off_R), none, e(p.k_J), none],
        [none, e(p.k_on), none, e(p.k_J * p.r)],
    ]
    kernel = smk_from_competing(LEAKAGE_STATES, clocks)
    return LeakageModel(params=params, kernel=kernel)


def poisson_kernel(rate: float = 1.0) -> SemiMarkovKernel:
    """Single-state renewal kernel with exponential holding times."""
    return SemiMarkovKernel(("J",), [[ExpPolyDensity.exponential(rate)]])


def gene_interarrival(params: GeneModelParams, level: int) -> ExpPolyDensity:
    """Output inter-arrival density straight from the joint marginal kernel."""
    model = build_gene_model(params)
    return interarrival_density(model.joint_kernel[level], "J")
