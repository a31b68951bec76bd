"""Exponential-polynomial functions: the closed family all kernel densities live in.

An exponential polynomial is a finite sum of terms ``c * t**m * exp(-rho*t)``
with complex coefficient ``c``, nonnegative integer power ``m`` and complex
rate ``rho``.  The family is closed under addition, scalar multiplication,
pointwise products and convolution, which is what makes exact state-space
filtering of the kernels possible.  Densities (sub-probability densities of
holding times) are exponential polynomials with ``Re rho > 0`` for every
term; survival functions and renewal densities additionally carry constant
terms (``rho == 0``).

Complex rates always occur in conjugate pairs for objects built from real
models, so evaluation is real; ``validate_density`` checks this on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CapabilityError, InputError

# Rates closer than this (relative) are merged into one by raising the
# polynomial power; convolution of equal rates does the same analytically.
RATE_MERGE_RTOL = 1e-9

# Tolerances of the density invariants (mass and pointwise nonnegativity).
EPS_MASS = 1e-9
EPS_NEG = 1e-10

# Polynomial powers beyond this indicate runaway algebra, not a real model.
MAX_POWER = 64


def _merge_terms(terms):
    """Canonicalize a term list: merge near-equal rates, combine, sort, prune."""
    if not terms:
        return ()
    # Cluster rates within RATE_MERGE_RTOL (relative to their magnitude).
    reps: list[complex] = []
    merged: dict[tuple[int, int], complex] = {}
    for c, m, r in terms:
        c = complex(c)
        r = complex(r)
        m = int(m)
        if m < 0:
            raise InputError(f"negative polynomial power {m}")
        if m > MAX_POWER:
            raise CapabilityError(f"polynomial power {m} exceeds cap {MAX_POWER}")
        if c == 0:
            continue
        idx = None
        for i, rep in enumerate(reps):
            if abs(r - rep) <= RATE_MERGE_RTOL * max(1.0, abs(r), abs(rep)):
                idx = i
                break
        if idx is None:
            reps.append(r)
            idx = len(reps) - 1
        key = (idx, m)
        merged[key] = merged.get(key, 0.0) + c
    out = []
    for (idx, m), c in merged.items():
        r = reps[idx]
        scale = abs(c)
        if scale > 0 and scale > 1e-300:
            out.append((c, m, r))
    out.sort(key=lambda t: (t[2].real, t[2].imag, t[1]))
    return tuple(out)


@dataclass(frozen=True)
class ExpPolyDensity:
    """Finite sum of ``c * t**m * exp(-rho*t)`` terms, plus an optional atom at 0.

    The atom (a Dirac mass at ``t == 0`` with the given weight) exists only to
    represent the zeroth convolution power inside filtering series; user-facing
    kernel densities never carry one.
    """

    terms: tuple[tuple[complex, int, complex], ...] = ()
    atom: float = 0.0
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", _merge_terms(self.terms))

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "ExpPolyDensity":
        return cls(())

    @classmethod
    def exponential(cls, k: float) -> "ExpPolyDensity":
        """Density ``k * exp(-k t)`` of an Exp(k) holding time."""
        if k <= 0:
            raise InputError(f"exponential rate must be positive, got {k}")
        return cls(((k, 0, k),))

    @classmethod
    def dirac(cls, weight: float = 1.0) -> "ExpPolyDensity":
        return cls((), atom=float(weight))

    @classmethod
    def constant(cls, value: float) -> "ExpPolyDensity":
        """Constant function (a rate-0 term); not a density."""
        return cls(((complex(value), 0, 0.0),))

    # -- cached numeric views ----------------------------------------------

    @cached_property
    def _arrays(self):
        c = np.array([t[0] for t in self.terms], dtype=complex)
        m = np.array([t[1] for t in self.terms], dtype=int)
        r = np.array([t[2] for t in self.terms], dtype=complex)
        real = bool(np.all(np.abs(c.imag) == 0) and np.all(np.abs(r.imag) == 0))
        return c, m, r, real

    @property
    def is_real(self) -> bool:
        return self._arrays[3]

    # -- evaluation ---------------------------------------------------------

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Evaluate at scalar or array ``t >= 0``; returns the real part."""
        t_arr = np.asarray(t, dtype=float)
        if not self.terms:
            out = np.zeros_like(t_arr)
            return out if t_arr.shape else float(out)
        c, m, r, real = self._arrays
        tt = t_arr[..., None]
        if real:
            vals = (c.real * tt**m * np.exp(-r.real * tt)).sum(axis=-1)
        else:
            vals = (c * tt**m * np.exp(-r * tt)).sum(axis=-1).real
        return vals if t_arr.shape else float(vals)

    def cdf(self, t):
        """Integral over ``[0, t]`` (atom included)."""
        t_arr = np.asarray(t, dtype=float)
        total = np.full(t_arr.shape, self.atom, dtype=float)
        for c, m, r in self.terms:
            total += _term_cdf(c, m, r, t_arr)
        return total if t_arr.shape else float(total)

    def log_eval(self, t):
        """``log`` of the evaluated function; ``-inf`` where it is <= 0."""
        v = np.asarray(self.eval(t), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v > 0.0, np.log(np.maximum(v, 1e-320)), -np.inf)
        return out if np.asarray(t).shape else float(out)

    # -- exact integrals ----------------------------------------------------

    def total_mass(self) -> float:
        """``int_0^inf f`` plus the atom weight (closed form ``c m! / rho**(m+1)``)."""
        total = complex(self.atom)
        for c, m, r in self.terms:
            if r.real <= 0:
                raise CapabilityError("total mass undefined: term with Re(rate) <= 0")
            total += c * math.factorial(m) / r ** (m + 1)
        return total.real

    def moment(self, k: int = 1) -> float:
        """``int_0^inf t^k f(t) dt`` in closed form."""
        total = 0j
        for c, m, r in self.terms:
            if r.real <= 0:
                raise CapabilityError("moment undefined: term with Re(rate) <= 0")
            total += c * math.factorial(m + k) / r ** (m + k + 1)
        return total.real

    def mean(self) -> float:
        return self.moment(1)

    # -- algebra -------------------------------------------------------------

    def __add__(self, other: "ExpPolyDensity") -> "ExpPolyDensity":
        if not isinstance(other, ExpPolyDensity):
            return NotImplemented
        return ExpPolyDensity(self.terms + other.terms, atom=self.atom + other.atom)

    def __sub__(self, other: "ExpPolyDensity") -> "ExpPolyDensity":
        return self + other.scale(-1.0)

    def scale(self, a) -> "ExpPolyDensity":
        return ExpPolyDensity(
            tuple((c * a, m, r) for c, m, r in self.terms), atom=self.atom * a
        )

    def __mul__(self, a):
        if isinstance(a, (int, float, complex)):
            return self.scale(a)
        return NotImplemented

    __rmul__ = __mul__

    def pointwise_mul(self, other: "ExpPolyDensity") -> "ExpPolyDensity":
        """Pointwise product; rates add, powers add (stays in the family)."""
        if self.atom or other.atom:
            raise CapabilityError("pointwise product with an atom is undefined")
        terms = [
            (c1 * c2, m1 + m2, r1 + r2)
            for c1, m1, r1 in self.terms
            for c2, m2, r2 in other.terms
        ]
        return ExpPolyDensity(tuple(terms))

    def convolve(self, other: "ExpPolyDensity") -> "ExpPolyDensity":
        """Convolution on ``[0, t]``, exact within the family."""
        terms: list[tuple[complex, int, complex]] = []
        for c1, a, rho in self.terms:
            for c2, b, sig in other.terms:
                terms.extend(_conv_terms(c1, a, rho, c2, b, sig))
        out = ExpPolyDensity(tuple(terms))
        # Atoms convolve like point masses at 0.
        if self.atom:
            out = out + other.scale(self.atom)
        if other.atom:
            out = out + ExpPolyDensity(self.terms).scale(other.atom)
        if self.atom and other.atom:
            out = ExpPolyDensity(out.terms, atom=out.atom + self.atom * other.atom)
        return out

    def derivative(self) -> "ExpPolyDensity":
        terms = []
        for c, m, r in self.terms:
            if m > 0:
                terms.append((c * m, m - 1, r))
            terms.append((-c * r, m, r))
        if self.atom:
            raise CapabilityError("cannot differentiate an atom")
        return ExpPolyDensity(tuple(terms))

    def survival_from_density(self) -> "ExpPolyDensity":
        """``1 - int_0^t f`` as an exponential polynomial (constant term included)."""
        if self.atom:
            raise CapabilityError("survival undefined for densities with an atom")
        terms: list[tuple[complex, int, complex]] = []
        const = 1.0 - self.total_mass()
        for c, m, r in self.terms:
            # int_0^t c s^m e^{-rs} ds = c m!/r^{m+1} (1 - e^{-rt} sum_k (rt)^k/k!)
            mass = c * math.factorial(m) / r ** (m + 1)
            for k in range(m + 1):
                terms.append((mass * r**k / math.factorial(k), k, r))
        terms.append((complex(const), 0, 0.0))
        return ExpPolyDensity(tuple(terms))

    # -- scales and validation ----------------------------------------------

    def timescale(self) -> float:
        """Characteristic decay scale ``max (m+1)/Re(rho)`` over decaying terms."""
        scales = [(m + 1) / r.real for _, m, r in self.terms if r.real > 0]
        return max(scales) if scales else 1.0

    def slowest_rate(self) -> float:
        rates = [r.real for _, _, r in self.terms if r.real > 0]
        return min(rates) if rates else math.inf

    def validation_grid(self, n: int = 1024, horizon_factor: float = 20.0):
        tmax = horizon_factor * self.timescale()
        return np.geomspace(tmax * 1e-6, tmax, n)

    def validate_density(self, eps_mass: float = EPS_MASS, eps_neg: float = EPS_NEG):
        """Check sub-probability density invariants; raise ``InputError`` on failure."""
        if self.atom:
            raise InputError("user-facing densities must be absolutely continuous")
        for _, _, r in self.terms:
            if r.real <= 0:
                raise InputError(f"density term with nonpositive Re(rate) {r}")
        if not self.terms:
            return
        mass = self.total_mass()
        if mass > 1.0 + eps_mass or mass < -eps_mass:
            raise InputError(f"density mass {mass} outside [0, 1]")
        grid = self.validation_grid()
        c, m, r, _ = self._arrays
        tt = grid[:, None]
        vals = (c * tt**m * np.exp(-r * tt)).sum(axis=-1)
        if np.max(np.abs(vals.imag)) > 1e-9 * max(1.0, np.max(np.abs(vals.real))):
            raise InputError("density evaluates with a non-negligible imaginary part")
        if np.min(vals.real) < -eps_neg * max(1.0, np.max(np.abs(vals.real))):
            raise InputError(f"density negative on validation grid (min {np.min(vals.real)})")


def _term_cdf(c: complex, m: int, r: complex, t: np.ndarray) -> np.ndarray:
    """``int_0^t c s^m e^{-rs} ds`` for an array of times, real part."""
    if r == 0:
        return (c * t ** (m + 1) / (m + 1)).real
    x = r * t
    if m == 0:
        bracket = -np.expm1(-x)
    else:
        # 1 - e^{-x} sum_{k<=m} x^k/k!, computed termwise in the log domain to
        # keep large x stable; x stays in the right half plane.
        acc = np.exp(-x)
        powk = np.ones_like(x)
        for k in range(1, m + 1):
            powk = powk * x / k
            acc = acc + np.exp(-x) * powk
        bracket = 1.0 - acc
    mass = c * math.factorial(m) / r ** (m + 1)
    return (mass * bracket).real


def _conv_terms(c1, a, rho, c2, b, sig):
    """Closed-form convolution of two single terms; list of result terms."""
    if abs(rho - sig) <= RATE_MERGE_RTOL * max(1.0, abs(rho), abs(sig)):
        coeff = (
            c1
            * c2
            * math.factorial(a)
            * math.factorial(b)
            / math.factorial(a + b + 1)
        )
        return [(coeff, a + b + 1, rho)]
    n, m = a + 1, b + 1
    scale = c1 * c2 * math.factorial(a) * math.factorial(b)
    out = []
    d = sig - rho
    for k in range(1, n + 1):
        j = n - k
        A = (-1) ** j * math.comb(m + j - 1, j) * d ** -(m + j)
        out.append((scale * A / math.factorial(k - 1), k - 1, rho))
    d = rho - sig
    for k in range(1, m + 1):
        j = m - k
        B = (-1) ** j * math.comb(n + j - 1, j) * d ** -(n + j)
        out.append((scale * B / math.factorial(k - 1), k - 1, sig))
    return out
