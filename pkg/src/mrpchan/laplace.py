"""Rational-function calculus in the Laplace variable and exact inversion.

Every density in the exponential-polynomial family has a proper rational
transform; filtering, geometric series and renewal equations all reduce to
rational linear algebra here, followed by partial-fraction inversion back
to the time domain.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from numpy.polynomial import polynomial as npoly

import numpy as np

from .errors import (
    CapabilityError,
    ConditioningWarning,
    InputError,
    NonConvergentSeriesError,
    UnstableDensityError,
)
from .exppoly import ExpPolyDensity

# Degree cap: the case-study transforms have degree <= 4; anything beyond
# this signals runaway reduction failure rather than a legitimate model.
MAX_DEGREE = 64

# Common roots closer than this (relative) are cancelled during reduction;
# the tolerance absorbs root drift accumulated across chained operations,
# leaving no common root within 1e-8 behind.
CANCEL_RTOL = 3e-7

# Initial clustering radius (relative) for treating roots as one multiple
# root.  Computed eigenvalues of an m-fold root split by roughly eps**(1/m),
# so inversion widens this through a ladder (validated at probe points) until
# the expansion reproduces the rational function.
CLUSTER_RTOL = 1e-7


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(1)
    keep = c.size
    while keep > 1 and abs(c[keep - 1]) <= 1e-13 * scale:
        keep -= 1
    return c[:keep].copy()


@dataclass(frozen=True)
class RationalLT:
    """Rational function of the Laplace variable, coefficients ascending in s.

    The denominator is kept monic.  Transforms of densities are strictly
    proper; intermediate filtering algebra may hold ratios with equal degrees.
    """

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if den.size == 1 and den[0] == 0.0:
            raise InputError("zero denominator")
        lead = den[-1]
        object.__setattr__(self, "num", num / lead)
        object.__setattr__(self, "den", den / lead)
        if self.deg_num > MAX_DEGREE or self.deg_den > MAX_DEGREE:
            raise CapabilityError(
                f"rational degree exceeds cap {MAX_DEGREE}: "
                f"({self.deg_num}, {self.deg_den})"
            )

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_scalar(cls, value: float) -> "RationalLT":
        return cls(np.array([float(value)]), np.array([1.0]))

    @classmethod
    def zero(cls) -> "RationalLT":
        return cls.from_scalar(0.0)

    @classmethod
    def one(cls) -> "RationalLT":
        return cls.from_scalar(1.0)

    # -- structure ---------------------------------------------------------

    @property
    def deg_num(self) -> int:
        return self.num.size - 1

    @property
    def deg_den(self) -> int:
        return self.den.size - 1

    @property
    def is_zero(self) -> bool:
        return self.num.size == 1 and self.num[0] == 0.0

    @property
    def is_strictly_proper(self) -> bool:
        return self.is_zero or self.deg_num < self.deg_den

    def __call__(self, s):
        return npoly.polyval(s, self.num) / npoly.polyval(s, self.den)

    def at_zero(self) -> float:
        return float(self(0.0))

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if np.array_equal(self.den, other.den):
            return RationalLT(npoly.polyadd(self.num, other.num), self.den)
        num = npoly.polyadd(
            npoly.polymul(self.num, other.den), npoly.polymul(other.num, self.den)
        )
        return _guard_degree(RationalLT(num, npoly.polymul(self.den, other.den)))

    __radd__ = __add__

    def __neg__(self):
        return RationalLT(-self.num, self.den)

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) + (-self)

    def __mul__(self, other):
        other = _coerce(other)
        if self.is_zero or other.is_zero:
            return RationalLT.zero()
        return _guard_degree(
            RationalLT(
                npoly.polymul(self.num, other.num), npoly.polymul(self.den, other.den)
            )
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational")
        if self.is_zero:
            return RationalLT.zero()
        return _guard_degree(
            RationalLT(
                npoly.polymul(self.num, other.den), npoly.polymul(self.den, other.num)
            )
        )

    def __rtruediv__(self, other):
        return _coerce(other) / self

    # -- reduction --------------------------------------------------------------

    def reduce(self) -> "RationalLT":
        """Cancel common numerator/denominator roots (within ``CANCEL_RTOL``).

        Cancelled factors are deflated out of the original coefficient arrays
        (real linear or quadratic division), which keeps the surviving
        coefficients exact instead of rebuilding them from noisy roots.
        """
        if self.is_zero or self.deg_num == 0 or self.deg_den == 0:
            return self
        nroots = list(_poly_roots(self.num))
        droots = list(_poly_roots(self.den))
        used = [False] * len(droots)
        pairs = []  # (numerator root, denominator root)
        for rn in nroots:
            hit = None
            best = np.inf
            for i, rd in enumerate(droots):
                if used[i]:
                    continue
                dist = abs(rn - rd)
                if dist <= CANCEL_RTOL * max(1.0, abs(rn), abs(rd)) and dist < best:
                    hit, best = i, dist
            if hit is not None:
                used[hit] = True
                pairs.append((complex(rn), complex(droots[hit])))
        if not pairs:
            return self
        num, den = self.num, self.den
        remaining = list(pairs)
        while remaining:
            rn, rd = remaining.pop(0)
            if abs(rn.imag) <= 1e-8 * max(1.0, abs(rn)):
                factor_n = np.array([-rn.real, 1.0])
                factor_d = np.array([-rd.real, 1.0])
            else:
                mate_i = None
                for i, (rn2, _) in enumerate(remaining):
                    if abs(rn2 - rn.conjugate()) <= 1e-6 * max(1.0, abs(rn)):
                        mate_i = i
                        break
                if mate_i is None:
                    continue  # unpaired complex factor: leave it uncancelled
                rn2, rd2 = remaining.pop(mate_i)
                wn = (rn + rn2.conjugate()) / 2.0
                wd = (rd + rd2.conjugate()) / 2.0
                factor_n = np.array([abs(wn) ** 2, -2.0 * wn.real, 1.0])
                factor_d = np.array([abs(wd) ** 2, -2.0 * wd.real, 1.0])
            new_num, rem_n = _deflate(num, factor_n)
            new_den, rem_d = _deflate(den, factor_d)
            if rem_n > 1e-6 * max(1.0, np.max(np.abs(num))) or rem_d > 1e-6 * max(
                1.0, np.max(np.abs(den))
            ):
                continue
            num, den = new_num, new_den
        return RationalLT(num, den)

    def poles(self) -> np.ndarray:
        return _poly_roots(self.den)


def _deflate(c: np.ndarray, factor: np.ndarray):
    """Divide ``c`` by ``factor``; returns (quotient, max remainder magnitude)."""
    quo, rem = npoly.polydiv(c, factor)
    return np.atleast_1d(quo), float(np.max(np.abs(rem)))


# Arithmetic is exact polynomial work; common factors are only cancelled when
# an intermediate degree gets out of hand, and once more by the caller at the
# end of a computation.
_REDUCE_DEGREE = 32


def _guard_degree(r: RationalLT) -> RationalLT:
    if r.deg_den > _REDUCE_DEGREE or r.deg_num > _REDUCE_DEGREE:
        return r.reduce()
    return r


def _coerce(x) -> RationalLT:
    if isinstance(x, RationalLT):
        return x
    if isinstance(x, (int, float)):
        return RationalLT.from_scalar(float(x))
    raise TypeError(f"cannot interpret {x!r} as a rational function")


def _poly_roots(c: np.ndarray) -> np.ndarray:
    """Roots via companion-matrix eigenvalues with one safeguarded Newton step.

    The step is kept only where it shrinks the residual and stays small;
    at (near-)multiple roots the raw step is derivative noise and is skipped.
    """
    c = _trim(c)
    if c.size <= 1:
        return np.array([], dtype=complex)
    roots = npoly.polyroots(c).astype(complex)
    dc = npoly.polyder(c)
    p = npoly.polyval(roots, c)
    dp = npoly.polyval(roots, dc)
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(np.abs(dp) > 0, p / np.where(dp == 0, 1.0, dp), 0.0)
    cand = roots - step
    better = (np.abs(npoly.polyval(cand, c)) < np.abs(p)) & (
        np.abs(step) <= 0.1 * np.maximum(1.0, np.abs(roots))
    )
    return np.where(better, cand, roots)


def _symmetrize_roots(roots):
    """Force a root multiset into exact conjugate symmetry.

    Cancellation and eigenvalue noise can leave a complex root minutely
    different from its mate; pairing them restores real coefficients.
    """
    roots = [complex(r) for r in roots]
    out: list[complex] = []
    used = [False] * len(roots)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        if abs(r.imag) <= 1e-8 * max(1.0, abs(r)):
            out.append(complex(r.real, 0.0))
            used[i] = True
            continue
        best, bdist = None, np.inf
        for j in range(i + 1, len(roots)):
            if used[j]:
                continue
            dist = abs(roots[j] - r.conjugate())
            if dist < bdist:
                best, bdist = j, dist
        if best is not None and bdist <= 1e-6 * max(1.0, abs(r)):
            w = (r + roots[best].conjugate()) / 2.0
            out.extend([w, w.conjugate()])
            used[i] = used[best] = True
        else:
            out.append(r)
            used[i] = True
    return out


def _real_poly_from_roots(roots) -> np.ndarray:
    if len(roots) == 0:
        return np.array([1.0])
    c = npoly.polyfromroots(_symmetrize_roots(roots))
    scale = np.max(np.abs(c))
    if np.max(np.abs(c.imag)) > 1e-7 * max(1.0, scale):
        raise InputError("polynomial rebuilt from roots is not real")
    return c.real


class FactoredRational:
    """Rational function with the denominator kept as a pole multiset.

    Internal workhorse of the filtering algebra: every denominator that ever
    appears is a product of known linear factors ``(s - p)``, so common
    factors cancel by bookkeeping instead of numerical root matching.  The
    pole list is conjugate-symmetric; the numerator has real coefficients.
    """

    __slots__ = ("num", "poles")

    def __init__(self, num, poles=()):
        self.num = _trim(num)
        self.poles = _merge_poles(poles)
        if self.num.size == 1 and self.num[0] == 0.0:
            self.poles = ()
        deg = sum(m for _, m in self.poles)
        if self.num.size - 1 > MAX_DEGREE or deg > MAX_DEGREE:
            raise CapabilityError("factored rational degree exceeds cap")

    @classmethod
    def zero(cls):
        return cls(np.zeros(1))

    @classmethod
    def one(cls):
        return cls(np.ones(1))

    @property
    def is_zero(self) -> bool:
        return self.num.size == 1 and self.num[0] == 0.0

    def den_poly(self) -> np.ndarray:
        return _expand_poles(self.poles)

    def __call__(self, s):
        den = complex(1.0)
        for p, m in self.poles:
            den *= (s - p) ** m
        val = npoly.polyval(s, self.num.astype(complex)) / den
        return val.real if abs(val.imag) < 1e-9 * max(1.0, abs(val)) else val

    def at_zero(self) -> float:
        return float(np.real(self(0.0 + 0.0j)))

    def __neg__(self):
        return FactoredRational(-self.num, self.poles)

    def __add__(self, other):
        if not isinstance(other, FactoredRational):
            return NotImplemented
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        union = _pole_union(self.poles, other.poles)
        num = npoly.polyadd(
            _mul_missing(self.num, self.poles, union),
            _mul_missing(other.num, other.poles, union),
        )
        return FactoredRational(num, union).cancel()

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, FactoredRational):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return FactoredRational.zero()
        return FactoredRational(
            npoly.polymul(self.num, other.num), tuple(self.poles) + tuple(other.poles)
        ).cancel()

    def __truediv__(self, other):
        if not isinstance(other, FactoredRational):
            return NotImplemented
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational")
        if self.is_zero:
            return FactoredRational.zero()
        # The divisor numerator becomes denominator factors: factor it once,
        # on a fresh low-degree polynomial where the roots are accurate.
        new_poles = tuple(self.poles) + tuple((p, 1) for p in _poly_roots(other.num))
        num = npoly.polymul(self.num, _expand_poles(other.poles)) / other.num[-1]
        return FactoredRational(num, new_poles).cancel()

    def cancel(self) -> "FactoredRational":
        """Deflate the numerator by denominator factors it vanishes at.

        Candidates are cancelled greedily in order of smallest division
        remainder; with a tight threshold this prevents a near-coincident
        pole (weak-coupling resolvents put zeros very close to the hidden
        rates) from stealing a cancellation that belongs to its neighbour.
        """
        num = self.num
        poles = [[p, m] for p, m in self.poles]
        while num.size > 1:
            scale = float(np.max(np.abs(num)))
            if scale == 0.0:
                break
            best = None  # (remainder, index, mate_index, quotient)
            for i, (p, m) in enumerate(poles):
                if m <= 0:
                    continue
                if abs(p.imag) <= 1e-9 * max(1.0, abs(p)):
                    quo, rem = npoly.polydiv(num, np.array([-p.real, 1.0]))
                    rmag = float(np.max(np.abs(rem))) if rem.size else 0.0
                    if best is None or rmag < best[0]:
                        best = (rmag, i, None, np.atleast_1d(quo))
                else:
                    mate = None
                    for jj in range(len(poles)):
                        if jj == i or poles[jj][1] <= 0:
                            continue
                        if abs(poles[jj][0] - p.conjugate()) <= 1e-9 * max(1.0, abs(p)):
                            mate = jj
                            break
                    if mate is None or num.size < 3:
                        continue
                    quad = np.array([abs(p) ** 2, -2.0 * p.real, 1.0])
                    quo, rem = npoly.polydiv(num, quad)
                    rmag = float(np.max(np.abs(rem))) if rem.size else 0.0
                    if best is None or rmag < best[0]:
                        best = (rmag, i, mate, np.atleast_1d(quo))
            if best is None or best[0] > 1e-11 * scale:
                break
            _, i, mate, quo = best
            num = quo
            poles[i][1] -= 1
            if mate is not None:
                poles[mate][1] -= 1
        return FactoredRational(num, tuple((p, m) for p, m in poles if m > 0))

    def to_rational(self) -> RationalLT:
        return RationalLT(self.num, self.den_poly())


def _merge_poles(poles):
    """Cluster equal poles (within 1e-9 relative) and sort deterministically."""
    out: list[list] = []
    for p, m in poles:
        p = complex(p)
        m = int(m)
        if m <= 0:
            continue
        hit = False
        for entry in out:
            if abs(entry[0] - p) <= 1e-9 * max(1.0, abs(p), abs(entry[0])):
                entry[1] += m
                hit = True
                break
        if not hit:
            out.append([p, m])
    out.sort(key=lambda e: (e[0].real, e[0].imag))
    return tuple((p, m) for p, m in out)


def _pole_union(a, b):
    """Least common multiple of two pole multisets."""
    out = [[p, m] for p, m in a]
    for p, m in b:
        hit = False
        for entry in out:
            if abs(entry[0] - p) <= 1e-9 * max(1.0, abs(p), abs(entry[0])):
                entry[1] = max(entry[1], m)
                hit = True
                break
        if not hit:
            out.append([p, m])
    out.sort(key=lambda e: (e[0].real, e[0].imag))
    return tuple((p, m) for p, m in out)


def _missing_factors(own, union):
    missing = []
    own_list = [[p, m] for p, m in own]
    for p, m in union:
        have = 0
        for q, mq in own_list:
            if abs(q - p) <= 1e-9 * max(1.0, abs(p), abs(q)):
                have = mq
                break
        if m - have > 0:
            missing.append((p, m - have))
    return tuple(missing)


def _mul_missing(num, own, union):
    missing = _missing_factors(own, union)
    if not missing:
        return num
    return np.real(npoly.polymul(num.astype(complex), _expand_poles(missing, as_complex=True)))


def _expand_poles(poles, as_complex: bool = False):
    roots = []
    for p, m in poles:
        roots.extend([p] * m)
    if not roots:
        return np.array([1.0 + 0.0j]) if as_complex else np.array([1.0])
    c = npoly.polyfromroots(_symmetrize_roots(roots))
    if as_complex:
        return c
    scale = np.max(np.abs(c))
    if np.max(np.abs(c.imag)) > 1e-7 * max(1.0, scale):
        raise InputError("pole multiset is not conjugate symmetric")
    return c.real


def lt_factored(d: ExpPolyDensity) -> FactoredRational:
    """Transform of a density as a factored rational; poles are exact by construction."""
    if d.atom:
        raise InputError("Dirac atoms have no strictly proper transform")
    if not d.terms:
        return FactoredRational.zero()
    union: tuple = ()
    for c, m, r in d.terms:
        union = _pole_union(union, ((-r, m + 1),))
    num = np.array([0.0 + 0.0j])
    for c, m, r in d.terms:
        other = _missing_factors(((-r, m + 1),), union)
        term_num = np.array([c * math.factorial(m)], dtype=complex)
        term_num = npoly.polymul(term_num, _expand_poles(other, as_complex=True))
        num = npoly.polyadd(num, term_num)
    scale = max(1.0, float(np.max(np.abs(num))))
    if np.max(np.abs(num.imag)) > 1e-9 * scale:
        raise InputError("transform has complex coefficients; terms not conjugate-paired")
    return FactoredRational(num.real, union)


def invert_factored(fr: FactoredRational) -> ExpPolyDensity:
    """Inverse transform using the stored poles (no root finding needed)."""
    if fr.is_zero:
        return ExpPolyDensity.zero()
    return invert_lt(fr.to_rational(), known_poles=fr.poles)


def lt_of(d: ExpPolyDensity) -> RationalLT:
    """Transform ``c t^m e^{-rho t} -> c m! / (s + rho)^{m+1}``, summed exactly.

    The common denominator is the least common multiple of the per-term pole
    factors, so the result is already in lowest terms for distinct rates.
    """
    return lt_factored(d).to_rational()


def lt_matrix(kernel_entries) -> list[list[RationalLT]]:
    """Entrywise transform of a matrix (nested sequence) of densities."""
    return [[lt_of(d) for d in row] for row in kernel_entries]


def neumann_series(D):
    """Sum of the geometric series ``sum_k D^k = (I - D)^{-1}`` entrywise.

    Works on square matrices (nested lists) of ``RationalLT`` or
    ``FactoredRational``.  Requires the spectral radius of ``D(0)`` (the
    hidden-block mass matrix) to be strictly below 1; otherwise the
    convolution series diverges.
    """
    n = len(D)
    if n == 0:
        return []
    D0 = np.array([[D[i][j].at_zero() for j in range(n)] for i in range(n)])
    rho = max(abs(np.linalg.eigvals(D0))) if n else 0.0
    if rho >= 1.0 - 1e-9:
        raise NonConvergentSeriesError(
            f"hidden block is absorbing: spectral radius {rho:.12g} >= 1"
        )
    return inverse_of_eye_minus(D)


def inverse_of_eye_minus(D):
    """Entrywise rational inverse of ``I - D`` (no convergence precondition).

    Used both for the hidden-block series (where the spectral radius is
    checked by the caller) and for renewal-equation transforms, whose inverse
    legitimately carries a pole at the origin.
    """
    n = len(D)
    if n == 0:
        return []
    cls = type(D[0][0])
    # Gauss-Jordan elimination of (I - D) against the identity, over the
    # rational function field.
    A = [[(cls.one() if i == j else cls.zero()) - D[i][j] for j in range(n)] for i in range(n)]
    X = [[cls.one() if i == j else cls.zero() for j in range(n)] for i in range(n)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if not A[r][col].is_zero:
                piv = r
                break
        if piv is None:
            raise NonConvergentSeriesError("singular hidden-block system")
        A[col], A[piv] = A[piv], A[col]
        X[col], X[piv] = X[piv], X[col]
        inv_p = cls.one() / A[col][col]
        A[col] = [a * inv_p for a in A[col]]
        X[col] = [x * inv_p for x in X[col]]
        for r in range(n):
            if r == col or A[r][col].is_zero:
                continue
            f = A[r][col]
            A[r] = [a - f * b for a, b in zip(A[r], A[col])]
            X[r] = [x - f * y for x, y in zip(X[r], X[col])]
    return X


def mat_mul(A, B):
    rows, inner, cols = len(A), len(B), len(B[0]) if B else 0
    cls = type(A[0][0]) if rows and A[0] else RationalLT
    out = []
    for i in range(rows):
        row = []
        for j in range(cols):
            acc = cls.zero()
            for k in range(inner):
                if A[i][k].is_zero or B[k][j].is_zero:
                    continue
                acc = acc + A[i][k] * B[k][j]
            row.append(acc)
        out.append(row)
    return out


def invert_lt(r: RationalLT, stable_tol: float = 1e-9, known_poles=None) -> ExpPolyDensity:
    """Partial-fraction inversion of a strictly proper rational transform.

    Denominator roots may be complex or repeated; simple poles at the origin
    invert to constants (they arise in renewal-density transforms).  A pole
    with positive real part and non-negligible residue raises
    ``UnstableDensityError``; nearly-repeated roots attach a conditioning note
    and emit a ``ConditioningWarning``.
    """
    if r.is_zero:
        return ExpPolyDensity.zero()
    if not r.is_strictly_proper:
        raise InputError("inverse transform requires a strictly proper rational")
    if known_poles is not None:
        roots = np.array(
            [p for p, m in known_poles for _ in range(m)], dtype=complex
        )
    else:
        roots = _poly_roots(r.den)
    scale = max(1.0, float(np.max(np.abs(roots))) if roots.size else 1.0)
    num_scale = float(np.max(np.abs(r.num)))
    probes = scale * np.array([0.31, 0.77, 1.83])

    # Widening-cluster ladder: each candidate expansion is validated by
    # re-evaluating the partial-fraction sum against the rational itself at
    # probe points on the positive axis (safely away from all poles).
    ladder = [CLUSTER_RTOL * 20.0**k for k in range(5)]
    best = None  # (probe_err, expanded, notes)
    for attempt, rtol in enumerate(ladder):
        if known_poles is not None and attempt == 0:
            clusters = [(p, m) for p, m in known_poles]
        else:
            clusters = _cluster_roots(roots, rtol, floor=0.01 * scale)
        notes: list[str] = []

        # Conditioning heuristic from the simple-root residue denominators.
        reps = [c[0] for c in clusters]
        for i, s0 in enumerate(reps):
            prod = 1.0
            for j, s1 in enumerate(reps):
                if i != j:
                    prod *= abs(s0 - s1)
            if len(reps) > 1 and prod < 1e-10 * scale ** (len(reps) - 1):
                notes.append(f"ill-conditioned pole separation near {s0:.6g}")

        expanded = []
        for s0, mult in clusters:
            if mult > 1 and not (known_poles is not None and attempt == 0):
                s0 = _refine_multiple_root(r.den, s0, mult)
            coeffs, resid = _pf_coefficients(r.num, r.den, s0, mult)
            if resid > 1e-4:
                notes.append(f"repeated-root expansion residual {resid:.2e} at {s0:.6g}")
            expanded.append((s0, mult, coeffs))
        probe_err = _probe_error(r, expanded, probes, num_scale)
        if best is None or probe_err < best[0]:
            best = (probe_err, expanded, notes)
        if probe_err <= 1e-9:
            break
    else:
        notes = best[2] + [f"partial fractions validated only to {best[0]:.2e}"]
        best = (best[0], best[1], notes)
    probe_err, expanded, notes = best

    terms: list[tuple[complex, int, complex]] = []
    for s0, mult, coeffs in expanded:
        if all(abs(a) <= 1e-12 * max(1.0, num_scale) for a in coeffs):
            continue
        if s0.real > stable_tol * scale:
            raise UnstableDensityError(
                f"pole {s0:.6g} in the right half plane with nonzero residue"
            )
        if abs(s0.real) <= stable_tol * scale and abs(s0.imag) > stable_tol * scale:
            raise UnstableDensityError(f"non-decaying oscillatory pole {s0:.6g}")
        rho = -s0
        if abs(rho.real) <= stable_tol * scale and abs(rho.imag) <= stable_tol * scale:
            rho = 0.0 + 0.0j
            if mult > 1 and any(abs(a) > 1e-10 * max(1.0, num_scale) for a in coeffs[1:]):
                raise UnstableDensityError("higher-order pole at the origin (growing term)")
        # A_k / (s - s0)^k  ->  A_k t^{k-1} e^{s0 t} / (k-1)!
        for k, a in enumerate(coeffs, start=1):
            terms.append((a / math.factorial(k - 1), k - 1, rho))
    if notes:
        warnings.warn("; ".join(notes), ConditioningWarning, stacklevel=2)
    return ExpPolyDensity(tuple(_conjugate_symmetrize(terms)), notes=tuple(notes))


def _cluster_roots(roots: np.ndarray, rtol: float, floor: float = 0.01):
    """Group roots into (representative, multiplicity) clusters.

    The threshold is ``rtol * max(floor, |center|)`` so that small-magnitude
    poles (slow rates) are not swallowed by the scale of the fast ones.  The
    representative is the cluster mean, which recovers an O(eps)-accurate
    multiple root from the O(eps^(1/m)) splitting of the computed roots.
    """
    remaining = list(roots)
    clusters = []
    while remaining:
        seed = remaining.pop(0)
        group = [seed]
        changed = True
        while changed:
            changed = False
            center = np.mean(group)
            for x in remaining[:]:
                if abs(x - center) <= rtol * max(floor, abs(center)):
                    group.append(x)
                    remaining.remove(x)
                    changed = True
        clusters.append((complex(np.mean(group)), len(group)))
    return clusters


def _probe_error(r: RationalLT, expanded, probes, num_scale: float) -> float:
    """Relative mismatch between the expansion and the rational at probe points."""
    worst = 0.0
    for s in probes:
        truth = complex(
            npoly.polyval(s, r.num.astype(complex)) / npoly.polyval(s, r.den.astype(complex))
        )
        acc = 0j
        for s0, mult, coeffs in expanded:
            for k, a in enumerate(coeffs, start=1):
                acc += a / (s - s0) ** k
        denom = max(abs(truth), 1e-12 * max(1.0, num_scale))
        worst = max(worst, abs(acc - truth) / denom)
    return worst


def _refine_multiple_root(den: np.ndarray, s0: complex, mult: int) -> complex:
    """Newton-polish an m-fold root on the (m-1)-th derivative, where it is simple."""
    d = np.asarray(den, dtype=float)
    for _ in range(mult - 1):
        d = npoly.polyder(d)
    dd = npoly.polyder(d)
    x = complex(s0)
    for _ in range(10):
        fx = npoly.polyval(x, d)
        dfx = npoly.polyval(x, dd)
        if dfx == 0:
            break
        step = fx / dfx
        if not np.isfinite(step):
            break
        if abs(step) > 0.5 * max(1.0, abs(x)):
            break
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def _taylor_shift(c: np.ndarray, s0: complex) -> np.ndarray:
    """Coefficients of ``p(s0 + u)`` in powers of ``u`` (repeated synthetic division)."""
    work = np.asarray(c, dtype=complex).copy()
    n = work.size
    out = np.zeros(n, dtype=complex)
    for k in range(n):
        d = work.size - 1
        if d == 0:
            out[k] = work[0]
            break
        quot = np.zeros(d, dtype=complex)
        r = work[d]
        for i in range(d - 1, -1, -1):
            quot[i] = r
            r = work[i] + s0 * r
        out[k] = r
        work = quot
    return out


def _pf_coefficients(num, den, s0: complex, mult: int):
    """Partial-fraction coefficients ``A_1..A_mult`` for the pole cluster at s0.

    Writes ``den(s) = (s - s0)^mult q(s)`` via a Taylor shift and divides the
    shifted numerator series by ``q`` to the needed order.  Returns the
    coefficients (``A_k`` multiplying ``1/(s-s0)^k``) and the relative size of
    the shifted-denominator coefficients that were assumed to vanish.
    """
    dshift = _taylor_shift(den, s0)
    scale = np.max(np.abs(dshift))
    resid = float(np.max(np.abs(dshift[:mult])) / scale) if mult > 0 else 0.0
    q = dshift[mult:]
    nshift = _taylor_shift(num, s0)[:mult]
    if nshift.size < mult:
        nshift = np.pad(nshift, (0, mult - nshift.size))
    # Series division n(u)/q(u) to order mult-1.
    series = np.zeros(mult, dtype=complex)
    q0 = q[0]
    for j in range(mult):
        acc = nshift[j] if j < nshift.size else 0.0
        for i in range(1, j + 1):
            if i < q.size:
                acc -= q[i] * series[j - i]
        series[j] = acc / q0
    # (n/q)(u) = sum_j series_j u^j  ->  A_{mult-j} = series_j
    coeffs = [series[mult - k] for k in range(1, mult + 1)]
    return coeffs, resid


def _conjugate_symmetrize(terms):
    """Pair complex terms with their conjugates to make evaluation exactly real."""
    out = []
    used = [False] * len(terms)
    for i, (c, m, r) in enumerate(terms):
        if used[i]:
            continue
        if abs(r.imag) <= 1e-12 * max(1.0, abs(r)):
            out.append((complex(c.real, c.imag), m, complex(r.real, 0.0)))
            used[i] = True
            continue
        mate = None
        for j in range(i + 1, len(terms)):
            c2, m2, r2 = terms[j]
            if used[j] or m2 != m:
                continue
            if abs(r2 - r.conjugate()) <= 1e-6 * max(1.0, abs(r)):
                mate = j
                break
        if mate is None:
            out.append((c, m, r))
            used[i] = True
            continue
        c2, _, r2 = terms[mate]
        cc = (c + c2.conjugate()) / 2.0
        rr = (r + r2.conjugate()) / 2.0
        out.append((cc, m, rr))
        out.append((cc.conjugate(), m, rr.conjugate()))
        used[i] = used[mate] = True
    return out


def numeric_inverse(r: RationalLT, t, dps: int = 40):
    """Numerical Talbot-contour inversion; test oracle only, never production.

    Delegates to ``mpmath.invertlaplace``.
    """
    import mpmath

    num = [mpmath.mpf(x) for x in r.num]
    den = [mpmath.mpf(x) for x in r.den]

    def f(s):
        pn = mpmath.mpf(0)
        for c in reversed(num):
            pn = pn * s + c
        pd = mpmath.mpf(0)
        for c in reversed(den):
            pd = pd * s + c
        return pn / pd

    with mpmath.workdps(dps):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        vals = np.array(
            [float(mpmath.invertlaplace(f, tv, method="talbot")) for tv in ts]
        )
    return vals if np.asarray(t).shape else float(vals[0])
