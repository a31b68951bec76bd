"""Time-domain truncated-series evaluation of the filtered kernel.

This is the literal convolution-series form of the projection: the hidden
block's powers are summed up to the order where the geometric tail bound
``rho^(k+1) / (1 - rho)`` drops below the tolerance.  The partial-fraction
coefficients of high convolution powers cancel catastrophically in double
precision, so the whole computation runs in ``mpmath`` at a precision chosen
from the truncation order.  It serves as an independent oracle for the
transform-domain path, never as the production route.
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

from .errors import NonConvergentSeriesError
from .kernels import SemiMarkovKernel

K_CAP = 10_000


def _to_mp_terms(density):
    return [
        (mp.mpc(c), int(m), mp.mpc(r))
        for c, m, r in density.terms
    ]


def _conv_terms_mp(t1, t2):
    out = []
    for c1, a, rho in t1:
        for c2, b, sig in t2:
            if abs(rho - sig) <= mp.mpf("1e-25") * max(1, abs(rho), abs(sig)):
                coeff = c1 * c2 * mp.factorial(a) * mp.factorial(b) / mp.factorial(a + b + 1)
                out.append((coeff, a + b + 1, rho))
                continue
            n, m_ = a + 1, b + 1
            scale = c1 * c2 * mp.factorial(a) * mp.factorial(b)
            d = sig - rho
            for k in range(1, n + 1):
                j = n - k
                A = (-1) ** j * mp.binomial(m_ + j - 1, j) * d ** (-(m_ + j))
                out.append((scale * A / mp.factorial(k - 1), k - 1, rho))
            d = rho - sig
            for k in range(1, m_ + 1):
                j = m_ - k
                B = (-1) ** j * mp.binomial(n + j - 1, j) * d ** (-(n + j))
                out.append((scale * B / mp.factorial(k - 1), k - 1, sig))
    return _merge_mp(out)


def _merge_mp(terms):
    merged = {}
    reps = []
    for c, m, r in terms:
        idx = None
        for i, rep in enumerate(reps):
            if abs(r - rep) <= mp.mpf("1e-25") * max(1, abs(r), abs(rep)):
                idx = i
                break
        if idx is None:
            reps.append(r)
            idx = len(reps) - 1
        key = (idx, m)
        merged[key] = merged.get(key, mp.mpc(0)) + c
    return [(c, m, reps[i]) for (i, m), c in merged.items() if c != 0]


def _mat_conv(A, B):
    rows, inner, cols = len(A), len(B), len(B[0])
    out = [[[] for _ in range(cols)] for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = []
            for k in range(inner):
                if A[i][k] and B[k][j]:
                    acc.extend(_conv_terms_mp(A[i][k], B[k][j]))
            out[i][j] = _merge_mp(acc)
    return out


def _mat_add(A, B):
    return [
        [_merge_mp(A[i][j] + B[i][j]) for j in range(len(A[0]))] for i in range(len(A))
    ]


def _eval_terms(terms, t):
    acc = mp.mpc(0)
    for c, m, r in terms:
        acc += c * mp.mpf(t) ** m * mp.e ** (-r * mp.mpf(t))
    return float(acc.real)


def series_order(rho: float, tail_tol: float = 1e-10) -> int:
    """Truncation order from the geometric tail bound ``rho^(k+1)/(1-rho)``."""
    if rho >= 1.0:
        raise NonConvergentSeriesError(f"hidden-block spectral radius {rho} >= 1")
    if rho <= 0.0:
        return 0
    k = math.log(tail_tol * (1.0 - rho)) / math.log(rho) - 1.0
    return min(max(int(math.ceil(k)), 0), K_CAP)


def anderson_filter_series(
    kernel: SemiMarkovKernel,
    keep,
    ts,
    tail_tol: float = 1e-10,
):
    """Sample the filtered kernel via the truncated convolution series.

    Returns ``{(alpha, beta): values}`` over the kept states at the requested
    times.  Precision scales with the truncation order, so this is meant for
    validation grids, not hot paths.
    """
    keep = list(keep)
    ki = [kernel.index(s) for s in keep]
    hidden = [s for s in kernel.states if s not in set(keep)]
    hi = [kernel.index(s) for s in hidden]
    ts = np.asarray(ts, dtype=float)

    if hi:
        D0 = np.array(
            [[kernel.entries[i][j].total_mass() if kernel.entries[i][j].terms else 0.0 for j in hi] for i in hi]
        )
        rho = float(max(abs(np.linalg.eigvals(D0)))) if hi else 0.0
        k_max = series_order(rho, tail_tol)
    else:
        k_max = 0

    dps = max(50, 40 + 3 * k_max)
    with mp.workdps(dps):
        A = [[_to_mp_terms(kernel.entries[i][j]) for j in ki] for i in ki]
        out_terms = A
        if hi:
            B = [[_to_mp_terms(kernel.entries[i][j]) for j in hi] for i in ki]
            C = [[_to_mp_terms(kernel.entries[i][j]) for j in ki] for i in hi]
            D = [[_to_mp_terms(kernel.entries[i][j]) for j in hi] for i in hi]
            # sum_{k>=1} D^(k), then B * (delta I + M) * C = B*C + B*M*C
            M = [[list(D[i][j]) for j in range(len(hi))] for i in range(len(hi))]
            Dk = D
            for _ in range(k_max - 1):
                Dk = _mat_conv(Dk, D)
                M = _mat_add(M, Dk)
            BC = _mat_conv(B, C)
            BMC = _mat_conv(_mat_conv(B, M), C)
            out_terms = _mat_add(_mat_add(A, BC), BMC)
        result = {}
        for a, sa in enumerate(keep):
            for b, sb in enumerate(keep):
                result[(sa, sb)] = np.array(
                    [_eval_terms(out_terms[a][b], t) for t in ts]
                )
    return result
