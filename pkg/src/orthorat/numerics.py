"""Precision management and low-level numerical kernels.

Double precision work goes through numpy.  Anything that has to survive the
exponential ill-conditioning of rational Gram matrices runs on gmpy2.mpfr
with an explicit bit count; high-precision matrices are plain lists of lists
of mpfr so the hot loops stay close to the C layer (gmpy2.fsum).
"""

from __future__ import annotations

import math

import gmpy2
import numpy as np

DOUBLE_BITS = 53

#: escalation ladder used when a factorization cannot be trusted at the
#: current precision
DEFAULT_LADDER = (128, 256, 512)


class PrecisionError(Exception):
    """Requested computation could not be completed at the allowed precision."""


class NotPositiveDefiniteError(Exception):
    """Cholesky pivot became non-positive (numerically trivial measure)."""


def set_precision(bits: int) -> None:
    gmpy2.get_context().precision = int(bits) + 16  # guard bits


def mpf(x, bits: int | None = None):
    if bits is not None:
        set_precision(bits)
    return gmpy2.mpfr(x)


def to_float(x) -> float:
    return float(x)


# ---------------------------------------------------------------------------
# quadrature


def cheb_nodes_double(lo: float, hi: float, m: int):
    """Chebyshev-Gauss nodes on [lo, hi] plus the bare quadrature weights.

    The weights returned here are for integration against dx of a function
    that is smooth after the cosine substitution; endpoint inverse-square-root
    singularities of the integrand are absorbed exactly.
    """
    i = np.arange(m)
    theta = (2 * i + 1) * math.pi / (2 * m)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    xs = mid - half * np.cos(theta)
    ws = (math.pi * half / m) * np.sin(theta)
    return xs, ws


def cheb_nodes_mp(lo, hi, m: int, bits: int):
    set_precision(bits)
    pi = gmpy2.const_pi()
    lo = gmpy2.mpfr(lo)
    hi = gmpy2.mpfr(hi)
    half = (hi - lo) / 2
    mid = (hi + lo) / 2
    base = pi * half / m
    xs, ws = [], []
    for i in range(m):
        th = (2 * i + 1) * pi / (2 * m)
        xs.append(mid - half * gmpy2.cos(th))
        ws.append(base * gmpy2.sin(th))
    return xs, ws


def gauss_legendre(lo: float, hi: float, m: int):
    u, w = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return mid + half * u, half * w


# ---------------------------------------------------------------------------
# high-precision dense linear algebra (lists of mpfr)


def mp_matrix(n: int, m: int, fill=0):
    z = gmpy2.mpfr(fill)
    return [[z] * m for _ in range(n)]


def gram_product(rows, weights, n_left: int | None = None):
    """G[m][n] = sum_i rows[m][i] * weights[i] * rows[n][i], symmetric.

    ``rows`` is a list of equal-length mpfr lists.  Returns the full
    symmetric matrix of size len(rows) (or n_left x len(rows) if given).
    """
    nb = len(rows)
    nl = nb if n_left is None else n_left
    scaled = [[r * w for r, w in zip(row, weights)] for row in rows[:nl]]
    G = [[None] * nb for _ in range(nl)]
    for a in range(nl):
        sa = scaled[a]
        for b in range(a, nb):
            v = gmpy2.fsum(x * y for x, y in zip(sa, rows[b]))
            G[a][b] = v
            if b < nl:
                G[b][a] = v
    return G


def mp_cholesky(G):
    """Lower Cholesky factor of a symmetric positive definite mpfr matrix."""
    n = len(G)
    L = [[gmpy2.mpfr(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            s = G[i][j]
            if j:
                s = s - gmpy2.fsum(L[i][t] * L[j][t] for t in range(j))
            if i == j:
                if s <= 0:
                    raise NotPositiveDefiniteError(
                        f"pivot {i} is non-positive ({float(s):.3e})"
                    )
                L[i][i] = gmpy2.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    return L


def mp_invert_lower(L):
    """Inverse of a lower-triangular mpfr matrix."""
    n = len(L)
    T = [[gmpy2.mpfr(0)] * n for _ in range(n)]
    for i in range(n):
        T[i][i] = 1 / L[i][i]
        for j in range(i - 1, -1, -1):
            s = gmpy2.fsum(L[i][t] * T[t][j] for t in range(j, i))
            T[i][j] = -s / L[i][i]
    return T


def pivot_ratio(L) -> float:
    d = [float(L[i][i]) for i in range(len(L))]
    return min(d) / max(d)


def mp_to_numpy(M) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in M], dtype=float)


def mp_max_abs(M) -> float:
    return max(abs(float(x)) for row in M for x in row)
