"""Orthonormal rational functions with periodically repeated poles.

The basis is r_0 = 1 and, for n = j(g+1) + k with 1 <= k <= g+1,
r_n(z) = 1/(c_k - z)^(j+1) for a finite pole c_k and r_n(z) = z^(j+1) for
the pole at infinity.  Orthonormalization is Cholesky of the Gram matrix of
this basis; the inverse transpose factor gives the coefficient rows of the
tau_n and the diagonal gives the leading coefficients kappa_n.

Gram matrices here are exponentially ill-conditioned in N, so the solve
escalates through a precision ladder and is accepted only after an
orthonormality re-check against an independent quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from . import numerics
from .measure import DEFAULT_NODES, Measure, MeasureError, PoleSequence
from .moebius import INF, MoebiusMap, is_inf

#: internal acceptance threshold for the recomputed orthonormality defect;
#: tighter than the 1e-8 contract so downstream 1e-9 comparisons have room
ORTHO_TOL = 1e-11

PIVOT_RATIO_DOUBLE = 1e-13

#: zero/pole cancellation proximity, relative to the support scale
CANCEL_REL_TOL = 1e-7


class TrivialMeasureError(Exception):
    """Gram matrix numerically singular: measure trivial relative to N.

    ``rank`` is the largest usable basis size found (valid indices 0..rank-1).
    """

    def __init__(self, rank: int, msg: str = ""):
        self.rank = rank
        super().__init__(msg or f"measure is trivial beyond order {rank - 1}")


# ---------------------------------------------------------------------------
# the rational basis


def pole_slot(n: int, period: int):
    """For n >= 1 return (j, k) with n = j*period + k, 1 <= k <= period."""
    j, k0 = divmod(n - 1, period)
    return j, k0 + 1


def basis_r(n: int, C: PoleSequence):
    """Descriptor (pole, order) of r_n; pole None means the constant r_0."""
    if n == 0:
        return (None, 0)
    j, k = pole_slot(n, C.period)
    return (C.pole(k), j + 1)


def basis_values(C: PoleSequence, N: int, xs) -> np.ndarray:
    """Float matrix V with V[n][i] = r_n(xs[i])."""
    xs = np.asarray(xs, dtype=float)
    V = np.empty((N + 1, len(xs)))
    V[0] = 1.0
    bases = [xs if is_inf(c) else 1.0 / (c - xs) for c in C.points]
    for n in range(1, N + 1):
        j, k = pole_slot(n, C.period)
        V[n] = bases[k - 1] if j == 0 else V[n - C.period] * bases[k - 1]
    return V


def basis_values_mp(C: PoleSequence, N: int, xs) -> list:
    """Same as basis_values but over gmpy2.mpfr node lists."""
    one = gmpy2.mpfr(1)
    V = [[one] * len(xs)]
    bases = []
    for c in C.points:
        if is_inf(c):
            bases.append(list(xs))
        else:
            cm = gmpy2.mpfr(c)
            bases.append([1 / (cm - x) for x in xs])
    for n in range(1, N + 1):
        j, k = pole_slot(n, C.period)
        b = bases[k - 1]
        if j == 0:
            V.append(list(b))
        else:
            prev = V[n - C.period]
            V.append([p * t for p, t in zip(prev, b)])
    return V


def basis_values_at(C: PoleSequence, N: int, z):
    """Basis values at a single gmpy2.mpc (or mpfr) point z."""
    vals = [gmpy2.mpc(1)]
    bases = []
    for c in C.points:
        bases.append(gmpy2.mpc(z) if is_inf(c) else 1 / (gmpy2.mpc(c) - z))
    for n in range(1, N + 1):
        j, k = pole_slot(n, C.period)
        b = bases[k - 1]
        vals.append(b if j == 0 else vals[n - C.period] * b)
    return vals


# ---------------------------------------------------------------------------
# orthonormal systems


@dataclass
class OrthoSystem:
    """tau_0..tau_N as lower-triangular coefficient rows over r_0..r_N."""

    mu: Measure
    C: PoleSequence
    N: int
    T: list  # row n: coefficients of tau_n over r_0..r_n (float or mpfr)
    kappas: list  # leading coefficients, same scalar type as T
    bits: int
    ortho_defect: float
    L: list = None  # lower Cholesky factor of the Gram matrix (rows)
    nodes: int = DEFAULT_NODES
    _frame_cache: dict = field(default_factory=dict, repr=False)

    def kappa(self, n: int) -> float:
        return float(self.kappas[n])

    def coeff_matrix(self) -> np.ndarray:
        M = np.zeros((self.N + 1, self.N + 1))
        for n, row in enumerate(self.T):
            M[n, : n + 1] = [float(x) for x in row]
        return M

    def evaluate_mp(self, n: int, z):
        """tau_n(z) as gmpy2.mpc at the system's working precision."""
        numerics.set_precision(self.bits)
        for c in self.C.points:
            if not is_inf(c) and complex(z) == complex(c, 0):
                raise MeasureError(f"evaluation at the pole {c}")
        rv = basis_values_at(self.C, n, gmpy2.mpc(z))
        row = self.T[n]
        acc = gmpy2.mpc(0)
        for l in range(n + 1):
            acc += gmpy2.mpc(row[l]) * rv[l]
        return acc

    def evaluate(self, n: int, z) -> complex:
        return complex(self.evaluate_mp(n, z))

    def growth_exponent(self, n: int, z) -> float:
        """(1/n) log |tau_n(z)|; the regularity comparison against calG."""
        if n < 1:
            raise ValueError("growth exponent needs n >= 1")
        v = self.evaluate_mp(n, z)
        mag = gmpy2.sqrt(v.real * v.real + v.imag * v.imag)
        if mag == 0:
            return float("-inf")
        return float(gmpy2.log(mag)) / n

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "kappa"] + [f"coef_{l}" for l in range(self.N + 1)])
            for n, row in enumerate(self.T):
                w.writerow(
                    [n, repr(float(self.kappas[n]))]
                    + [repr(float(x)) for x in row]
                    + [""] * (self.N - n)
                )


def _check_defect_float(T_rows, G2) -> float:
    n = len(T_rows)
    T = np.zeros((n, n))
    for i, row in enumerate(T_rows):
        T[i, : i + 1] = row
    D = T @ G2 @ T.T - np.eye(n)
    return float(np.max(np.abs(D)))


def _check_defect_mp(T, G2) -> float:
    n = len(T)
    # D = T G2 T^t - I, exploiting lower-triangular T
    worst = 0.0
    TG = []
    for i in range(n):
        row = T[i]
        TG.append(
            [gmpy2.fsum(row[l] * G2[l][c] for l in range(i + 1)) for c in range(n)]
        )
    for i in range(n):
        for j in range(i + 1):
            v = gmpy2.fsum(TG[i][l] * T[j][l] for l in range(j + 1))
            d = abs(float(v) - (1.0 if i == j else 0.0))
            if d > worst:
                worst = d
    return worst


def orthonormalize(
    mu: Measure,
    C: PoleSequence,
    N: int,
    nodes: int = DEFAULT_NODES,
    start_bits: int = numerics.DOUBLE_BITS,
    max_bits: int = 512,
    ortho_tol: float = ORTHO_TOL,
) -> OrthoSystem:
    """Build tau_0..tau_N by Cholesky of the basis Gram matrix.

    Starts at start_bits and escalates through the precision ladder whenever
    the factorization pivots degrade or the post-hoc orthonormality check
    (independent quadrature node count) exceeds ortho_tol.
    """
    C.validate_for(mu)
    ladder = [start_bits] + [
        b for b in numerics.DEFAULT_LADDER if start_bits < b <= max_bits
    ]
    if ladder[-1] < max_bits:
        ladder.append(max_bits)
    ladder = [b for b in ladder if b <= max_bits] or [max_bits]
    check_nodes = nodes + 173  # coprime-ish offset: independent rule

    last_exc = None
    for bits in ladder:
        try:
            if bits == numerics.DOUBLE_BITS:
                G = mu.gram(C, N, nodes=nodes)
                try:
                    L = np.linalg.cholesky(G)
                except np.linalg.LinAlgError as e:
                    last_exc = e
                    continue
                diag = np.diag(L)
                if np.min(diag) / np.max(diag) < PIVOT_RATIO_DOUBLE:
                    last_exc = numerics.PrecisionError("pivot ratio below 1e-13")
                    continue
                Tm = np.linalg.inv(L)
                T_rows = [Tm[n, : n + 1].copy() for n in range(N + 1)]
                G2 = mu.gram(C, N, nodes=check_nodes)
                defect = _check_defect_float(T_rows, G2)
                if defect > ortho_tol:
                    last_exc = numerics.PrecisionError(
                        f"orthonormality defect {defect:.2e} at double precision"
                    )
                    continue
                kappas = [row[-1] for row in T_rows]
                L_rows = [L[n, : n + 1].copy() for n in range(N + 1)]
                return OrthoSystem(
                    mu, C, N, T_rows, kappas, bits, defect, L_rows, nodes
                )
            numerics.set_precision(bits)
            G = mu.gram(C, N, nodes=nodes, bits=bits)
            L = numerics.mp_cholesky(G)
            Tm = numerics.mp_invert_lower(L)
            T_rows = [Tm[n][: n + 1] for n in range(N + 1)]
            G2 = mu.gram(C, N, nodes=check_nodes, bits=bits)
            defect = _check_defect_mp(T_rows, G2)
            if defect > ortho_tol:
                last_exc = numerics.PrecisionError(
                    f"orthonormality defect {defect:.2e} at {bits} bits"
                )
                continue
            kappas = [row[-1] for row in T_rows]
            L_rows = [L[n][: n + 1] for n in range(N + 1)]
            return OrthoSystem(mu, C, N, T_rows, kappas, bits, defect, L_rows, nodes)
        except numerics.NotPositiveDefiniteError as e:
            # a dead pivot will not recover with precision if the measure has
            # too few support points; retry once at the top of the ladder,
            # then report the usable rank
            last_exc = e
            if bits == ladder[-1]:
                rank = _probe_rank(e)
                raise TrivialMeasureError(rank) from e
            continue
    if isinstance(last_exc, numerics.NotPositiveDefiniteError):
        raise TrivialMeasureError(_probe_rank(last_exc)) from last_exc
    raise numerics.PrecisionError(
        f"orthonormalization failed up to {max_bits} bits: {last_exc}"
    )


def _probe_rank(exc: numerics.NotPositiveDefiniteError) -> int:
    msg = str(exc)
    try:
        return int(msg.split("pivot ")[1].split(" ")[0])
    except (IndexError, ValueError):
        return 0


# ---------------------------------------------------------------------------
# zeros


@dataclass
class ZeroSet:
    """Zeros of tau_n: all real and simple; degree n-g <= deg <= n."""

    n: int
    zeros: list  # ExtendedReal, finite ones sorted increasing
    degree: int
    borderline: list  # cancellations within 10x of the proximity threshold

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "zero"])
            for i, z in enumerate(self.zeros):
                w.writerow([i, "inf" if is_inf(z) else repr(float(z))])


def _poly_mul_linear(coeffs, c0, c1):
    """Multiply ascending-coefficient list by (c0 + c1*z)."""
    out = [gmpy2.mpfr(0)] * (len(coeffs) + 1)
    for i, a in enumerate(coeffs):
        out[i] += a * c0
        out[i + 1] += a * c1
    return out


def _numerator_poly(sys: OrthoSystem, n: int):
    """Ascending mpfr coefficients of tau_n times its common denominator.

    Requires the own pole of tau_n (slot k for n = j(g+1)+k) to be infinity;
    callers change frame first otherwise.
    """
    numerics.set_precision(sys.bits)
    C = sys.C
    # multiplicity of each finite pole among slots 1..n
    mult = {}
    for m in range(1, n + 1):
        j, k = pole_slot(m, C.period)
        c = C.pole(k)
        if not is_inf(c):
            mult[k] = j + 1
    # factored denominator R_n = prod (c_k - z)^mult[k]
    factors = []
    for k, j1 in mult.items():
        factors.extend([gmpy2.mpfr(C.pole(k))] * j1)

    P = [gmpy2.mpfr(0)]
    row = sys.T[n]
    for m in range(n + 1):
        coef = gmpy2.mpfr(row[m])
        if coef == 0:
            continue
        term = [coef]
        if m > 0:
            j, k = pole_slot(m, C.period)
            c = C.pole(k)
            if is_inf(c):
                term = [gmpy2.mpfr(0)] * (j + 1) + term
                skip = {}
            else:
                skip = {k: j + 1}
        else:
            skip = {}
        # multiply by R_n with the slot's own factors cancelled exactly
        remaining = dict(mult)
        for k, cnt in skip.items():
            remaining[k] -= cnt
        for k, cnt in remaining.items():
            ck = gmpy2.mpfr(C.pole(k))
            for _ in range(cnt):
                term = _poly_mul_linear(term, ck, gmpy2.mpfr(-1))
        if len(term) > len(P):
            P += [gmpy2.mpfr(0)] * (len(term) - len(P))
        for i, a in enumerate(term):
            P[i] += a
    return P


def frame_system(sys: OrthoSystem, k: int):
    """Re-orthonormalized system in the frame z -> 1/(c_k - z), cached.

    The frame sends the finite pole c_k to infinity; it has unit local
    dilation at c_k and orientation +1, so the transformed tau agree with
    the originals composed with the frame, without sign or scale factors.
    """
    if k not in sys._frame_cache:
        own = sys.C.pole(k)
        if is_inf(own):
            raise ValueError("pole already at infinity")
        f = MoebiusMap.inversion_at(own)
        mu2 = sys.mu.pushforward(f)
        C2 = sys.C.map_by(f)
        sys2 = orthonormalize(
            mu2, C2, sys.N, nodes=sys.nodes, max_bits=max(sys.bits, 512)
        )
        sys._frame_cache[k] = (sys2, f)
    return sys._frame_cache[k]


def zeros(sys: OrthoSystem, n: int) -> ZeroSet:
    """Zero set of tau_n via the frame with its own pole at infinity."""
    if n == 0:
        return ZeroSet(0, [], 0, [])
    C = sys.C
    j, k = pole_slot(n, C.period)
    own = C.pole(k)
    E = sys.mu.support
    scale = E.scale if E is not None else max(
        (abs(p) for p, _ in sys.mu.atoms if not is_inf(p)), default=1.0
    )
    tol = CANCEL_REL_TOL * scale

    if is_inf(own):
        frame_sys, back = sys, None
    else:
        frame_sys, back = frame_system(sys, k)

    P = _numerator_poly(frame_sys, n)
    arr = np.array([float(x) for x in P], dtype=float)
    m = np.max(np.abs(arr))
    if not np.isfinite(m) or m == 0:
        raise numerics.PrecisionError("degenerate numerator polynomial")
    arr /= m
    while len(arr) > 1 and arr[-1] == 0.0:
        arr = arr[:-1]
    roots = np.roots(arr[::-1])

    fC = frame_sys.C
    fscale = max(
        (abs(c) for c in fC.points if not is_inf(c)), default=1.0
    ) or 1.0
    if frame_sys.mu.support is not None:
        fscale = frame_sys.mu.support.scale
    ftol = CANCEL_REL_TOL * fscale

    im_tol = 1e-6 * fscale
    if np.any(np.abs(roots.imag) > im_tol):
        raise numerics.PrecisionError(
            "complex roots beyond tolerance; zeros should all be real"
        )
    vals = sorted(roots.real.tolist())

    kept, borderline = [], []
    _, own_k = pole_slot(n, fC.period)
    for v in vals:
        cancelled = False
        for kk, c in enumerate(fC.points, start=1):
            if kk == own_k or is_inf(c):
                continue
            dist = abs(v - c)
            if dist < ftol:
                cancelled = True
                if dist > 0.1 * ftol:
                    borderline.append(v)
                break
            if dist < 10 * ftol:
                borderline.append(v)
        if not cancelled:
            kept.append(v)

    if back is not None:
        finv = back.invert()
        mapped = []
        for v in kept:
            w = finv.apply(v)
            mapped.append(w)
        fin = sorted(x for x in mapped if not is_inf(x))
        infs = [x for x in mapped if is_inf(x)]
        kept = fin + infs

    degree = len(kept)
    g = C.g
    if not (n - g <= degree <= n):
        raise numerics.PrecisionError(
            f"zero count {degree} outside [{n - g}, {n}] for n={n}"
        )
    fin_sorted = [z for z in kept if not is_inf(z)]
    for u, v in zip(fin_sorted, fin_sorted[1:]):
        if abs(u - v) < 1e-9 * scale:
            raise numerics.PrecisionError("zeros not numerically simple")
    if E is not None:
        for gi, (a, b) in enumerate(E.gaps):
            ingap = [z for z in fin_sorted if a + 1e-12 < z < b - 1e-12]
            if len(ingap) > 1:
                raise numerics.PrecisionError(
                    f"more than one zero in gap {gi}: {ingap}"
                )
            if not is_inf(own) and a < own < b and ingap:
                raise numerics.PrecisionError(
                    f"zero {ingap[0]} in the gap holding the own pole {own}"
                )
    return ZeroSet(n, kept, degree, borderline)


def counting_measure(zs: ZeroSet):
    """Normalized zero counting atoms: weight 1/n at each zero of tau_n."""
    if zs.n < 1:
        raise ValueError("counting measure needs n >= 1")
    w = 1.0 / zs.n
    return [(z, w) for z in zs.zeros]


def counting_mass(atoms) -> float:
    return math.fsum(w for _, w in atoms)
