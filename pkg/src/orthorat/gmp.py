"""GMP matrices: banded representations of multiplication by x.

The matrix of multiplication by x in the orthonormal rational basis tau_n
has bandwidth g+1 when one pole sits at infinity, and its blocks are
generated by vector pairs (p_j, q_j).  Entries are assembled exactly from
the Cholesky data of the orthonormalization: x maps each basis function r_q
to a two-term combination of other r's (the multiplication matrix M), so
A = L^t M T^t restricted to the band, with L the Cholesky factor and
T = L^{-1} the coefficient matrix.

Resolvent GMP matrices (c_l - A)^{-1} are built by re-orthonormalizing the
pushforward measure under z -> 1/(c_l - z) rather than by inversion; that
frame is orientation-preserving with unit dilation at c_l, so no sign
conjugation is needed to match the original basis.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import gmpy2
import numpy as np

from . import numerics
from .measure import MeasureError, PoleSequence
from .moebius import is_inf
from .orf import OrthoSystem, frame_system, pole_slot


class GMPError(Exception):
    pass


@dataclass
class GMPMatrix:
    A: np.ndarray  # dense (n_rows x n_rows), all stored entries complete
    C: PoleSequence
    k: int  # 1-based slot with c_k = infinity
    sys: OrthoSystem

    @property
    def g(self) -> int:
        return self.C.g

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def beta(self, j: int) -> float:
        """beta_j = <e_{j(g+1)+k}, A e_{(j+1)(g+1)+k}>."""
        n = j * (self.g + 1) + self.k
        m = n + self.g + 1
        if m >= self.n_rows:
            raise GMPError(f"beta_{j} outside the stored rows")
        return float(self.A[n, m])

    def max_beta_index(self) -> int:
        return (self.n_rows - 1 - self.k) // (self.g + 1) - 1

    def block_range(self, j: int):
        """Row range of block B_j: B_0 is k x k, then (g+1)-blocks."""
        if j == 0:
            return 0, self.k
        lo = self.k + (j - 1) * (self.g + 1)
        return lo, lo + self.g + 1

    def n_blocks(self) -> int:
        """Number of j >= 1 blocks fully inside the stored rows."""
        return (self.n_rows - self.k) // (self.g + 1)

    def diag_block(self, j: int) -> np.ndarray:
        lo, hi = self.block_range(j)
        return self.A[lo:hi, lo:hi]

    def off_block(self, j: int) -> np.ndarray:
        """Block coupling B_j to B_{j+1} (upper off-diagonal)."""
        lo, hi = self.block_range(j)
        lo2, hi2 = self.block_range(j + 1)
        return self.A[lo:hi, lo2:hi2]

    def export(self, csv_path, header_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            g1 = self.g + 1
            for m in range(self.n_rows):
                for n in range(max(0, m - g1), min(self.n_rows, m + g1 + 1)):
                    w.writerow([m, n, repr(float(self.A[m, n]))])
        if header_path is not None:
            with open(header_path, "w") as fh:
                json.dump(
                    {"g": self.g, "k": self.k, "block_count": self.n_blocks()}, fh
                )


def _mult_columns(C: PoleSequence, N: int, k_inf: int):
    """Sparse columns of the multiplication matrix: x * r_q as combinations
    of r_p.  Column q is a list of (p, mpfr value); p can reach q + g + 1."""
    g1 = C.period
    cols = []
    for q in range(N + 1):
        if q == 0:
            cols.append([(k_inf, gmpy2.mpfr(1))])
            continue
        j, k = pole_slot(q, g1)
        c = C.pole(k)
        if is_inf(c):
            cols.append([(q + g1, gmpy2.mpfr(1))])
        else:
            # x/(c-z)^(j+1) = c*r_q - (c-z)^(-j)
            low = q - g1 if j >= 1 else 0
            cols.append([(q, gmpy2.mpfr(c)), (low, gmpy2.mpfr(-1))])
    return cols


def build(sys: OrthoSystem, validate: bool = True) -> GMPMatrix:
    """GMP matrix of an orthonormal system with a pole at infinity.

    Entries A[m][n] = <tau_m, x tau_n>; only rows whose full band fits in
    the computed system are stored, so every stored entry is complete.
    """
    C = sys.C
    k_inf = C.index_of_inf()
    if k_inf is None:
        raise GMPError("GMP structure requires a pole at infinity")
    if sys.mu.has_inf_atom():
        raise MeasureError("GMP build requires support in the finite reals")
    g1 = C.period
    N = sys.N
    n_rows = N - C.g
    if n_rows < 2:
        raise GMPError("system too short for any complete row")
    numerics.set_precision(sys.bits)
    cols = _mult_columns(C, N, k_inf)
    mp0 = gmpy2.mpfr(0)

    # v_n = coefficients of x * tau_n over the r basis
    A = np.zeros((n_rows, n_rows))
    Lr = sys.L
    for n in range(n_rows):
        row = sys.T[n]
        v = {}
        for q in range(n + 1):
            cq = row[q]
            if cq == 0:
                continue
            cq = gmpy2.mpfr(cq)
            for p, val in cols[q]:
                v[p] = v.get(p, mp0) + cq * val
        vmax = max(v)
        # A[m][n] = sum_p L[p][m] v[p]; store also a margin beyond the band
        # so bandwidth validation exercises computed (not assumed) zeros
        for m in range(max(0, n - C.g - 3), min(n_rows, vmax + 1)):
            s = gmpy2.fsum(
                Lr[p][m] * val for p, val in v.items() if p >= m
            )
            A[m, n] = float(s)
            A[n, m] = A[m, n]
    out = GMPMatrix(A, C, k_inf, sys)
    if validate:
        res = validate_structure(out)
        if res["bandwidth"] > 1e-10 or res["rank_one"] > 1e-8:
            raise GMPError(f"structure validation failed: {res}")
    return out


def validate_structure(gmp: GMPMatrix) -> dict:
    """Relative residuals of the structural invariants."""
    A = gmp.A
    g1 = gmp.g + 1
    norm = float(np.max(np.abs(A))) or 1.0
    n = gmp.n_rows
    band_resid = 0.0
    for m in range(n):
        for off in (g1 + 1, g1 + 2, g1 + 3):
            if m + off < n:
                band_resid = max(band_resid, abs(A[m, m + off]))
    sym = float(np.max(np.abs(A - A.T)))
    rank_one = 0.0
    for j in range(1, gmp.n_blocks()):
        blk = gmp.off_block(j)
        if blk.shape[0] != blk.shape[1]:
            continue
        sv = np.linalg.svd(blk, compute_uv=False)
        if sv[0] > 0:
            rank_one = max(rank_one, float(sv[1] / sv[0]) if len(sv) > 1 else 0.0)
    return {
        "bandwidth": band_resid / norm,
        "symmetry": sym / norm,
        "rank_one": rank_one,
    }


def ctilde(C: PoleSequence, k: int) -> np.ndarray:
    """diag{0, c_{k+1}, ..., c_{g+1}, c_1, ..., c_{k-1}}."""
    order = [0.0]
    for i in list(range(k + 1, C.period + 1)) + list(range(1, k)):
        order.append(float(C.pole(i)))
    return np.diag(order)


def extract_pq(gmp: GMPMatrix, j: int):
    """GMP coefficient vectors (p_j, q_j) of block j >= 1.

    p_j is the first column of the off-diagonal block coupling B_j to
    B_{j+1}; q_j is unscrambled from B_{j+1} - Ctilde using (p_j)_0 > 0.
    """
    if j < 1 or j + 1 >= gmp.n_blocks():
        raise GMPError(f"block {j} not fully stored")
    off = gmp.off_block(j)
    p = off[:, 0].copy()
    if p[0] <= 1e-12 * (float(np.max(np.abs(gmp.A))) or 1.0):
        raise GMPError(f"(p_{j})_0 not positive: {p[0]!r}")
    B = gmp.diag_block(j + 1) - ctilde(gmp.C, gmp.k)
    q = B[:, 0] / p[0]
    return p, q


def reconstruct_block(gmp: GMPMatrix, j: int) -> float:
    """Relative residual of B_{j+1} = Ctilde + (q p^t)^+ + (p q^t)^-."""
    p, q = extract_pq(gmp, j)
    qp = np.outer(q, p)
    pq = np.outer(p, q)
    model = ctilde(gmp.C, gmp.k) + np.tril(qp) + np.triu(pq, 1)
    B = gmp.diag_block(j + 1)
    norm = float(np.max(np.abs(B))) or 1.0
    return float(np.max(np.abs(B - model))) / norm


# ---------------------------------------------------------------------------
# resolvents and the Lambda coefficients


def resolvent_gmp(sys: OrthoSystem, l: int) -> GMPMatrix:
    """GMP matrix of (c_l - A)^{-1} for a finite pole c_l (1-based index).

    Built by re-orthonormalization of the pushforward measure under
    z -> 1/(c_l - z); the result is the multiplication matrix of the
    transformed variable, whose entries equal <tau_m, (c_l - x)^{-1} tau_n>
    in the original basis.
    """
    c = sys.C.pole(l)
    if is_inf(c):
        raise GMPError("resolvent pole must be finite")
    sys2, _ = frame_system(sys, l)
    return build(sys2)


def lambda_n(gmp: GMPMatrix, resolvents: dict, n: int) -> float:
    """Lambda_n: outermost band entry of A (pole-at-infinity class) or of the
    resolvent GMP at the class pole.  resolvents maps slot index -> GMPMatrix.

    The residue class of n is the pole slot of r_{n+g+1}, which for n >= 1
    coincides with the slot of r_n and extends naturally to n = 0.
    """
    g1 = gmp.g + 1
    _, k = pole_slot(n + g1, g1)
    if is_inf(gmp.C.pole(k)):
        src = gmp
    else:
        if k not in resolvents:
            raise GMPError(f"missing resolvent for pole slot {k}")
        src = resolvents[k]
    if n + g1 >= src.n_rows:
        raise GMPError(f"Lambda_{n} outside stored rows")
    return float(src.A[n, n + g1])


def lemma31_residuals(sys: OrthoSystem, gmp: GMPMatrix, resolvents: dict):
    """Relative errors of Lambda_n * kappa_{n+g+1} = kappa_n for all stored n."""
    g1 = gmp.g + 1
    out = []
    for n in range(0, gmp.n_rows - g1):
        lam = lambda_n(gmp, resolvents, n)
        kn = sys.kappas[n]
        kn1 = sys.kappas[n + g1]
        lhs = lam * float(gmpy2.mpfr(kn1) / gmpy2.mpfr(kn))
        out.append((n, abs(lhs - 1.0)))
    return out
