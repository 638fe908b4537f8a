"""The rational discriminant of a finite gap set and its matrix applications.

Delta_E(z) = lambda_{g+1} z + d + sum_k lambda_k / (c_k - z) is the unique
rational function of this shape with Delta_E^{-1}([-2,2]) = E; it is fitted
here from the band endpoint conditions Delta = -2 at left ends and +2 at
right ends.  The residues -lambda_k and the pole locations c_k (the zeros of
the extremal analytic map to the disk) are cross-checked against the
potential-theoretic constants, giving two independent routes to the same
numbers.

Applying Delta_E to a GMP matrix over the pole sequence (c_1..c_g, infinity)
produces a type 3 block Jacobi matrix; the magic formula says this equals
the block shift S^{g+1} + S^{-(g+1)} exactly on the isospectral torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .measure import FiniteGapSet, PoleSequence
from .moebius import INF, is_inf
from . import potential
from .gmp import GMPMatrix


class DiscriminantError(Exception):
    pass


@dataclass(frozen=True)
class Discriminant:
    E: FiniteGapSet
    lambdas: tuple  # lambda_1..lambda_g, paired with the zeros
    lambda_top: float  # lambda_{g+1}, coefficient of z
    d: float
    zeros: tuple  # c_1..c_g, one per gap

    def __call__(self, z):
        out = self.lambda_top * z + self.d
        for lam, c in zip(self.lambdas, self.zeros):
            out = out + lam / (c - z)
        return out

    def derivative(self, z):
        out = self.lambda_top + 0.0 * z
        for lam, c in zip(self.lambdas, self.zeros):
            out = out + lam / (c - z) ** 2
        return out

    def pole_sequence(self) -> PoleSequence:
        return PoleSequence(list(self.zeros) + [INF])


def _unpack(E: FiniteGapSet, x):
    g = E.g
    return Discriminant(
        E,
        tuple(x[2 : 2 + g]),
        float(x[0]),
        float(x[1]),
        tuple(x[2 + g :]),
    )


def fit_discriminant(E: FiniteGapSet, cross_check: bool = True) -> Discriminant:
    """Solve the 2g+2 endpoint conditions Delta(left) = -2, Delta(right) = 2.

    Initial guess: gap midpoints for the poles and the potential-theoretic
    lambda constants; the fitted residues are re-checked against those
    constants afterwards (relative 1e-5), which ties the two constructions
    of the same objects together.
    """
    g = E.g
    mids = [0.5 * (a + b) for a, b in E.gaps]
    C0 = PoleSequence(mids + [INF])
    lam0 = []
    for k in range(1, g + 1):
        lam0.append(potential.gamma_lambda(E, C0, k)[1])
    lam_top0 = potential.gamma_lambda(E, C0, g + 1)[1]

    lo0, hi_last = E.hull

    def d_from(lam_top, lams, cs):
        v = 2.0 - lam_top * hi_last
        for lam, c in zip(lams, cs):
            v -= lam / (c - hi_last)
        return v

    x0 = np.array(
        [lam_top0, d_from(lam_top0, lam0, mids)] + lam0 + mids, dtype=float
    )

    def resid(x):
        disc = _unpack(E, x)
        out = []
        for lo, hi in E.bands:
            out.append(disc(lo) + 2.0)
            out.append(disc(hi) - 2.0)
        return out

    sol = optimize.root(resid, x0, method="hybr", tol=1e-13)
    r = np.max(np.abs(resid(sol.x)))
    if not sol.success or r > 1e-9:
        raise DiscriminantError(
            f"endpoint Newton solve did not converge (residual {r:.3e})"
        )
    disc = _unpack(E, sol.x)

    if disc.lambda_top <= 0 or any(l <= 0 for l in disc.lambdas):
        raise DiscriminantError("fitted lambda coefficients not positive")
    for c, (a, b) in zip(disc.zeros, E.gaps):
        if not (a < c < b):
            raise DiscriminantError(f"fitted pole {c} escaped its gap ({a},{b})")
    # strict monotonicity between poles, sampled
    for lo, hi in E.bands:
        xs = np.linspace(lo, hi, 50)
        if np.any(disc.derivative(xs) <= 0):
            raise DiscriminantError("Delta' not positive on a band")

    if cross_check:
        C = disc.pole_sequence()
        for k in range(1, g + 1):
            _, lam_pot = potential.gamma_lambda(E, C, k)
            rel = abs(disc.lambdas[k - 1] - lam_pot) / lam_pot
            if rel > 1e-5:
                raise DiscriminantError(
                    f"residue at pole {k} disagrees with the potential route "
                    f"(relative {rel:.2e})"
                )
        _, lam_pot = potential.gamma_lambda(E, C, g + 1)
        rel = abs(disc.lambda_top - lam_pot) / lam_pot
        if rel > 1e-5:
            raise DiscriminantError(
                f"leading coefficient disagrees with the potential route "
                f"(relative {rel:.2e})"
            )
    return disc


def ahlfors_abs(E: FiniteGapSet, z, disc: Discriminant | None = None) -> float:
    """|Psi(z)| = exp(-sum_k G_E(z, c_k)) over the g finite zeros and infinity."""
    if disc is None:
        disc = fit_discriminant(E)
    total = potential.green(E, z, INF)
    for c in disc.zeros:
        total += potential.green(E, z, c)
    return math.exp(-total)


def export_json(disc: Discriminant, path) -> None:
    import json

    resid = []
    for lo, hi in disc.E.bands:
        resid.append(float(disc(lo) + 2.0))
        resid.append(float(disc(hi) - 2.0))
    with open(path, "w") as fh:
        json.dump(
            {
                "lambdas": [repr(l) for l in disc.lambdas],
                "lambda_top": repr(disc.lambda_top),
                "d": repr(disc.d),
                "zeros": [repr(c) for c in disc.zeros],
                "endpoint_residuals": [repr(r) for r in resid],
            },
            fh,
            indent=1,
        )


# ---------------------------------------------------------------------------
# block Jacobi matrices and the magic formula


@dataclass
class BlockJacobi:
    """Type 3 block Jacobi data: symmetric w_j and lower-triangular v_j.

    v[j] couples block j to block j+1 (1-based lists: v[0] is v_1)."""

    v: list
    w: list

    @property
    def block_size(self) -> int:
        return self.w[0].shape[0]

    def type3_residual(self) -> float:
        worst = 0.0
        for vj in self.v:
            norm = float(np.max(np.abs(vj))) or 1.0
            upper = float(np.max(np.abs(np.triu(vj, 1)))) if vj.shape[0] > 1 else 0.0
            worst = max(worst, upper / norm)
            if np.any(np.diag(vj) <= 0):
                worst = max(worst, 1.0)
        for wj in self.w:
            norm = float(np.max(np.abs(wj))) or 1.0
            worst = max(worst, float(np.max(np.abs(wj - wj.T))) / norm)
        return worst


def match_lambda_for_slot(disc: Discriminant, pole) -> float:
    """The discriminant coefficient belonging to a pole of the GMP sequence."""
    if is_inf(pole):
        return disc.lambda_top
    diffs = [abs(pole - c) for c in disc.zeros]
    i = int(np.argmin(diffs))
    if diffs[i] > 1e-6 * disc.E.scale:
        raise DiscriminantError(
            f"GMP pole {pole} does not match any discriminant zero"
        )
    return disc.lambdas[i]


def apply_to_gmp(
    disc: Discriminant, A: GMPMatrix, resolvents: dict
) -> BlockJacobi:
    """Delta_E(A) as a block Jacobi matrix.

    resolvents maps each finite pole slot k (1-based in A.C) to the GMP
    matrix of (c_k - A)^{-1}; the combination is formed entrywise on the
    common stored rows and partitioned into (g+1)-blocks from row 0.
    """
    g1 = A.g + 1
    n = A.n_rows
    J = disc.lambda_top * A.A + disc.d * np.eye(n)
    for k in range(1, g1 + 1):
        pole = A.C.pole(k)
        if is_inf(pole):
            continue
        if k not in resolvents:
            raise DiscriminantError(f"missing resolvent for slot {k}")
        R = resolvents[k]
        m = min(n, R.n_rows)
        J[:m, :m] += match_lambda_for_slot(disc, pole) * R.A[:m, :m]
        n = m
    J = J[:n, :n]
    nb = n // g1
    w = [J[j * g1 : (j + 1) * g1, j * g1 : (j + 1) * g1].copy() for j in range(nb)]
    v = [
        J[j * g1 : (j + 1) * g1, (j + 1) * g1 : (j + 2) * g1].copy()
        for j in range(nb - 1)
    ]
    bj = BlockJacobi(v, w)
    if bj.type3_residual() > 1e-9:
        raise DiscriminantError(
            f"type 3 structure residual {bj.type3_residual():.3e}"
        )
    return bj


def magic_residual(bj: BlockJacobi, lo: int = 1, hi: int | None = None):
    """Per-block contributions to the magic-formula functional.

    Block l contributes |v_{l-1} - I|^2 + |w_l|^2 + |v_l - I|^2 in squared
    Hilbert-Schmidt norms; returns (per_block list, total, (lo, hi))."""
    p = bj.block_size
    I = np.eye(p)
    if hi is None:
        hi = len(bj.v)  # need v_l, so l <= len(v)
    per = []
    for l in range(lo, hi):
        c = (
            float(np.sum((bj.v[l - 1] - I) ** 2))
            + float(np.sum(bj.w[l] ** 2))
            + float(np.sum((bj.v[l] - I) ** 2))
        )
        per.append(c)
    return per, math.fsum(per), (lo, hi)


def det_v_residuals(
    bj: BlockJacobi, disc: Discriminant, A: GMPMatrix, resolvents: dict
):
    """Relative errors of det v_j = prod_k lambda_k Lambda_{(j-1)(g+1)+k}.

    k runs over 0..g with lambda_0 = lambda_{g+1}; blocks here are counted
    so that v_1 couples the first two (g+1)-blocks of Delta_E(A)."""
    from .gmp import lambda_n

    g1 = bj.block_size
    C = A.C
    lam = {}
    for k in range(g1):
        class_slot = g1 if k == 0 else k
        pole = C.pole(class_slot)
        lam[k] = disc.lambda_top if is_inf(pole) else match_lambda_for_slot(
            disc, pole
        )
    out = []
    for j in range(1, len(bj.v) + 1):
        prod = 1.0
        ok = True
        for k in range(g1):
            n = (j - 1) * g1 + k
            try:
                prod *= lam[k % g1] * lambda_n(A, resolvents, n)
            except Exception:
                ok = False
                break
        if not ok:
            continue
        detv = float(np.linalg.det(bj.v[j - 1]))
        out.append((j, abs(detv / prod - 1.0)))
    return out


# ---------------------------------------------------------------------------
# periodic GMP blocks and the isospectral torus


def _ctilde_vec(C: PoleSequence, k: int) -> np.ndarray:
    order = [0.0]
    for i in list(range(k + 1, C.period + 1)) + list(range(1, k)):
        order.append(float(C.pole(i)))
    return np.array(order)


def periodic_symbol(p: np.ndarray, q: np.ndarray, ct: np.ndarray, theta: float):
    """(g+1)x(g+1) Floquet symbol of the 1-periodic GMP matrix (p, q)."""
    qp = np.outer(q, p)
    pq = np.outer(p, q)
    B = np.diag(ct) + np.tril(qp) + np.triu(pq, 1)
    P = np.zeros_like(B)
    P[:, 0] = p
    return B + P.T * np.exp(1j * theta) + P * np.exp(-1j * theta)


def _disc_of_matrix(disc: Discriminant, M: np.ndarray) -> np.ndarray:
    p = M.shape[0]
    out = disc.lambda_top * M + disc.d * np.eye(p)
    for lam, c in zip(disc.lambdas, disc.zeros):
        out = out + lam * np.linalg.inv(c * np.eye(p) - M)
    return out


def magic_solve(
    E: FiniteGapSet,
    disc: Discriminant | None = None,
    initial=None,
    C: PoleSequence | None = None,
):
    """Find a 1-periodic GMP block (p, q) with Delta_E(A) = S^{g+1}+S^{-(g+1)}.

    Works on the Floquet symbol: Delta_E(M(theta)) = 2 cos(theta) I at
    4(g+1) sampled theta, solved by least squares over (p, q).  Returns
    (p, q) with p[0] > 0 and final residual <= 1e-9.
    """
    if disc is None:
        disc = fit_discriminant(E)
    if C is None:
        C = disc.pole_sequence()
    k_inf = C.index_of_inf()
    if k_inf is None:
        raise DiscriminantError("pole sequence needs infinity")
    g1 = C.period
    ct = _ctilde_vec(C, k_inf)
    thetas = [2.0 * math.pi * i / (4 * g1) for i in range(4 * g1)]

    def resid(x):
        p, q = x[:g1], x[g1:]
        out = []
        for th in thetas:
            M = periodic_symbol(p, q, ct, th)
            try:
                D = _disc_of_matrix(disc, M)
            except np.linalg.LinAlgError:
                return [1e6] * (2 * len(thetas) * g1 * g1)
            R = D - 2.0 * math.cos(th) * np.eye(g1)
            out.extend(R.real.ravel())
            out.extend(R.imag.ravel())
        return out

    seeds = []
    if initial is not None:
        seeds.append(np.asarray(initial, dtype=float))
    width = E.hull[1] - E.hull[0]
    base = np.concatenate([np.full(g1, 0.25 * width), np.zeros(g1)])
    seeds.append(base)
    rng = np.random.default_rng(7)
    for _ in range(8):
        seeds.append(base * (1.0 + 0.5 * rng.standard_normal(2 * g1)))

    for x0 in seeds:
        sol = optimize.least_squares(resid, x0, xtol=3e-16, ftol=3e-16, gtol=3e-16)
        r = float(np.max(np.abs(sol.fun)))
        p = sol.x[:g1]
        if r <= 1e-9 and p[0] > 0:
            return sol.x[:g1].copy(), sol.x[g1:].copy()
        if r <= 1e-9 and p[0] < 0:
            # sign-conjugated copy of the same root; flip and polish
            x1 = sol.x.copy()
            x1[:g1] = -x1[:g1]
            sol = optimize.least_squares(resid, x1, xtol=3e-16, ftol=3e-16, gtol=3e-16)
            r = float(np.max(np.abs(sol.fun)))
            if r <= 1e-9 and sol.x[0] > 0:
                return sol.x[:g1].copy(), sol.x[g1:].copy()
    raise DiscriminantError("magic formula solve did not converge")


def periodic_lambda(p, q, C: PoleSequence, slot: int, n_theta: int = 64):
    """Lambda coefficient of residue class ``slot`` for the 1-periodic GMP
    block (p, q): read from the first Fourier mode of the symbol resolvent
    (or of the symbol itself for the infinity slot)."""
    g1 = C.period
    k_inf = C.index_of_inf()
    ct = _ctilde_vec(C, k_inf)
    r = slot % g1  # position inside a block: slot g+1 sits at offset 0
    if is_inf(C.pole(slot)):
        return float(p[0])
    c = float(C.pole(slot))
    acc = 0.0 + 0.0j
    for i in range(n_theta):
        th = 2.0 * math.pi * i / n_theta
        M = periodic_symbol(np.asarray(p, float), np.asarray(q, float), ct, th)
        R = np.linalg.inv(c * np.eye(g1) - M)
        acc += R[r, r] * np.exp(-1j * th)
    acc /= n_theta
    return float(acc.real)
