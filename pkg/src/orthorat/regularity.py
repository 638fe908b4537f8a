"""Regularity diagnostics and Cesaro-Nevai statistics.

Everything here reports trends with explicit margins, never certified
limits: the criteria being approximated are limits as n goes to infinity,
which finite data can only support or contradict.  Verdicts are pure
functions of the computed sequences and the configured tolerances.

The universal one-sided bounds (liminf of kappa_{n(j)}^{1/n(j)} at least
lambda_k^{1/(g+1)}; limsup of the beta products at most 1/lambda_k) hold for
every measure, so a violation beyond the numerical margin is diagnosed as a
precision failure, not as a verdict about the measure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import numerics, potential
from .gmp import GMPMatrix
from .measure import FiniteGapSet, Measure, PoleSequence
from .moebius import is_inf
from .orf import OrthoSystem, ZeroSet, pole_slot

CONSISTENT = "consistent-with-regular"
INCONSISTENT = "inconsistent-with-regular"
INCONCLUSIVE = "inconclusive"

#: default truncation horizon of the exponentially weighted coefficient metric
METRIC_HORIZON = 40


class RegularityError(Exception):
    pass


# ---------------------------------------------------------------------------
# Jacobi matrices and torus samples


@dataclass(frozen=True)
class JacobiMatrix:
    """Half-line Jacobi coefficients; a[i] is a_{i+1}, b[i] is b_{i+1}."""

    a: np.ndarray
    b: np.ndarray

    def __init__(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if len(a) != len(b):
            raise RegularityError("a and b must have equal declared length")
        if np.any(a <= 0):
            raise RegularityError("off-diagonal entries must be positive")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise RegularityError("unbounded coefficients")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __len__(self):
        return len(self.a)

    @staticmethod
    def free(N: int) -> "JacobiMatrix":
        return JacobiMatrix(np.ones(N), np.zeros(N))

    @staticmethod
    def constant(aval: float, bval: float, N: int) -> "JacobiMatrix":
        return JacobiMatrix(np.full(N, aval), np.full(N, bval))

    @staticmethod
    def from_gmp(A: GMPMatrix) -> "JacobiMatrix":
        if A.g != 0:
            raise RegularityError("only g = 0 GMP matrices are Jacobi")
        n = A.n_rows
        return JacobiMatrix(
            np.diagonal(A.A, 1).copy(), np.diagonal(A.A)[: n - 1].copy()
        )

    def shifted(self, m: int) -> "JacobiMatrix":
        return JacobiMatrix(self.a[m:], self.b[m:])

    def truncation_eigenvalues(self, M: int, t: float = 0.0):
        b = self.b[:M].copy()
        b[0] += t
        return eigh_tridiagonal(b, self.a[: M - 1], eigvals_only=True)


@dataclass(frozen=True)
class TorusSampleSet:
    """Finite sample of the isospectral torus, period-extended to length N."""

    samples: tuple
    E: FiniteGapSet
    method: str

    @staticmethod
    def free_for(E: FiniteGapSet, N: int) -> "TorusSampleSet":
        """The singleton torus of a single interval, scaled and translated."""
        if E.g != 0:
            raise RegularityError("singleton torus exists only for one band")
        lo, hi = E.bands[0]
        a = 0.25 * (hi - lo)
        b = 0.5 * (hi + lo)
        return TorusSampleSet(
            (JacobiMatrix.constant(a, b, N),), E, "scaled-free"
        )

    @staticmethod
    def two_band_symmetric(alpha: float, beta: float, N: int) -> "TorusSampleSet":
        """Period-2 torus of [-beta,-alpha] union [alpha,beta]: b = 0 and
        the a's alternate between (beta+alpha)/2 and (beta-alpha)/2; both
        phases are included as samples."""
        if not 0 < alpha < beta:
            raise RegularityError("need 0 < alpha < beta")
        hi, lo = 0.5 * (beta + alpha), 0.5 * (beta - alpha)
        E = FiniteGapSet([(-beta, -alpha), (alpha, beta)])
        phase1 = np.where(np.arange(N) % 2 == 0, hi, lo)
        phase2 = np.where(np.arange(N) % 2 == 0, lo, hi)
        return TorusSampleSet(
            (
                JacobiMatrix(phase1, np.zeros(N)),
                JacobiMatrix(phase2, np.zeros(N)),
            ),
            E,
            "period-2-symmetric",
        )


# ---------------------------------------------------------------------------
# the coefficient metric and Cesaro averages


def _distances_vector(J: JacobiMatrix, S: JacobiMatrix, ms: np.ndarray, K: int):
    """d-metric from the m-shifted J to the sample S, for all m in ms."""
    out = np.zeros(len(ms))
    for k in range(1, K + 1):
        idx = ms + k - 1  # a_{m+k} lives at array position m+k-1
        out += math.exp(-k) * (
            np.abs(J.a[idx] - S.a[k - 1]) + np.abs(J.b[idx] - S.b[k - 1])
        )
    return out


def nevai_distance(
    J: JacobiMatrix, m: int, T: TorusSampleSet, K: int = METRIC_HORIZON
) -> float:
    """Truncated exponentially weighted distance from the m-shift of J to
    the nearest torus sample; see nevai_tail_bound for the truncation term."""
    if m + K > len(J):
        raise RegularityError(f"J too short for shift {m} with horizon {K}")
    ms = np.array([m])
    return float(min(_distances_vector(J, S, ms, K)[0] for S in T.samples))


def nevai_tail_bound(J: JacobiMatrix, T: TorusSampleSet, K: int = METRIC_HORIZON):
    """Upper bound for the discarded tail of the metric: the summands beyond
    the horizon are at most sup(|a|+|a~|+|b|+|b~|) times e^{-k}."""
    sup = float(np.max(np.abs(J.a)) + np.max(np.abs(J.b)))
    sup += max(
        float(np.max(np.abs(S.a)) + np.max(np.abs(S.b))) for S in T.samples
    )
    return sup * math.exp(-K) / (math.e - 1.0)


def cesaro_stat(
    J: JacobiMatrix,
    T: TorusSampleSet,
    N: int,
    K: int = METRIC_HORIZON,
    checkpoints=(),
) -> dict:
    """(1/N) sum_{m=1}^N of the distance from the m-shift of J to the torus.

    Reports both the L1 Cesaro average of the distances and the L2 (mean of
    squares) form, plus the averages at intermediate checkpoints."""
    if N + K > len(J):
        raise RegularityError("J too short for the requested Cesaro range")
    ms = np.arange(1, N + 1)
    d = np.min(
        np.stack([_distances_vector(J, S, ms, K) for S in T.samples]), axis=0
    )
    csum = np.cumsum(d)
    cs2 = np.cumsum(d * d)
    at = {int(n): float(csum[n - 1] / n) for n in checkpoints if 1 <= n <= N}
    return {
        "N": N,
        "horizon": K,
        "tail_bound": nevai_tail_bound(J, T, K),
        "cesaro_l1": float(csum[-1] / N),
        "cesaro_l2": float(cs2[-1] / N),
        "at": at,
    }


def block_cesaro(bj, lo: int = 1, hi: int | None = None) -> dict:
    """Cesaro averages of |w_l|_HS + |v_l - I|_HS over the available blocks,
    in both L1 and squared (L2) forms."""
    p = bj.block_size
    I = np.eye(p)
    if hi is None:
        hi = min(len(bj.v), len(bj.w))
    terms = []
    for l in range(lo, hi + 1):  # blocks are 1-based; list index l-1
        terms.append(
            math.sqrt(float(np.sum(bj.w[l - 1] ** 2)))
            + math.sqrt(float(np.sum((bj.v[l - 1] - I) ** 2)))
        )
    n = len(terms)
    return {
        "range": (lo, hi),
        "cesaro_l1": math.fsum(terms) / n if n else 0.0,
        "cesaro_l2": math.fsum(t * t for t in terms) / n if n else 0.0,
    }


# ---------------------------------------------------------------------------
# kappa / beta / growth diagnostics


def _log_kappa(sys: OrthoSystem, n: int) -> float:
    numerics.set_precision(sys.bits)
    return float(gmpy2.log(gmpy2.mpfr(sys.kappas[n])))


def kappa_diagnostic(
    sys: OrthoSystem,
    E: FiniteGapSet,
    C: PoleSequence,
    margin: float = 0.02,
    bound_margin: float = 0.05,
) -> dict:
    """Root-growth of the leading coefficients per residue class.

    For each class k the sequence kappa_{n(j)}^{1/n(j)} is compared with the
    target lambda_k^{1/(g+1)}; the universal lower bound is checked with
    slack, and the product form over full periods is reported as well.
    The verdict never asserts a limit, only trend-with-margin."""
    g1 = C.period
    per_class = {}
    worst_final = 0.0
    bound_violation = 0.0
    for k in range(1, g1 + 1):
        lam = potential.gamma_lambda(E, C, k)[1]
        target = lam ** (1.0 / g1)
        js, vals = [], []
        j = 1
        while j * g1 + k <= sys.N:
            n = j * g1 + k
            vals.append(math.exp(_log_kappa(sys, n) / n))
            js.append(j)
            j += 1
        if not vals:
            raise RegularityError(f"no indices in class {k} up to N={sys.N}")
        final_dev = vals[-1] - target
        tail = vals[len(vals) // 2 :]
        lower_slack = min(v - target for v in tail)
        # crude tail extrapolation from the last doubling
        est = vals[-1]
        if len(vals) >= 4:
            est = vals[-1] + (vals[-1] - vals[len(vals) // 2])
        per_class[k] = {
            "target": target,
            "j": js,
            "values": vals,
            "final_deviation": final_dev,
            "lower_bound_slack": lower_slack,
            "extrapolated": est,
        }
        worst_final = max(worst_final, abs(final_dev))
        bound_violation = min(bound_violation, lower_slack)
    # product criterion over full periods
    lam_prod = 1.0
    for k in range(1, g1 + 1):
        lam_prod *= potential.gamma_lambda(E, C, k)[1]
    prod_target = lam_prod ** (1.0 / g1)
    prod_vals = []
    for n in range(1, sys.N - g1):
        s = math.fsum(_log_kappa(sys, n + l) for l in range(1, g1 + 1))
        prod_vals.append(math.exp(s / n))
    prod_dev = prod_vals[-1] - prod_target if prod_vals else float("nan")

    if bound_violation < -bound_margin:
        raise RegularityError(
            f"universal kappa lower bound violated by {-bound_violation:.3f}; "
            "this indicates a numerical precision failure"
        )
    if worst_final <= margin:
        verdict = CONSISTENT
    elif worst_final > 3 * margin and bound_violation >= -bound_margin:
        verdict = INCONSISTENT
    else:
        verdict = INCONCLUSIVE
    return {
        "per_class": per_class,
        "product_target": prod_target,
        "product_values": prod_vals,
        "product_final_deviation": prod_dev,
        "margin": margin,
        "verdict": verdict,
    }


def beta_diagnostic(
    betas,
    lam_k: float | None = None,
    E: FiniteGapSet | None = None,
    margin: float = 0.02,
    bound_margin: float = 0.02,
) -> dict:
    """Geometric means of the outermost-diagonal coefficients vs 1/lambda_k.

    betas is a GMPMatrix or the raw sequence beta_1, beta_2, ...; for a
    GMPMatrix with E supplied, lambda_k of the pole-at-infinity class is
    computed from potential theory.  The upper bound
    (prod beta)^(1/j) <= 1/lambda_k is universal, so persistent values below
    the target indicate non-regularity while values above it beyond the
    margin indicate numerical failure."""
    if isinstance(betas, GMPMatrix):
        A = betas
        if lam_k is None:
            if E is None:
                raise RegularityError("need E or lam_k for a GMP matrix")
            lam_k = potential.gamma_lambda(E, A.C, A.k)[1]
        betas = betas_from_gmp(A)
    if lam_k is None:
        raise RegularityError("lam_k required with a raw beta sequence")
    betas = [float(b) for b in betas]
    if any(b <= 0 for b in betas):
        raise RegularityError("beta coefficients must be positive")
    target = 1.0 / lam_k
    logs = np.cumsum(np.log(betas))
    vals = np.exp(logs / np.arange(1, len(betas) + 1))
    final_dev = float(vals[-1] - target)
    tail = vals[len(vals) // 2 :]
    upper_slack = float(min(target - v for v in tail))
    if upper_slack < -bound_margin:
        raise RegularityError(
            f"universal beta product bound violated by {-upper_slack:.3f}; "
            "this indicates a numerical precision failure"
        )
    if abs(final_dev) <= margin:
        verdict = CONSISTENT
    elif final_dev < -3 * margin:
        verdict = INCONSISTENT
    else:
        verdict = INCONCLUSIVE
    return {
        "target": target,
        "values": vals.tolist(),
        "final_deviation": final_dev,
        "upper_bound_slack": upper_slack,
        "margin": margin,
        "verdict": verdict,
    }


def betas_from_gmp(A: GMPMatrix):
    return [A.beta(j) for j in range(1, A.max_beta_index() + 1)]


def betas_from_jacobi(J: JacobiMatrix, k: int = 1):
    """beta_j of the Jacobi matrix seen as a g = 0 GMP matrix: the entry
    coupling e_{j+k} to e_{j+1+k} is a_{j+k+1} (0-based arrays)."""
    return [float(J.a[j + k]) for j in range(1, len(J.a) - k - 1)]


def green_growth_check(
    sys: OrthoSystem,
    E: FiniteGapSet,
    C: PoleSequence,
    z_grid,
    ns=None,
    lower_margin: float = 0.05,
) -> dict:
    """(1/n) log |tau_n(z)| compared with the averaged Green function.

    The lower bound holds universally in the limit; violations beyond the
    margin at the largest n are flagged as numerical errors.  Convergence
    from both sides is regularity evidence.  Also reports the spread of the
    growth exponents across residue classes at the top of the range."""
    if ns is None:
        top = sys.N
        ns = sorted({max(1, top // 4), max(1, top // 2), top})
    rows = []
    min_slack = float("inf")
    for z in z_grid:
        if abs(complex(z).imag) < 1e-12:
            raise RegularityError("growth grid must stay off the real axis")
        target = potential.calG(E, C, z)
        devs = {int(n): sys.growth_exponent(n, z) - target for n in ns}
        final = devs[max(ns)]
        min_slack = min(min_slack, final)
        rows.append({"z": str(z), "target": target, "deviations": devs})
    # residue-class spread at fixed large j
    g1 = C.period
    jtop = (sys.N - g1) // g1
    spread = 0.0
    if jtop >= 1 and len(rows) > 0:
        z0 = z_grid[0]
        growths = [
            sys.growth_exponent(jtop * g1 + k, z0) for k in range(1, g1 + 1)
        ]
        spread = max(growths) - min(growths)
    if min_slack < -lower_margin:
        raise RegularityError(
            f"universal growth lower bound violated by {-min_slack:.3f}; "
            "this indicates a numerical precision failure"
        )
    verdict = (
        CONSISTENT
        if max(abs(r["deviations"][max(ns)]) for r in rows) <= 2 * lower_margin
        else INCONCLUSIVE
    )
    return {
        "rows": rows,
        "min_final_slack": min_slack,
        "class_spread": spread,
        "verdict": verdict,
    }


# ---------------------------------------------------------------------------
# zero distributions


def cdf_function(mu: Measure, nodes: int = 1024):
    """Piecewise CDF evaluator of a measure with finite atoms and bands."""
    grid = []
    cum = []
    total = 0.0
    atoms = sorted(
        ((float(p), w) for p, w in mu.atoms if not is_inf(p)), key=lambda t: t[0]
    )
    events = []
    for (lo, hi), dens in mu.ac_parts:
        xs, ws = numerics.cheb_nodes_double(lo, hi, nodes)
        events.append((lo, "band", xs, ws * dens(xs)))
    for p, w in atoms:
        events.append((p, "atom", p, w))
    events.sort(key=lambda t: t[0])
    for ev in events:
        if ev[1] == "band":
            _, _, xs, masses = ev
            for x, m in zip(xs, masses):
                total += m
                grid.append(x)
                cum.append(total)
        else:
            _, _, p, w = ev
            total += w
            grid.append(p)
            cum.append(total)
    grid = np.asarray(grid)
    cum = np.asarray(cum)

    def F(x):
        return np.interp(np.asarray(x, dtype=float), grid, cum, left=0.0, right=total)

    return F


def sup_cdf_distance(atoms, mu: Measure) -> float:
    """Kolmogorov distance between a finite atomic list and a measure."""
    F = cdf_function(mu)
    pts = sorted((float(p), w) for p, w in atoms if not is_inf(p))
    worst = 0.0
    acc = 0.0
    for p, w in pts:
        Fv = float(F(p))
        worst = max(worst, abs(acc - Fv))
        acc += w
        worst = max(worst, abs(acc - Fv))
    return worst


def zero_dist_diagnostic(counting_list, rho: Measure, g: int = 0) -> dict:
    """Sup-CDF distances between the normalized zero counting measures and
    the averaged harmonic measure, with a trend statement allowing 20%
    non-monotone jitter, plus the mass-defect bound 1 - g/n <= mass <= 1."""
    ds = []
    mass_ok = True
    masses = []
    for n, atoms in counting_list:
        ds.append((n, sup_cdf_distance(atoms, rho)))
        mass = math.fsum(w for _, w in atoms)
        masses.append((n, mass))
        if not (1.0 - g / n - 1e-12 <= mass <= 1.0 + 1e-12):
            mass_ok = False
    decreasing = sum(
        1 for (n1, d1), (n2, d2) in zip(ds, ds[1:]) if d2 <= d1 + 1e-12
    )
    trend = decreasing >= 0.8 * max(1, len(ds) - 1)
    return {
        "distances": ds,
        "masses": masses,
        "mass_defect_ok": mass_ok,
        "mostly_decreasing": bool(trend),
        "final": ds[-1][1] if ds else float("nan"),
    }


# ---------------------------------------------------------------------------
# sparse sequences and rank-one shifts


def sparse_stats(f, delta: float, N: int) -> dict:
    """Cesaro average of |f| and the density of the large-value set, with
    the Markov-inequality consistency check."""
    f = np.abs(np.asarray(f, dtype=float)[:N])
    if len(f) < N:
        raise RegularityError("sequence shorter than N")
    avg = float(np.mean(f))
    density = float(np.mean(f >= delta))
    return {
        "cesaro_average": avg,
        "density": density,
        "delta": delta,
        "markov_ok": bool(density <= avg / delta + 1e-12),
    }


def rank_one_shift(
    J: JacobiMatrix,
    C: PoleSequence,
    M: int,
    margin: float = 1e-3,
    t_grid=None,
) -> dict:
    """First coupling t moving every finite pole away from the truncation
    spectrum of J + t <delta_0, .> delta_0."""
    finite = [float(c) for c in C.points if not is_inf(c)]
    if t_grid is None:
        t_grid = [0.0]
        for step in range(1, 21):
            t_grid.extend([0.1 * step, -0.1 * step])
    for t in t_grid:
        eigs = J.truncation_eigenvalues(M, t)
        dist = min(
            (float(np.min(np.abs(eigs - c))) for c in finite), default=float("inf")
        )
        if dist >= margin:
            return {"t": float(t), "margin_achieved": dist}
    raise RegularityError("no admissible coupling in the scan range")


# ---------------------------------------------------------------------------
# reports


@dataclass
class RegularityReport:
    sections: dict = field(default_factory=dict)

    def verdict(self) -> str:
        votes = [
            s.get("verdict")
            for s in self.sections.values()
            if isinstance(s, dict) and "verdict" in s
        ]
        if not votes:
            return INCONCLUSIVE
        if INCONSISTENT in votes:
            return INCONSISTENT
        if all(v == CONSISTENT for v in votes):
            return CONSISTENT
        return INCONCLUSIVE

    def to_json(self, path=None):
        doc = {"sections": self.sections, "verdict": self.verdict()}

        def default(o):
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            if isinstance(o, np.ndarray):
                return o.tolist()
            return str(o)

        s = json.dumps(doc, indent=1, default=default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s)
        return s
