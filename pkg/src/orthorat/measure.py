"""Probability measures on the extended real line.

A measure is a list of absolutely continuous band parts plus finitely many
atoms, together with a declared essential support (a finite gap set).  Band
densities are descriptor objects that can be evaluated both in double
precision (numpy arrays) and at an arbitrary gmpy2 precision, so the same
measure can feed the escalating-precision orthonormalization.

Quadrature per band uses the Chebyshev cosine substitution, which absorbs the
inverse-square-root blowup of equilibrium-type densities at band endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from . import numerics
from .moebius import INF, MoebiusMap, is_inf

MASS_TOL = 1e-12
POLE_MARGIN = 1e-9

#: default quadrature nodes per band
DEFAULT_NODES = 512


class MeasureError(Exception):
    pass


# ---------------------------------------------------------------------------
# finite gap sets


@dataclass(frozen=True)
class FiniteGapSet:
    """Union of g+1 disjoint closed intervals with nonempty interior."""

    bands: tuple

    def __init__(self, bands):
        bands = tuple((float(lo), float(hi)) for lo, hi in bands)
        if not bands:
            raise MeasureError("empty band list")
        for lo, hi in bands:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise MeasureError(f"invalid band [{lo}, {hi}]")
        for (_, hi), (lo2, _) in zip(bands, bands[1:]):
            if hi >= lo2:
                raise MeasureError("bands must be strictly ordered and disjoint")
        object.__setattr__(self, "bands", bands)

    @property
    def g(self) -> int:
        return len(self.bands) - 1

    @property
    def endpoints(self):
        """All 2g+2 endpoints in increasing order."""
        return [e for band in self.bands for e in band]

    @property
    def gaps(self):
        """The g bounded open gaps (a_k, b_k)."""
        return [
            (self.bands[i][1], self.bands[i + 1][0]) for i in range(len(self.bands) - 1)
        ]

    @property
    def hull(self):
        return (self.bands[0][0], self.bands[-1][1])

    @property
    def scale(self) -> float:
        lo, hi = self.hull
        return max(hi - lo, abs(lo), abs(hi), 1.0)

    def contains(self, x, tol: float = 0.0) -> bool:
        if is_inf(x):
            return False
        return any(lo - tol <= x <= hi + tol for lo, hi in self.bands)

    def gap_index(self, x):
        """Index of the bounded gap containing x, or None."""
        for i, (a, b) in enumerate(self.gaps):
            if a < x < b:
                return i
        return None

    def map_by(self, f: MoebiusMap) -> "FiniteGapSet":
        """Image under a Moebius map whose pole lies outside every band."""
        if f.c != 0.0:
            pole = -f.d / f.c
            if self.contains(pole, tol=1e-12):
                raise MeasureError("Moebius pole inside a band; image is unbounded")
        imgs = []
        for lo, hi in self.bands:
            u, v = f.apply(lo), f.apply(hi)
            if is_inf(u) or is_inf(v):
                raise MeasureError("band endpoint maps to infinity")
            imgs.append((min(u, v), max(u, v)))
        imgs.sort()
        return FiniteGapSet(imgs)


# ---------------------------------------------------------------------------
# density descriptors


class Density:
    """Band density evaluable in double and in gmpy2 precision."""

    def __call__(self, x):
        raise NotImplementedError

    def eval_mp(self, x):
        # precision-limited fallback; exact-form subclasses override
        return gmpy2.mpfr(float(self(np.array([float(x)]))[0]))


class PolyOverSqrtDensity(Density):
    """|P(x)| / (pi * sqrt(|prod (x - e_i)|)) over the 2g+2 endpoints e_i.

    With monic P solving the gap conditions this is the equilibrium density;
    P = 1 and two endpoints give the plain arcsine density.
    """

    def __init__(self, endpoints, numer_coeffs=(1.0,), norm=1.0):
        self.endpoints = [float(e) for e in endpoints]
        self.numer_coeffs = [float(c) for c in numer_coeffs]  # highest first
        self.norm = float(norm)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        w = np.ones_like(x)
        for e in self.endpoints:
            w = w * (x - e)
        p = np.polyval(self.numer_coeffs, x)
        return self.norm * np.abs(p) / (math.pi * np.sqrt(np.abs(w)))

    def eval_mp(self, x):
        x = gmpy2.mpfr(x)
        w = gmpy2.mpfr(1)
        for e in self.endpoints:
            w *= x - gmpy2.mpfr(e)
        p = gmpy2.mpfr(0)
        for c in self.numer_coeffs:
            p = p * x + gmpy2.mpfr(c)
        return gmpy2.mpfr(self.norm) * abs(p) / (gmpy2.const_pi() * gmpy2.sqrt(abs(w)))


class MappedDensity(Density):
    """Pushforward density: base(finv(y)) * |(finv)'(y)|."""

    def __init__(self, base: Density, finv: MoebiusMap):
        self.base = base
        self.finv = finv

    def _jac(self, y):
        den = self.finv.c * y + self.finv.d
        return 1.0 / (den * den)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        x = (self.finv.a * y + self.finv.b) / (self.finv.c * y + self.finv.d)
        return self.base(x) * np.abs(self._jac(y))

    def eval_mp(self, y):
        y = gmpy2.mpfr(y)
        a, b, c, d = (gmpy2.mpfr(t) for t in (self.finv.a, self.finv.b, self.finv.c, self.finv.d))
        den = c * y + d
        x = (a * y + b) / den
        return self.base.eval_mp(x) / (den * den)


class SampledDensity(Density):
    """Piecewise-linear density from user-supplied samples on a band."""

    def __init__(self, grid, values):
        self.grid = np.asarray(grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if np.any(self.values < 0):
            raise MeasureError("negative density samples")

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values)


class ScaledDensity(Density):
    def __init__(self, base: Density, factor: float):
        self.base = base
        self.factor = float(factor)

    def __call__(self, x):
        return self.factor * self.base(x)

    def eval_mp(self, x):
        return gmpy2.mpfr(self.factor) * self.base.eval_mp(x)


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True)
class Measure:
    """Atoms plus absolutely continuous band parts; immutable."""

    ac_parts: tuple = ()  # ((lo, hi), Density) pairs
    atoms: tuple = ()  # (position, weight) pairs, position may be INF
    support: FiniteGapSet | None = None  # declared essential support

    def __post_init__(self):
        seen = []
        for pos, w in self.atoms:
            if w <= 0:
                raise MeasureError("atom weights must be positive")
            for q in seen:
                if (is_inf(pos) and is_inf(q)) or (
                    not is_inf(pos) and not is_inf(q) and pos == q
                ):
                    raise MeasureError("duplicate atom position")
            seen.append(pos)
        for (lo, hi), _ in self.ac_parts:
            if not lo < hi:
                raise MeasureError("invalid band interval")

    # -- constructors

    @staticmethod
    def atomic(points, weights=None, support=None) -> "Measure":
        pts = list(points)
        if weights is None:
            weights = [1.0] * len(pts)
        total = math.fsum(weights)
        if total <= 0:
            raise MeasureError("non-normalizable atom weights")
        atoms = tuple((p, w / total) for p, w in zip(pts, weights))
        return Measure(ac_parts=(), atoms=atoms, support=support)

    @staticmethod
    def arcsine(lo: float, hi: float) -> "Measure":
        E = FiniteGapSet([(lo, hi)])
        dens = PolyOverSqrtDensity([lo, hi])
        return Measure(ac_parts=(((lo, hi), dens),), atoms=(), support=E)

    @staticmethod
    def equilibrium(E: FiniteGapSet) -> "Measure":
        from . import potential  # deferred, potential builds Measures too

        model = potential.equilibrium(E)
        dens = PolyOverSqrtDensity(E.endpoints, model.numer_coeffs)
        parts = tuple((band, dens) for band in E.bands)
        return Measure(ac_parts=parts, atoms=(), support=E)._normalized()

    @staticmethod
    def from_samples(bands_with_samples, support=None) -> "Measure":
        parts = []
        for (lo, hi), grid, values in bands_with_samples:
            parts.append(((float(lo), float(hi)), SampledDensity(grid, values)))
        if support is None:
            support = FiniteGapSet([b for b, _ in parts])
        return Measure(ac_parts=tuple(parts), atoms=(), support=support)._normalized()

    def _normalized(self) -> "Measure":
        m = self.total_mass()
        if m <= 0:
            raise MeasureError("measure has nonpositive mass")
        if abs(m - 1.0) <= MASS_TOL:
            return self
        s = 1.0 / m
        parts = tuple((band, ScaledDensity(d, s)) for band, d in self.ac_parts)
        atoms = tuple((p, w * s) for p, w in self.atoms)
        return Measure(ac_parts=parts, atoms=atoms, support=self.support)

    # -- mass and quadrature

    def band_mass(self, band_index: int, nodes: int = 2048) -> float:
        (lo, hi), dens = self.ac_parts[band_index]
        xs, ws = numerics.cheb_nodes_double(lo, hi, nodes)
        return float(np.sum(ws * dens(xs)))

    def total_mass(self, nodes: int = 2048) -> float:
        m = math.fsum(w for _, w in self.atoms)
        for i in range(len(self.ac_parts)):
            m += self.band_mass(i, nodes)
        return m

    def has_inf_atom(self) -> bool:
        return any(is_inf(p) for p, _ in self.atoms)

    def quadrature(self, nodes: int = DEFAULT_NODES, bits: int | None = None):
        """Discretization as (points, weights): atoms first, then bands.

        In double precision returns numpy arrays; with ``bits`` set returns
        lists of gmpy2.mpfr regenerated at that precision.
        """
        if self.has_inf_atom():
            raise MeasureError("quadrature requires support in the finite reals")
        if bits is None:
            xs = [float(p) for p, _ in self.atoms]
            ws = [float(w) for _, w in self.atoms]
            for (lo, hi), dens in self.ac_parts:
                nx, nw = numerics.cheb_nodes_double(lo, hi, nodes)
                xs.extend(nx.tolist())
                ws.extend((nw * dens(nx)).tolist())
            return np.array(xs), np.array(ws)
        numerics.set_precision(bits)
        xs = [gmpy2.mpfr(p) for p, _ in self.atoms]
        ws = [gmpy2.mpfr(w) for _, w in self.atoms]
        for (lo, hi), dens in self.ac_parts:
            nx, nw = numerics.cheb_nodes_mp(lo, hi, nodes, bits)
            xs.extend(nx)
            ws.extend(w * dens.eval_mp(x) for x, w in zip(nx, nw))
        return xs, ws

    # -- operations

    def pushforward(self, f: MoebiusMap) -> "Measure":
        """Image measure under a Moebius map preserving the extended reals."""
        atoms = tuple((f.apply(p), w) for p, w in self.atoms)
        finv = f.invert()
        parts = []
        for (lo, hi), dens in self.ac_parts:
            if f.c != 0.0:
                pole = -f.d / f.c
                if lo <= pole <= hi:
                    raise MeasureError(
                        "Moebius pole inside a band of positive density"
                    )
            u, v = f.apply(lo), f.apply(hi)
            parts.append(((min(u, v), max(u, v)), MappedDensity(dens, finv)))
        parts.sort(key=lambda t: t[0])
        support = self.support.map_by(f) if self.support is not None else None
        out = Measure(ac_parts=tuple(parts), atoms=atoms, support=support)
        m = out.total_mass() if not out.has_inf_atom() else math.fsum(
            w for _, w in out.atoms
        )
        if not out.has_inf_atom() and abs(m - 1.0) > 1e-10:
            raise MeasureError(f"pushforward mass drifted to {m!r}")
        return out

    def inner_product(self, F, G, nodes: int = DEFAULT_NODES) -> complex:
        """L2(dmu) pairing: sum of conj(F) * G over atoms then bands."""
        xs, ws = self.quadrature(nodes)
        fv = np.array([F(x) for x in xs])
        gv = np.array([G(x) for x in xs])
        if not np.all(np.isfinite(fv)) or not np.all(np.isfinite(gv)):
            raise MeasureError("integrand not finite at a support point")
        vals = np.conj(fv) * gv * ws
        total = complex(math.fsum(vals.real), math.fsum(vals.imag))
        return total if total.imag != 0 else total.real

    def gram(self, C: "PoleSequence", N: int, nodes: int = DEFAULT_NODES,
             bits: int | None = None):
        """Gram matrix of the rational basis r_0..r_N in L2(dmu)."""
        from . import orf  # deferred, orf is the basis authority

        C.validate_for(self)
        if bits is None:
            xs, ws = self.quadrature(nodes)
            V = orf.basis_values(C, N, xs)
            return (V * ws) @ V.T
        xs, ws = self.quadrature(nodes, bits=bits)
        V = orf.basis_values_mp(C, N, xs)
        return numerics.gram_product(V, ws)


# ---------------------------------------------------------------------------
# pole sequences


@dataclass(frozen=True)
class PoleSequence:
    """The g+1 distinct poles c_1..c_{g+1}, repeated periodically."""

    points: tuple

    def __init__(self, points):
        pts = tuple(p if is_inf(p) else float(p) for p in points)
        if not pts:
            raise MeasureError("empty pole sequence")
        n_inf = sum(1 for p in pts if is_inf(p))
        if n_inf > 1:
            raise MeasureError("at most one pole at infinity")
        finite = [p for p in pts if not is_inf(p)]
        if len(set(finite)) != len(finite):
            raise MeasureError("repeated poles")
        object.__setattr__(self, "points", pts)

    @property
    def g(self) -> int:
        return len(self.points) - 1

    @property
    def period(self) -> int:
        return len(self.points)

    def index_of_inf(self):
        """1-based index k with c_k = infinity, or None."""
        for i, p in enumerate(self.points):
            if is_inf(p):
                return i + 1
        return None

    def pole(self, k: int):
        """1-based access c_k."""
        return self.points[k - 1]

    def map_by(self, f: MoebiusMap) -> "PoleSequence":
        return PoleSequence([f.apply(p) for p in self.points])

    def validate_for(self, mu: Measure, margin: float = POLE_MARGIN) -> None:
        for p in self.points:
            if is_inf(p):
                if mu.has_inf_atom():
                    raise MeasureError("pole at infinity coincides with an atom")
                continue
            if mu.support is not None and mu.support.contains(p, tol=margin):
                raise MeasureError(f"pole {p} inside the essential support")
            for (lo, hi), _ in mu.ac_parts:
                if lo - margin <= p <= hi + margin:
                    raise MeasureError(f"pole {p} touches a density band")
            for q, _ in mu.atoms:
                if not is_inf(q) and abs(p - q) < margin:
                    raise MeasureError(f"pole {p} too close to atom {q}")
