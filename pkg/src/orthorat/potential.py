"""Logarithmic potential theory on finite gap sets.

The equilibrium measure of a union of g+1 intervals has density
|q(t)| / (pi sqrt(|w(t)|)) with w the monic polynomial vanishing at the 2g+2
endpoints and q monic of degree g fixed by the g gap conditions
int_gap q / sqrt(|w|) dt = 0.  The Green function with pole at infinity is
the real part of the path integral of q / sqrt(w), which is well defined
because gap periods vanish by those same conditions and band periods are
purely imaginary.  Every finite-pole quantity is reduced to the
pole-at-infinity case through the frame z -> 1/(w - z), whose local dilation
at w is exactly 1, so Robin constants transfer without correction.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from . import numerics
from .measure import (
    Density,
    FiniteGapSet,
    Measure,
    MeasureError,
    PoleSequence,
    PolyOverSqrtDensity,
)
from .moebius import INF, MoebiusMap, is_inf

GAP_NODES = 512
PATH_NODES = 320


class PotentialError(Exception):
    pass


@dataclass(frozen=True)
class EquilibriumModel:
    E: FiniteGapSet
    numer_coeffs: tuple  # monic numerator q, highest power first
    zeta: tuple  # the g zeros of q, one per gap
    capacity: float
    robin: float
    mass_check: float  # quadrature mass of the density, should be 1

    def density(self) -> PolyOverSqrtDensity:
        return PolyOverSqrtDensity(self.E.endpoints, self.numer_coeffs)


_model_cache: dict = {}
_frame_cache: dict = {}


def _sqrtw(s: complex, endpoints) -> complex:
    """Branch of sqrt(prod (s - e_i)) analytic on the closed upper half-plane,
    positive on the real axis right of the last endpoint."""
    out = complex(1.0)
    for e in endpoints:
        out *= cmath.sqrt(s - e)
    return out


def _gap_moment(a: float, b: float, endpoints, power: int) -> float:
    """int_a^b t^power / sqrt(|w(t)|) dt over a gap (a, b)."""
    xs, ws = numerics.cheb_nodes_double(a, b, GAP_NODES)
    w = np.ones_like(xs)
    for e in endpoints:
        w = w * (xs - e)
    return float(np.sum(ws * xs**power / np.sqrt(np.abs(w))))


def _solve_numerator(E: FiniteGapSet):
    """Monic q of degree g meeting the gap conditions; coeffs highest first."""
    g = E.g
    ep = E.endpoints
    if g == 0:
        return (1.0,)
    M = np.empty((g, g))
    rhs = np.empty(g)
    for j, (a, b) in enumerate(E.gaps):
        for i in range(g):
            M[j, i] = _gap_moment(a, b, ep, i)
        rhs[j] = -_gap_moment(a, b, ep, g)
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as e:
        raise PotentialError("degenerate gap condition system") from e
    return (1.0,) + tuple(sol[::-1])


def _qval(coeffs, s):
    out = 0j if isinstance(s, complex) else 0.0
    for c in coeffs:
        out = out * s + c
    return out


def _robin_constant(E: FiniteGapSet, coeffs) -> float:
    """- log capacity via the large-z expansion of the Green integral."""
    ep = E.endpoints
    e_max = ep[-1]
    width = ep[-1] - ep[0]
    r0 = e_max + 2.0 * width

    # int from e_max to r0 with s = e_max + u^2 absorbing the edge singularity
    umax = math.sqrt(r0 - e_max)
    us, uw = numerics.gauss_legendre(0.0, umax, PATH_NODES)
    total = 0.0
    for u, wgt in zip(us, uw):
        s = e_max + u * u
        w = 1.0
        for e in ep:
            w *= s - e
        total += wgt * 2.0 * u * _qval(coeffs, s) / math.sqrt(w)

    # tail: int_{r0}^inf (q/sqrt(w) - 1/s) ds with s = r0/t
    ts, tw = numerics.gauss_legendre(0.0, 1.0, PATH_NODES)
    tail = 0.0
    for t, wgt in zip(ts, tw):
        s = r0 / t
        w = 1.0
        for e in ep:
            w *= s - e
        f = _qval(coeffs, s) / math.sqrt(w) - 1.0 / s
        tail += wgt * f * r0 / (t * t)
    # G(R) = log R + gamma + o(1) with gamma = -log capacity
    return total + tail - math.log(r0)


def equilibrium(E: FiniteGapSet) -> EquilibriumModel:
    key = E.bands
    if key in _model_cache:
        return _model_cache[key]
    coeffs = _solve_numerator(E)
    g = E.g
    zeta = []
    if g > 0:
        roots = np.roots(coeffs)
        if np.any(np.abs(roots.imag) > 1e-8 * E.scale):
            raise PotentialError("numerator zeros not real")
        zeta = sorted(roots.real.tolist())
        for z, (a, b) in zip(zeta, E.gaps):
            if not (a < z < b):
                raise PotentialError(f"numerator zero {z} outside its gap ({a},{b})")
    dens = PolyOverSqrtDensity(E.endpoints, coeffs)
    mass = 0.0
    for lo, hi in E.bands:
        xs, ws = numerics.cheb_nodes_double(lo, hi, GAP_NODES)
        mass += float(np.sum(ws * dens(xs)))
    if abs(mass - 1.0) > 1e-8:
        raise PotentialError(f"equilibrium mass {mass!r} is not 1")
    robin = _robin_constant(E, coeffs)
    model = EquilibriumModel(
        E, tuple(coeffs), tuple(zeta), math.exp(-robin), robin, mass
    )
    _model_cache[key] = model
    return model


def capacity_robin(E: FiniteGapSet):
    m = equilibrium(E)
    return m.capacity, m.robin


# ---------------------------------------------------------------------------
# Green functions


def _green_inf(E: FiniteGapSet, z) -> float:
    """G_E(z, infinity) by a path integral of q / sqrt(w)."""
    model = equilibrium(E)
    ep = E.endpoints
    if not is_inf(z):
        zc = complex(z)
        if abs(zc.imag) < 1e-14 and E.contains(zc.real, tol=1e-13):
            return 0.0
    else:
        raise PotentialError("pole and evaluation point coincide at infinity")
    if zc.imag < 0:
        zc = zc.conjugate()

    coeffs = model.numer_coeffs
    e_max = ep[-1]
    h = max(zc.imag, 0.5 * E.scale)

    def f(s: complex) -> complex:
        return _qval(coeffs, s) / _sqrtw(s, ep)

    total = 0.0
    # lift: s = e_max + i v^2 from the endpoint up to height h
    vmax = math.sqrt(h)
    vs, vw = numerics.gauss_legendre(0.0, vmax, PATH_NODES)
    for v, wgt in zip(vs, vw):
        s = complex(e_max, v * v)
        total += wgt * (f(s) * complex(0.0, 2.0 * v)).real
    # across at height h
    xs, xw = numerics.gauss_legendre(e_max, zc.real, PATH_NODES)
    for x, wgt in zip(xs, xw):
        total += wgt * f(complex(x, h)).real
    # down to z
    if h > zc.imag:
        ys, yw = numerics.gauss_legendre(h, zc.imag, PATH_NODES)
        for y, wgt in zip(ys, yw):
            total += wgt * (f(complex(zc.real, y)) * 1j).real
    return total


def _frame_for(E: FiniteGapSet, w: float):
    """Moebius frame sending the finite point w to infinity, with the image
    set rescaled to unit size; returns (map, image set, log dilation)."""
    key = (E.bands, float(w))
    if key in _frame_cache:
        return _frame_cache[key]
    if E.contains(w, tol=1e-12):
        raise PotentialError(f"Green pole {w} lies inside the set")
    f1 = MoebiusMap.inversion_at(w)
    E1 = E.map_by(f1)
    s = E1.scale
    f = MoebiusMap.dilation(1.0 / s).compose(f1)
    Ef = E.map_by(f)
    out = (f, Ef)
    _frame_cache[key] = out
    return out


def green(E: FiniteGapSet, z, w=INF) -> float:
    """Green function of the complement of E with pole at w, at the point z."""
    if is_inf(w):
        return _green_inf(E, z)
    f, Ef = _frame_for(E, float(w))
    return _green_inf(Ef, f.apply(z))


def gamma_lambda(E: FiniteGapSet, C: PoleSequence, k: int):
    """(gamma_E^k, lambda_k) for the k-th pole (1-based index in C).

    gamma_E^k is the Robin constant in the frame sending c_k to infinity; the
    frame z -> 1/(c_k - z) has unit local dilation at c_k, so no correction
    is needed.  log lambda_k adds the Green values at the other poles.
    """
    ck = C.pole(k)
    for c in C.points:
        if not is_inf(c) and E.contains(c, tol=1e-12):
            raise PotentialError(f"pole {c} lies inside the set")
    if is_inf(ck):
        gamma = equilibrium(E).robin
    else:
        f1 = MoebiusMap.inversion_at(float(ck))
        E1 = E.map_by(f1)
        gamma = equilibrium(E1).robin
    acc = gamma
    for l in range(1, C.period + 1):
        if l == k:
            continue
        cl = C.pole(l)
        if is_inf(ck):
            acc += green(E, INF, cl) if not is_inf(cl) else 0.0
        else:
            acc += green(E, ck, cl)
    return gamma, math.exp(acc)


def calG(E: FiniteGapSet, C: PoleSequence, z) -> float:
    """Average of the Green functions over the pole sequence."""
    return math.fsum(green(E, z, c) for c in C.points) / C.period


class MixtureDensity(Density):
    def __init__(self, parts):
        self.parts = list(parts)  # (weight, Density)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, d in self.parts:
            out = out + w * d(x)
        return out


class FramedDensity(Density):
    """Harmonic-measure density at a finite pole: base density of the image
    set composed with the frame map, times the frame Jacobian."""

    def __init__(self, base: Density, f: MoebiusMap):
        self.base = base
        self.f = f

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = (self.f.a * x + self.f.b) / (self.f.c * x + self.f.d)
        den = self.f.c * x + self.f.d
        return self.base(y) / (den * den)


def harmonic_density(E: FiniteGapSet, c) -> Density:
    """Density of the harmonic measure omega_E(., c) on the bands of E."""
    if is_inf(c):
        return equilibrium(E).density()
    f, Ef = _frame_for(E, float(c))
    return FramedDensity(equilibrium(Ef).density(), f)


def rho_EC(E: FiniteGapSet, C: PoleSequence) -> Measure:
    """The average (over the pole sequence) of the harmonic measures."""
    parts = [(1.0 / C.period, harmonic_density(E, c)) for c in C.points]
    dens = MixtureDensity(parts)
    return Measure(
        ac_parts=tuple((band, dens) for band in E.bands),
        atoms=(),
        support=E,
    )._normalized()
