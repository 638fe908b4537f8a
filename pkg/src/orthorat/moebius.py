"""Moebius transformations preserving the extended real line.

Maps are stored as real quadruples (a, b, c, d) for z -> (a z + b)/(c z + d),
normalized so that |ad - bc| = 1.  The orientation sign rho = sign(ad - bc)
tells whether the upper half-plane is preserved (+1) or reflected (-1).
The point at infinity is an explicit singleton, never a large float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class _Infinity:
    """Point at infinity of the extended real line.  Singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __reduce__(self):
        return (_Infinity, ())


INF = _Infinity()


def is_inf(z) -> bool:
    return z is INF or isinstance(z, _Infinity)


def extended_eq(u, v, tol: float = 0.0) -> bool:
    if is_inf(u) or is_inf(v):
        return is_inf(u) and is_inf(v)
    return abs(u - v) <= tol


class OrientationError(Exception):
    """Operation needs an orientation-preserving map but got a reflection."""


@dataclass(frozen=True)
class MoebiusMap:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        det = self.a * self.d - self.b * self.c
        if det == 0 or not math.isfinite(det):
            raise ValueError("singular Moebius coefficients")
        s = 1.0 / math.sqrt(abs(det))
        object.__setattr__(self, "a", self.a * s)
        object.__setattr__(self, "b", self.b * s)
        object.__setattr__(self, "c", self.c * s)
        object.__setattr__(self, "d", self.d * s)

    @property
    def orientation(self) -> int:
        return 1 if self.a * self.d - self.b * self.c > 0 else -1

    # -- constructors

    @staticmethod
    def identity() -> "MoebiusMap":
        return MoebiusMap(1.0, 0.0, 0.0, 1.0)

    @staticmethod
    def translation(t: float) -> "MoebiusMap":
        return MoebiusMap(1.0, float(t), 0.0, 1.0)

    @staticmethod
    def dilation(s: float) -> "MoebiusMap":
        if s == 0:
            raise ValueError("zero dilation")
        return MoebiusMap(float(s), 0.0, 0.0, 1.0)

    @staticmethod
    def inversion_at(w: float) -> "MoebiusMap":
        """z -> 1/(w - z), the standard frame change sending w to infinity."""
        return MoebiusMap(0.0, 1.0, -1.0, float(w))

    def apply(self, z):
        """Evaluate at an extended real or a complex number.

        f(inf) = a/c (inf when c = 0); f(-d/c) = inf.
        """
        if is_inf(z):
            if self.c == 0.0:
                return INF
            return self.a / self.c
        num = self.a * z + self.b
        den = self.c * z + self.d
        if den == 0:
            return INF
        return num / den

    def __call__(self, z):
        return self.apply(z)

    def compose(self, other: "MoebiusMap") -> "MoebiusMap":
        """self after other: (self.compose(other))(z) = self(other(z))."""
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def invert(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def derivative_at(self, c, allow_reflection: bool = False) -> float:
        """Local dilation factor at the extended real point c.

        This is the limit of r(z) / r~(f(z)) where r is the basis function
        with pole at c and r~ the one with pole at f(c); for finite c with
        finite image it is the ordinary derivative.  With the determinant
        normalized to +-1 the four pole configurations give rho/(cz+d)^2,
        rho*c^2, rho/c^2 and rho*d^2 (coefficient letters, not the point).

        Orientation-reversing maps have a negative signed factor; unless
        allow_reflection is set this raises, otherwise the absolute value
        (the dilation of f composed with z -> -z) is returned.
        """
        rho = self.orientation
        if is_inf(c):
            if self.c != 0.0:
                val = rho / (self.c * self.c)
            else:
                val = rho * self.d * self.d
        else:
            den = self.c * c + self.d
            if den != 0.0:
                val = rho / (den * den)
            else:
                val = rho * self.c * self.c
        if val < 0:
            if not allow_reflection:
                raise OrientationError(
                    "orientation-reversing map: handle the reflection separately "
                    "or pass allow_reflection=True"
                )
            return -val
        return val

    def __repr__(self):
        return (
            f"MoebiusMap({self.a:.6g}, {self.b:.6g}, {self.c:.6g}, {self.d:.6g}; "
            f"rho={self.orientation:+d})"
        )


def apply(f: MoebiusMap, z):
    return f.apply(z)


def compose(f: MoebiusMap, g: MoebiusMap) -> MoebiusMap:
    return f.compose(g)


def invert(f: MoebiusMap) -> MoebiusMap:
    return f.invert()


def derivative_at(f: MoebiusMap, c, allow_reflection: bool = False) -> float:
    return f.derivative_at(c, allow_reflection=allow_reflection)
