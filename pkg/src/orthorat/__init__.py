"""Orthonormal rational functions, GMP matrices, and finite gap potential theory."""

from .moebius import INF, MoebiusMap, is_inf
from .measure import FiniteGapSet, Measure, PoleSequence

__all__ = [
    "INF",
    "MoebiusMap",
    "is_inf",
    "FiniteGapSet",
    "Measure",
    "PoleSequence",
]

__version__ = "0.1.0"
