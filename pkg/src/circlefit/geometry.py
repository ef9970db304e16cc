"""Circle parameterizations, conversions between them, and geometric residuals.

Two descriptions of a circle are used throughout the package:

* natural parameters ``(a, b, R)``: center and radius (:class:`CircleGeom`);
* algebraic parameters ``(A, B, C, D)`` of ``A(x^2+y^2) + Bx + Cy + D = 0``
  (:class:`AlgParams`). This form is projective and also covers lines
  (``A = 0``), which algebraic fits may legitimately return.

Point sets are plain ``(n, 2)`` float arrays; :func:`as_point_set` validates
and coerces anything array-like.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateConicError, InputError, InvalidCircleError

LINE_THRESHOLD = 1e-10

UNIT_NORM = "unit-norm"
PRATT_UNIT = "pratt-unit"


def as_point_set(data, min_points: int = 1) -> np.ndarray:
    """Return ``data`` as a finite ``(n, 2)`` float array with ``n >= min_points``."""
    try:
        pts = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"cannot interpret points: {exc}") from None
    if pts.ndim == 1 and pts.size == 2:
        pts = pts.reshape(1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError(f"expected an (n, 2) array of points, got shape {pts.shape}")
    if pts.shape[0] < min_points:
        raise InputError(f"need at least {min_points} points, got {pts.shape[0]}")
    if not np.all(np.isfinite(pts)):
        raise InputError("point coordinates must be finite")
    return pts


@dataclass(frozen=True)
class CircleGeom:
    """Circle with center ``(a, b)`` and radius ``R > 0``."""

    a: float
    b: float
    R: float

    def __post_init__(self):
        for name in ("a", "b", "R"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (math.isfinite(self.a) and math.isfinite(self.b) and math.isfinite(self.R)):
            raise InvalidCircleError(f"non-finite circle parameters {self}")
        if self.R <= 0:
            raise InvalidCircleError(f"radius must be positive, got {self.R}")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.R])


@dataclass(frozen=True)
class Line:
    """Line ``Bx + Cy + D = 0`` with ``B^2 + C^2 = 1``.

    The sign is fixed so that the first nonzero of ``(B, C)`` is positive.
    """

    B: float
    C: float
    D: float

    def __post_init__(self):
        for name in ("B", "C", "D"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.B, self.C, self.D])


CircleOrLine = Union[CircleGeom, Line]


@dataclass(frozen=True)
class AlgParams:
    """Algebraic circle parameters with a declared normalization.

    ``unit-norm`` means ``A^2+B^2+C^2+D^2 = 1``; ``pratt-unit`` means
    ``B^2+C^2-4AD = 1``. Use :meth:`unit` / :meth:`pratt` to build normalized
    instances from an arbitrary nonzero 4-vector.
    """

    A: float
    B: float
    C: float
    D: float
    normalization: str = UNIT_NORM

    def __post_init__(self):
        v = self.as_array()
        if not np.all(np.isfinite(v)):
            raise InputError("algebraic parameters must be finite")
        if not np.any(v):
            raise InputError("algebraic parameters must not all vanish")
        if self.normalization == UNIT_NORM:
            if abs(float(v @ v) - 1.0) > 1e-12:
                raise InputError(f"not unit-norm: |A|^2 = {float(v @ v)!r}")
        elif self.normalization == PRATT_UNIT:
            terms = self.B**2 + self.C**2 + abs(4 * self.A * self.D)
            disc = self.B**2 + self.C**2 - 4 * self.A * self.D
            # relative to the summands: far-off small circles cancel heavily
            if abs(disc - 1.0) > 1e-9 * max(1.0, terms):
                raise InputError(f"not pratt-unit: B^2+C^2-4AD = {disc!r}")
        else:
            raise InputError(f"unknown normalization {self.normalization!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D], dtype=float)

    @classmethod
    def unit(cls, vec: Sequence[float]) -> "AlgParams":
        """Scale ``vec`` to unit Euclidean norm (sign kept)."""
        v = np.asarray(vec, dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0 or not np.isfinite(norm):
            raise InputError("cannot normalize a zero or non-finite parameter vector")
        v = v / norm
        return cls(*(float(t) for t in v), normalization=UNIT_NORM)

    @classmethod
    def pratt(cls, vec: Sequence[float]) -> "AlgParams":
        """Scale ``vec`` so that ``B^2+C^2-4AD = 1`` and ``A >= 0``."""
        v = np.asarray(vec, dtype=float)
        disc = v[1] ** 2 + v[2] ** 2 - 4 * v[0] * v[3]
        if not disc > 0:
            raise DegenerateConicError(f"B^2+C^2-4AD = {disc!r} is not positive")
        v = v / math.sqrt(disc)
        if v[0] < 0:
            v = -v
        return cls(*(float(t) for t in v), normalization=PRATT_UNIT)


def _vector(p) -> np.ndarray:
    if isinstance(p, AlgParams):
        return p.as_array()
    v = np.asarray(p, dtype=float)
    if v.shape != (4,):
        raise InputError(f"expected 4 algebraic parameters, got shape {v.shape}")
    return v


def alg_to_geom(p, line_threshold: float = LINE_THRESHOLD) -> CircleOrLine:
    """Convert algebraic parameters to a :class:`CircleGeom` or a :class:`Line`.

    ``p`` may be an :class:`AlgParams` or any 4-vector; the representation is
    projective so the result does not depend on its scale.
    """
    A, B, C, D = v = _vector(p)
    norm = np.linalg.norm(v)
    if norm == 0 or not np.isfinite(norm):
        raise InputError("algebraic parameters must be finite and not all zero")
    if abs(A) / norm > line_threshold:
        disc = B * B + C * C - 4 * A * D
        if not disc > 0:
            raise DegenerateConicError(
                f"B^2+C^2-4AD = {disc!r} <= 0: equation has no real circle"
            )
        return CircleGeom(-B / (2 * A), -C / (2 * A), math.sqrt(disc) / (2 * abs(A)))
    bc = math.hypot(B, C)
    if bc / norm <= line_threshold:
        raise DegenerateConicError("A and (B, C) both vanish: not a circle or line")
    B, C, D = B / bc, C / bc, D / bc
    if B < 0 or (B == 0 and C < 0):
        B, C, D = -B, -C, -D
    return Line(B, C, D)


def geom_to_alg(c: CircleGeom) -> AlgParams:
    """Pratt-normalized algebraic parameters of ``c`` (``A = 1/(2R)``)."""
    if not c.R > 0:
        raise InvalidCircleError(f"radius must be positive, got {c.R}")
    A = 1.0 / (2.0 * c.R)
    B = -2.0 * c.a * A
    C = -2.0 * c.b * A
    D = (c.a * c.a + c.b * c.b - c.R * c.R) * A
    return AlgParams(A, B, C, D, normalization=PRATT_UNIT)


def signed_distance(pt, c: CircleGeom) -> float:
    """Distance from ``pt`` to circle ``c``; positive outside, negative inside."""
    x, y = pt
    return math.hypot(x - c.a, y - c.b) - c.R


def distances(ps, c: CircleGeom) -> np.ndarray:
    """Vectorized :func:`signed_distance` over an ``(n, 2)`` array."""
    pts = as_point_set(ps)
    return np.hypot(pts[:, 0] - c.a, pts[:, 1] - c.b) - c.R


def objective_geometric(ps, c: CircleGeom) -> float:
    """Sum of squared orthogonal distances from the points to ``c``."""
    d = distances(ps, c)
    return float(d @ d)
