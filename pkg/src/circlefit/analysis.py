"""Small-noise error analysis of circle fits.

Quantities here are evaluated at the *true* configuration: a true circle and
the angles of the true points on it. With ``u_i = cos(phi_i)``,
``v_i = sin(phi_i)`` and ``W`` the ``n x 3`` matrix of rows ``(u_i, v_i, 1)``:

* every fit considered here has leading covariance ``sigma^2 (W^T W)^-1``,
  which is also the KCR lower bound;
* the fits differ in their essential bias, ``k sigma^2 / R`` on the radius
  with ``k = 1/2, 2, 1, 0`` for the geometric, Pratt, Taubin and Hyper fits.

Algebraic-parameter biases are mapped to ``(a, b, R)`` through the Jacobian
of the conversion ``(A, B, C, D) -> (a, b, R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .algebraic import PRATT_MATRIX, constraint_matrix
from .errors import (
    ArcTooSmallError,
    DegenerateConicError,
    DegenerateFrameError,
    InputError,
    UnsupportedMethodError,
)
from .geometry import AlgParams, CircleGeom, geom_to_alg
from .methods import GEOMETRIC, HYPER, KASA, PRATT, TAUBIN, normalize_method

ESSENTIAL = "essential"
FULL = "full"

# radius essential bias is ESSENTIAL_BIAS_FACTOR[m] * sigma^2 / R
ESSENTIAL_BIAS_FACTOR = {GEOMETRIC: 0.5, PRATT: 2.0, TAUBIN: 1.0, HYPER: 0.0}


@dataclass(frozen=True, eq=False)
class TruePointFrame:
    """True circle plus the angular positions of the true points on it."""

    circle: CircleGeom
    angles: np.ndarray

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float).reshape(-1)
        if not np.all(np.isfinite(ang)):
            raise InputError("angles must be finite")
        object.__setattr__(self, "angles", ang)

    @property
    def n(self) -> int:
        return self.angles.size

    @property
    def u(self) -> np.ndarray:
        return np.cos(self.angles)

    @property
    def v(self) -> np.ndarray:
        return np.sin(self.angles)

    @property
    def points(self) -> np.ndarray:
        c = self.circle
        return np.column_stack([c.a + c.R * self.u, c.b + c.R * self.v])


@dataclass(frozen=True, eq=False)
class BiasVector:
    components: np.ndarray
    order: str

    def __getitem__(self, k):
        return self.components[k]


@dataclass(frozen=True, eq=False)
class MseBreakdown:
    """One table row: radius MSE split into variance, squared bias and the rest.

    The scalar columns refer to the radius; the 3x3 ``mse_matrix`` and
    ``variance_matrix`` and the 3-vectors cover ``(a, b, R)``.
    """

    method: str
    total_mse: float
    variance_theory: float
    ess_bias_sq: float
    remainder: float
    trials: int
    excluded: int = 0
    mean_error: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mse_matrix: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    variance_matrix: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    ess_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def empirical_bias(self) -> float:
        return float(self.mean_error[2])


def w_matrix(frame: TruePointFrame) -> np.ndarray:
    """Rows ``(cos phi_i, sin phi_i, 1)``; raises if ``W`` has rank < 3."""
    if frame.n < 3:
        raise DegenerateFrameError(f"need at least 3 true points, got {frame.n}")
    W = np.column_stack([frame.u, frame.v, np.ones(frame.n)])
    sv = np.linalg.svd(W, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateFrameError("W^T W is singular: true points do not fix a circle")
    return W


def kcr_covariance(W: np.ndarray, sigma: float) -> np.ndarray:
    """KCR bound ``sigma^2 (W^T W)^-1`` on the leading covariance of ``(a, b, R)``."""
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    G = W.T @ W
    if np.linalg.cond(G) > 1e14:
        raise DegenerateFrameError("W^T W is singular")
    V = np.linalg.inv(G)
    return sigma**2 * 0.5 * (V + V.T)


def essential_bias(method: str, sigma: float, R_true: float) -> BiasVector:
    """Essential bias ``(0, 0, k sigma^2 / R)`` of a non-Kasa fit."""
    method = normalize_method(method)
    if method == KASA:
        raise UnsupportedMethodError(
            "Kasa essential bias depends on the arc; use kasa_essential_bias_arc"
        )
    if sigma < 0 or not R_true > 0:
        raise InputError("need sigma >= 0 and R_true > 0")
    k = ESSENTIAL_BIAS_FACTOR[method]
    return BiasVector(np.array([0.0, 0.0, k * sigma**2 / R_true]), ESSENTIAL)


def kasa_essential_bias_arc(frame: TruePointFrame, sigma: float) -> BiasVector:
    """Closed-form Kasa essential bias for points on an arc symmetric about angle 0.

    The angles must satisfy ``mean(sin) = mean(sin*cos) = 0`` (arc centered on
    the positive x direction of the true circle). Any center and radius are
    allowed; the result scales as ``1 / R``.
    """
    u, v = frame.u, frame.v
    if abs(v.mean()) > 1e-9 or abs((u * v).mean()) > 1e-9:
        raise DegenerateFrameError("arc is not symmetric about angle 0")
    xbar, xx = u.mean(), (u * u).mean()
    spread = xx - xbar * xbar
    if spread < 1e-12:
        raise ArcTooSmallError(
            f"arc too small: mean(x^2) - mean(x)^2 = {spread:.3g}; Kasa bias diverges"
        )
    s2 = sigma**2
    comp = 2 * s2 * np.array([0.0, 0.0, 1.0]) - s2 / spread * np.array([-xbar, 0.0, xx])
    return BiasVector(comp / frame.circle.R, ESSENTIAL)


def geometric_bias_terms(frame: TruePointFrame, sigma: float):
    """The two terms of the geometric-fit bias: ``O(sigma^2)`` and ``O(sigma^2/n)``."""
    W = w_matrix(frame)
    G = np.linalg.inv(W.T @ W)
    q = np.column_stack([-frame.v, frame.u, np.zeros(frame.n)])
    s = np.einsum("ij,jk,ik->i", q, G, q)
    scale = sigma**2 / (2 * frame.circle.R)
    return scale * (G @ W.T @ np.ones(frame.n)), scale * (G @ W.T @ s)


def geometric_bias_full(frame: TruePointFrame, sigma: float) -> BiasVector:
    first, second = geometric_bias_terms(frame, sigma)
    return BiasVector(first + second, FULL)


def transition_jacobian(p) -> np.ndarray:
    """Jacobian ``d(a, b, R) / d(A, B, C, D)`` of the algebraic-to-natural map."""
    A, B, C, D = p.as_array() if isinstance(p, AlgParams) else np.asarray(p, dtype=float)
    if A == 0:
        raise DegenerateConicError("A = 0 describes a line; no (a, b, R) Jacobian")
    disc = B * B + C * C - 4 * A * D
    if not disc > 0:
        raise DegenerateConicError(f"B^2+C^2-4AD = {disc!r} is not positive")
    R = math.sqrt(disc) / (2 * abs(A))
    A2 = A * A
    return np.array(
        [
            [B / (2 * A2), -1 / (2 * A), 0.0, 0.0],
            [C / (2 * A2), 0.0, -1 / (2 * A), 0.0],
            [-R / A - D / (2 * A2 * R), B / (4 * A2 * R), C / (4 * A2 * R), -1 / (2 * A * R)],
        ]
    )


def kernel_pseudoinverse(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Pseudoinverse of a PSD matrix with a one-dimensional kernel."""
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    small = np.abs(lam) < rtol * np.max(np.abs(lam))
    if small.sum() != 1:
        raise DegenerateFrameError(
            f"true moment matrix has a {int(small.sum())}-dimensional kernel, expected 1"
        )
    keep = ~small
    return (V[:, keep] / lam[keep]) @ V[:, keep].T


@dataclass(frozen=True, eq=False)
class TrueAlgebraic:
    """Algebraic quantities of the true configuration (unit-norm ``A`` with ``A > 0``)."""

    A: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    M_pinv: np.ndarray
    J: np.ndarray

    @property
    def n(self) -> int:
        return self.Z.shape[0]


def true_algebraic(frame: TruePointFrame) -> TrueAlgebraic:
    w_matrix(frame)
    A = geom_to_alg(frame.circle).as_array()
    A = A / np.linalg.norm(A)
    pts = frame.points
    x, y = pts[:, 0], pts[:, 1]
    Z = np.column_stack([x * x + y * y, x, y, np.ones_like(x)])
    M = Z.T @ Z / Z.shape[0]
    M = 0.5 * (M + M.T)
    return TrueAlgebraic(A, Z, M, kernel_pseudoinverse(M), transition_jacobian(A))


def algebraic_bias_full(
    frame: TruePointFrame, method: str, sigma: float, essential_only: bool = False
) -> np.ndarray:
    """Second-order bias ``E(Delta_2 A)`` of an algebraic fit in ``(A, B, C, D)``.

    Includes the ``O(sigma^2/n)`` corrections unless ``essential_only``. The
    true parameter vector is unit-norm with ``A > 0``.
    """
    method = normalize_method(method)
    if method == GEOMETRIC:
        raise UnsupportedMethodError("geometric fit has no algebraic parameters")
    ta = true_algebraic(frame)
    A, Z, Mp, n = ta.A, ta.Z, ta.M_pinv, ta.n
    N = constraint_matrix(method, ta.M).N
    PA = PRATT_MATRIX @ A
    NA = N @ A
    ratio = (A @ PA) / (A @ NA)
    c4, c3 = (0.0, 0.0) if essential_only else (4.0 / n, 3.0 / n)
    bracket = 4 * A[0] * ta.M[:, 3] + (1 - c4) * PA - (1 - c3) * ratio * NA
    if not essential_only:
        lever = np.einsum("ij,jk,ik->i", Z, Mp, Z)
        bracket = bracket - 4 * A[0] / n**2 * (lever @ Z)
    return -(sigma**2) * (Mp @ bracket)


def algebraic_bias_natural(
    frame: TruePointFrame, method: str, sigma: float, essential_only: bool = False
) -> BiasVector:
    """:func:`algebraic_bias_full` mapped to ``(a, b, R)`` by the transition Jacobian."""
    ta_J = true_algebraic(frame).J
    vec = ta_J @ algebraic_bias_full(frame, method, sigma, essential_only)
    return BiasVector(vec, ESSENTIAL if essential_only else FULL)


def method_essential_bias(frame: TruePointFrame, method: str, sigma: float) -> np.ndarray:
    """Essential bias 3-vector for any method, Kasa included."""
    method = normalize_method(method)
    if method == KASA:
        return algebraic_bias_natural(frame, KASA, sigma, essential_only=True).components
    return essential_bias(method, sigma, frame.circle.R).components


def breakdown_from_moments(
    method: str,
    count: int,
    sum_error: np.ndarray,
    sum_outer: np.ndarray,
    truth: TruePointFrame,
    sigma: float,
    excluded: int = 0,
) -> MseBreakdown:
    """Build a :class:`MseBreakdown` from accumulated error sums over ``count`` trials."""
    method = normalize_method(method)
    if count < 1:
        raise InputError("no estimates to decompose")
    var = kcr_covariance(w_matrix(truth), sigma)
    eb = method_essential_bias(truth, method, sigma)
    mse = np.asarray(sum_outer, dtype=float) / count
    total = float(mse[2, 2])
    variance = float(var[2, 2])
    ess_sq = float(eb[2] ** 2)
    return MseBreakdown(
        method=method,
        total_mse=total,
        variance_theory=variance,
        ess_bias_sq=ess_sq,
        remainder=total - variance - ess_sq,
        trials=int(count),
        excluded=int(excluded),
        mean_error=np.asarray(sum_error, dtype=float) / count,
        mse_matrix=mse,
        variance_matrix=var,
        ess_bias=eb,
    )


def mse_decompose(
    estimates: Iterable[CircleGeom],
    truth: TruePointFrame,
    sigma: float,
    method: str,
    excluded: Optional[int] = 0,
) -> MseBreakdown:
    """Empirical radius MSE of ``estimates`` split into theory terms and remainder."""
    est = np.array([[c.a, c.b, c.R] for c in estimates], dtype=float).reshape(-1, 3)
    if est.shape[0] == 0:
        raise InputError("empty estimate list")
    err = est - truth.circle.as_array()
    outer = np.einsum("ti,tj->ij", err, err)
    return breakdown_from_moments(
        method, est.shape[0], err.sum(axis=0), outer, truth, sigma, excluded or 0
    )
