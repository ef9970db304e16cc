"""Non-iterative (algebraic) circle fits: Kasa, Pratt, Taubin and Hyper.

Every algebraic fit minimizes ``A^T M A`` subject to ``A^T N A = 1`` where
``M = Z^T Z / n`` is the matrix of moments of the data matrix ``Z`` with rows
``(x^2+y^2, x, y, 1)`` and ``N`` is a method-specific constraint matrix. The
minimizer is the generalized eigenvector of ``M A = eta N A`` with the
smallest positive ``eta``.

The solvers work in centroid coordinates from the thin SVD ``Z = U S V^T``:

* ``S[3] < eps * S[0]``: the data are interpolated exactly by a circle or a
  line, which is the last right singular vector (``singular-svd``);
* Pratt and Hyper: eigenpairs of the symmetric ``Y N^-1 Y`` with
  ``Y = V S V^T`` (``regular-svd``);
* Taubin: ``D`` is eliminated and the remaining 3x3 pencil is whitened by
  the Cholesky factor of the (positive definite) reduced constraint
  (``reduced-taubin``);
* Kasa: ``N`` has rank one, so ``A`` is proportional to ``M^-1 e1``
  (``linear-kasa``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DegenerateDataError,
    InputError,
    NumericalError,
    UnsupportedMethodError,
)
from .geometry import (
    LINE_THRESHOLD,
    AlgParams,
    CircleGeom,
    CircleOrLine,
    Line,
    alg_to_geom,
    as_point_set,
)

KASA = "kasa"
PRATT = "pratt"
TAUBIN = "taubin"
HYPER = "hyper"
ALGEBRAIC_METHODS = (KASA, PRATT, TAUBIN, HYPER)

SINGULAR_EPS = 1e-12
TIE_RTOL = 1e-12

PRATT_MATRIX = np.array(
    [
        [0.0, 0.0, 0.0, -2.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-2.0, 0.0, 0.0, 0.0],
    ]
)
_PRATT_INVERSE = np.array(
    [
        [0.0, 0.0, 0.0, -0.5],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-0.5, 0.0, 0.0, 0.0],
    ]
)


def check_method(method: str) -> str:
    if method not in ALGEBRAIC_METHODS:
        raise UnsupportedMethodError(
            f"unknown algebraic method {method!r}; expected one of {ALGEBRAIC_METHODS}"
        )
    return method


@dataclass(frozen=True)
class ConstraintMatrix:
    method: str
    N: np.ndarray


@dataclass(frozen=True)
class GepSolution:
    eta: float
    A: AlgParams
    path: str


@dataclass(frozen=True)
class FitResult:
    """Outcome of one algebraic fit.

    ``alg`` is unit-norm in the caller's coordinates and ``circle`` is the
    corresponding circle (or line). ``eta`` is the generalized eigenvalue for
    eigen-solver paths and ``residual`` the normal-equation residual for the
    linear Kasa solver.
    """

    circle: CircleOrLine
    alg: AlgParams
    method: str
    path: str
    centroid: tuple
    eta: Optional[float] = None
    residual: Optional[float] = None

    @property
    def is_circle(self) -> bool:
        return isinstance(self.circle, CircleGeom)


def design_matrix(ps) -> np.ndarray:
    """Data matrix with rows ``(x^2+y^2, x, y, 1)``."""
    pts = as_point_set(ps)
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([x * x + y * y, x, y, np.ones_like(x)])


def moment_matrix(Z: np.ndarray) -> np.ndarray:
    """``Z^T Z / n``, symmetrized."""
    Z = np.asarray(Z, dtype=float)
    M = Z.T @ Z / Z.shape[0]
    return 0.5 * (M + M.T)


def constraint_matrix(method: str, M: np.ndarray) -> ConstraintMatrix:
    """Constraint matrix of ``method``; Taubin and Hyper read the means from ``M``."""
    check_method(method)
    M = np.asarray(M, dtype=float)
    zbar, xbar, ybar = M[3, 0], M[3, 1], M[3, 2]
    if method == KASA:
        N = np.zeros((4, 4))
        N[0, 0] = 1.0
    elif method == PRATT:
        N = PRATT_MATRIX.copy()
    else:
        T = np.array(
            [
                [4 * zbar, 2 * xbar, 2 * ybar, 0.0],
                [2 * xbar, 1.0, 0.0, 0.0],
                [2 * ybar, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
            ]
        )
        N = T if method == TAUBIN else 2 * T - PRATT_MATRIX
    return ConstraintMatrix(method, N)


def _constraint_inverse(cm: ConstraintMatrix) -> np.ndarray:
    N = cm.N
    if cm.method == PRATT:
        return _PRATT_INVERSE
    if cm.method == HYPER and max(abs(N[0, 1]), abs(N[0, 2])) <= 1e-13 * max(1.0, N[0, 0]):
        # centered data: the (A, D) block [[8z, 2], [2, 0]] inverts in closed form
        Ninv = np.eye(4)
        Ninv[0, 0], Ninv[0, 3], Ninv[3, 0], Ninv[3, 3] = 0.0, 0.5, 0.5, -N[0, 0] / 4
        return Ninv
    try:
        return np.linalg.inv(N)
    except np.linalg.LinAlgError:
        raise InputError("singular constraint matrix needs the taubin or kasa reduction") from None


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that ``A > 0`` (circles) or the first nonzero entry is positive."""
    v = np.asarray(v, dtype=float)
    scale = np.max(np.abs(v))
    if abs(v[0]) > LINE_THRESHOLD * scale:
        return v if v[0] > 0 else -v
    for t in v[1:]:
        if abs(t) > LINE_THRESHOLD * scale:
            return v if t > 0 else -v
    return v


def _pick_smallest(etas, vecs, M, require_positive=True):
    """Index of the smallest (positive) eta; near-ties go to the smaller A^T M A."""
    cand = [k for k, e in enumerate(etas) if e > 0 or not require_positive]
    if not cand:
        raise DegenerateDataError("generalized eigenproblem has no positive eigenvalue")
    cand.sort(key=lambda k: etas[k])
    best = cand[0]
    for k in cand[1:]:
        if etas[k] - etas[best] > TIE_RTOL * abs(etas[best]):
            break
        a_k = vecs[k] / np.linalg.norm(vecs[k])
        a_b = vecs[best] / np.linalg.norm(vecs[best])
        if a_k @ M @ a_k < a_b @ M @ a_b:
            best = k
    return best


def _solve_from_root(V, s, n, cm: ConstraintMatrix, eps: float):
    """Solve ``M A = eta N A`` given ``n M = V diag(s^2) V^T`` (``s`` descending)."""
    M = (V * s**2) @ V.T / n
    if s[-1] < eps * s[0]:
        return s[-1] ** 2 / n, V[:, -1], "singular-svd"

    if cm.method == KASA:
        A = V @ ((V[0, :]) / s**2)
        A /= np.linalg.norm(A)
        return float(A @ M @ A / A[0] ** 2), A, "linear-kasa"

    if cm.method == TAUBIN:
        m4 = M[3, :3]
        M_red = M[:3, :3] - np.outer(m4, m4) / M[3, 3]
        try:
            L = np.linalg.cholesky(cm.N[:3, :3])
        except np.linalg.LinAlgError:
            raise DegenerateDataError("Taubin constraint is not positive definite") from None
        Linv = np.linalg.inv(L)
        C = Linv @ M_red @ Linv.T
        lam, Y = np.linalg.eigh(0.5 * (C + C.T))
        abc = Linv.T @ Y
        vecs = [np.append(abc[:, k], -(m4 @ abc[:, k]) / M[3, 3]) for k in range(3)]
        # reduced pencil is positive semi-definite: take the smallest eigenvalue
        k = _pick_smallest([float(l) for l in lam], vecs, M, require_positive=False)
        A = vecs[k] / np.linalg.norm(vecs[k])
        return float(lam[k]), A, "reduced-taubin"

    Ninv = _constraint_inverse(cm)
    Y = (V * s) @ V.T
    Yinv = (V / s) @ V.T
    S = Y @ Ninv @ Y
    mu, Astar = np.linalg.eigh(0.5 * (S + S.T))
    if not np.all(np.isfinite(mu)):
        raise NumericalError("eigen-decomposition produced non-finite values")
    vecs = [Yinv @ Astar[:, k] for k in range(4)]
    etas = [float(m) / n for m in mu]
    k = _pick_smallest(etas, vecs, M)
    A = vecs[k] / np.linalg.norm(vecs[k])
    return etas[k], A, "regular-svd"


def solve_gep(M, N, tol: float = 1e-10, eps: float = SINGULAR_EPS) -> GepSolution:
    """Smallest-positive-eigenvalue solution of ``M A = eta N A``.

    ``N`` is either a :class:`ConstraintMatrix` (any method) or a plain
    invertible symmetric matrix. ``M`` must be symmetric positive
    semi-definite. ``tol`` bounds the accepted residual
    ``|M A - eta N A| <= tol * |M|``.
    """
    M = np.asarray(M, dtype=float)
    cm = N if isinstance(N, ConstraintMatrix) else ConstraintMatrix("generic", np.asarray(N, float))
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(lam)[::-1]
    lam, V = np.clip(lam[order], 0.0, None), V[:, order]
    # n only rescales eta; any positive value gives the same pencil
    eta, A, path = _solve_from_root(V, np.sqrt(lam), 1.0, cm, eps)
    A = canonical_sign(A)
    resid = np.linalg.norm(M @ A - eta * (cm.N @ A))
    if not resid <= tol * max(np.linalg.norm(M), np.finfo(float).tiny):
        raise NumericalError(f"pencil residual {resid:.3g} exceeds tolerance")
    return GepSolution(float(eta), AlgParams.unit(A), path)


def _translate_params(v: np.ndarray, xbar: float, ybar: float) -> np.ndarray:
    """Parameters in original coordinates from parameters about ``(xbar, ybar)``."""
    A, B, C, D = v
    return np.array(
        [
            A,
            B - 2 * A * xbar,
            C - 2 * A * ybar,
            D + A * (xbar * xbar + ybar * ybar) - B * xbar - C * ybar,
        ]
    )


def _shift(shape: CircleOrLine, xbar: float, ybar: float) -> CircleOrLine:
    if isinstance(shape, CircleGeom):
        return CircleGeom(shape.a + xbar, shape.b + ybar, shape.R)
    return Line(shape.B, shape.C, shape.D - shape.B * xbar - shape.C * ybar)


def _center(ps):
    pts = as_point_set(ps, min_points=3)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    spread = np.max(np.abs(centered))
    if spread == 0 or spread <= 1e-14 * max(1.0, np.max(np.abs(centroid))):
        raise DegenerateDataError("all points coincide")
    return centered, (float(centroid[0]), float(centroid[1]))


def fit_algebraic(ps, method: str, eps: float = SINGULAR_EPS) -> FitResult:
    """Fit a circle (or line) to ``ps`` by the algebraic ``method``."""
    check_method(method)
    centered, (xbar, ybar) = _center(ps)
    Z = design_matrix(centered)
    _, s, Vt = np.linalg.svd(Z, full_matrices=False)
    if s.size < 4:
        s = np.append(s, np.zeros(4 - s.size))
        Vt = np.linalg.svd(Z, full_matrices=True)[2]
    cm = constraint_matrix(method, moment_matrix(Z))
    eta, A, path = _solve_from_root(Vt.T, s, Z.shape[0], cm, eps)
    A = canonical_sign(A)
    shape = _shift(alg_to_geom(A), xbar, ybar)
    alg = AlgParams.unit(canonical_sign(_translate_params(A, xbar, ybar)))
    return FitResult(shape, alg, method, path, (xbar, ybar), eta=float(eta))


def kasa_fit_linear(ps) -> FitResult:
    """Kasa fit from its 3x3 normal equations in ``(B, C, D)``."""
    centered, (xbar, ybar) = _center(ps)
    x, y = centered[:, 0], centered[:, 1]
    X = np.column_stack([x, y, np.ones_like(x)])
    z = x * x + y * y
    sv = np.linalg.svd(X, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateDataError("points are collinear: Kasa normal equations are singular")
    B, C, D = np.linalg.solve(X.T @ X, -(X.T @ z))
    a, b = -B / 2, -C / 2
    R2 = a * a + b * b - D
    if not R2 > 0:
        raise DegenerateDataError(f"Kasa solution has R^2 = {R2!r}")
    r = z + B * x + C * y + D
    circle = CircleGeom(a + xbar, b + ybar, float(np.sqrt(R2)))
    alg = AlgParams.unit(_translate_params(np.array([1.0, B, C, D]), xbar, ybar))
    return FitResult(circle, alg, KASA, "normal-equations", (xbar, ybar), residual=float(r @ r))


def fit_all(ps, methods=ALGEBRAIC_METHODS) -> dict:
    return {m: fit_algebraic(ps, m) for m in methods}

