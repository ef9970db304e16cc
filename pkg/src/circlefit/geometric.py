"""Geometric (orthogonal distance) circle fit by Levenberg-Marquardt.

The fit minimizes ``sum (r_i - R)^2`` over the natural parameters
``(a, b, R)``. The solver core is vectorized over a batch of independent
problems so that the Monte Carlo harness can run thousands of fits per numpy
call; :func:`fit_geometric` is the single-problem front end.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .algebraic import HYPER, KASA, TAUBIN, fit_algebraic
from .errors import (
    DegenerateConicError,
    DegenerateDataError,
    InputError,
    NumericalError,
    SingularGeometryError,
)
from .geometry import CircleGeom, as_point_set

GRADIENT, STEP, MAX_ITER, SINGULAR = 1, 2, 3, 4
TERMINATION_TAGS = {GRADIENT: "gradient", STEP: "step", MAX_ITER: "max-iter"}


@dataclass(frozen=True)
class LmOptions:
    """Levenberg-Marquardt settings.

    ``gradient_tol=None`` means ``1e-12 * n`` for an ``n``-point problem.
    The step test is relative: ``|step| <= step_tol * (|theta| + step_tol)``.
    """

    max_iterations: int = 100
    gradient_tol: Optional[float] = None
    step_tol: float = 1e-12
    initial_damping: float = 1e-3
    damping_factor: float = 10.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InputError("max_iterations must be >= 1")
        for name in ("step_tol", "initial_damping", "damping_factor"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.gradient_tol is not None and not self.gradient_tol > 0:
            raise InputError("gradient_tol must be positive")
        if self.damping_factor <= 1:
            raise InputError("damping_factor must exceed 1")

    def gradient_tolerance(self, n: int) -> float:
        return 1e-12 * n if self.gradient_tol is None else self.gradient_tol


@dataclass(frozen=True)
class LmReport:
    circle: CircleGeom
    objective: float
    iterations: int
    converged: bool
    termination: str


def residuals_jacobian(ps, c: CircleGeom):
    """Residuals ``r_i - R`` and their ``n x 3`` Jacobian in ``(a, b, R)``."""
    pts = as_point_set(ps)
    dx, dy = pts[:, 0] - c.a, pts[:, 1] - c.b
    r = np.hypot(dx, dy)
    if np.any(r == 0):
        raise SingularGeometryError("a data point coincides with the circle center")
    J = np.column_stack([-dx / r, -dy / r, -np.ones_like(r)])
    return r - c.R, J


def _objective(x, y, theta):
    r = np.hypot(x - theta[:, :1], y - theta[:, 1:2])
    d = r - theta[:, 2:3]
    return np.einsum("ij,ij->i", d, d), np.all(r > 0, axis=1)


def _objective_change(x, y, theta, r, res, cand):
    """``F(cand) - F(theta)`` without cancellation, and whether ``cand`` is usable.

    Differencing two rounded objectives loses everything once the decrease
    drops below ``eps * F``; this leaves long flat valleys (short arcs,
    large radii) stuck well short of the minimum. The distance difference
    is rationalized instead:
    ``r_c - r = ((a - a_c)(2x - a - a_c) + (b - b_c)(2y - b - b_c)) / (r_c + r)``.
    """
    a, b, R = theta[:, :1], theta[:, 1:2], theta[:, 2:3]
    ac, bc, Rc = cand[:, :1], cand[:, 1:2], cand[:, 2:3]
    rc = np.hypot(x - ac, y - bc)
    with np.errstate(divide="ignore", invalid="ignore"):
        dr = ((a - ac) * (2 * x - a - ac) + (b - bc) * (2 * y - b - bc)) / (rc + r)
    d = dr - (Rc - R)
    dF = np.einsum("ij,ij->i", d, (rc - Rc) + res)
    return dF, np.all(rc > 0, axis=1) & np.isfinite(dF)


def lm_batch(x, y, init, opts: Optional[LmOptions] = None, history: Optional[List] = None):
    """Run Levenberg-Marquardt on a batch of problems.

    Parameters
    ----------
    x, y : (T, n) arrays
        Point coordinates, one row per problem.
    init : (T, 3) array
        Initial ``(a, b, R)`` per problem.
    history : list, optional
        If given, the objective of problem 0 after every accepted step is
        appended (used to check monotonicity).

    The objective is tracked by exact-as-possible increments from its
    starting value, so the reported value can differ from a fresh
    evaluation by rounding.

    Returns
    -------
    theta : (T, 3) array
    objective : (T,) array
    iterations : (T,) int array
    termination : (T,) int array of GRADIENT, STEP, MAX_ITER or SINGULAR
    """
    opts = opts or LmOptions()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    theta = np.array(init, dtype=float).reshape(-1, 3)
    T, n = x.shape
    gtol = opts.gradient_tolerance(n)

    F, ok = _objective(x, y, theta)
    lam = np.full(T, opts.initial_damping)
    iters = np.zeros(T, dtype=np.int64)
    term = np.where(ok, 0, SINGULAR)
    if history is not None:
        history.append(float(F[0]))

    active = np.flatnonzero(term == 0)
    while active.size:
        xa, ya, th = x[active], y[active], theta[active]
        dx, dy = xa - th[:, :1], ya - th[:, 1:2]
        r = np.hypot(dx, dy)
        res = r - th[:, 2:3]
        u, v = dx / r, dy / r
        # J rows are (-u, -v, -1)
        g = -np.stack([(u * res).sum(1), (v * res).sum(1), res.sum(1)], axis=1)
        done = np.linalg.norm(g, axis=1) <= gtol
        term[active[done]] = GRADIENT

        out_of_budget = iters[active] >= opts.max_iterations
        term[active[out_of_budget & ~done]] = MAX_ITER
        go = ~done & ~out_of_budget
        if not np.any(go):
            break
        idx = active[go]
        u, v, g = u[go], v[go], g[go]
        suu, svv, suv = (u * u).sum(1), (v * v).sum(1), (u * v).sum(1)
        su, sv = u.sum(1), v.sum(1)
        JtJ = np.empty((idx.size, 3, 3))
        JtJ[:, 0, 0], JtJ[:, 1, 1], JtJ[:, 2, 2] = suu, svv, n
        JtJ[:, 0, 1] = JtJ[:, 1, 0] = suv
        JtJ[:, 0, 2] = JtJ[:, 2, 0] = su
        JtJ[:, 1, 2] = JtJ[:, 2, 1] = sv
        H = JtJ.copy()
        diag = np.arange(3)
        H[:, diag, diag] *= 1.0 + lam[idx, None]
        step = -np.linalg.solve(H, g[..., None])[..., 0]
        iters[idx] += 1

        cand = theta[idx] + step
        dF, okc = _objective_change(xa[go], ya[go], th[go], r[go], res[go], cand)
        accept = okc & (cand[:, 2] > 0) & (dF < 0)
        acc = idx[accept]
        theta[acc] = cand[accept]
        F[acc] += dF[accept]
        lam[acc] /= opts.damping_factor
        lam[idx[~accept]] *= opts.damping_factor
        if history is not None and np.any(acc == 0):
            history.append(float(F[0]))

        small = np.linalg.norm(step, axis=1) <= opts.step_tol * (
            np.linalg.norm(theta[idx], axis=1) + opts.step_tol
        )
        term[idx[small]] = STEP
        active = np.flatnonzero(term == 0)

    return theta, F, iters, term


def fit_geometric(
    ps,
    init: Optional[CircleGeom] = None,
    opts: Optional[LmOptions] = None,
    history: Optional[List] = None,
) -> LmReport:
    """Geometric circle fit starting from ``init`` (default: :func:`default_init`).

    Hitting ``max_iterations`` is reported with ``converged=False``; a data
    point sitting on the current center raises :class:`SingularGeometryError`.
    """
    pts = as_point_set(ps, min_points=3)
    if init is None:
        init = default_init(pts)
    theta, F, iters, term = lm_batch(
        pts[None, :, 0], pts[None, :, 1], init.as_array()[None], opts, history
    )
    if term[0] == SINGULAR:
        raise SingularGeometryError("a data point coincides with the circle center")
    a, b, R = theta[0]
    return LmReport(
        circle=CircleGeom(float(a), float(b), float(R)),
        objective=float(F[0]),
        iterations=int(iters[0]),
        converged=bool(term[0] in (GRADIENT, STEP)),
        termination=TERMINATION_TAGS[int(term[0])],
    )


def default_init(ps) -> CircleGeom:
    """First circle among the Hyper, Taubin and Kasa fits."""
    for method in (HYPER, TAUBIN, KASA):
        try:
            res = fit_algebraic(ps, method)
        except (DegenerateConicError, NumericalError):
            continue
        if res.is_circle:
            return res.circle
    raise DegenerateDataError("every algebraic fit returned a line; no initial circle")
