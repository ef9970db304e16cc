"""Monte Carlo experiments: noisy arcs, many fits, MSE tables.

Reproducibility contract: the noise added to point ``i`` in trial ``t`` is a
pure function of ``(seed, t, i, coordinate)``. Each trial owns a Philox
counter block (key ``seed``, counter ``[0, t, 0, 0]``); point ``i`` consumes
raw words ``2i`` and ``2i+1``, turned into a ``(dx, dy)`` pair by Box-Muller.
Trials are processed in fixed-size chunks whose boundaries do not depend on
the number of worker threads, and per-chunk sums are combined with
``math.fsum`` in chunk order, so reports are bit-identical for any
parallelism.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .algebraic import (
    ALGEBRAIC_METHODS,
    HYPER,
    KASA,
    PRATT,
    PRATT_MATRIX,
    TAUBIN,
    check_method,
    fit_algebraic,
)
from .analysis import MseBreakdown, TruePointFrame, breakdown_from_moments
from .errors import CircleFitError, InputError
from .geometric import GRADIENT, STEP, LmOptions, lm_batch
from .geometry import LINE_THRESHOLD, CircleGeom
from .methods import GEOMETRIC, BENCH_METHODS, parse_methods

log = logging.getLogger(__name__)

CONFIG_KEYS = (
    "n",
    "sigma",
    "radius",
    "center_x",
    "center_y",
    "arc_degrees",
    "arc_center_degrees",
    "trials",
    "seed",
    "methods",
)
FAILURE_WARN_RATE = 0.01
_CHUNK_ELEMENTS = 1_000_000


class ConfigError(InputError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 100
    sigma: float = 0.05
    circle: CircleGeom = CircleGeom(0.0, 0.0, 1.0)
    arc_degrees: float = 180.0
    arc_center_degrees: float = 0.0
    trials: int = 1000
    seed: int = 0
    methods: tuple = BENCH_METHODS

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ConfigError(f"n must be an integer >= 3, got {self.n}", "n")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}", "sigma")
        if not 0 < self.arc_degrees <= 360:
            raise ConfigError(f"arc_degrees must be in (0, 360], got {self.arc_degrees}", "arc_degrees")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials must be an integer >= 1, got {self.trials}", "trials")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}", "seed")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))
        try:
            object.__setattr__(self, "methods", parse_methods(self.methods))
        except InputError as exc:
            raise ConfigError(str(exc), "methods") from None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "sigma": self.sigma,
            "radius": self.circle.R,
            "center_x": self.circle.a,
            "center_y": self.circle.b,
            "arc_degrees": self.arc_degrees,
            "arc_center_degrees": self.arc_center_degrees,
            "trials": self.trials,
            "seed": self.seed,
            "methods": ",".join(self.methods),
        }


def semicircle_config(trials: int = 10**6, seed: int = 101) -> ExperimentConfig:
    """n=100 points on a unit semicircle, sigma=0.05."""
    return ExperimentConfig(n=100, sigma=0.05, trials=trials, seed=seed)


def dense_semicircle_config(trials: int = 10**4, seed: int = 102) -> ExperimentConfig:
    """Same as :func:`semicircle_config` with n=10000."""
    return ExperimentConfig(n=10_000, sigma=0.05, trials=trials, seed=seed)


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment; ``:`` also separates)."""
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split(sep, 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})", key)
        raw[key] = value

    def num(key, cast, default):
        if key not in raw:
            return default
        try:
            v = float(raw[key])
            if cast is int:
                if v != int(v):
                    raise ValueError
                return int(raw[key]) if raw[key].lstrip("+-").isdigit() else int(v)
            return v
        except ValueError:
            raise ConfigError(f"invalid value for {key}: {raw[key]!r}", key) from None

    d = ExperimentConfig()
    try:
        circle = CircleGeom(
            num("center_x", float, 0.0), num("center_y", float, 0.0), num("radius", float, 1.0)
        )
    except InputError as exc:
        raise ConfigError(str(exc), "radius") from None
    return ExperimentConfig(
        n=num("n", int, d.n),
        sigma=num("sigma", float, d.sigma),
        circle=circle,
        arc_degrees=num("arc_degrees", float, d.arc_degrees),
        arc_center_degrees=num("arc_center_degrees", float, d.arc_center_degrees),
        trials=num("trials", int, d.trials),
        seed=num("seed", int, d.seed),
        methods=raw.get("methods", ",".join(d.methods)),
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def arc_angles(n: int, arc_degrees: float, center_degrees: float = 0.0) -> np.ndarray:
    """Equally spaced angles (radians) on an arc, endpoints included.

    A full 360-degree arc uses ``2 pi i / n`` (offset by the center) so that
    no point is duplicated.
    """
    c = math.radians(center_degrees)
    if arc_degrees >= 360:
        return c + 2 * math.pi * np.arange(n) / n
    if n == 1:
        return np.array([c])
    span = math.radians(arc_degrees)
    return c + span * ((np.arange(n) - (n - 1) / 2) / (n - 1))


def generate_arc_points(config: ExperimentConfig) -> TruePointFrame:
    return TruePointFrame(
        config.circle, arc_angles(config.n, config.arc_degrees, config.arc_center_degrees)
    )


def standard_normal_pairs(seed: int, trial: int, n: int) -> np.ndarray:
    """``(n, 2)`` standard normals for one trial (see module docstring)."""
    bits = np.random.Philox(key=seed, counter=[0, trial, 0, 0]).random_raw(2 * n)
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    rad = np.sqrt(-2.0 * np.log(u[0::2]))
    ang = 2.0 * np.pi * u[1::2]
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


def perturb(frame: TruePointFrame, sigma: float, seed: int, trial: int) -> np.ndarray:
    """True points plus i.i.d. N(0, sigma^2) noise in each coordinate."""
    if sigma < 0:
        raise InputError("sigma must be non-negative")
    pts = frame.points
    if sigma == 0:
        return pts.copy()
    return pts + sigma * standard_normal_pairs(seed, trial, frame.n)


def algebraic_batch(x: np.ndarray, y: np.ndarray, method: str):
    """Vectorized algebraic fits of ``T`` point sets (rows of ``x``, ``y``).

    Works in centroid coordinates with the Cholesky factor ``M = L L^T``:
    the eigenvector of ``L^-1 N L^-T`` with the largest eigenvalue ``1/eta``
    is the smallest-positive-``eta`` solution. Returns ``(T, 3)`` circles and
    a mask of rows that produced a genuine circle. Rows whose moment matrix
    is not positive definite (exact data) fall back to :func:`fit_algebraic`.
    """
    check_method(method)
    T, n = x.shape
    xm, ym = x.mean(axis=1), y.mean(axis=1)
    xc, yc = x - xm[:, None], y - ym[:, None]
    z = xc * xc + yc * yc
    cols = (z, xc, yc)
    M = np.empty((T, 4, 4))
    for i in range(3):
        for j in range(i, 3):
            M[:, i, j] = M[:, j, i] = np.einsum("ij,ij->i", cols[i], cols[j]) / n
        M[:, i, 3] = M[:, 3, i] = cols[i].mean(axis=1)
    M[:, 3, 3] = 1.0
    out = np.full((T, 3), np.nan)
    ok = np.zeros(T, dtype=bool)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        for t in range(T):
            out[t], ok[t] = _single_fit(x[t], y[t], method)
        return out, ok
    N = _batch_constraints(method, M)
    Linv = np.linalg.inv(L)
    C = Linv @ N @ np.swapaxes(Linv, 1, 2)
    _, vecs = np.linalg.eigh(0.5 * (C + np.swapaxes(C, 1, 2)))
    A = np.einsum("tji,tj->ti", Linv, vecs[:, :, -1])
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    disc = A[:, 1] ** 2 + A[:, 2] ** 2 - 4 * A[:, 0] * A[:, 3]
    ok = (np.abs(A[:, 0]) > LINE_THRESHOLD) & (disc > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, 0] = -A[:, 1] / (2 * A[:, 0]) + xm
        out[:, 1] = -A[:, 2] / (2 * A[:, 0]) + ym
        out[:, 2] = np.sqrt(disc) / (2 * np.abs(A[:, 0]))
    out[~ok] = np.nan
    return out, ok


def _batch_constraints(method: str, M: np.ndarray) -> np.ndarray:
    """Constraint matrices for a stack of moment matrices (same layout as
    :func:`circlefit.algebraic.constraint_matrix`)."""
    T = M.shape[0]
    N = np.zeros((T, 4, 4))
    if method == KASA:
        N[:, 0, 0] = 1.0
        return N
    if method == PRATT:
        N[:] = PRATT_MATRIX
        return N
    N[:, 0, 0] = 4 * M[:, 3, 0]
    N[:, 0, 1] = N[:, 1, 0] = 2 * M[:, 3, 1]
    N[:, 0, 2] = N[:, 2, 0] = 2 * M[:, 3, 2]
    N[:, 1, 1] = N[:, 2, 2] = 1.0
    if method == HYPER:
        N = 2 * N - PRATT_MATRIX
    return N


def _single_fit(x, y, method):
    try:
        res = fit_algebraic(np.column_stack([x, y]), method)
    except CircleFitError:
        return np.full(3, np.nan), False
    if not res.is_circle:
        return np.full(3, np.nan), False
    return res.circle.as_array(), True


@dataclass
class _ChunkResult:
    count: Dict[str, int]
    sum_error: Dict[str, np.ndarray]
    sum_outer: Dict[str, np.ndarray]
    excluded: Dict[str, int]
    geometric_iterations: List[int] = field(default_factory=list)


def _run_chunk(config: ExperimentConfig, frame: TruePointFrame, start: int, stop: int, lm_opts):
    truth = frame.points
    T = stop - start
    pts = np.broadcast_to(truth, (T, config.n, 2)).copy()
    if config.sigma > 0:
        for k, t in enumerate(range(start, stop)):
            pts[k] += config.sigma * standard_normal_pairs(config.seed, t, config.n)
    x, y = pts[:, :, 0], pts[:, :, 1]

    wanted = set(config.methods)
    need_alg = [m for m in ALGEBRAIC_METHODS if m in wanted]
    if GEOMETRIC in wanted and HYPER not in need_alg:
        need_alg.append(HYPER)
    est, valid = {}, {}
    for m in need_alg:
        est[m], valid[m] = algebraic_batch(x, y, m)

    iterations = []
    if GEOMETRIC in wanted:
        init = est[HYPER].copy()
        have = valid[HYPER].copy()
        for fallback in (TAUBIN, KASA):
            if have.all():
                break
            miss = np.flatnonzero(~have)
            for t in miss:
                c, good = _single_fit(x[t], y[t], fallback)
                if good:
                    init[t], have[t] = c, True
        geo = np.full((T, 3), np.nan)
        conv = np.zeros(T, dtype=bool)
        rows = np.flatnonzero(have)
        if rows.size:
            theta, _, iters, term = lm_batch(x[rows], y[rows], init[rows], lm_opts)
            good = (term == GRADIENT) | (term == STEP)
            geo[rows[good]] = theta[good]
            conv[rows[good]] = True
            iterations = iters[good].tolist()
        est[GEOMETRIC], valid[GEOMETRIC] = geo, conv

    true_theta = config.circle.as_array()
    res = _ChunkResult({}, {}, {}, {}, iterations)
    for m in config.methods:
        err = est[m][valid[m]] - true_theta
        res.count[m] = int(err.shape[0])
        res.excluded[m] = int(T - err.shape[0])
        res.sum_error[m] = err.sum(axis=0)
        res.sum_outer[m] = np.einsum("ti,tj->ij", err, err)
    return res


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    rows: List[MseBreakdown]
    elapsed: float
    trials_completed: int
    status: str = "ok"
    warnings: tuple = ()
    mean_geometric_iterations: Optional[float] = None

    def row(self, method: str) -> MseBreakdown:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        env = os.environ.get("CIRCLEFIT_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise InputError(f"CIRCLEFIT_THREADS must be an integer, got {env!r}") from None
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))


def chunk_bounds(trials: int, n: int) -> List[tuple]:
    size = max(1, min(trials, _CHUNK_ELEMENTS // max(n, 1)))
    return [(s, min(s + size, trials)) for s in range(0, trials, size)]


def run_experiment(
    config: ExperimentConfig, threads: Optional[int] = None, lm_opts: Optional[LmOptions] = None
) -> ExperimentReport:
    """Run ``config.trials`` noisy trials and decompose each method's radius MSE."""
    t0 = time.perf_counter()
    frame = generate_arc_points(config)
    bounds = chunk_bounds(config.trials, config.n)
    workers = min(thread_count(threads), len(bounds))
    log.info("running %d trials in %d chunks on %d threads", config.trials, len(bounds), workers)

    def job(b):
        return _run_chunk(config, frame, b[0], b[1], lm_opts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, bounds))
    else:
        chunks = [job(b) for b in bounds]

    rows, warnings = [], []
    for m in config.methods:
        count = sum(c.count[m] for c in chunks)
        excluded = sum(c.excluded[m] for c in chunks)
        sum_err = np.array([math.fsum(c.sum_error[m][i] for c in chunks) for i in range(3)])
        sum_outer = np.array(
            [[math.fsum(c.sum_outer[m][i, j] for c in chunks) for j in range(3)] for i in range(3)]
        )
        if excluded > FAILURE_WARN_RATE * config.trials:
            warnings.append(f"{m}: {excluded} of {config.trials} trials failed")
        if count == 0:
            raise CircleFitError(f"{m}: every trial failed")
        rows.append(
            breakdown_from_moments(m, count, sum_err, sum_outer, frame, config.sigma, excluded)
        )
    iters = [i for c in chunks for i in c.geometric_iterations]
    return ExperimentReport(
        config=config,
        rows=rows,
        elapsed=time.perf_counter() - t0,
        trials_completed=config.trials,
        status="warning" if warnings else "ok",
        warnings=tuple(warnings),
        mean_geometric_iterations=float(np.mean(iters)) if iters else None,
    )


def sweep_n(config: ExperimentConfig, ns: Sequence[int], threads: Optional[int] = None):
    """One report per sample size, all other settings unchanged."""
    return [run_experiment(replace(config, n=int(n)), threads) for n in ns]
