"""Command-line front end: ``circlefit fit | bench | theory``.

Exit codes: 0 success, 1 usage or parse error, 2 degenerate data,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

from .algebraic import fit_algebraic
from .analysis import (
    TruePointFrame,
    algebraic_bias_natural,
    essential_bias,
    geometric_bias_full,
    kasa_essential_bias_arc,
    kcr_covariance,
    w_matrix,
)
from .bench import ConfigError, arc_angles, load_config, run_experiment, sweep_n
from .errors import (
    ArcTooSmallError,
    CircleFitError,
    DegenerateDataError,
    InputError,
    NumericalError,
)
from .geometric import fit_geometric
from .geometry import CircleGeom, as_point_set, objective_geometric
from .methods import ALL_METHODS, GEOMETRIC, KASA, normalize_method, parse_methods

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_NUMERICAL = 0, 1, 2, 3
BENCH_COLUMNS = ("method", "total_mse", "variance", "ess_bias_sq", "remainder", "excluded_trials")


class PointFileError(InputError):
    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def read_points(path) -> np.ndarray:
    """Read ``x,y`` lines; ``#`` comments, blank lines and an ``x,y`` header are skipped."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = [p for p in text.replace(",", " ").split()]
            if not rows and [p.lower() for p in parts] == ["x", "y"]:
                continue
            if len(parts) != 2:
                raise PointFileError(f"expected 'x,y', got {text!r}", lineno)
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                raise PointFileError(f"non-numeric value in {text!r}", lineno) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise PointFileError(f"non-finite value in {text!r}", lineno)
            rows.append((x, y))
    return np.array(rows, dtype=float).reshape(-1, 2)


def _num(x, digits: int) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, f".{digits}g")


def _to_json(obj, indent: int = 0) -> str:
    """JSON with every float written at 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_to_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(inner + _to_json(v, indent + 1) for v in seq) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return "null"
    return _num(obj, 17)


def _table(header: List[str], rows: List[list]) -> str:
    cells = [[_num(c, 6) if not isinstance(c, str) else c for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)


def _csv(header, rows) -> str:
    out = [",".join(header)]
    out += [",".join(c if isinstance(c, str) else _num(c, 17) for c in r) for r in rows]
    return "\n".join(out)


# ---------------------------------------------------------------- fit


def _fit_one(pts, method):
    rec = {"method": method}
    if method == GEOMETRIC:
        rep = fit_geometric(pts)
        c = rep.circle
        rec.update(kind="circle", a=c.a, b=c.b, R=c.R, objective=rep.objective)
        rec.update(iterations=rep.iterations, converged=rep.converged, termination=rep.termination)
        return rec
    res = fit_algebraic(pts, method)
    if isinstance(res.circle, CircleGeom):
        c = res.circle
        rec.update(kind="circle", a=c.a, b=c.b, R=c.R, objective=objective_geometric(pts, c))
    else:
        ln = res.circle
        d = pts @ np.array([ln.B, ln.C]) + ln.D
        rec.update(kind="line", B=ln.B, C=ln.C, D=ln.D, objective=float(d @ d))
    rec.update(eta=res.eta, path=res.path)
    return rec


def cmd_fit(args) -> int:
    pts = read_points(args.input)
    if pts.shape[0] < 3:
        print(f"error: need at least 3 points, got {pts.shape[0]}", file=sys.stderr)
        return EXIT_DEGENERATE
    pts = as_point_set(pts, min_points=3)
    methods = parse_methods(args.methods)
    records, status = [], EXIT_OK
    for m in methods:
        try:
            records.append(_fit_one(pts, m))
        except DegenerateDataError as exc:
            print(f"error: {m}: {exc}", file=sys.stderr)
            status = max(status, EXIT_DEGENERATE)
        except NumericalError as exc:
            print(f"error: {m}: {exc}", file=sys.stderr)
            status = max(status, EXIT_NUMERICAL)

    fmt = args.format
    if fmt == "json":
        print(_to_json({"n": int(pts.shape[0]), "results": records}))
    else:
        header = ["method", "kind", "a", "b", "R", "B", "C", "D", "objective", "diagnostics"]
        rows = []
        for r in records:
            if "iterations" in r:
                diag = f"iterations={r['iterations']} {r['termination']}"
            else:
                diag = f"path={r['path']} eta={_num(r['eta'], 17 if fmt == 'csv' else 6)}"
            rows.append([r["method"], r["kind"]] + [r.get(k) for k in "a b R B C D".split()] + [r["objective"], diag])
        if fmt == "table":
            # line columns are noise when every result is a circle, and vice versa
            keep = [i for i in range(len(header)) if any(r[i] is not None for r in rows)] or range(len(header))
            header, rows = [header[i] for i in keep], [[r[i] for i in keep] for r in rows]
        print(_csv(header, rows) if fmt == "csv" else _table(header, rows))
    return status


# ---------------------------------------------------------------- bench


def _bench_rows(report, with_n=False):
    rows = []
    for r in report.rows:
        row = [r.method, r.total_mse, r.variance_theory, r.ess_bias_sq, r.remainder, r.excluded]
        rows.append(([report.config.n] if with_n else []) + row)
    return rows


def _report_dict(report) -> dict:
    return {
        "config": report.config.as_dict(),
        "trials_completed": report.trials_completed,
        "status": report.status,
        "warnings": list(report.warnings),
        "rows": [
            {
                "method": r.method,
                "total_mse": r.total_mse,
                "variance": r.variance_theory,
                "ess_bias_sq": r.ess_bias_sq,
                "remainder": r.remainder,
                "excluded_trials": r.excluded,
                "mean_radius_error": r.empirical_bias,
            }
            for r in report.rows
        ],
    }


def cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.trials is not None:
        config = replace(config, trials=args.trials)
    if args.sweep_n:
        try:
            ns = [int(s) for s in args.sweep_n.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--sweep-n expects integers, got {args.sweep_n!r}", "n") from None
        reports = sweep_n(config, ns, args.threads)
    else:
        reports = [run_experiment(config, args.threads)]
    for rep in reports:
        for w in rep.warnings:
            print(f"warning: n={rep.config.n}: {w}", file=sys.stderr)

    sweep = bool(args.sweep_n)
    header = (["n"] if sweep else []) + list(BENCH_COLUMNS)
    rows = [row for rep in reports for row in _bench_rows(rep, sweep)]
    if args.format == "json":
        body = [_report_dict(r) for r in reports]
        print(_to_json(body if sweep else body[0]))
    elif args.format == "csv":
        print(_csv(header, rows))
    else:
        print(_table(header, rows))
        for rep in reports:
            print(f"n={rep.config.n} trials={rep.trials_completed} elapsed={rep.elapsed:.1f}s status={rep.status}")
    return EXIT_OK


# ---------------------------------------------------------------- theory


def cmd_theory(args) -> int:
    method = normalize_method(args.method)
    if args.sigma < 0 or args.radius <= 0 or args.n < 3:
        raise InputError("need n >= 3, sigma >= 0 and radius > 0")
    frame = TruePointFrame(
        CircleGeom(0.0, 0.0, args.radius), arc_angles(args.n, args.arc_degrees, args.arc_center_degrees)
    )
    # the Kasa arc guard runs first so a tiny arc is reported as such
    if method == KASA:
        ess = kasa_essential_bias_arc(frame, args.sigma).components
    else:
        ess = essential_bias(method, args.sigma, args.radius).components
    cov = kcr_covariance(w_matrix(frame), args.sigma)
    if method == GEOMETRIC:
        full = geometric_bias_full(frame, args.sigma).components
    else:
        full = algebraic_bias_natural(frame, method, args.sigma).components

    out = {
        "method": method,
        "n": args.n,
        "sigma": args.sigma,
        "radius": args.radius,
        "arc_degrees": args.arc_degrees,
        "kcr_covariance": [list(r) for r in cov],
        "radius_variance": cov[2, 2],
        "essential_bias": list(ess),
        "full_bias": list(full),
    }
    if args.format == "json":
        print(_to_json(out))
    elif args.format == "csv":
        rows = [["radius_variance", cov[2, 2], "", ""]]
        rows += [[f"kcr_row{i}", *cov[i]] for i in range(3)]
        rows += [["essential_bias", *ess], ["full_bias", *full]]
        print(_csv(["quantity", "c0", "c1", "c2"], rows))
    else:
        buf = io.StringIO()
        buf.write(f"method {method}, n={args.n}, sigma={_num(args.sigma, 6)}, R={_num(args.radius, 6)}, arc={_num(args.arc_degrees, 6)} deg\n")
        buf.write("KCR covariance of (a, b, R):\n")
        for row in cov:
            buf.write("  " + "  ".join(f"{_num(v, 6):>12}" for v in row) + "\n")
        buf.write(f"radius variance: {_num(cov[2, 2], 6)}\n")
        buf.write("essential bias (a, b, R): " + "  ".join(_num(v, 6) for v in ess) + "\n")
        buf.write("full bias (a, b, R):      " + "  ".join(_num(v, 6) for v in full))
        print(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circlefit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    formats = ("table", "csv", "json")

    p = sub.add_parser("fit", help="fit circles to a point file")
    p.add_argument("--input", required=True, help="text file with one 'x,y' per line")
    p.add_argument("--methods", default=",".join(m if m != GEOMETRIC else "geom" for m in ALL_METHODS))
    p.add_argument("--format", choices=formats, default="table")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("bench", help="run a Monte Carlo experiment")
    p.add_argument("--config", required=True, help="key = value experiment file")
    p.add_argument("--format", choices=formats, default="table")
    p.add_argument("--sweep-n", default=None, help="comma-separated sample sizes")
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default CIRCLEFIT_THREADS)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("theory", help="evaluate variance and bias formulas")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--arc-degrees", type=float, default=180.0)
    p.add_argument("--arc-center-degrees", type=float, default=0.0)
    p.add_argument("--method", default="geometric")
    p.add_argument("--format", choices=formats, default="table")
    p.set_defaults(func=cmd_theory)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"error: invalid config{key}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArcTooSmallError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DegenerateDataError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NumericalError, CircleFitError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
