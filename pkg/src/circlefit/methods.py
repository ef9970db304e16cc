"""Method tags understood across the package."""

from .algebraic import ALGEBRAIC_METHODS, HYPER, KASA, PRATT, TAUBIN
from .errors import UnsupportedMethodError

GEOMETRIC = "geometric"
ALL_METHODS = (KASA, PRATT, TAUBIN, HYPER, GEOMETRIC)
BENCH_METHODS = (PRATT, TAUBIN, GEOMETRIC, HYPER)

_ALIASES = {"geom": GEOMETRIC, "geo": GEOMETRIC, "kåsa": KASA}


def normalize_method(tag: str) -> str:
    """Canonical lower-case tag; ``geom`` is accepted for ``geometric``."""
    t = str(tag).strip().lower()
    t = _ALIASES.get(t, t)
    if t not in ALL_METHODS:
        raise UnsupportedMethodError(f"unknown method {tag!r}; expected one of {ALL_METHODS}")
    return t


def parse_methods(tags) -> tuple:
    """Parse ``"kasa,pratt"`` or an iterable of tags, keeping order and dropping repeats."""
    items = tags.split(",") if isinstance(tags, str) else list(tags)
    out = []
    for item in items:
        if str(item).strip():
            m = normalize_method(item)
            if m not in out:
                out.append(m)
    if not out:
        raise UnsupportedMethodError("no methods given")
    return tuple(out)


__all__ = [
    "ALGEBRAIC_METHODS",
    "ALL_METHODS",
    "GEOMETRIC",
    "HYPER",
    "KASA",
    "PRATT",
    "BENCH_METHODS",
    "TAUBIN",
    "normalize_method",
    "parse_methods",
]
