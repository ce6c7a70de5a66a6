"""Unsigned significand multipliers: exact, Mitchell (truncated), DR-ALM, LUT.

All strategies take two ``w``-bit unsigned operands and return a ``2w``-bit
product. Normalization of the product is left to the caller.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np


class ConfigurationError(ValueError):
    pass


class LutParseError(ConfigurationError):
    pass


class MultiplierKind(enum.Enum):
    EXACT = "exact"
    MITCHELL = "mitchell"
    DRALM = "dralm"
    LUT = "lut"


# accepted CLI / config spellings
KIND_ALIASES = {
    "exact": MultiplierKind.EXACT,
    "mitchell": MultiplierKind.MITCHELL,
    "mitchell-trunc": MultiplierKind.MITCHELL,
    "mitchell_trunc": MultiplierKind.MITCHELL,
    "dralm": MultiplierKind.DRALM,
    "dr-alm": MultiplierKind.DRALM,
    "dr_alm": MultiplierKind.DRALM,
    "lut": MultiplierKind.LUT,
}


@dataclass(frozen=True)
class MultiplierSpec:
    kind: MultiplierKind = MultiplierKind.EXACT
    width: int = 4
    trunc: int | None = None
    lut_path: str | None = None
    table: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 2 <= self.width <= 16 and self.kind is not MultiplierKind.LUT:
            raise ConfigurationError(f"operand width {self.width} outside [2, 16]")
        if self.kind in (MultiplierKind.MITCHELL, MultiplierKind.DRALM):
            # classic Mitchell keeps every bit; DR-ALM defaults to dropping the last one
            default = self.width if self.kind is MultiplierKind.MITCHELL else self.width - 1
            t = default if self.trunc is None else self.trunc
            if not 1 <= t <= self.width:
                raise ConfigurationError(f"truncation t={t} outside [1, {self.width}]")
            object.__setattr__(self, "trunc", t)
        if self.kind is MultiplierKind.LUT:
            if self.table is None:
                raise ConfigurationError("LUT multiplier needs a table; use load_lut()")
            side = 1 << self.width
            if self.table.shape != (side, side):
                raise ConfigurationError(f"LUT table shape {self.table.shape} != ({side}, {side})")
            self.table.setflags(write=False)

    @property
    def name(self) -> str:
        if self.kind is MultiplierKind.EXACT:
            return "exact"
        if self.kind is MultiplierKind.LUT:
            return f"lut[{Path(self.lut_path).name if self.lut_path else 'memory'}]"
        return f"{self.kind.value}(t={self.trunc})"

    def __hash__(self):
        return hash((self.kind, self.width, self.trunc, self.lut_path))


EXACT4 = MultiplierSpec(MultiplierKind.EXACT, 4)


def make_spec(kind: str | MultiplierKind, width: int = 4, trunc: int | None = None,
              lut_path: str | None = None) -> MultiplierSpec:
    """Build a spec from loose (CLI/config) arguments."""
    if isinstance(kind, str):
        try:
            kind = KIND_ALIASES[kind.lower()]
        except KeyError:
            raise ConfigurationError(f"unknown multiplier kind {kind!r}") from None
    if kind is MultiplierKind.LUT:
        if not lut_path:
            raise ConfigurationError("LUT multiplier requires a lut path")
        spec = load_lut(lut_path)
        if spec.width != width:
            raise ConfigurationError(f"LUT {lut_path} has width {spec.width}, expected {width}")
        return spec
    return MultiplierSpec(kind, width, trunc)


def exact_oracle(a: int, b: int) -> int:
    return a * b


def _truncate(x: int, t: int, compensate: bool) -> tuple[int, int]:
    """Keep ``t`` bits below the leading one; returns (operand, leading-one index)."""
    k = x.bit_length() - 1
    if k > t:
        drop = k - t
        x = (x >> drop) << drop
        if compensate:
            x |= 1 << drop
    return x, k


def mitchell_product(a: int, b: int, t: int, compensate: bool = False) -> int:
    """Mitchell log-domain product with optional DR-ALM style operand truncation.

    log2(2^k (1 + f)) ~ k + f; the fractional sum is antilogged with the
    same linear approximation.
    """
    if a == 0 or b == 0:
        return 0
    a, ka = _truncate(a, t, compensate)
    b, kb = _truncate(b, t, compensate)
    top = max(ka, kb)
    frac = ((a - (1 << ka)) << (top - ka)) + ((b - (1 << kb)) << (top - kb))
    base = min(ka, kb)
    if frac < (1 << top):
        return ((1 << top) + frac) << base
    return frac << (base + 1)


def multiply(spec: MultiplierSpec, a: int, b: int) -> int:
    limit = 1 << spec.width
    if not (0 <= a < limit and 0 <= b < limit):
        raise ValueError(f"operands ({a}, {b}) exceed {spec.width}-bit width")
    if a == 0 or b == 0:
        return 0
    kind = spec.kind
    if kind is MultiplierKind.EXACT:
        p = a * b
    elif kind is MultiplierKind.MITCHELL:
        p = mitchell_product(a, b, spec.trunc)
    elif kind is MultiplierKind.DRALM:
        p = mitchell_product(a, b, spec.trunc, compensate=True)
    else:
        p = int(spec.table[a, b])
    return min(p, (1 << (2 * spec.width)) - 1)


@lru_cache(maxsize=64)
def product_table(spec: MultiplierSpec) -> np.ndarray:
    """All products as a (2^w, 2^w) int64 array."""
    if spec.kind is MultiplierKind.LUT:
        return spec.table
    side = 1 << spec.width
    out = np.array([[multiply(spec, a, b) for b in range(side)] for a in range(side)], dtype=np.int64)
    out.setflags(write=False)
    return out


def dump_lut(spec: MultiplierSpec, path: str | Path) -> Path:
    path = Path(path)
    table = product_table(spec)
    side = 1 << spec.width
    with path.open("w", newline="") as fh:
        fh.write(f"# {spec.name} width={spec.width}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "product"])
        for a in range(side):
            for b in range(side):
                w.writerow([a, b, int(table[a, b])])
    return path


def load_lut(path: str | Path, width: int | None = None) -> MultiplierSpec:
    """Parse a LUT CSV (``a,b,product``; ``#`` comments) into a Lut spec.

    The width is inferred from the largest operand unless given.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read LUT file {path}: {exc.strerror}") from exc

    entries: dict[tuple[int, int], tuple[int, int]] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if not header_seen:
            if cells != ["a", "b", "product"]:
                raise LutParseError(f"{path}:{lineno}: expected header 'a,b,product', got {line!r}")
            header_seen = True
            continue
        if len(cells) != 3:
            raise LutParseError(f"{path}:{lineno}: expected 3 fields, got {len(cells)}")
        try:
            a, b, p = (int(c) for c in cells)
        except ValueError:
            raise LutParseError(f"{path}:{lineno}: non-integer field in {line!r}") from None
        if min(a, b, p) < 0:
            raise LutParseError(f"{path}:{lineno}: negative value in {line!r}")
        if (a, b) in entries:
            raise LutParseError(f"{path}:{lineno}: duplicate entry ({a},{b}), first on line {entries[(a, b)][1]}")
        entries[(a, b)] = (p, lineno)

    if not header_seen:
        raise LutParseError(f"{path}: missing header 'a,b,product'")
    if width is None:
        width = max(max(max(a, b) for a, b in entries).bit_length(), 1) if entries else 1
    side = 1 << width
    table = np.zeros((side, side), dtype=np.int64)
    limit = 1 << (2 * width)
    for (a, b), (p, lineno) in entries.items():
        if a >= side or b >= side:
            raise LutParseError(f"{path}:{lineno}: operand ({a},{b}) exceeds width {width}")
        if p >= limit:
            raise LutParseError(f"{path}:{lineno}: product {p} exceeds {2 * width} bits")
        table[a, b] = p
    for a in range(side):
        for b in range(side):
            if (a, b) not in entries:
                raise LutParseError(f"{path}: missing entry ({a},{b})")
    return MultiplierSpec(MultiplierKind.LUT, width, lut_path=str(path), table=table)
