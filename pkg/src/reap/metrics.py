"""Exhaustive error characterization of multipliers and the posit MAC.

Definitions used throughout (x exact, y approximate, ED = |y - x|):

    NMED    = mean(ED) / max|x|
    MRED    = mean(ED / |x|)          over x != 0
    WCE     = max(ED)
    WCE_rel = max(ED / |x|)           over x != 0

Sums are accumulated exactly (ED sums as exact rationals, relative error
sums with ``math.fsum``) so the result does not depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .multipliers import EXACT4, MultiplierSpec, multiply
from .pipeline import AccumulatorConfig, DotProductRequest, EXACT_ACC, dot_product
from .posit import POSIT8_2, PositScalar, to_real

SCHEMA_VERSION = 1
CSV_FIELDS = ("design", "error_pct", "nmed", "mred", "wce", "wce_rel", "samples")


@dataclass(frozen=True)
class ErrorMetrics:
    nmed: float
    mred: float
    wce: float
    wce_rel: float
    samples: int
    max_exact: float = 0.0
    sum_ed: Fraction = Fraction(0)

    @property
    def error_pct(self) -> float:
        return 100.0 * self.nmed


def summarize(exact, approx) -> ErrorMetrics:
    """Metrics from paired exact/approximate values (ints, floats or Fractions)."""
    sum_ed = Fraction(0)
    rel = []
    wce = Fraction(0)
    max_exact = Fraction(0)
    samples = 0
    for x, y in zip(exact, approx):
        x, y = Fraction(x), Fraction(y)
        ed = abs(y - x)
        samples += 1
        sum_ed += ed
        wce = max(wce, ed)
        max_exact = max(max_exact, abs(x))
        if x != 0:
            rel.append(ed / abs(x))
    if samples == 0:
        raise ValueError("empty evaluation domain")
    nmed = sum_ed / (samples * max_exact) if max_exact else Fraction(0)
    rel_f = [float(r) for r in rel]
    return ErrorMetrics(
        nmed=float(nmed),
        mred=math.fsum(rel_f) / len(rel_f) if rel_f else 0.0,
        wce=float(wce),
        wce_rel=max(rel_f, default=0.0),
        samples=samples,
        max_exact=float(max_exact),
        sum_ed=sum_ed,
    )


def evaluate_multiplier_exhaustive(spec: MultiplierSpec, width: int | None = None) -> ErrorMetrics:
    """All unsigned pairs a, b < 2^w against the exact product."""
    w = spec.width if width is None else width
    if w != spec.width:
        raise ValueError(f"spec width {spec.width} != requested width {w}")
    if w > 8:
        raise ValueError("exhaustive multiplier evaluation is limited to w <= 8")
    side = 1 << w
    exact, approx = [], []
    for a in range(side):
        for b in range(side):
            exact.append(a * b)
            approx.append(multiply(spec, a, b))
    return summarize(exact, approx)


def _mac_row(args):
    a, spec, acc_cfg, config = args
    pa = PositScalar(a, config)
    zero = PositScalar(0, config)
    outs = []
    for b in range(1 << config.n):
        if b == config.nar_bits:
            continue
        out, _ = dot_product(DotProductRequest([pa], [PositScalar(b, config)], zero, spec), acc_cfg)
        outs.append(out.bits)
    return outs


def mac_outputs(spec: MultiplierSpec, acc_cfg: AccumulatorConfig = EXACT_ACC, threads: int = 1) -> np.ndarray:
    """Single-element MAC outputs (acc = 0) for every non-NaR operand pair, row-major."""
    config = acc_cfg.config
    rows = [a for a in range(1 << config.n) if a != config.nar_bits]
    args = [(a, spec, acc_cfg, config) for a in rows]
    if threads > 1:
        with ProcessPoolExecutor(threads) as pool:
            results = list(pool.map(_mac_row, args, chunksize=8))
    else:
        results = [_mac_row(x) for x in args]
    return np.array(results, dtype=np.int64).ravel()


@lru_cache(maxsize=8)
def _reference_bits(spec: MultiplierSpec, acc_cfg: AccumulatorConfig) -> tuple[int, ...]:
    # single-threaded: the result is identical either way and this runs once per process
    return tuple(mac_outputs(spec, acc_cfg).tolist())


def evaluate_mac_exhaustive(spec: MultiplierSpec, acc_cfg: AccumulatorConfig = EXACT_ACC,
                            reference: str = "rounded", threads: int = 1) -> ErrorMetrics:
    """Error of the multiplier-integrated MAC over all (a, b) non-NaR posit pairs.

    ``reference='rounded'`` compares against the accurate MAC output, i.e.
    the correctly rounded posit of a*b. ``'real'`` uses the unrounded real
    product, which charges posit rounding to every design including the
    exact one.
    """
    config = acc_cfg.config
    approx_bits = mac_outputs(spec, acc_cfg, threads)
    values = {b: to_real(PositScalar(b, config)) for b in range(1 << config.n) if b != config.nar_bits}
    approx = [values[int(b)] for b in approx_bits]
    operands = [values[b] for b in sorted(values)]
    if reference == "rounded":
        ref_spec = EXACT4 if spec.width == 4 else MultiplierSpec(width=spec.width)
        ref_bits = approx_bits if spec == ref_spec else _reference_bits(ref_spec, acc_cfg)
        exact = [values[int(b)] for b in ref_bits]
    elif reference == "real":
        exact = [Fraction(x) * Fraction(y) for x in operands for y in operands]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    return summarize(exact, approx)


# ---------------------------------------------------------------------------
# design error report


def _row_dict(name: str, m: ErrorMetrics) -> dict:
    return {
        "design": name,
        "error_pct": f"{m.error_pct:.2f}",
        "nmed": f"{m.nmed:.6e}",
        "mred": f"{m.mred:.6e}",
        "wce": f"{m.wce:.6e}",
        "wce_rel": f"{m.wce_rel:.6e}",
        "samples": m.samples,
    }


def render_csv(rows: list[tuple[str, ErrorMetrics]]) -> str:
    _validate(rows)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for name, m in rows:
        w.writerow(_row_dict(name, m))
    return buf.getvalue()


def render_json(rows: list[tuple[str, ErrorMetrics]]) -> str:
    _validate(rows)
    doc = {"schema_version": SCHEMA_VERSION, "rows": [_row_dict(n, m) for n, m in rows]}
    return json.dumps(doc, indent=2) + "\n"


def render_text(rows: list[tuple[str, ErrorMetrics]]) -> str:
    _validate(rows)
    lines = [f"{'design':<24} {'error %':>8} {'MRED':>10} {'WCE_rel':>10} {'samples':>8}"]
    for name, m in rows:
        lines.append(f"{name:<24} {m.error_pct:>8.2f} {m.mred:>10.4f} {m.wce_rel:>10.4f} {m.samples:>8}")
    return "\n".join(lines) + "\n"


def _validate(rows):
    if not rows:
        raise ValueError("error table needs at least one row")
    for name, _ in rows:
        if not name or not name.strip():
            raise ValueError("error table row has an empty design name")


def emit_table(rows: list[tuple[str, ErrorMetrics]], path: str | Path, fmt: str | None = None) -> Path:
    """Write the table as CSV or JSON (chosen by ``fmt`` or the file suffix)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    text = {"csv": render_csv, "json": render_json, "text": render_text}[fmt](rows)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write error table to {path}: {exc.strerror}") from exc
    return path


def metrics_dict(m: ErrorMetrics) -> dict:
    d = asdict(m)
    d["sum_ed"] = str(m.sum_ed)
    d["error_pct"] = m.error_pct
    return d
