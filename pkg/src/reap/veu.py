"""Analytical cycle model for a vector execution unit of N shared MAC lanes."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

SCHEMA_VERSION = 1
CSV_FIELDS = ("layer", "windows", "batches", "cycles_per_batch", "compute", "feed_modeled", "feed_literal")
LITERAL_BEAT_FACTOR = 256

FOOTNOTE = (
    "compute = kernel_count * batches * cycles_per_batch; the shorter per-kernel figure windows/N "
    "omits the cycles_per_batch factor. feed_literal = 3*N*256 and feed_modeled = beats*N are both "
    "reported because the two readings disagree by a factor of 256."
)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    H: int
    W: int
    C: int
    K: int
    S: int = 1
    kernel_count: int = 1
    N: int = 1
    pipeline_fill: int = 5
    axi_beats_per_mac: int = 3
    regfile_depth: int = 32

    def __post_init__(self):
        for name in ("H", "W", "C", "K", "S", "kernel_count", "N", "regfile_depth"):
            if getattr(self, name) <= 0:
                raise GeometryError(f"{name} must be positive, got {getattr(self, name)}")
        if self.pipeline_fill < 0 or self.axi_beats_per_mac < 0:
            raise GeometryError("pipeline_fill and axi_beats_per_mac must be non-negative")
        for name, dim in (("H", self.H), ("W", self.W)):
            if self.K > dim:
                raise GeometryError(f"kernel {self.K} larger than {name}={dim}")
            if (dim - self.K) % self.S:
                raise GeometryError(f"{name}={dim}: ({dim}-K={self.K}) not divisible by stride {self.S}")


@dataclass(frozen=True)
class CycleReport:
    layer: str
    windows_per_kernel: int
    batches: int
    cycles_per_batch: int
    kernel_count: int
    compute_cycles: int
    feed_modeled: int
    feed_literal: int

    @property
    def total(self) -> int:
        """Compute plus modeled feed; no overlap is scheduled."""
        return self.compute_cycles + self.feed_modeled

    def check(self, n: int) -> None:
        if self.compute_cycles != self.kernel_count * self.batches * self.cycles_per_batch:
            raise AssertionError(f"{self.layer}: compute_cycles inconsistent")
        if not (self.batches * n >= self.windows_per_kernel > (self.batches - 1) * n):
            raise AssertionError(f"{self.layer}: batches inconsistent with N={n}")

    def row(self) -> dict:
        return {"layer": self.layer, "windows": self.windows_per_kernel, "batches": self.batches,
                "cycles_per_batch": self.cycles_per_batch, "compute": self.compute_cycles,
                "feed_modeled": self.feed_modeled, "feed_literal": self.feed_literal}


def windows_per_kernel(spec: WorkloadSpec) -> int:
    return ((spec.H - spec.K) // spec.S + 1) * ((spec.W - spec.K) // spec.S + 1)


def feed_cycles(spec: WorkloadSpec) -> dict[str, int]:
    return {"modeled": spec.axi_beats_per_mac * spec.N,
            "literal": 3 * spec.N * LITERAL_BEAT_FACTOR}


def compute_cycles(spec: WorkloadSpec, layer: str = "layer") -> CycleReport:
    win = windows_per_kernel(spec)
    batches = math.ceil(win / spec.N)
    per_batch = spec.pipeline_fill + spec.K * spec.K * spec.C
    feed = feed_cycles(spec)
    rep = CycleReport(layer, win, batches, per_batch, spec.kernel_count, spec.kernel_count * batches * per_batch,
                      feed["modeled"], feed["literal"])
    rep.check(spec.N)
    return rep


@dataclass
class LayerPlan:
    reports: list[CycleReport]
    notices: list[str]

    @property
    def totals(self) -> dict[str, int]:
        return {
            "compute": sum(r.compute_cycles for r in self.reports),
            "feed_modeled": sum(r.feed_modeled for r in self.reports),
            "feed_literal": sum(r.feed_literal for r in self.reports),
        }


def layer_report(layers: list[dict], n_macs: int, input_shape=(1, 28, 28), pipeline_fill: int = 5) -> LayerPlan:
    """Walk a layer list (same dict format as network configs) and cost conv/fc layers.

    FC layers are costed as 1x1 convolutions over a 1x1 image with K^2*C equal
    to the number of input features.
    """
    if n_macs <= 0:
        raise GeometryError(f"N must be positive, got {n_macs}")
    c, h, w = input_shape
    flat = None
    reports, notices = [], []
    n_conv = n_fc = 0
    for i, d in enumerate(layers):
        kind = d.get("type")
        if kind == "conv":
            if flat is not None:
                raise GeometryError(f"layer {i}: conv after fc is not supported")
            n_conv += 1
            k, s, out = int(d["kernel"]), int(d.get("stride", 1)), int(d["out_ch"])
            spec = WorkloadSpec(h, w, c, k, s, out, n_macs, pipeline_fill)
            reports.append(compute_cycles(spec, f"conv{n_conv}"))
            c, h, w = out, (h - k) // s + 1, (w - k) // s + 1
        elif kind == "fc":
            n_fc += 1
            feats = flat if flat is not None else c * h * w
            units = int(d["units"])
            spec = WorkloadSpec(1, 1, feats, 1, 1, units, n_macs, pipeline_fill)
            reports.append(compute_cycles(spec, f"fc{n_fc}"))
            flat = units
        elif kind == "maxpool":
            size = int(d.get("size", 2))
            if h % size or w % size:
                raise GeometryError(f"layer {i}: maxpool {size} on {h}x{w}")
            h, w = h // size, w // size
            notices.append(f"layer {i} ({kind}): not modeled (off-chip)")
        elif kind in ("tanh", "softmax", "flatten"):
            notices.append(f"layer {i} ({kind}): not modeled (off-chip)")
        else:
            notices.append(f"layer {i} ({kind}): unsupported kind, skipped")
    return LayerPlan(reports, notices)


def render(plan: LayerPlan, n_macs: int, fmt: str = "csv") -> str:
    if fmt == "json":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "n_macs": n_macs,
            "layers": [dict(asdict(r), total=r.total) for r in plan.reports],
            "totals": plan.totals,
            "notices": plan.notices,
            "footnote": FOOTNOTE,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# schema_version={SCHEMA_VERSION} n_macs={n_macs}\n")
        wr = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        wr.writeheader()
        for r in plan.reports:
            wr.writerow(r.row())
        t = plan.totals
        wr.writerow({"layer": "total", "windows": "", "batches": "", "cycles_per_batch": "",
                     "compute": t["compute"], "feed_modeled": t["feed_modeled"], "feed_literal": t["feed_literal"]})
        for note in plan.notices:
            buf.write(f"# {note}\n")
        buf.write(f"# {FOOTNOTE}\n")
        return buf.getvalue()
    if fmt == "text":
        lines = [f"schema_version {SCHEMA_VERSION}  N={n_macs}",
                 f"{'layer':<8}{'windows':>9}{'batches':>9}{'cyc/batch':>11}{'compute':>11}{'feed_mod':>10}"
                 f"{'feed_lit':>10}"]
        for r in plan.reports:
            lines.append(f"{r.layer:<8}{r.windows_per_kernel:>9}{r.batches:>9}{r.cycles_per_batch:>11}"
                         f"{r.compute_cycles:>11}{r.feed_modeled:>10}{r.feed_literal:>10}")
        t = plan.totals
        lines.append(f"{'total':<8}{'':>9}{'':>9}{'':>11}{t['compute']:>11}{t['feed_modeled']:>10}"
                     f"{t['feed_literal']:>10}")
        lines += [f"note: {n}" for n in plan.notices]
        lines.append(f"note: {FOOTNOTE}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
