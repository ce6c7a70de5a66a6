"""Bit-accurate golden model of the six-stage approximate posit dot-product MAC.

    out = acc + sum_i a_i (x~) b_i

Stages: decode -> multiply (+ exponent compare) -> align -> accumulate ->
normalize -> encode. Every stage is a plain function over integers so a
trace of intermediate values can be compared against RTL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from .multipliers import EXACT4, MultiplierSpec, multiply
from .posit import POSIT8_2, DecodedPosit, Kind, PositConfig, PositScalar, decode, encode

PIPELINE_FILL_CYCLES = 5


def latency_cycles(n_accumulations: int) -> int:
    """Cycles to retire ``n`` back-to-back accumulations: fill once, then one per cycle."""
    return PIPELINE_FILL_CYCLES + n_accumulations


def significand_width(config: PositConfig) -> int:
    """Multiplier operand width: hidden bit plus the longest fraction field."""
    return config.max_frac_bits + 1


@dataclass(frozen=True)
class AccumulatorConfig:
    """Fixed-point accumulator geometry.

    ``exact`` mode places every addend far enough left that alignment never
    drops a bit. ``truncate`` mode keeps ``width`` bits and right shifts
    discard LSBs, as a hardware datapath would.
    """

    width: int = 128
    mode: str = "exact"
    guard_bits: int = 6
    config: PositConfig = POSIT8_2

    def __post_init__(self):
        if self.mode not in ("exact", "truncate"):
            raise ValueError(f"accumulator mode must be 'exact' or 'truncate', not {self.mode!r}")
        if self.room < 0:
            raise ValueError(f"accumulator width {self.width} cannot hold a {2 * self.w}-bit product")
        if self.mode == "exact" and self.room < self.max_shift:
            raise ValueError(
                f"exact accumulator needs width >= {self.width - self.room + self.max_shift} "
                f"to absorb shifts up to {self.max_shift}, got {self.width}"
            )

    @cached_property
    def w(self) -> int:
        return significand_width(self.config)

    @cached_property
    def frac(self) -> int:
        return self.w - 1

    @cached_property
    def max_shift(self) -> int:
        # product exponents span [2*min_scale, 2*max_scale]
        return 4 * self.config.max_scale

    @cached_property
    def room(self) -> int:
        """Left offset of a product's LSB inside the register (sign and guard bits reserved)."""
        return self.width - 1 - self.guard_bits - 2 * self.w

    @cached_property
    def anchor(self) -> int:
        """Scale of the register LSB relative to e_max."""
        return -(2 * self.frac + self.room)

    @classmethod
    def for_length(cls, n_addends: int, config: PositConfig = POSIT8_2) -> AccumulatorConfig:
        """Smallest exact accumulator that can sum ``n_addends`` without overflow."""
        guard = max(2, (n_addends + 1).bit_length() + 1)
        w = significand_width(config)
        return cls(1 + guard + 2 * w + 4 * config.max_scale, "exact", guard, config)


EXACT_ACC = AccumulatorConfig()


@dataclass(frozen=True)
class DotProductRequest:
    va: Sequence[PositScalar]
    vb: Sequence[PositScalar]
    acc: PositScalar = PositScalar(0)
    multiplier: MultiplierSpec = EXACT4

    def __post_init__(self):
        if len(self.va) != len(self.vb):
            raise ValueError(f"vector lengths differ: {len(self.va)} vs {len(self.vb)}")
        if not self.va:
            raise ValueError("dot product needs at least one element")


@dataclass
class ElementDecode:
    s_ab: int  # 1 = negative
    e_ab: int
    sig_a: int
    sig_b: int
    zero: bool


@dataclass
class PipelineTrace:
    s_ab: list[int] = field(default_factory=list)
    e_ab: list[int] = field(default_factory=list)
    prod: list[int] = field(default_factory=list)
    e_max: int | None = None
    aligned: list[int] = field(default_factory=list)
    csa_sum: int = 0
    lzc: int | None = None
    f_e: int | None = None
    f_m: int | None = None
    out: PositScalar | None = None
    nar: bool = False


def _padded(d: DecodedPosit, frac: int) -> int:
    return d.significand << (frac - d.frac_bits)


def decode_stage(req: DotProductRequest, config: PositConfig = POSIT8_2):
    """Per element sign XOR, exponent sum and padded significands; plus NaR flag."""
    frac = significand_width(config) - 1
    elements = []
    nar = req.acc.is_nar
    for a, b in zip(req.va, req.vb):
        da, db = decode(a), decode(b)
        if da.kind is Kind.NAR or db.kind is Kind.NAR:
            nar = True
        if da.kind is not Kind.NORMAL or db.kind is not Kind.NORMAL:
            elements.append(ElementDecode(0, 0, 0, 0, True))
            continue
        elements.append(ElementDecode(
            s_ab=int(da.sign != db.sign),
            e_ab=da.scale + db.scale,
            sig_a=_padded(da, frac),
            sig_b=_padded(db, frac),
            zero=False,
        ))
    return elements, nar


def multiply_stage(elements: list[ElementDecode], multiplier: MultiplierSpec) -> list[int]:
    """Significand products; each is worth prod * 2**(e_ab - 2*frac)."""
    return [0 if el.zero else multiply(multiplier, el.sig_a, el.sig_b) for el in elements]


def exponent_compare(exponents: list[int], valid: list[bool]) -> int | None:
    cands = [e for e, ok in zip(exponents, valid) if ok]
    return max(cands) if cands else None


def align_stage(products: list[int], signs: list[int], exponents: list[int], e_max: int,
                acc_cfg: AccumulatorConfig = EXACT_ACC) -> list[int]:
    """Place each unsigned product at the anchor, shift right by e_max - e, negate if signed.

    Returned values are W-bit two's-complement patterns.
    """
    mask = (1 << acc_cfg.width) - 1
    out = []
    for p, s, e in zip(products, signs, exponents):
        shift = e_max - e
        if shift < 0:
            raise ValueError(f"exponent {e} exceeds e_max {e_max}")
        if acc_cfg.mode == "exact" and shift > acc_cfg.room:
            raise ValueError(f"shift {shift} would drop bits in exact mode")
        mag = (p << acc_cfg.room) >> shift
        out.append((-mag if s else mag) & mask)
    return out


def accumulate_stage(aligned: list[int], width: int) -> int:
    """Modular W-bit sum (what a CSA tree plus final adder computes)."""
    mask = (1 << width) - 1
    total = 0
    for x in aligned:
        total = (total + x) & mask
    return total


def to_signed(x: int, width: int) -> int:
    return x - (1 << width) if x >> (width - 1) else x


def normalize_stage(csa_sum: int, e_max: int, acc_cfg: AccumulatorConfig = EXACT_ACC):
    """LZC-based normalization of a nonzero sum.

    Returns (sign, lzc, f_e, f_m) where f_m is the magnitude shifted so its
    leading one sits at bit W-1, i.e. f_m / 2**(W-1) lies in [1, 2).
    """
    width = acc_cfg.width
    value = to_signed(csa_sum, width)
    if value == 0:
        raise ValueError("normalize_stage needs a nonzero sum")
    sign = -1 if value < 0 else 1
    mag = abs(value)
    lzc = width - mag.bit_length()
    f_m = mag << lzc
    f_e = e_max + acc_cfg.anchor + (width - 1 - lzc)
    return sign, lzc, f_e, f_m


def encode_stage(sign: int, f_e: int, f_m: int, width: int, config: PositConfig = POSIT8_2) -> PositScalar:
    return encode(DecodedPosit(Kind.NORMAL, sign, f_e, f_m, width - 1), config)


def dot_product(req: DotProductRequest, acc_cfg: AccumulatorConfig = EXACT_ACC) -> tuple[PositScalar, PipelineTrace]:
    config = acc_cfg.config
    if req.multiplier.width != acc_cfg.w:
        raise ValueError(f"multiplier width {req.multiplier.width} != significand width {acc_cfg.w}")
    n_addends = len(req.va) + 1
    if n_addends > (1 << (acc_cfg.guard_bits - 1)):
        raise ValueError(f"{n_addends} addends overflow {acc_cfg.guard_bits} guard bits")

    trace = PipelineTrace()
    elements, nar = decode_stage(req, config)
    trace.s_ab = [el.s_ab for el in elements]
    trace.e_ab = [el.e_ab for el in elements]
    if nar:
        trace.nar = True
        trace.out = PositScalar(config.nar_bits, config)
        return trace.out, trace

    trace.prod = multiply_stage(elements, req.multiplier)

    # acc joins the addend set as a product-shaped term on the 2*frac grid
    frac = acc_cfg.frac
    dacc = decode(req.acc)
    acc_valid = dacc.kind is Kind.NORMAL
    prods = list(trace.prod)
    signs = list(trace.s_ab)
    exps = list(trace.e_ab)
    valid = [not el.zero for el in elements]
    prods.append(_padded(dacc, frac) << frac if acc_valid else 0)
    signs.append(int(acc_valid and dacc.sign < 0))
    exps.append(dacc.scale if acc_valid else 0)
    valid.append(acc_valid)

    trace.e_max = exponent_compare(exps, valid)
    if trace.e_max is None:
        trace.out = PositScalar(0, config)
        return trace.out, trace

    trace.aligned = align_stage(
        [p if ok else 0 for p, ok in zip(prods, valid)],
        signs,
        [e if ok else trace.e_max for e, ok in zip(exps, valid)],
        trace.e_max,
        acc_cfg,
    )
    trace.csa_sum = accumulate_stage(trace.aligned, acc_cfg.width)
    if trace.csa_sum == 0:
        trace.out = PositScalar(0, config)
        return trace.out, trace

    sign, trace.lzc, trace.f_e, trace.f_m = normalize_stage(trace.csa_sum, trace.e_max, acc_cfg)
    trace.out = encode_stage(sign, trace.f_e, trace.f_m, acc_cfg.width, config)
    return trace.out, trace


def dot_product_chunked(va: Sequence[PositScalar], vb: Sequence[PositScalar], acc: PositScalar,
                        multiplier: MultiplierSpec = EXACT4, lanes: int = 4,
                        feedback: str = "posit", acc_cfg: AccumulatorConfig = EXACT_ACC) -> PositScalar:
    """Long dot product on an ``lanes``-wide unit.

    ``feedback='posit'`` re-decodes the encoded output as the next request's
    acc. ``feedback='wide'`` keeps the partial sum in the register, which in
    exact mode equals one request spanning the whole vector with a single
    final rounding.
    """
    if feedback == "wide":
        if acc_cfg.mode != "exact":
            raise ValueError("wide feedback is only modelled for the exact accumulator")
        cfg = AccumulatorConfig.for_length(len(va) + 1, acc_cfg.config)
        out, _ = dot_product(DotProductRequest(list(va), list(vb), acc, multiplier), cfg)
        return out
    if feedback != "posit":
        raise ValueError(f"unknown feedback mode {feedback!r}")
    for start in range(0, len(va), lanes):
        req = DotProductRequest(list(va[start:start + lanes]), list(vb[start:start + lanes]), acc, multiplier)
        acc, _ = dot_product(req, acc_cfg)
    return acc


# ---------------------------------------------------------------------------
# trace dump (one line per evaluation, hexadecimal integers)

TRACE_FIELDS = ("va", "vb", "acc", "s_ab", "e_ab", "prod", "e_max", "aligned", "sum", "lzc", "f_e", "f_m", "out")
TRACE_HEADER = "# " + ";".join(TRACE_FIELDS)


def _hex(x: int | None) -> str:
    if x is None:
        return "x"
    return f"-0x{-x:x}" if x < 0 else f"0x{x:x}"


def _hex_list(xs) -> str:
    return ",".join(_hex(x) for x in xs)


def format_trace(req: DotProductRequest, trace: PipelineTrace) -> str:
    return ";".join([
        _hex_list(p.bits for p in req.va),
        _hex_list(p.bits for p in req.vb),
        _hex(req.acc.bits),
        _hex_list(trace.s_ab),
        _hex_list(trace.e_ab),
        _hex_list(trace.prod),
        _hex(trace.e_max),
        _hex_list(trace.aligned),
        _hex(trace.csa_sum),
        _hex(trace.lzc),
        _hex(trace.f_e),
        _hex(trace.f_m),
        _hex(trace.out.bits),
    ])


def _parse_int(tok: str) -> int | None:
    return None if tok == "x" else int(tok, 16)


def parse_trace(line: str) -> dict:
    """Inverse of :func:`format_trace`; lists come back as lists of ints."""
    parts = line.rstrip("\n").split(";")
    if len(parts) != len(TRACE_FIELDS):
        raise ValueError(f"trace line has {len(parts)} fields, expected {len(TRACE_FIELDS)}")
    out = {}
    for name, tok in zip(TRACE_FIELDS, parts):
        if name in ("va", "vb", "s_ab", "e_ab", "prod", "aligned"):
            out[name] = [_parse_int(t) for t in tok.split(",")] if tok else []
        else:
            out[name] = _parse_int(tok)
    return out
