"""Posit encode/decode/round for arbitrary (n, es); posit(8,2) is the default.

A posit bit pattern is held as an unsigned integer of ``n`` bits. Negative
values are the two's complement of the positive pattern. Pattern ``0`` is
zero and ``1 << (n - 1)`` is NaR.

Rounding is round-to-nearest-even on the posit bit string (guard + sticky),
with saturation at maxpos and minpos: nonzero values never round to zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np


class NaRError(ValueError):
    """Raised when a real value is requested from NaR."""


@dataclass(frozen=True)
class PositConfig:
    n: int = 8
    es: int = 2

    def __post_init__(self):
        if not 3 <= self.n <= 16:
            raise ValueError(f"posit width n={self.n} outside [3, 16]")
        if not 0 <= self.es <= 3:
            raise ValueError(f"exponent width es={self.es} outside [0, 3]")

    @cached_property
    def useed_log2(self) -> int:
        return 1 << self.es

    @cached_property
    def useed(self) -> int:
        return 1 << self.useed_log2

    @cached_property
    def mask(self) -> int:
        return (1 << self.n) - 1

    @cached_property
    def nar_bits(self) -> int:
        return 1 << (self.n - 1)

    @cached_property
    def maxpos_bits(self) -> int:
        return (1 << (self.n - 1)) - 1

    @cached_property
    def max_scale(self) -> int:
        return (self.n - 2) * self.useed_log2

    @cached_property
    def min_scale(self) -> int:
        return -self.max_scale

    @cached_property
    def max_frac_bits(self) -> int:
        # sign + shortest regime (2 bits) + es
        return max(self.n - 3 - self.es, 0)


POSIT8_2 = PositConfig(8, 2)


@dataclass(frozen=True)
class PositScalar:
    bits: int
    config: PositConfig = POSIT8_2

    def __post_init__(self):
        if not 0 <= self.bits <= self.config.mask:
            raise ValueError(f"pattern {self.bits:#x} does not fit in {self.config.n} bits")

    @property
    def is_zero(self) -> bool:
        return self.bits == 0

    @property
    def is_nar(self) -> bool:
        return self.bits == self.config.nar_bits

    def __neg__(self) -> PositScalar:
        return PositScalar(twos_complement(self.bits, self.config), self.config)

    def __float__(self) -> float:
        return to_real(self)

    def __repr__(self) -> str:
        width = (self.config.n + 3) // 4
        return f"PositScalar(0x{self.bits:0{width}X}, n={self.config.n}, es={self.config.es})"


class Kind(enum.Enum):
    ZERO = "zero"
    NAR = "nar"
    NORMAL = "normal"


@dataclass(frozen=True)
class DecodedPosit:
    """Unpacked posit: value = sign * significand * 2**(scale - frac_bits).

    For decoded patterns the significand carries its hidden bit, so it lies
    in [2**frac_bits, 2**(frac_bits + 1)). ``encode`` also accepts
    unnormalized significands of any width.
    """

    kind: Kind
    sign: int = 1
    scale: int = 0
    significand: int = 0
    frac_bits: int = 0

    @classmethod
    def zero(cls) -> DecodedPosit:
        return cls(Kind.ZERO)

    @classmethod
    def nar(cls) -> DecodedPosit:
        return cls(Kind.NAR)

    def as_fraction(self) -> Fraction:
        if self.kind is Kind.NAR:
            raise NaRError("NaR has no real value")
        if self.kind is Kind.ZERO:
            return Fraction(0)
        return self.sign * Fraction(self.significand) * Fraction(2) ** (self.scale - self.frac_bits)


def twos_complement(bits: int, config: PositConfig = POSIT8_2) -> int:
    return (-bits) & config.mask


def decode(p: PositScalar) -> DecodedPosit:
    return _decode_bits(p.bits, p.config)


@lru_cache(maxsize=1 << 17)
def _decode_bits(bits: int, cfg: PositConfig) -> DecodedPosit:
    if bits == 0:
        return DecodedPosit.zero()
    if bits == cfg.nar_bits:
        return DecodedPosit.nar()

    sign = -1 if bits >> (cfg.n - 1) else 1
    body = twos_complement(bits, cfg) if sign < 0 else bits
    remaining = cfg.n - 1

    # regime: run of identical bits after the sign
    first = (body >> (remaining - 1)) & 1
    run = 0
    while run < remaining and ((body >> (remaining - 1 - run)) & 1) == first:
        run += 1
    k = run - 1 if first else -run
    remaining -= min(run + 1, remaining)

    exp_avail = min(cfg.es, remaining)
    exp = (body >> (remaining - exp_avail)) & ((1 << exp_avail) - 1)
    exp <<= cfg.es - exp_avail
    remaining -= exp_avail

    frac = body & ((1 << remaining) - 1)
    return DecodedPosit(
        kind=Kind.NORMAL,
        sign=sign,
        scale=k * cfg.useed_log2 + exp,
        significand=(1 << remaining) | frac,
        frac_bits=remaining,
    )


def encode(d: DecodedPosit, config: PositConfig = POSIT8_2) -> PositScalar:
    if d.kind is Kind.NAR:
        return PositScalar(config.nar_bits, config)
    if d.kind is Kind.ZERO or d.significand == 0:
        return PositScalar(0, config)
    if d.significand < 0:
        raise ValueError("significand must be non-negative; carry the sign separately")

    # normalize to 1.f with the leading one at bit `width`
    width = d.significand.bit_length() - 1
    scale = d.scale - d.frac_bits + width
    frac = d.significand - (1 << width)

    if scale > config.max_scale:
        bits = config.maxpos_bits
    elif scale < config.min_scale:
        bits = 1
    else:
        bits = _round_pack(scale, frac, width, config)
    if d.sign < 0:
        bits = twos_complement(bits, config)
    return PositScalar(bits, config)


def _round_pack(scale: int, frac: int, width: int, config: PositConfig) -> int:
    k, exp = divmod(scale, config.useed_log2)
    if k >= 0:
        regime, regime_len = ((1 << (k + 1)) - 1) << 1, k + 2
    else:
        regime, regime_len = 1, -k + 1

    # unbounded bit string: regime | exponent | fraction
    full = (((regime << config.es) | exp) << width) | frac
    full_len = regime_len + config.es + width
    keep = config.n - 1
    if full_len <= keep:
        return full << (keep - full_len)

    drop = full_len - keep
    body = full >> drop
    guard = (full >> (drop - 1)) & 1
    sticky = full & ((1 << (drop - 1)) - 1)
    if guard and (sticky or body & 1):
        body += 1
    # regime of maxpos has no terminator; rounding can never pass it
    return min(body, config.maxpos_bits) or 1


def to_fraction(p: PositScalar) -> Fraction:
    return decode(p).as_fraction()


def to_real(p: PositScalar) -> float:
    """Exact value of ``p`` as a float (exact for n <= 16)."""
    d = decode(p)
    if d.kind is Kind.NAR:
        raise NaRError("NaR has no real value")
    if d.kind is Kind.ZERO:
        return 0.0
    return d.sign * math.ldexp(d.significand, d.scale - d.frac_bits)


def from_fraction(x: Fraction, config: PositConfig = POSIT8_2) -> PositScalar:
    if x == 0:
        return PositScalar(0, config)
    sign = -1 if x < 0 else 1
    x = abs(x)
    num, den = x.numerator, x.denominator
    # enough bits that everything past the guard position is only sticky
    shift = max(0, config.n + 4 + den.bit_length() - num.bit_length())
    q, r = divmod(num << shift, den)
    frac_bits = shift
    if r:
        q = (q << 1) | 1
        frac_bits += 1
    return encode(DecodedPosit(Kind.NORMAL, sign, 0, q, frac_bits), config)


def from_real(x: float, config: PositConfig = POSIT8_2) -> PositScalar:
    if not math.isfinite(x):
        return PositScalar(config.nar_bits, config)
    return from_fraction(Fraction(x), config)


# ---------------------------------------------------------------------------
# vectorized helpers over whole pattern tables


@lru_cache(maxsize=None)
def value_table(config: PositConfig = POSIT8_2) -> np.ndarray:
    """float64 value of every pattern; NaR maps to nan."""
    out = np.empty(1 << config.n)
    for bits in range(1 << config.n):
        p = PositScalar(bits, config)
        out[bits] = np.nan if p.is_nar else to_real(p)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def rounding_thresholds(config: PositConfig = POSIT8_2) -> np.ndarray:
    """Midpoints between consecutive positive patterns.

    Entry ``j`` separates pattern ``j + 1`` from ``j + 2``; it is the value
    of the (n+1)-bit posit whose bit string is pattern ``j + 1`` followed by
    a single 1, i.e. exactly where the guard bit is set and sticky is clear.
    """
    wide = PositConfig(config.n + 1, config.es)
    thr = [to_real(PositScalar(2 * p + 1, wide)) for p in range(1, config.maxpos_bits)]
    out = np.array(thr)
    out.setflags(write=False)
    return out


def round_array(x: np.ndarray, config: PositConfig = POSIT8_2) -> np.ndarray:
    """Round float64 values to posit patterns (uint16), RNE with saturation."""
    x = np.asarray(x, dtype=np.float64)
    thr = rounding_thresholds(config)
    mag = np.abs(x)
    # number of thresholds strictly below |x|
    above = np.searchsorted(thr, mag, side="left")
    bits = above + 1
    tie = (above < thr.size) & (thr[np.minimum(above, thr.size - 1)] == mag)
    # a tie sits between patterns above+1 and above+2; keep the even one
    bits = np.where(tie & (bits % 2 == 1), bits + 1, bits)
    bits = np.where(mag == 0, 0, bits)
    bits = np.where(x < 0, (-bits) & config.mask, bits)
    bits = np.where(np.isfinite(x), bits, config.nar_bits)
    return bits.astype(np.uint16)


def quantize_array(x: np.ndarray, config: PositConfig = POSIT8_2) -> np.ndarray:
    """Round-trip through the posit format: from_real then to_real, elementwise."""
    return value_table(config)[round_array(x, config)]
