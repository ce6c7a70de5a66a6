"""Vectorized equivalent of the exact-mode pipeline for posit(8,2) tensors.

Every addend of a dot product (approximate significand product, acc, bias)
is an integer multiple of ``2**-UNIT`` below ``2**(LIMB*2)``, so a sum is
held exactly as two int64 limbs ``hi * 2**LIMB + lo`` with ``0 <= lo <
2**LIMB``. Products are pre-split into limbs per (a, b) pattern pair, which
turns a MAC into two table gathers and two adds. Rounding compares the
exact limb pair against the (n+1)-bit midpoint table.

Results are bit-identical to :func:`reap.pipeline.dot_product` with an
exact accumulator; the test suite checks this exhaustively for N=1 and on
random vectors.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .multipliers import MultiplierSpec, multiply
from .posit import POSIT8_2, Kind, PositConfig, PositScalar, decode, rounding_thresholds, value_table
from .pipeline import significand_width

LIMB = 52


def _split(v: int) -> tuple[int, int]:
    """Signed integer -> (hi, lo) limbs with hi, lo sharing v's sign."""
    mag = abs(v)
    hi, lo = mag >> LIMB, mag & ((1 << LIMB) - 1)
    return (-hi, -lo) if v < 0 else (hi, lo)


class MacEngine:
    """Table-driven exact-accumulator MAC over posit patterns."""

    def __init__(self, multiplier: MultiplierSpec, config: PositConfig = POSIT8_2):
        w = significand_width(config)
        if multiplier.width != w:
            raise ValueError(f"multiplier width {multiplier.width} != significand width {w}")
        if config.n > 8:
            raise ValueError("the table-driven engine is sized for n <= 8")
        self.multiplier = multiplier
        self.config = config
        frac = w - 1
        # smallest addend LSB is a product at e_ab = 2*min_scale
        self.unit = 2 * frac + 2 * config.max_scale
        top = 2 * w + 2 * config.max_scale - 2 * frac + self.unit
        if top > 2 * LIMB:
            raise ValueError("posit config too wide for two-limb accumulation")

        side = 1 << config.n
        dec = [decode(PositScalar(b, config)) for b in range(side)]
        self.nar = np.array([d.kind is Kind.NAR for d in dec])

        # single operand (acc / bias) addends
        acc_hi = np.zeros(side, dtype=np.int64)
        acc_lo = np.zeros(side, dtype=np.int64)
        for b, d in enumerate(dec):
            if d.kind is Kind.NORMAL:
                v = d.sign * (d.significand << (d.scale - d.frac_bits + self.unit))
                acc_hi[b], acc_lo[b] = _split(v)
        self.acc_hi, self.acc_lo = acc_hi, acc_lo

        # pair addends
        prod_hi = np.zeros(side * side, dtype=np.int64)
        prod_lo = np.zeros(side * side, dtype=np.int64)
        sigs = [d.significand << (frac - d.frac_bits) if d.kind is Kind.NORMAL else 0 for d in dec]
        products = {}
        for a, da in enumerate(dec):
            if da.kind is not Kind.NORMAL:
                continue
            for b, db in enumerate(dec):
                if db.kind is not Kind.NORMAL:
                    continue
                key = (sigs[a], sigs[b])
                p = products.get(key)
                if p is None:
                    p = products[key] = multiply(multiplier, *key)
                v = p << (da.scale + db.scale - 2 * frac + self.unit)
                if da.sign != db.sign:
                    v = -v
                prod_hi[a * side + b], prod_lo[a * side + b] = _split(v)
        self.prod_hi, self.prod_lo = prod_hi, prod_lo

        thr = rounding_thresholds(config)
        thr_units = [int(t * 2 ** self.unit) for t in thr]
        self.thr_float = thr * 2.0 ** self.unit
        self.thr_hi = np.array([t >> LIMB for t in thr_units], dtype=np.int64)
        self.thr_lo = np.array([t & ((1 << LIMB) - 1) for t in thr_units], dtype=np.int64)

    # -- exact sum helpers --------------------------------------------------

    @staticmethod
    def _carry(hi: np.ndarray, lo: np.ndarray):
        c = lo >> LIMB
        return hi + c, lo - (c << LIMB)

    def round_limbs(self, hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
        """Exact value hi*2^LIMB + lo (lo normalized) -> posit pattern."""
        neg = hi < 0
        # magnitude of a negative pair
        borrow = lo != 0
        mhi = np.where(neg, -hi - borrow, hi)
        mlo = np.where(neg & borrow, (1 << LIMB) - lo, lo)

        approx = mhi.astype(np.float64) * float(1 << LIMB) + mlo.astype(np.float64)
        n_thr = self.thr_hi.size
        idx = np.searchsorted(self.thr_float, approx, side="left")

        # exact fix-up: idx must count thresholds strictly below the value
        lower = np.maximum(idx - 1, 0)
        le_lower = (mhi < self.thr_hi[lower]) | ((mhi == self.thr_hi[lower]) & (mlo <= self.thr_lo[lower]))
        idx = np.where((idx > 0) & le_lower, idx - 1, idx)
        upper = np.minimum(idx, n_thr - 1)
        gt_upper = (mhi > self.thr_hi[upper]) | ((mhi == self.thr_hi[upper]) & (mlo > self.thr_lo[upper]))
        idx = np.where((idx < n_thr) & gt_upper, idx + 1, idx)

        at = np.minimum(idx, n_thr - 1)
        tie = (idx < n_thr) & (mhi == self.thr_hi[at]) & (mlo == self.thr_lo[at])
        bits = idx + 1
        bits = np.where(tie & (bits % 2 == 1), bits + 1, bits)
        bits = np.where((mhi == 0) & (mlo == 0), 0, bits)
        mask = self.config.mask
        bits = np.where(neg, (-bits) & mask, bits)
        return bits.astype(np.int64)

    # -- public -------------------------------------------------------------

    def matmul(self, a_bits: np.ndarray, b_bits: np.ndarray, bias_bits: np.ndarray | None = None,
               acc_bits: np.ndarray | None = None, lanes: int = 4, feedback: str = "posit") -> np.ndarray:
        """out[m, o] = acc[m, o] + sum_k a[m, k] (x~) b[k, o] (+ bias[o]) on posit patterns.

        The bias enters as a final element multiplied by posit 1.0. With
        ``feedback='posit'`` every ``lanes`` elements form one request whose
        rounded output is the next request's acc; ``'wide'`` rounds once.
        """
        a_bits = np.asarray(a_bits, dtype=np.int64)
        b_bits = np.asarray(b_bits, dtype=np.int64)
        m, k = a_bits.shape
        k2, o = b_bits.shape
        if k != k2:
            raise ValueError(f"inner dimensions differ: {k} vs {k2}")
        if feedback not in ("posit", "wide"):
            raise ValueError(f"unknown feedback mode {feedback!r}")
        if bias_bits is not None:
            one = 1 << (self.config.n - 2)
            a_bits = np.concatenate([a_bits, np.full((m, 1), one, dtype=np.int64)], axis=1)
            b_bits = np.concatenate([b_bits, np.asarray(bias_bits, dtype=np.int64).reshape(1, o)], axis=0)
            k += 1
        acc = np.zeros((m, o), dtype=np.int64)
        if acc_bits is not None:
            acc = acc + np.asarray(acc_bits, dtype=np.int64)

        side = 1 << self.config.n
        nar = self.nar[a_bits].any(axis=1)[:, None] | self.nar[b_bits].any(axis=0)[None, :] | self.nar[acc]
        a_idx = a_bits * side
        hi, lo = self.acc_hi[acc], self.acc_lo[acc]
        for start in range(0, k, lanes):
            if feedback == "posit" and start:
                hi, lo = self.acc_hi[acc], self.acc_lo[acc]
            for j in range(start, min(start + lanes, k)):
                idx = a_idx[:, j, None] + b_bits[None, j, :]
                hi = hi + self.prod_hi[idx]
                lo = lo + self.prod_lo[idx]
            hi, lo = self._carry(hi, lo)
            if feedback == "posit":
                acc = self.round_limbs(hi, lo)
        if feedback == "wide":
            acc = self.round_limbs(hi, lo)
        return np.where(nar, self.config.nar_bits, acc)

    def dot(self, va, vb, acc_bits: int = 0, lanes: int = 4, feedback: str = "posit") -> int:
        """Single dot product on pattern lists."""
        va = np.asarray(va, dtype=np.int64).reshape(1, -1)
        vb = np.asarray(vb, dtype=np.int64).reshape(-1, 1)
        out = self.matmul(va, vb, acc_bits=np.array([[acc_bits]]), lanes=lanes, feedback=feedback)
        return int(out[0, 0])

    def values(self, bits: np.ndarray) -> np.ndarray:
        return value_table(self.config)[bits]


@lru_cache(maxsize=16)
def engine_for(multiplier: MultiplierSpec, config: PositConfig = POSIT8_2) -> MacEngine:
    return MacEngine(multiplier, config)
