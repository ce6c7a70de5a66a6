"""Uniform symmetric quantizer, posit(8,2) quantizer and their STE masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..posit import POSIT8_2, PositConfig, quantize_array, value_table

TINY = np.finfo(np.float32).tiny


@dataclass(frozen=True)
class QuantParams:
    k: int
    delta: float

    @property
    def qmax(self) -> int:
        return 2 ** (self.k - 1) - 1

    @property
    def qmin(self) -> int:
        return -self.qmax

    @property
    def clip_range(self) -> tuple[float, float]:
        return self.qmin * self.delta, self.qmax * self.delta


def compute_delta(x: np.ndarray, k: int) -> QuantParams:
    """Delta = max|x| / (2^(k-1) - 1), with a tiny floor for all-zero input."""
    if k < 2:
        raise ValueError(f"quantization needs k >= 2 bits, got {k}")
    x = np.asarray(x)
    if x.size == 0:
        raise ValueError("cannot derive a scale from an empty tensor")
    peak = float(np.max(np.abs(x)))
    delta = peak / (2 ** (k - 1) - 1) if peak > 0 else float(TINY)
    return QuantParams(k, delta)


def quantize(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """clip(round_half_even(x / delta), qmin, qmax) * delta."""
    x = np.asarray(x)
    q = np.clip(np.rint(x / qp.delta), qp.qmin, qp.qmax)
    return (q * qp.delta).astype(x.dtype, copy=False)


def ste_mask(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    """Straight-through gradient: 1 inside [qmin*delta, qmax*delta], 0 outside."""
    lo, hi = qp.clip_range
    return ((x >= lo) & (x <= hi)).astype(np.asarray(x).dtype)


def posit_quantize(x: np.ndarray, config: PositConfig = POSIT8_2) -> np.ndarray:
    x = np.asarray(x)
    return quantize_array(x, config).astype(x.dtype, copy=False)


def posit_ste_mask(x: np.ndarray, config: PositConfig = POSIT8_2) -> np.ndarray:
    maxpos = value_table(config)[config.maxpos_bits]
    return (np.abs(x) <= maxpos).astype(np.asarray(x).dtype)


def parse_mode(mode: str) -> tuple[str, int | None]:
    """'none' | 'posit82' | 'uniform<k>' (e.g. 'uniform8') -> (kind, k)."""
    if mode in ("none", "posit82"):
        return mode, None
    if mode.startswith("uniform"):
        try:
            k = int(mode[len("uniform"):].lstrip("_") or 8)
        except ValueError:
            raise ValueError(f"bad quantization mode {mode!r}") from None
        if k < 2:
            raise ValueError(f"quantization needs k >= 2 bits, got {mode!r}")
        return "uniform", k
    raise ValueError(f"unknown quantization mode {mode!r}")


def fake_quant(x: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Quantize per ``mode``; returns (values, ste mask or None for identity)."""
    kind, k = parse_mode(mode)
    if kind == "none":
        return x, None
    if kind == "posit82":
        return posit_quantize(x), posit_ste_mask(x)
    qp = compute_delta(x, k)
    return quantize(x, qp), ste_mask(x, qp)
