import random
from fractions import Fraction

import numpy as np
import pytest

from reap.fastmac import engine_for
from reap.multipliers import MultiplierSpec, make_spec
from reap.pipeline import DotProductRequest, dot_product, dot_product_chunked
from reap.posit import PositScalar, from_fraction, from_real, round_array, rounding_thresholds, to_fraction, value_table

P = PositScalar
ALL = np.array([b for b in range(256) if b != 0x80])
SPECS = [MultiplierSpec(), make_spec("mitchell", 4, 2), make_spec("dralm", 4, 2)]

# integer images of posit values: every (8,2) value is a multiple of 2^-24
SCALE = 24
INT_VAL = {b: int(to_fraction(P(b)) * 2 ** SCALE) for b in ALL.tolist()}


def int_oracle(va, vb, acc):
    """Big-integer sum, rounded by the scalar bit-string encoder."""
    total = (INT_VAL[acc] << SCALE) + sum(INT_VAL[a] * INT_VAL[b] for a, b in zip(va, vb))
    return from_fraction(Fraction(total, 1 << (2 * SCALE))).bits


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_single_element_exhaustive_matches_scalar(spec):
    eng = engine_for(spec)
    a = np.arange(256).reshape(-1, 1)
    b = np.arange(256).reshape(1, -1)
    got = eng.matmul(a, b, lanes=1)
    for x in range(256):
        for y in range(0, 256, 3):
            ref, _ = dot_product(DotProductRequest([P(x)], [P(y)], P(0), spec))
            assert got[x, y] == ref.bits


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("feedback", ["posit", "wide"])
def test_chunked_matches_scalar(spec, feedback):
    eng = engine_for(spec)
    rng = random.Random(hash((spec.name, feedback)) & 0xFFFF)
    for _ in range(150):
        k = rng.randint(1, 13)
        va = [int(rng.choice(ALL)) for _ in range(k)]
        vb = [int(rng.choice(ALL)) for _ in range(k)]
        acc = int(rng.choice(ALL))
        ref = dot_product_chunked([P(x) for x in va], [P(x) for x in vb], P(acc), spec, 4, feedback)
        assert eng.dot(va, vb, acc, lanes=4, feedback=feedback) == ref.bits


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_exact_engine_vs_integer_oracle(n):
    """250k random length-n dot products per size against big-integer arithmetic."""
    eng = engine_for(MultiplierSpec())
    rng = np.random.default_rng(n)
    m = 250_000
    a = rng.choice(ALL, size=(m, n))
    b = rng.choice(ALL, size=(m, n))
    acc = rng.choice(ALL, size=m)
    # each row is one request: sum in limbs, one final rounding
    out = np.empty(m, dtype=np.int64)
    for start in range(0, m, 50_000):
        sl = slice(start, start + 50_000)
        aa, bb = a[sl], b[sl]
        hi = eng.acc_hi[acc[sl]].copy()
        lo = eng.acc_lo[acc[sl]].copy()
        for j in range(n):
            idx = aa[:, j] * 256 + bb[:, j]
            hi += eng.prod_hi[idx]
            lo += eng.prod_lo[idx]
        hi, lo = eng._carry(hi, lo)
        out[sl] = eng.round_limbs(hi, lo)
    check = np.random.default_rng(0).choice(m, size=20_000, replace=False)
    for i in check:
        assert out[i] == int_oracle(a[i].tolist(), b[i].tolist(), int(acc[i]))


def test_thresholds_round_to_even_neighbour():
    thr = rounding_thresholds()
    got = round_array(thr)
    ref = [from_real(float(t)).bits for t in thr]
    assert got.tolist() == ref
    assert all(b % 2 == 0 for b in ref)


def test_nar_and_bias():
    eng = engine_for(MultiplierSpec())
    a = np.array([[0x40, 0x80], [0x40, 0x40]])
    b = np.array([[0x40], [0x40]])
    out = eng.matmul(a, b, bias_bits=np.array([0x40]))
    assert out[0, 0] == 0x80
    assert value_table()[out[1, 0]] == 3.0
