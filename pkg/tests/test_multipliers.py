import math

import numpy as np
import pytest

from reap.multipliers import (ConfigurationError, LutParseError, MultiplierKind, MultiplierSpec, dump_lut,
                              exact_oracle, load_lut, make_spec, mitchell_product, multiply, product_table)


def mitchell_float(a: int, b: int) -> float:
    """Mitchell's approximation evaluated in floating point."""
    ka, kb = int(math.log2(a)), int(math.log2(b))
    fa, fb = a / 2 ** ka - 1, b / 2 ** kb - 1
    s = fa + fb
    return 2 ** (ka + kb) * (1 + s) if s < 1 else 2 ** (ka + kb + 1) * s


def test_exact_examples():
    assert multiply(MultiplierSpec(), 8, 12) == 96
    assert exact_oracle(15, 15) == 225
    assert exact_oracle(1, 15) == 15


@pytest.mark.parametrize("w", [2, 4, 6, 8])
def test_exact_matches_oracle(w):
    spec = MultiplierSpec(width=w)
    side = 1 << w
    for a in range(side):
        for b in range(side):
            assert multiply(spec, a, b) == a * b


def test_mitchell_example():
    spec = make_spec("mitchell", 4, 4)
    assert multiply(spec, 12, 12) == 128
    assert abs(128 - 144) / 144 == pytest.approx(0.1111, abs=1e-4)


@pytest.mark.parametrize("w", [3, 4, 6, 8])
def test_untruncated_mitchell_matches_float_formula(w):
    spec = make_spec("mitchell", w)
    for a in range(1, 1 << w):
        for b in range(1, 1 << w):
            assert multiply(spec, a, b) == mitchell_float(a, b)


def test_truncation_semantics():
    # t=1: 13 = 1101b keeps 1.1b -> 12; 12*12 by Mitchell = 128
    assert mitchell_product(13, 13, 1) == 128
    # DR-ALM sets the bit at the lowest retained position only when bits were dropped
    assert mitchell_product(13, 13, 1, compensate=True) == mitchell_product(12, 12, 2)
    assert mitchell_product(3, 3, 1, compensate=True) == mitchell_product(3, 3, 1)


@pytest.mark.parametrize("kind", ["exact", "mitchell", "dralm"])
@pytest.mark.parametrize("t", [1, 2, 4])
def test_range_zero_commutative(kind, t):
    spec = make_spec(kind, 4, t)
    table = product_table(spec)
    assert table.max() <= 255 and table.min() >= 0
    assert not table[0].any() and not table[:, 0].any()
    assert np.array_equal(table, table.T)


def test_operand_range_checked():
    with pytest.raises(ValueError):
        multiply(MultiplierSpec(), 16, 1)
    with pytest.raises(ConfigurationError):
        make_spec("mitchell", 4, 5)
    with pytest.raises(ConfigurationError):
        make_spec("booth", 4)


def test_lut_roundtrip(tmp_path):
    for spec in (MultiplierSpec(), make_spec("dralm", 4, 3)):
        path = dump_lut(spec, tmp_path / f"{spec.kind.value}.csv")
        lut = load_lut(path)
        assert lut.kind is MultiplierKind.LUT and lut.width == 4
        assert np.array_equal(product_table(lut), product_table(spec))
        assert multiply(lut, 11, 13) == multiply(spec, 11, 13)


def test_lut_errors(tmp_path):
    p = tmp_path / "w1.csv"
    p.write_text("a,b,product\n0,0,0\n0,1,0\n1,0,0\n")
    with pytest.raises(LutParseError, match=r"missing entry \(1,1\)"):
        load_lut(p)
    p.write_text("a,b,product\n0,0,0\n0,1,0\n1,0,0\n1,1,1\n0,1,0\n")
    with pytest.raises(LutParseError, match=r":6: duplicate entry \(0,1\)"):
        load_lut(p)
    p.write_text("a,b,product\n0,0,0\n0,1,0\n1,0,0\n1,1,9\n")
    with pytest.raises(LutParseError, match=":5:"):
        load_lut(p)
    with pytest.raises(ConfigurationError, match="nope.csv"):
        make_spec("lut", 4, lut_path=str(tmp_path / "nope.csv"))
