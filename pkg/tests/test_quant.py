import numpy as np
import pytest

from reap.nn.quant import (TINY, compute_delta, fake_quant, parse_mode, posit_quantize, posit_ste_mask, quantize,
                           ste_mask)
from reap.posit import from_real, to_real


def test_compute_delta_examples():
    assert compute_delta(np.array([-1, 0.5, 1]), 8).delta == pytest.approx(1 / 127)
    assert compute_delta(np.array([3.0]), 4).delta == pytest.approx(3 / 7)
    qp = compute_delta(np.zeros(5), 8)
    assert qp.delta == TINY and not quantize(np.zeros(5), qp).any()
    with pytest.raises(ValueError):
        compute_delta(np.ones(3), 1)
    with pytest.raises(ValueError):
        compute_delta(np.array([]), 8)


def test_quantize_examples():
    qp = compute_delta(np.array([1.0, -1.0]), 8)
    assert quantize(np.array([0.0]), qp)[0] == 0
    # 0.5 / (1/127) = 63.5 -> ties to even -> 64
    assert quantize(np.array([0.5]), qp)[0] == pytest.approx(64 / 127)
    assert quantize(np.array([10.0]), qp)[0] == pytest.approx(127 * qp.delta)
    assert (qp.qmin, qp.qmax) == (-127, 127)


def test_quantize_idempotent_and_ste():
    x = np.random.default_rng(0).normal(size=500)
    qp = compute_delta(x, 6)
    q = quantize(x, qp)
    assert np.array_equal(quantize(q, qp), q)
    lo, hi = qp.clip_range
    y = np.array([lo - 1, lo, 0.0, hi, hi + 1])
    assert ste_mask(y, qp).tolist() == [0, 1, 1, 1, 0]


def test_posit_quantizer():
    assert posit_quantize(np.array([1.0]))[0] == 1.0
    assert posit_quantize(np.array([np.pi]))[0] == to_real(from_real(np.pi))
    x = np.random.default_rng(1).normal(size=300).astype(np.float32)
    q = posit_quantize(x)
    assert q.dtype == np.float32 and np.array_equal(posit_quantize(q), q)
    assert posit_ste_mask(np.array([2.0 ** 25, 1.0])).tolist() == [0, 1]


def test_modes():
    assert parse_mode("uniform8") == ("uniform", 8)
    assert parse_mode("none") == ("none", None)
    with pytest.raises(ValueError):
        parse_mode("float7")
    x = np.ones(3)
    v, m = fake_quant(x, "none")
    assert v is x and m is None
