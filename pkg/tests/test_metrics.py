from fractions import Fraction

import pytest

from reap.metrics import (ErrorMetrics, emit_table, evaluate_mac_exhaustive, evaluate_multiplier_exhaustive,
                          render_csv, render_json, summarize)
from reap.multipliers import MultiplierSpec, dump_lut, load_lut, make_spec


def test_summarize_definitions():
    m = summarize([4, 2, 0, -8], [5, 2, 0, -6])
    assert m.samples == 4
    assert m.nmed == pytest.approx((1 + 0 + 0 + 2) / 4 / 8)
    assert m.mred == pytest.approx((1 / 4 + 0 + 2 / 8) / 3)
    assert m.wce == 2 and m.wce_rel == 0.25
    assert m.sum_ed == Fraction(m.nmed).limit_denominator(10 ** 6) * 4 * 8


def test_nmed_identity_is_exact():
    m = evaluate_multiplier_exhaustive(make_spec("dralm", 4, 2))
    assert Fraction(m.nmed) * m.samples * Fraction(m.max_exact) == pytest.approx(float(m.sum_ed), rel=1e-15)
    assert m.nmed <= m.wce / m.max_exact


def test_multiplier_metrics():
    m = evaluate_multiplier_exhaustive(MultiplierSpec())
    assert (m.nmed, m.mred, m.wce, m.wce_rel, m.samples) == (0.0, 0.0, 0.0, 0.0, 256)
    m = evaluate_multiplier_exhaustive(make_spec("mitchell", 4, 4))
    assert m.wce_rel == pytest.approx(1 / 9, abs=1e-3)


def test_lut_from_exact_dump_is_error_free(tmp_path):
    lut = load_lut(dump_lut(MultiplierSpec(), tmp_path / "x.csv"))
    m = evaluate_multiplier_exhaustive(lut)
    assert (m.nmed, m.mred, m.wce) == (0.0, 0.0, 0.0)


def test_mac_exact_is_zero():
    m = evaluate_mac_exhaustive(MultiplierSpec())
    assert m.samples == 255 * 255
    assert (m.nmed, m.mred, m.wce, m.wce_rel) == (0.0, 0.0, 0.0, 0.0)


def test_mac_parallel_equals_serial():
    spec = make_spec("dralm", 4, 2)
    assert evaluate_mac_exhaustive(spec, threads=1) == evaluate_mac_exhaustive(spec, threads=2)


def test_real_reference_charges_rounding():
    m = evaluate_mac_exhaustive(MultiplierSpec(), reference="real")
    assert m.nmed > 0
    # maxpos * maxpos = 2^48 saturates to 2^24
    assert m.wce == 2.0 ** 48 - 2.0 ** 24


def test_emit_table(tmp_path):
    zero = ErrorMetrics(0.0, 0.0, 0.0, 0.0, 65025)
    text = render_csv([("PDPU_Accurate", zero)])
    assert text.splitlines()[0] == "design,error_pct,nmed,mred,wce,wce_rel,samples"
    assert text.splitlines()[1].startswith("PDPU_Accurate,0.00,")
    rows = [("PDPU_Accurate", zero), ("REAP", ErrorMetrics(0.0631, 0.1, 1.0, 0.5, 65025))]
    a = emit_table(rows, tmp_path / "a.csv").read_bytes()
    b = emit_table(rows, tmp_path / "b.csv").read_bytes()
    assert a == b and b"REAP,6.31," in a
    assert '"schema_version": 1' in render_json(rows)
    with pytest.raises(ValueError, match="empty design name"):
        render_csv([("", zero)])
    with pytest.raises(OSError, match="nodir"):
        emit_table(rows, tmp_path / "nodir" / "x.csv")
