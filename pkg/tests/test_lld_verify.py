import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablelld.heavytail import MultiTailSpec, ScalarTailSpec, SpectralMeasure
from stablelld.lld_verify import (CROSSOVER, FAIL, INCONCLUSIVE, LARGE, LOCAL, PASS, Envelope,
                                  LLDReport, Row, classify, default_x_grid, emit_report,
                                  grid_directions, read_report, regime_tag, sweep)
from stablelld.smoothing import build_kernel
from stablelld.svf import NormingSeq, SlowlyVarying

ENV = Envelope(NormingSeq(0.5))


def _row(n, r, status=PASS, regime=LOCAL, ci_hi=None):
    return Row(n, (0.0,), regime, 0.1, 0.05, 0.2 if ci_hi is None else ci_hi, 0.3, 1.0, 0.1, r, status)


def test_envelope_closed_form():
    # n = 4: a_n = 16, envelope at x = 9 is (4/16) / (1 + 3)
    assert ENV(4, 9.0) == pytest.approx(1 / 16)
    env2 = Envelope(NormingSeq(0.75), d=2)
    a = NormingSeq(0.75).a(8)
    assert env2(8, [3.0, 4.0]) == pytest.approx(8 / a**2 / (1 + 5**0.75))


def test_envelope_with_integrated_correction():
    env = Envelope(NormingSeq(2.0))
    a = NormingSeq(2.0).a(100)
    assert env(100, 0.0) == pytest.approx(100 / a)


def test_regimes():
    a = 256.0  # a_16 for alpha = 1/2
    assert regime_tag(ENV, 16, 0.99 * a / 4) == LOCAL
    assert regime_tag(ENV, 16, -a) == CROSSOVER
    assert regime_tag(ENV, 16, 4 * a + 1) == LARGE


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 10**4), x=st.floats(0, 1e9), y=st.floats(0, 1e9))
def test_envelope_decreasing_in_distance(n, x, y):
    lo, hi = sorted((x, y))
    assert ENV(n, hi) <= ENV(n, lo) * (1 + 1e-12)


def test_classify():
    assert classify(LOCAL, 0.1, 0.08, 0.12, 0.09) == PASS
    assert classify(LOCAL, 0.1, 0.095, 0.12, 0.09) == FAIL
    assert classify(LARGE, 1e-7, 0.0, 1e-5, 1e-4) == INCONCLUSIVE
    # a zero lower limit never fails, even against a slightly negative quadrature value
    assert classify(LARGE, 0.0, 0.0, 1e-6, -1e-12) == INCONCLUSIVE


def test_report_slope_and_verdict():
    rep = LLDReport(1, [_row(n, 2.0 * n ** 0.0) for n in (16, 64, 256)])
    assert rep.slope == pytest.approx(0.0, abs=1e-12)
    assert rep.verdict == PASS
    grow = LLDReport(1, [_row(n, float(n) ** 0.5) for n in (16, 64, 256)])
    assert grow.slope == pytest.approx(0.5)
    assert grow.verdict == FAIL
    few = LLDReport(1, [_row(n, 1.0) for n in (16, 64)])
    assert few.verdict == INCONCLUSIVE
    loose = LLDReport(1, [_row(n, 1.0, ci_hi=10.0) for n in (16, 64, 256)])
    assert not loose.mc_bounded() and loose.verdict == FAIL
    bad = LLDReport(1, [_row(16, 1.0, status=FAIL), *[_row(n, 1.0) for n in (64, 256, 1024)]])
    assert bad.verdict == FAIL


def test_grid_directions():
    assert grid_directions(ScalarTailSpec(0.5, 1, 0)) == [[1.0]]
    assert grid_directions(ScalarTailSpec(1.5, 0.6, 0.2)) == [[1.0], [-1.0]]
    sig = SpectralMeasure([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.25] * 4)
    dirs = grid_directions(MultiTailSpec(0.75, sig))
    assert len(dirs) == 2
    assert np.allclose(dirs[1], [2**-0.5, 2**-0.5])
    xs = default_x_grid(ScalarTailSpec(0.5, 1, 0), NormingSeq(0.5), 4)
    assert xs[0, 0] == 0.0 and xs[-1, 0] == pytest.approx(16000.0)


@pytest.fixture(scope="module")
def small_sweep():
    spec = ScalarTailSpec(0.5, 1.0, 0.0)
    env = Envelope(NormingSeq(0.5))
    return sweep(spec, env, [4, 16, 64], build_kernel(math.pi / 4), N=2**15, seed=1,
                 keep_estimates=True)


def test_sweep_rows(small_sweep):
    rep = small_sweep
    assert not rep.failed
    assert len(rep.rows) == 3 * 11
    # a zero lower limit is consistent with any bound (e.g. x = 0 when S_n >= n surely)
    assert all(r.ci_lo == 0 or r.fourier_bound >= r.ci_lo for r in rep.rows)
    assert {r.regime for r in rep.rows} == {LOCAL, CROSSOVER, LARGE}
    assert len(rep.provenance["estimates"]) == len(rep.rows)


def test_csv_roundtrip(small_sweep, tmp_path):
    path = tmp_path / "sweep.csv"
    emit_report(small_sweep, path, "abc")
    text = path.read_text()
    assert text.startswith("# config_sha256=abc\n# version=")
    back = read_report(path)
    assert [(r.n, r.x, r.status, r.ratio_oracle) for r in back.rows] == \
           [(r.n, r.x, r.status, r.ratio_oracle) for r in small_sweep.rows]
    assert back.sharpness_fraction() == small_sweep.sharpness_fraction()
    assert (tmp_path / "sweep_summary.txt").read_text().startswith("verdict:")


def test_sweep_rejects_degenerate():
    sig = SpectralMeasure([[1, 0], [-1, 0]], [0.5, 0.5])
    spec = MultiTailSpec(1.5, sig, require_nondegenerate=False)
    with pytest.raises(ValueError, match="degenerate"):
        sweep(spec, Envelope(NormingSeq(1.5), 2), [4], build_kernel(math.pi / 4))


def test_csv_accepts_numpy_scalars(tmp_path):
    row = Row(np.int64(32), (np.float64(4.0),), "local", np.float64(0.0), 0.0, np.float64(1e-6), 0.5,
              np.float64(0.02), np.float64(0.0), 25.0, "PASS")
    rep = LLDReport(1, [row], {"a_n": {32: 1024.0}})
    emit_report(rep, tmp_path / "r.csv")
    back = read_report(tmp_path / "r.csv").rows[0]
    assert "np." not in (tmp_path / "r.csv").read_text()
    assert back == Row(32, (4.0,), "local", 0.0, 0.0, 1e-6, 0.5, 0.02, 0.0, 25.0, "PASS")
