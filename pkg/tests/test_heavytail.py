import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from stablelld.heavytail import (LatticeSpec, MixedLatticeSpec, MultiTailSpec, PowerTail,
                                 ScalarTailSpec, SpectralMeasure, nondegeneracy_check, sample_scalar,
                                 stream)
from stablelld.svf import SlowlyVarying

PARETO_9_11 = 9**-0.5 - 11**-0.5  # 0.0318219887555697
POWER_TAIL_INV = 391462015.691727567390206000914  # mpmath root of log(e+x) x^-1/2 = 1e-3
AXES = SpectralMeasure([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.25] * 4)


def test_streams_reproducible_and_distinct():
    a = stream(7, 3).random(5)
    assert np.array_equal(a, stream(7, 3).random(5))
    assert not np.array_equal(a, stream(7, 4).random(5))
    assert not np.array_equal(a, stream(8, 3).random(5))


def test_pareto_interval_closed_form():
    spec = ScalarTailSpec(0.5, 1.0, 0.0)
    assert spec.interval_prob(9.0, 11.0) == pytest.approx(PARETO_9_11, rel=1e-13)
    assert PARETO_9_11 == pytest.approx(0.0318219887555697, rel=1e-14)


def test_power_tail_inverse_oracle():
    T = PowerTail(0.5, SlowlyVarying(1.0, 1.0))
    assert T.inverse(1e-3) == pytest.approx(POWER_TAIL_INV, rel=1e-12)


def test_non_monotone_tail_rejected():
    with pytest.raises(ValueError):
        ScalarTailSpec(0.5, 1.0, 0.0, SlowlyVarying(1.0, 5.0))


def test_scalar_sample_matches_law():
    spec = ScalarTailSpec(1.5, 0.6, 0.2)
    x = spec.sample(stream(1), 200_000)
    # three cells: left tail, body, right tail
    counts = [np.sum(x <= -1), np.sum(np.abs(x) < 1), np.sum(x >= 1)]
    probs = [0.2, 0.2, 0.6]
    assert stats.chisquare(counts, np.array(probs) * x.size).pvalue > 1e-4
    assert np.mean(x > 10.0) == pytest.approx(0.6 * 10**-1.5, rel=0.05)


@settings(max_examples=60, deadline=None)
@given(u=st.floats(1e-12, 1 - 1e-12), alpha=st.sampled_from([0.5, 0.75, 1.5, 2.0]),
       beta=st.sampled_from([0.0, 1.0]))
def test_cdf_inverts_ppf(u, alpha, beta):
    spec = ScalarTailSpec(alpha, 0.5, 0.3, SlowlyVarying(0.8, beta))
    x = spec.ppf(u)
    assert spec.cdf(x) == pytest.approx(u, rel=1e-7, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(u=st.lists(st.floats(1e-9, 1 - 1e-9), min_size=2, max_size=20))
def test_ppf_monotone(u):
    spec = ScalarTailSpec(0.75, 0.4, 0.4)
    u = np.sort(np.asarray(u))
    assert np.all(np.diff(sample_scalar(spec, u)) >= 0)


def test_nondegeneracy_minimum_on_axis():
    nd = nondegeneracy_check(AXES, 0.75)
    # moment along an axis is 2 * 0.25; along a diagonal it is 4 * 0.25 * 2^-0.375
    assert nd.minimum == pytest.approx(0.5, rel=1e-9)
    assert np.max(np.abs(nd.witness)) == pytest.approx(1.0, abs=1e-6)


def test_degenerate_measure():
    line = SpectralMeasure([[1, 0], [-1, 0]], [0.5, 0.5])
    assert nondegeneracy_check(line, 1.5).minimum < 1e-8
    with pytest.raises(ValueError, match="degenerate"):
        MultiTailSpec(1.5, line)
    assert MultiTailSpec(1.5, line, require_nondegenerate=False).d == 2


def test_multivariate_sample_directions_and_radius():
    spec = MultiTailSpec(0.75, AXES)
    x = spec.sample(stream(2), 100_000)
    r = np.linalg.norm(x, axis=1)
    big = x[r > 1]
    # each large draw lies on one axis
    assert np.all(np.min(np.abs(big), axis=1) == 0)
    assert np.mean(r > 50) == pytest.approx(50**-0.75, rel=0.05)


def test_lattice_pmf_and_tails():
    spec = LatticeSpec(1.5, 0.5, 0.5)
    k = np.arange(-spec.cutoff, spec.cutoff + 1)
    total = spec.pmf(k).sum() + spec.tail_count(spec.cutoff + 1) * 2
    assert total == pytest.approx(1.0, abs=1e-12)
    assert spec.sf(9.0) == pytest.approx(0.5 * 10**-1.5)
    assert spec.pmf(0.5) == 0.0
    x = spec.sample(stream(3), 50_000)
    assert np.all(x == np.round(x))


def test_mixed_adds_smear():
    base = LatticeSpec(1.5, 0.5, 0.5)
    mix = MixedLatticeSpec(base, 0.1)
    assert mix.pmf(3.0) == pytest.approx(0.9 * base.pmf(3.0))
    x = mix.sample(stream(4), 50_000)
    off = np.mean(x != np.round(x))
    assert off == pytest.approx(0.1, abs=0.01)
    # the smear spreads each atom over one span, so the cdf is continuous at half spans
    assert mix.cdf(2.5 + 1e-12) - mix.cdf(2.5 - 1e-12) < 1e-9
    with pytest.raises(ValueError):
        MixedLatticeSpec(base, 0.0)


def test_lattice_mean():
    from scipy.special import zeta
    spec = LatticeSpec(1.5, 0.6, 0.2, span=2)
    assert spec.mean() == pytest.approx(2 * 0.4 * zeta(1.5))
