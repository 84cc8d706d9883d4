import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablelld.charfn import (CharFnModel, StableTarget, fit_decay_constant, log_one_minus,
                              modulus_report, one_minus_sinc, pareto_complement, select_eps)
from stablelld.heavytail import (LatticeSpec, MixedLatticeSpec, MultiTailSpec, ScalarTailSpec,
                                 SpectralMeasure)
from stablelld.svf import NormingSeq

# mpmath quadosc of alpha int_1^inf e^{itx} x^(-alpha-1) dx, frozen as 1 - E e^{itX}
PARETO_HALF = {
    0.3: 0.671516546996483020952642986545 - 0.387366177982550292230905230653j,
    2.0: 1.19335326480181581831995832785 - 0.0113638851425244782839924421859j,
    7.5: 1.05504931520850586142654191113 - 0.0329242327846893192190641947282j,
}
# 0.2 sinc(t) + 0.6 phi(t) + 0.2 phi(-t) at t = 1.3, alpha = 1.5
ASYM_13 = -0.0514471885586629360231085636795 + 0.21513809203654577301078250719j

AXES = SpectralMeasure([[1, 0], [-1, 0], [0, 1], [0, -1]], [0.25] * 4)


@pytest.mark.parametrize("t", sorted(PARETO_HALF))
def test_pareto_complement_oracle(t):
    model = CharFnModel(ScalarTailSpec(0.5, 1.0, 0.0))
    assert model.complement(np.array([t]))[0] == pytest.approx(PARETO_HALF[t], rel=1e-11)


def test_mixture_cf_oracle():
    model = CharFnModel(ScalarTailSpec(1.5, 0.6, 0.2), centered=False)
    assert model.psi(np.array([1.3]))[0] == pytest.approx(ASYM_13, rel=1e-11)


def test_series_agrees_with_closed_route():
    t = np.array([0.5, 3.0, 7.9])
    model = CharFnModel(ScalarTailSpec(0.5, 1.0, 0.0))
    assert np.allclose(pareto_complement(t, 0.5), model.complement(t), rtol=1e-11)


def test_small_argument_helpers():
    t = np.array([1e-6, 1e-3])
    assert np.allclose(one_minus_sinc(t), t**2 / 6 - t**4 / 120, rtol=1e-12)
    c = np.array([1e-14 + 1e-15j])
    assert log_one_minus(c)[0] == pytest.approx(-c[0], rel=1e-12)


def test_lattice_cf_periodic():
    model = CharFnModel(LatticeSpec(1.5, 0.5, 0.5), centered=False)
    s = np.array([0.4, 1.1])
    assert np.allclose(model.psi(s), model.psi(s + 2 * np.pi), atol=1e-12)
    mixed = CharFnModel(MixedLatticeSpec(LatticeSpec(1.5, 0.5, 0.5)), centered=False)
    # the smear breaks periodicity: |psi(2 pi)| < 1
    assert abs(mixed.psi(np.array([2 * np.pi]))[0]) < 0.95


def test_empirical_mode_tracks_exact():
    spec = ScalarTailSpec(1.5, 0.6, 0.2)
    exact = CharFnModel(spec)
    emp = CharFnModel(spec, mode="empirical", sample_size=200_000, seed=5)
    s = np.linspace(0.05, 2.0, 9)
    assert np.max(np.abs(exact.psi(s) - emp.psi(s))) < 0.01


def test_multivariate_cf_symmetries():
    model = CharFnModel(MultiTailSpec(0.75, AXES), centered=False)
    s = np.array([[0.3, 0.0], [0.0, 0.3], [-0.3, 0.0], [0.3, 0.3]])
    p = model.psi(s)
    # the four atoms are invariant under swapping and negating axes
    assert p[0] == pytest.approx(p[1], rel=1e-12)
    assert p[0] == pytest.approx(p[2], rel=1e-12)
    assert 0 < abs(p[3]) < 1


@settings(max_examples=40, deadline=None)
@given(t=st.floats(-50, 50), alpha=st.sampled_from([0.5, 0.75, 1.5, 2.0]))
def test_cf_bounded_and_hermitian(t, alpha):
    model = CharFnModel(ScalarTailSpec(alpha, 0.6, 0.3))
    p, q = model.psi(np.array([t, -t]))
    assert abs(p) <= 1 + 1e-12
    assert p == pytest.approx(np.conj(q), abs=1e-12)


def test_decay_constant_positive_and_eps_choice():
    spec = ScalarTailSpec(0.5, 1.0, 0.0)
    norm = NormingSeq(0.5)
    model = CharFnModel(spec)
    rep = fit_decay_constant(model, 0.5, norm.ell_tilde, math.pi / 4)
    assert rep.ok
    assert select_eps(model, 0.5, norm.ell_tilde) == pytest.approx(math.pi / 4)
    with pytest.raises(ValueError):
        fit_decay_constant(model, 0.5, norm.ell_tilde, 1.0)


def test_decay_limit_matches_stable_exponent():
    spec = ScalarTailSpec(1.5, 0.5, 0.5)
    model = CharFnModel(spec)
    rep = fit_decay_constant(model, 1.5, NormingSeq(1.5).ell_tilde, math.pi / 4)
    k = StableTarget.from_spec(spec).k_u(np.array([1.0]))[0]
    assert rep.c_limit == pytest.approx(k, rel=0.05)


def test_gaussian_target():
    target = StableTarget.from_spec(ScalarTailSpec(2.0, 0.5, 0.5))
    assert target.cf(np.array([1.0]))[0] == pytest.approx(math.exp(-1.0))
    with pytest.raises(ValueError):
        target.lam


def test_modulus_ratios_stable():
    model = CharFnModel(ScalarTailSpec(0.5, 1.0, 0.0))
    reps = modulus_report(model, 0.5, 3 * math.pi / 4)
    assert reps and all(r.stable for r in reps)
