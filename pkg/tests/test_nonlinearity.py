import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from wavewell.errors import InputError
from wavewell.nonlinearity import (
    ConditionParams,
    NonlinearitySpec,
    check_condition_H,
    check_lemma_equivalence,
    estimate_sup_a,
    growth_constants,
    minimal_feasible_gamma,
    scan_points,
    structural_properties,
)

CUBIC = NonlinearitySpec.cubic()


def test_cubic_values():
    u = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert np.allclose(CUBIC.f(u), u**3)
    assert np.allclose(CUBIC.F(u), u**4 / 4)
    assert np.allclose(CUBIC.fprime(u), 3 * u**2)
    assert CUBIC.validate() == []


def test_even_power_family():
    sq = NonlinearitySpec("even-power", 2)
    assert sq.case == "H-b" and sq.positive_only
    assert np.allclose(sq.F(np.array([3.0])), 9.0)
    with pytest.raises(InputError):
        NonlinearitySpec("even-power", 2.5)
    with pytest.raises(InputError):
        NonlinearitySpec("odd-power", 1.0)
    with pytest.raises(InputError):
        NonlinearitySpec("quintic")


def test_custom_validation_reports_bad_antiderivative():
    good = NonlinearitySpec.custom(lambda u: u**3, lambda u: u**4 / 4, lambda u: 3 * u**2)
    assert good.validate() == []
    bad = NonlinearitySpec.custom(lambda u: u**3, lambda u: u**4 / 3, lambda u: 3 * u**2)
    assert any("F" in issue for issue in bad.validate())
    shifted = NonlinearitySpec.custom(lambda u: u**3 + 1, lambda u: u**4 / 4 + u, lambda u: 3 * u**2)
    assert any("f(0)" in issue for issue in shifted.validate())
    with pytest.raises(InputError):
        NonlinearitySpec("custom")


def test_params_validation():
    with pytest.raises(InputError):
        ConditionParams(alpha=2.0)
    with pytest.raises(InputError):
        ConditionParams(alpha=5.0, gamma=4.0)
    with pytest.raises(InputError):
        ConditionParams(beta=-1.0)
    with pytest.raises(InputError):
        ConditionParams(samples=100)
    p = ConditionParams(beta=1.0)
    assert p.lambda_equiv == 2.0
    assert p.beta_bound(1.0) == 1.0
    with pytest.raises(InputError):
        p.check_beta(1.0)


def test_condition_one_cubic_exact():
    rep = check_condition_H(CUBIC, ConditionParams())
    assert rep.worst_excess_1 == 0.0
    assert rep.worst_slack_1 == 0.0
    assert rep.passed_1 and rep.passed
    assert rep.n_samples >= 10_000
    rep = check_condition_H(CUBIC, ConditionParams(sigma=1.0))
    assert rep.worst_excess_1 == 0.0
    assert rep.worst_slack_1 == -4.0


def test_condition_two_fails_near_F_equal_sigma():
    # |uf|/|F - sigma| is unbounded where F crosses sigma inside the scan
    rep = check_condition_H(CUBIC, ConditionParams(sigma=1.0))
    assert not rep.passed_2
    assert rep.violations_2
    assert rep.minimal_gamma is None


def test_condition_two_below_crossing():
    gammas, ratios = [], []
    for sigma in (0.5, 1.0, 2.0):
        p = ConditionParams(sigma=sigma, u_max=1.0)
        rep = check_condition_H(CUBIC, p)
        gammas.append(minimal_feasible_gamma(CUBIC, p))
        ratios.append(rep.gamma_ratio_sup)
    assert gammas == [4.0, 4.0, 4.0]
    # sup |uf|/|F - sigma| = 1/(F/|...|) on [0, 1]: 4, 4/3, 4/7
    assert np.allclose(ratios, [4.0, 4.0 / 3.0, 4.0 / 7.0], rtol=1e-9)


def test_zero_family_condition_one():
    rep = check_condition_H(NonlinearitySpec("zero"), ConditionParams(sigma=1.0))
    assert rep.passed_1


def test_hb_scan_is_positive():
    sq = NonlinearitySpec("even-power", 2)
    u = scan_points(sq, ConditionParams(alpha=3.0, gamma=3.0))
    assert np.all(u >= 0) and u.size >= 10_000


@settings(max_examples=40, deadline=None)
@given(st.floats(1.5, 6.0), st.floats(0.0, 1.0))
@example(2.0, 1.0)
def test_odd_power_condition_one_holds_for_alpha_up_to_p_plus_one(p, frac):
    spec = NonlinearitySpec("odd-power", p)
    alpha = 2.0 + frac * (p - 1.0) + 1e-9
    alpha = min(alpha, p + 1.0)
    if alpha <= 2.0:
        return
    rep = check_condition_H(spec, ConditionParams(alpha=alpha, gamma=max(alpha, p + 1.0), samples=10_001))
    assert rep.passed_1
    # at alpha = p + 1 the condition is an equality, so only rounding may remain
    assert rep.worst_excess_1 <= 1e-14 * 2.0 ** (p + 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(2.1, 5.0))
def test_structural_properties_odd_powers(p):
    spec = NonlinearitySpec("odd-power", p)
    props = structural_properties(spec, np.linspace(-3, 3, 2001))
    assert all(props.values()), props


def test_structural_properties_even_power():
    props = structural_properties(NonlinearitySpec("even-power", 2), np.linspace(-3, 3, 2001))
    assert all(props.values()), props


def test_sup_a():
    assert abs(estimate_sup_a(CUBIC, ConditionParams()) - 1.0) < 1e-10
    sq = NonlinearitySpec("even-power", 2)
    assert abs(estimate_sup_a(sq, ConditionParams(alpha=3.0, gamma=3.0)) - 1.0) < 1e-10
    with pytest.raises(InputError, match="too large"):
        estimate_sup_a(CUBIC, ConditionParams(gamma=4.5))


def test_growth_constants():
    rep = growth_constants(CUBIC, ConditionParams(sigma=1.0, gamma=8.0), probe_u=2.0)
    assert rep.A == pytest.approx(3 / 256, rel=1e-15)
    assert not rep.A_holds  # |F - sigma| near u = 0 exceeds A|u|^8
    rep = growth_constants(CUBIC, ConditionParams(), probe_u=2.0)
    assert rep.B == 0.25 and rep.lambda_equiv == 4.0
    assert rep.B_holds
    with pytest.raises(InputError):
        growth_constants(CUBIC, ConditionParams(), probe_u=0.0)


def test_growth_bound_on_one_to_two_fails_like_the_scan():
    A = 3 / 256
    u = np.linspace(1.0, 2.0, 1001)
    direct = bool(np.all(np.abs(CUBIC.F(u) - 1.0) <= A * u**8))
    rep = growth_constants(CUBIC, ConditionParams(sigma=1.0, gamma=8.0, u_max=2.0))
    assert not direct  # at u = 1: 3/4 > 3/256
    assert not rep.A_holds
    assert all(slack > 0 for _, slack in rep.violations_A)


def test_lemma_equivalence():
    rep = check_lemma_equivalence(CUBIC, ConditionParams(), 1.0)
    assert not rep["hypothesis_met"] and "hypothesis not met" in rep["message"]
    mixed = NonlinearitySpec.custom(lambda u: 2 * u + u**3, lambda u: u**2 + u**4 / 4, lambda u: 2 + 3 * u**2)
    rep = check_lemma_equivalence(mixed, ConditionParams(), 1.0)
    assert rep["found"] and rep["m"] > 1 and rep["mu"] > 0
    lin = NonlinearitySpec.custom(lambda u: 3 * u, lambda u: 1.5 * u**2, lambda u: 3 + 0 * u)
    rep = check_lemma_equivalence(lin, ConditionParams(), 1.0)
    assert rep["hypothesis_met"] and not rep["found"]
