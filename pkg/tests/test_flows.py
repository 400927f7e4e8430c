"""Tests for flow evaluation, inversion, decomposition, and transit times."""

import math

import numpy as np
import pytest

from semiflow.flows import (
    EscapeError,
    FlowError,
    NotInRange,
    Semiflow,
    match_closed_form,
)
from semiflow.problem import make_problem

LN2 = math.log(2.0)


def vfl(**kw):
    return Semiflow(make_problem(0, 1, "-x"), **kw)


def translation(lo=0.0, hi=math.inf, **kw):
    return Semiflow(make_problem(lo, hi, "1", validate=False), **kw)


def logistic(**kw):
    return Semiflow(make_problem(0, 1, "x*(1-x)"), **kw)


# ---------------------------------------------------------------------------
# Closed-form registry
# ---------------------------------------------------------------------------

def test_registry_matches_expected_shapes():
    from semiflow.expressions import parse_expression as parse
    assert match_closed_form(parse("1")) is not None
    assert match_closed_form(parse("-2.5")) is not None
    assert match_closed_form(parse("-x")) is not None
    assert match_closed_form(parse("x")) is not None
    assert match_closed_form(parse("3*x")) is not None
    assert match_closed_form(parse("x*(1-x)")) is not None
    assert match_closed_form(parse("(1-x)*x")) is not None
    assert match_closed_form(parse("x*(1-x)+0.1")) is None
    assert match_closed_form(parse("sin(x)")) is None


# ---------------------------------------------------------------------------
# Forward flow oracles
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("use_cf", [True, False])
def test_translation_flow(use_cf):
    sf = translation(use_closed_form=use_cf)
    assert sf.flow(2.0, 1.0) == pytest.approx(3.0, abs=1e-9)


@pytest.mark.parametrize("use_cf", [True, False])
def test_decaying_flow(use_cf):
    sf = vfl(use_closed_form=use_cf)
    assert sf.flow(LN2, 0.5) == pytest.approx(0.25, rel=1e-9)


@pytest.mark.parametrize("use_cf", [True, False])
def test_logistic_flow(use_cf):
    sf = logistic(use_closed_form=use_cf)
    assert sf.flow(LN2, 1.0 / 3.0) == pytest.approx(0.5, rel=1e-9)


def test_flow_at_zero_time_is_identity():
    sf = logistic()
    xs = np.array([0.1, 0.5, 0.9])
    np.testing.assert_array_equal(sf.flow_batch(0.0, xs), xs)


def test_flow_accepts_closure_endpoints():
    sf = logistic()
    assert sf.flow(1.0, 0.0) == 0.0
    assert sf.flow(1.0, 1.0) == 1.0


def test_flow_rejects_outside_points():
    with pytest.raises(ValueError):
        vfl().flow(1.0, 2.0)
    with pytest.raises(ValueError):
        vfl().flow(-1.0, 0.5)


@pytest.mark.parametrize("use_cf", [True, False])
def test_escape_raises(use_cf):
    sf = Semiflow(make_problem(0, 1, "-1"), use_closed_form=use_cf)
    with pytest.raises(EscapeError):
        sf.flow(1.0, 0.5)


def test_long_horizon_decay_not_distorted():
    sf = vfl()
    assert sf.flow(50.0, 0.5) == pytest.approx(0.5 * math.exp(-50.0), rel=1e-9)


# ---------------------------------------------------------------------------
# Inverse flow
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("use_cf", [True, False])
def test_translation_inverse(use_cf):
    sf = translation(use_closed_form=use_cf)
    assert sf.inverse_flow(2.0, 3.0) == pytest.approx(1.0, abs=1e-9)
    assert sf.inverse_flow(2.0, 1.0) is NotInRange


@pytest.mark.parametrize("use_cf", [True, False])
def test_decaying_inverse(use_cf):
    sf = vfl(use_closed_form=use_cf)
    assert sf.inverse_flow(LN2, 0.25) == pytest.approx(0.5, rel=1e-9)
    assert sf.inverse_flow(LN2, 0.7) is NotInRange


def test_inverse_flow_batch_mask():
    sf = vfl()
    state = sf.inverse_flow_batch(LN2, np.array([0.1, 0.25, 0.49, 0.51, 0.9]))
    np.testing.assert_array_equal(state.in_domain, [True, True, True, False, False])
    np.testing.assert_allclose(state.position[:3], [0.2, 0.5, 0.98], rtol=1e-9)


@pytest.mark.parametrize("use_cf", [True, False])
def test_inversion_round_trip(use_cf):
    sf = logistic(use_closed_form=use_cf)
    for x in (0.2, 0.5, 0.8):
        y = sf.flow(0.7, x)
        back = sf.inverse_flow(0.7, y)
        assert back == pytest.approx(x, abs=1e-9)


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------

def test_translation_derivative_is_one():
    assert translation().flow_derivative(5.0, 2.0) == pytest.approx(1.0)


@pytest.mark.parametrize("use_cf", [True, False])
def test_decaying_derivative(use_cf):
    sf = vfl(use_closed_form=use_cf)
    assert sf.flow_derivative(1.0, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-9)


@pytest.mark.parametrize("make", [vfl, logistic])
def test_derivative_matches_finite_difference(make):
    sf = make(use_closed_form=False)
    t, x, delta = 0.8, 0.4, 1e-5
    fd = (sf.flow(t, x + delta) - sf.flow(t, x - delta)) / (2 * delta)
    assert sf.flow_derivative(t, x) == pytest.approx(fd, rel=1e-4)


def test_derivative_of_nonclosed_field():
    sf = Semiflow(make_problem(0, 1, "x*(1-x)+0.1"))
    assert not sf.has_closed_form
    t, x, delta = 0.7, 0.3, 1e-5
    fd = (sf.flow(t, x + delta) - sf.flow(t, x - delta)) / (2 * delta)
    assert sf.flow_derivative(t, x) == pytest.approx(fd, rel=1e-4)
    assert sf.flow_derivative(t, x) > 0


def test_derivative_product_with_inverse_derivative():
    sf = logistic(use_closed_form=False)
    t, x = 0.9, 0.35
    y = sf.flow(t, x)
    forward = sf.flow_derivative(t, x)
    backward = sf.inverse_flow_derivative(t, y)
    assert forward * backward == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# Path integrals: both routes against exact values
# ---------------------------------------------------------------------------

def test_logistic_fprime_integral_exact():
    # a(t,x) = t − 2·log(1 − x + x e^t)
    sf = logistic()
    t, x = 0.9, 0.3
    expected = t - 2.0 * math.log(1.0 - x + x * math.exp(t))
    state = sf.path_integrals(t, x)
    assert state.int_fprime[0] == pytest.approx(expected, rel=1e-12)
    sf_num = logistic(use_closed_form=False)
    assert sf_num.path_integrals(t, x).int_fprime[0] == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("use_cf", [True, False])
def test_weight_integral_along_decaying_flow(use_cf):
    # h_re = x gives b(t,x) = ∫ x e^{−s} ds = x(1 − e^{−t}).
    prob = make_problem(0, 1, "-x", h_re="x", h_im="2*x")
    sf = Semiflow(prob, use_closed_form=use_cf)
    t, x = 1.3, 0.6
    expected = x * (1.0 - math.exp(-t))
    state = sf.path_integrals(t, x)
    assert state.int_h_re[0] == pytest.approx(expected, rel=1e-8)
    assert state.int_h_im[0] == pytest.approx(2 * expected, rel=1e-8)


def test_constant_weight_integral_is_linear_in_time():
    sf = Semiflow(make_problem(0, 1, "-x", h_re="-2", h_im="0.5"))
    state = sf.path_integrals(7.0, 0.5)
    assert state.int_h_re[0] == pytest.approx(-14.0, rel=1e-12)
    assert state.int_h_im[0] == pytest.approx(3.5, rel=1e-12)


def test_backward_state_matches_forward_integrals():
    # Integrals attached to a backward solve must equal the forward integrals
    # started at the recovered preimage.
    prob = make_problem(0, 1, "x*(1-x)+0.1", h_re="x")
    sf = Semiflow(prob)
    t, y = 0.6, 0.55
    back = sf.inverse_flow_batch(t, np.array([y]))
    assert back.in_domain[0]
    fwd = sf.path_integrals(t, back.position[0])
    assert fwd.position[0] == pytest.approx(y, rel=1e-9)
    assert back.int_fprime[0] == pytest.approx(fwd.int_fprime[0], abs=1e-9)
    assert back.int_h_re[0] == pytest.approx(fwd.int_h_re[0], abs=1e-9)


# ---------------------------------------------------------------------------
# Group law, monotonicity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("make", [vfl, logistic])
def test_group_law(make):
    sf = make(use_closed_form=False)
    for x in (0.2, 0.6):
        for t, s in ((0.3, 0.5), (1.0, 0.25)):
            direct = sf.flow(t + s, x)
            chained = sf.flow(t, sf.flow(s, x))
            assert abs(direct - chained) <= 1e-9 * (1.0 + abs(direct))


def test_flow_strictly_increasing_in_x():
    sf = logistic(use_closed_form=False)
    xs = np.linspace(0.05, 0.95, 19)
    out = sf.flow_batch(1.7, xs)
    assert np.all(np.diff(out) > 0)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

def test_decompose_decaying_field():
    dec = vfl().decompose()
    assert dec.zeros == ()
    assert len(dec.components) == 1
    comp = dec.components[0]
    assert (comp.lo, comp.hi, comp.sign) == (0.0, 1.0, -1)
    assert not dec.zero_set_measure_flag


def test_decompose_logistic():
    dec = logistic().decompose()
    assert dec.zeros == ()
    assert dec.components[0].sign == 1


def test_decompose_interior_root():
    dec = Semiflow(make_problem(0, 1, "x-0.5")).decompose()
    assert len(dec.zeros) == 1
    assert dec.zeros[0] == pytest.approx(0.5, abs=1e-12)
    assert [(c.sign) for c in dec.components] == [-1, 1]
    assert dec.components[0].hi == pytest.approx(0.5, abs=1e-12)
    assert not dec.zero_set_measure_flag


def test_decompose_flat_stretch_flagged():
    dec = Semiflow(make_problem(0, 1, "(x-0.5)^9")).decompose()
    assert dec.zero_set_measure_flag


def test_decompose_requires_minimum_grid():
    with pytest.raises(ValueError):
        vfl().decompose(grid_size=32)


# ---------------------------------------------------------------------------
# Transit times
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("use_cf", [True, False])
def test_translation_transit(use_cf):
    sf = translation(use_closed_form=use_cf)
    assert sf.transit_time((1.0, 3.0)) == pytest.approx(2.0, rel=1e-9)


@pytest.mark.parametrize("use_cf", [True, False])
def test_decaying_transit(use_cf):
    sf = vfl(use_closed_form=use_cf)
    assert sf.transit_time((0.25, 0.5)) == pytest.approx(LN2, rel=1e-9)


@pytest.mark.parametrize("use_cf", [True, False])
def test_logistic_transit(use_cf):
    sf = logistic(use_closed_form=use_cf)
    assert sf.transit_time((1.0 / 3.0, 0.5)) == pytest.approx(LN2, rel=1e-9)


def test_transit_rejects_interval_with_zero():
    with pytest.raises(ValueError, match="sign|floor"):
        Semiflow(make_problem(0, 1, "x-0.5")).transit_time((0.4, 0.6))


def test_transit_matches_reciprocal_quadrature():
    sf = Semiflow(make_problem(0, 1, "x*(1-x)+0.1"))
    from semiflow.numerics import integrate_interval
    direct = integrate_interval(
        lambda r: 1.0 / np.abs(sf.problem.F(r)), 0.2, 0.7, panels=64)
    assert sf.transit_time((0.2, 0.7)) == pytest.approx(direct, rel=1e-8)


# ---------------------------------------------------------------------------
# Forward invariance
# ---------------------------------------------------------------------------

def test_invariance_decaying_verified():
    assert vfl().check_forward_invariance().verdict == "verified"


def test_invariance_translation_on_half_line_verified():
    assert translation().check_forward_invariance().verdict == "verified"


def test_invariance_outflow_violated():
    report = Semiflow(make_problem(0, 1, "-1")).check_forward_invariance()
    assert report.verdict == "violated"


def test_invariance_logistic_verified():
    assert logistic().check_forward_invariance().verdict == "verified"


def test_invariance_translation_whole_line():
    sf = Semiflow(make_problem(-math.inf, math.inf, "1", validate=False))
    assert sf.check_forward_invariance().verdict == "verified"


# ---------------------------------------------------------------------------
# Caching is transparent
# ---------------------------------------------------------------------------

def test_cache_reuse_gives_identical_results():
    sf = logistic(use_closed_form=False)
    first = sf.flow(0.5, 0.3)
    again = sf.flow(0.5, 0.3)
    assert first == again
    fresh = logistic(use_closed_form=False).flow(0.5, 0.3)
    assert first == fresh


def test_growing_time_extends_cached_trajectory():
    sf = vfl(use_closed_form=False)
    a = sf.flow(0.5, 0.5)
    b = sf.flow(2.0, 0.5)      # forces an extension past the first horizon
    assert a == pytest.approx(0.5 * math.exp(-0.5), rel=1e-8)
    assert b == pytest.approx(0.5 * math.exp(-2.0), rel=1e-8)
