"""Tests for the weight cocycle, transported densities, and hypothesis checks."""

import math

import numpy as np
import pytest

from semiflow.flows import Semiflow
from semiflow.problem import make_problem
from semiflow.weights import (
    DensityProfile,
    check_hypotheses,
    estimate_admissibility,
    rho_backward,
    rho_backward_values,
    rho_forward,
    rho_forward_values,
    weight_cocycle,
    weight_magnitude,
)

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Weight cocycle
# ---------------------------------------------------------------------------

def test_cocycle_trivial_weight():
    sf = Semiflow(make_problem(0, 1, "-x"))
    assert weight_cocycle(sf, 3.0, 0.5) == pytest.approx(1.0)


def test_cocycle_constant_weight():
    sf = Semiflow(make_problem(0, 1, "-x", h_re="1"))
    assert weight_cocycle(sf, LN2, 0.5) == pytest.approx(2.0, rel=1e-12)


@pytest.mark.parametrize("use_cf", [True, False])
def test_cocycle_linear_weight_along_decay(use_cf):
    # ∫₀ᵗ x e^{−s} ds = x(1 − e^{−t}); at t=ln 2, x=0.5 the exponent is 0.25.
    sf = Semiflow(make_problem(0, 1, "-x", h_re="x"), use_closed_form=use_cf)
    assert weight_cocycle(sf, LN2, 0.5) == pytest.approx(math.exp(0.25), rel=1e-8)


def test_cocycle_complex_weight():
    sf = Semiflow(make_problem(0, 1, "-x", h_re="1", h_im="2"))
    value = weight_cocycle(sf, 0.5, 0.3)
    assert value == pytest.approx(np.exp(0.5) * np.exp(1j), rel=1e-10)


def test_cocycle_identity():
    prob = make_problem(0, 1, "x*(1-x)+0.1", h_re="x", h_im="0.3")
    sf = Semiflow(prob)
    t, s, x = 0.4, 0.7, 0.3
    whole = weight_cocycle(sf, t + s, x)
    split = weight_cocycle(sf, t, x) * weight_cocycle(sf, s, sf.flow(t, x))
    assert abs(whole - split) <= 1e-8 * (1.0 + abs(whole))


def test_modulus_law():
    sf = Semiflow(make_problem(0, 1, "-x", h_re="x", h_im="5"))
    mag = weight_magnitude(sf, 0.8, np.array([0.4]))[0]
    assert abs(weight_cocycle(sf, 0.8, 0.4)) == pytest.approx(mag, rel=1e-10)


# ---------------------------------------------------------------------------
# Transported densities
# ---------------------------------------------------------------------------

def test_densities_reduce_to_rho_at_time_zero():
    prob = make_problem(0, 1, "x*(1-x)", h_re="x", rho="exp(-x)")
    sf = Semiflow(prob)
    for x in (0.2, 0.5, 0.8):
        expected = float(prob.rho(x))
        assert rho_backward(sf, 0.0, 2.0, x) == expected
        assert rho_forward(sf, 0.0, 2.0, x) == expected


@pytest.mark.parametrize("gamma,p", [(0.0, 2.0), (1.0, 1.0), (-2.0, 2.0)])
def test_backward_density_decaying_flow(gamma, p):
    # vFL data: ρ_{−t,p}(x) = e^{−(pγ+1)t}, independent of x.
    sf = Semiflow(make_problem(0, 1, "-x", h_re=str(gamma)))
    t = 1.0
    expected = math.exp(-(p * gamma + 1.0) * t)
    values = rho_backward_values(sf, t, p, np.array([0.2, 0.5, 0.9]))
    np.testing.assert_allclose(values, expected, rtol=1e-10)


def test_backward_density_translation():
    sf = Semiflow(make_problem(0, math.inf, "1", rho="exp(-x)", validate=False))
    assert rho_backward(sf, 2.0, 1.0, 1.5) == pytest.approx(math.exp(-3.5), rel=1e-10)


def test_forward_density_decaying_flow():
    sf = Semiflow(make_problem(0, 1, "-x"))
    assert rho_forward(sf, LN2, 2.0, 0.3) == pytest.approx(2.0, rel=1e-10)
    assert rho_forward(sf, LN2, 2.0, 0.7) == 0.0


def test_forward_density_vanishes_outside_image_batch():
    sf = Semiflow(make_problem(0, 1, "-x"))
    values = rho_forward_values(sf, LN2, 1.0, np.array([0.1, 0.49, 0.51, 0.99]))
    assert values[0] > 0 and values[1] > 0
    assert values[2] == 0.0 and values[3] == 0.0


def test_forward_backward_duality():
    # ρ_{t,p}(φ(t,y)) · ρ_{−t,p}(y) = ρ(y) · ρ(φ(t,y))
    prob = make_problem(0, 1, "x*(1-x)", h_re="x", rho="exp(-x)")
    sf = Semiflow(prob)
    t, p, y = 0.8, 2.0, 0.3
    fy = sf.flow(t, y)
    lhs = rho_forward(sf, t, p, fy) * rho_backward(sf, t, p, y)
    rhs = float(prob.rho(y)) * float(prob.rho(fy))
    assert lhs == pytest.approx(rhs, rel=1e-8)


def test_density_profile_wrapper():
    sf = Semiflow(make_problem(0, 1, "-x"))
    backward = DensityProfile(sf, 2.0, "backward")
    forward = DensityProfile(sf, 2.0, "forward")
    assert backward.at(1.0, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-10)
    assert forward.at(LN2, 0.3) == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ValueError):
        DensityProfile(sf, 2.0, "sideways")


def test_density_values_nonnegative_and_continuous_in_t():
    sf = Semiflow(make_problem(0, 1, "x*(1-x)", h_re="x", rho="exp(-x)"))
    profile = DensityProfile(sf, 1.0, "backward")
    ts = np.linspace(0.0, 2.0, 21)
    trace = np.array([profile.at(t, 0.4) for t in ts])
    assert np.all(trace >= 0)
    assert np.max(np.abs(np.diff(trace))) < 0.5   # no jumps on a smooth problem


# ---------------------------------------------------------------------------
# Admissibility estimation
# ---------------------------------------------------------------------------

def test_admissibility_trivial_translation():
    sf = Semiflow(make_problem(0, math.inf, "1", validate=False))
    est = estimate_admissibility(sf, 1.0, [0.0, 0.5, 1.0, 2.0], np.linspace(0.5, 10, 30))
    assert est.verdict == "admissible_witness"
    assert est.M == pytest.approx(1.0, abs=1e-9)
    assert est.omega_rate == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("gamma,p", [(0.0, 2.0), (1.0, 1.0), (-0.5, 2.0)])
def test_admissibility_decaying_flow_rate(gamma, p):
    sf = Semiflow(make_problem(0, 1, "-x", h_re=str(gamma)))
    est = estimate_admissibility(sf, p, np.linspace(0.0, 3.0, 7),
                                 np.linspace(0.05, 0.95, 19))
    assert est.verdict == "admissible_witness"
    assert est.omega_rate == pytest.approx(p * gamma + 1.0, abs=0.05)
    assert est.M == pytest.approx(1.0, abs=0.05)
    assert est.M >= 1.0


def test_admissibility_gaussian_density_violation():
    sf = Semiflow(make_problem(0, math.inf, "1", rho="exp(-x^2)", validate=False))
    est = estimate_admissibility(sf, 1.0, [0.5, 1.0], np.linspace(0.5, 20, 40))
    assert est.verdict == "violation"


def test_admissibility_rejects_empty_grids():
    sf = Semiflow(make_problem(0, 1, "-x"))
    with pytest.raises(ValueError):
        estimate_admissibility(sf, 1.0, [], [0.5])


# ---------------------------------------------------------------------------
# Hypothesis report
# ---------------------------------------------------------------------------

def test_hypotheses_decaying_flow_trivial_weight():
    report = check_hypotheses(Semiflow(make_problem(0, 1, "-x")))
    assert report.gamma is None                 # no zeros of F inside (0,1)
    assert report.hyp_a_ok == "verified"
    assert report.hyp_b_ok == "verified"
    assert report.side == "both"
    assert report.re_h_bounded == "verified"
    assert report.f_prime_bounded == "verified"


def test_hypotheses_constant_weight_at_interior_zero():
    report = check_hypotheses(Semiflow(make_problem(0, 1, "x-0.5", h_re="1")))
    assert report.gamma == pytest.approx(1.0)
    assert report.hyp_a_ok == "verified"


def test_hypotheses_varying_weight_at_zeros_violated():
    report = check_hypotheses(Semiflow(make_problem(
        0, 1, "(x-0.25)*(x-0.75)", h_re="x", validate=False)))
    assert report.gamma is None
    assert report.hyp_a_ok == "violated"


def test_hypotheses_imaginary_quotient_one_sided():
    # Im h / F = −1/y on (0,1): divergent at 0, integrable at 1.
    report = check_hypotheses(Semiflow(make_problem(0, 1, "-x", h_im="1")))
    assert report.hyp_b_ok == "verified"
    assert report.side == "right"


def test_hypotheses_imaginary_quotient_interior_singularity():
    report = check_hypotheses(Semiflow(make_problem(0, 1, "x-0.5", h_im="1")))
    assert report.hyp_b_ok == "violated"
    assert report.side == "none"


def test_hypotheses_unbounded_weight_flagged():
    report = check_hypotheses(Semiflow(make_problem(0, 1, "-x", h_re="1/x",
                                                    validate=False)))
    assert report.re_h_bounded == "violated"
