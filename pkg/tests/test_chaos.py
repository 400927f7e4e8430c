"""Tests for the chaos classification pipeline.

Expected values come from closed-form evaluation of the criterion integral:
for the unit-interval problem with drift -x and constant weight gamma the
integrand anchored at x is (w/x)**(p*gamma), so the integral over (0, 1)
equals x**(-p*gamma) / (p*gamma + 1) exactly when p*gamma + 1 > 0 and
diverges otherwise.  For unit drift with density exp(-w) on (0, inf) the
integrand is exp(-w) and the integral is 1.
"""

import json
import math

import numpy as np
import pytest

from semiflow.chaos import (
    VERDICT_CHAOTIC,
    VERDICT_INCONCLUSIVE,
    VERDICT_NOT_CHAOTIC,
    ChaosReport,
    chaos_test,
    criterion_integral,
    decay_probe,
    lower_density_estimate,
    vfl_classify,
)
from semiflow.flows import Semiflow
from semiflow.lpspace import (
    Grid,
    GridFunction,
    build_grid,
    lp_norm,
    make_indicator_spec,
    sample_function,
)
from semiflow.problem import make_problem
from semiflow.semigroup import orbit_norm_integral

from conftest import translation_problem, vfl_problem


def _vfl_sf(gamma, p=1.0, rho="1"):
    return Semiflow(vfl_problem(gamma=gamma, p=p, rho=rho))


def _closed_form(gamma, p, x):
    return x ** (-p * gamma) / (p * gamma + 1.0)


class TestCriterionIntegral:
    @pytest.mark.parametrize("gamma,p,x", [
        (0.0, 2.0, 0.5),
        (1.0, 1.0, 0.5),
        (0.5, 1.0, 0.3),
        (-0.4, 2.0, 0.5),
        (-0.4, 1.0, 0.7),
        (1.0, 2.0, 0.5),
    ])
    def test_decay_drift_matches_closed_form(self, gamma, p, x):
        prob = vfl_problem(gamma=gamma, p=p)
        value, diag = criterion_integral(prob, (0.0, 1.0), p, x)
        assert diag.verdict == "convergent"
        assert value == pytest.approx(_closed_form(gamma, p, x), rel=1e-6)

    def test_flat_weight_unit_value(self):
        prob = vfl_problem(gamma=0.0, p=2.0)
        value, diag = criterion_integral(prob, (0.0, 1.0), 2.0, 0.5)
        assert diag.verdict == "convergent"
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_exponential_density_on_half_line(self):
        prob = translation_problem(rho="exp(0-x)")
        value, diag = criterion_integral(prob, (0.0, math.inf), 1.0, 1.0)
        assert diag.verdict == "convergent"
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_exponential_density_basepoint_free(self):
        # with a zero weight the anchor cancels entirely
        prob = translation_problem(rho="exp(0-x)")
        v1, _ = criterion_integral(prob, (0.0, math.inf), 1.0, 0.5)
        v2, _ = criterion_integral(prob, (0.0, math.inf), 1.0, 7.0)
        assert v1 == pytest.approx(v2, rel=1e-9)

    @pytest.mark.parametrize("gamma,p", [
        (-1.0, 1.0),
        (-2.0, 1.0),
        (-0.5, 2.0),   # harmonic boundary case
        (-0.6, 2.0),
    ])
    def test_decay_drift_divergent_below_threshold(self, gamma, p):
        prob = vfl_problem(gamma=gamma, p=p)
        value, diag = criterion_integral(prob, (0.0, 1.0), p, 0.5)
        assert diag.verdict == "divergent"
        assert math.isinf(value)

    def test_flat_density_on_half_line_divergent(self):
        prob = translation_problem(rho="1")
        value, diag = criterion_integral(prob, (0.0, math.inf), 1.0, 1.0)
        assert diag.verdict == "divergent"
        assert math.isinf(value)

    def test_anchor_scaling_between_basepoints(self):
        # value(x) = x**-1 / 2 for gamma = 1, p = 1, so halving x doubles it
        prob = vfl_problem(gamma=1.0, p=1.0)
        v1, _ = criterion_integral(prob, (0.0, 1.0), 1.0, 0.5)
        v2, _ = criterion_integral(prob, (0.0, 1.0), 1.0, 0.25)
        assert v2 / v1 == pytest.approx(2.0, rel=1e-9)

    def test_verdict_stable_across_basepoints(self):
        for gamma, p in [(-1.0, 1.0), (0.0, 2.0), (1.0, 1.0)]:
            prob = vfl_problem(gamma=gamma, p=p)
            verdicts = {
                criterion_integral(prob, (0.0, 1.0), p, x)[1].verdict
                for x in (0.2, 0.5, 0.8)
            }
            assert len(verdicts) == 1

    def test_basepoint_must_be_interior(self):
        prob = vfl_problem(gamma=0.0)
        with pytest.raises(ValueError, match="strictly inside"):
            criterion_integral(prob, (0.0, 1.0), 1.0, 0.0)
        with pytest.raises(ValueError, match="strictly inside"):
            criterion_integral(prob, (0.0, 1.0), 1.0, 1.5)

    def test_basepoint_required(self):
        prob = vfl_problem(gamma=0.0)
        with pytest.raises(ValueError, match="basepoint"):
            criterion_integral(prob, (0.0, 1.0), 1.0)

    def test_exponent_below_one_rejected(self):
        prob = vfl_problem(gamma=0.0)
        with pytest.raises(ValueError, match="p"):
            criterion_integral(prob, (0.0, 1.0), 0.5, 0.5)

    def test_interior_evaluation_failure_is_diagnosed(self):
        # a density whose expression cannot be evaluated inside the
        # component surfaces as a decomposition diagnostic, not silently
        prob = make_problem(0.0, 1.0, "-x", rho="log(x-0.4)", p=1.0,
                            validate=False)
        with pytest.raises(ValueError, match="inside the component"):
            criterion_integral(prob, (0.0, 1.0), 1.0, 0.5)

    def test_monotone_in_weight_on_nonnegative_grid(self):
        # at p = 1, x = 0.5 the closed form gives equal values at gamma 0
        # and 1; the ordering claim is non-strict
        prob0 = vfl_problem(gamma=0.0, p=1.0)
        prob1 = vfl_problem(gamma=1.0, p=1.0)
        v0, _ = criterion_integral(prob0, (0.0, 1.0), 1.0, 0.5)
        v1, _ = criterion_integral(prob1, (0.0, 1.0), 1.0, 0.5)
        assert v1 <= v0 + 1e-9


class TestChaosTest:
    def test_decay_drift_flat_weight_is_chaotic(self):
        report = chaos_test(_vfl_sf(0.0, p=2.0))
        assert report.verdict == VERDICT_CHAOTIC
        assert report.zero_set_null
        assert len(report.components) == 1
        comp = report.components[0]
        assert comp.verdict == "convergent"
        assert comp.agreement
        assert comp.value == pytest.approx(
            _closed_form(0.0, 2.0, comp.basepoint), rel=1e-6)

    def test_flat_half_line_translation_not_chaotic(self):
        report = chaos_test(Semiflow(translation_problem(rho="1", p=1.0)))
        assert report.verdict == VERDICT_NOT_CHAOTIC
        assert report.components[0].verdict == "divergent"

    def test_decay_drift_strong_weight_not_chaotic(self):
        report = chaos_test(_vfl_sf(-1.0, p=1.0))
        assert report.verdict == VERDICT_NOT_CHAOTIC

    def test_flat_zero_of_drift_blocks_chaos(self):
        sf = Semiflow(make_problem(0.0, 1.0, "(x-0.5)^9", p=1.0))
        report = chaos_test(sf)
        assert report.verdict == VERDICT_NOT_CHAOTIC
        assert not report.zero_set_null
        assert report.components == ()
        assert any("zero set" in note for note in report.notes)

    @pytest.mark.parametrize("p", [1.0, 2.0])
    @pytest.mark.parametrize("gamma", [-2.0, -1.0, -0.4, 0.0, 1.0])
    def test_verdict_matches_algebraic_threshold(self, gamma, p):
        report = chaos_test(_vfl_sf(gamma, p=p))
        expected = VERDICT_CHAOTIC if p * gamma + 1.0 > 0 else VERDICT_NOT_CHAOTIC
        assert report.verdict == expected
        for comp in report.components:
            assert comp.agreement

    def test_two_component_drift_both_directions(self):
        # F = x - 0.5 pushes outward from the interior zero; the verdict
        # is decided per component and aggregated
        growing = chaos_test(Semiflow(make_problem(
            0.0, 1.0, "x-0.5", h_re="-1", p=1.0)))
        assert growing.verdict == VERDICT_CHAOTIC
        assert [c.verdict for c in growing.components] == ["convergent"] * 2

        shrinking = chaos_test(Semiflow(make_problem(
            0.0, 1.0, "x-0.5", h_re="1", p=1.0)))
        assert shrinking.verdict == VERDICT_NOT_CHAOTIC
        assert [c.verdict for c in shrinking.components] == ["divergent"] * 2

    def test_exponent_override(self):
        sf = _vfl_sf(-0.75, p=1.0)
        assert chaos_test(sf, p=1.0).verdict == VERDICT_CHAOTIC
        assert chaos_test(sf, p=2.0).verdict == VERDICT_NOT_CHAOTIC

    def test_report_serializes_to_json(self):
        report = chaos_test(_vfl_sf(0.0, p=2.0))
        payload = json.loads(report.to_json())
        assert payload["verdict"] == VERDICT_CHAOTIC
        assert payload["zero_set_null"] is True
        assert payload["hypotheses"]["endpoint_integrability"] == "verified"
        comp = payload["components"][0]
        assert comp["interval"] == [0.0, 1.0]
        assert comp["integral"] == pytest.approx(1.0, rel=1e-6)
        assert comp["tail"]["verdict"] == "convergent"
        assert isinstance(payload["notes"], list)

    def test_divergent_integral_serializes_as_null(self):
        report = chaos_test(_vfl_sf(-1.0, p=1.0))
        payload = json.loads(report.to_json())
        assert payload["components"][0]["integral"] is None

    def test_report_renders_text(self):
        report = chaos_test(_vfl_sf(0.0, p=2.0))
        text = report.to_text()
        assert VERDICT_CHAOTIC in text
        assert "component (0, 1)" in text


class TestVflClassify:
    def test_flat_weight_chaotic_for_square_norm(self):
        report = vfl_classify(_vfl_sf(0.0, p=2.0))
        assert report.chaotic
        assert not report.boundary
        assert report.cross_check == "agree"
        assert report.threshold == pytest.approx(-0.5)
        assert report.margin == pytest.approx(0.5)

    def test_boundary_weight_not_chaotic(self):
        report = vfl_classify(_vfl_sf(-0.5, p=2.0))
        assert not report.chaotic
        assert report.boundary
        assert any("boundary" in note for note in report.notes)
        assert report.cross_check == "agree"

    def test_strongly_stable_regime(self):
        report = vfl_classify(_vfl_sf(-2.0, p=1.0))
        assert not report.chaotic
        assert not report.boundary
        assert any("strongly stable" in note for note in report.notes)
        assert report.cross_check == "agree"

    def test_growth_weight_chaotic_for_integral_norm(self):
        report = vfl_classify(_vfl_sf(1.0, p=1.0))
        assert report.chaotic
        assert report.cross_check == "agree"

    @pytest.mark.parametrize("p", [1.0, 2.0])
    @pytest.mark.parametrize("gamma", [-2.0, -1.0, -0.4, 0.0, 1.0])
    def test_agrees_with_pipeline_across_grid(self, gamma, p):
        sf = _vfl_sf(gamma, p=p)
        report = vfl_classify(sf, p=p)
        expected = p * gamma + 1.0 > 1e-12
        assert report.chaotic == expected
        assert report.cross_check == "agree"

    def test_rotating_weight_uses_real_part(self):
        prob = vfl_problem(gamma=0.0, p=2.0, gamma_im=1.0)
        report = vfl_classify(Semiflow(prob))
        assert report.chaotic
        assert report.h_at_zero == pytest.approx(0.0)

    def test_requires_unit_interval(self):
        sf = Semiflow(translation_problem(rho="1"))
        with pytest.raises(ValueError, match="unit-interval"):
            vfl_classify(sf)

    def test_requires_linear_decay_drift(self):
        sf = Semiflow(make_problem(0.0, 1.0, "x*(1-x)", p=1.0))
        with pytest.raises(ValueError, match="drift"):
            vfl_classify(sf)

    def test_weight_singular_at_endpoint_refused(self):
        sf = Semiflow(make_problem(0.0, 1.0, "-x", h_re="1/x", p=1.0))
        with pytest.raises(ValueError, match="evaluated at 0"):
            vfl_classify(sf)

    def test_slowly_varying_weight_refused_as_unverifiable(self):
        # (x**(1/16) - 0)/x is integrable but decays so slowly that the
        # shell test cannot certify it; the classifier must refuse, not guess
        sf = Semiflow(make_problem(
            0.0, 1.0, "-x", h_re="sqrt(sqrt(sqrt(sqrt(x))))", p=1.0))
        with pytest.raises(ValueError, match="refusing"):
            vfl_classify(sf)

    def test_nonintegrable_deviation_refused(self):
        # h(0) = 0 but h(x) ~ 1 just above 0, so (h - h(0))/x ~ 1/x
        sf = Semiflow(make_problem(
            0.0, 1.0, "-x", h_re="sin(x)/(x+1e-300)", p=1.0))
        with pytest.raises(ValueError, match="refusing"):
            vfl_classify(sf)

    def test_report_serializes(self):
        report = vfl_classify(_vfl_sf(0.0, p=2.0))
        payload = json.loads(json.dumps(report.to_dict()))
        assert payload["chaotic"] is True
        assert payload["pipeline_verdict"] == VERDICT_CHAOTIC


class TestDecayProbe:
    def test_strong_decay_rate(self):
        prob = vfl_problem(gamma=-2.0, p=1.0)
        sf = Semiflow(prob)
        grid = build_grid(prob)
        f = sample_function(grid, lambda x: np.ones_like(x))
        probe = decay_probe(sf, f, 1.0)
        assert probe.rate == pytest.approx(-2.0, abs=0.01)

    def test_neutral_weight_rate_zero(self):
        prob = vfl_problem(gamma=0.0, p=1.0)
        sf = Semiflow(prob)
        grid = build_grid(prob)
        f = sample_function(grid, lambda x: np.ones_like(x))
        probe = decay_probe(sf, f, 1.0)
        assert probe.rate == pytest.approx(0.0, abs=0.01)

    def test_initial_entry_is_plain_norm(self):
        prob = vfl_problem(gamma=-1.0, p=1.0)
        sf = Semiflow(prob)
        grid = build_grid(prob)
        f = sample_function(grid, lambda x: np.ones_like(x))
        probe = decay_probe(sf, f, 1.0, t_grid=(0.0, 1.0))
        t0, n0 = probe.entries[0]
        assert t0 == 0.0
        assert n0 == pytest.approx(lp_norm(f, 1.0, rho=prob.rho), rel=1e-12)

    def test_serializes(self):
        prob = vfl_problem(gamma=0.0, p=1.0)
        sf = Semiflow(prob)
        f = sample_function(build_grid(prob), lambda x: np.ones_like(x))
        probe = decay_probe(sf, f, 1.0, t_grid=(0.0, 0.5))
        payload = json.loads(json.dumps(probe.to_dict()))
        assert len(payload["entries"]) == 2
        assert isinstance(payload["rate"], float)


@pytest.fixture(scope="module")
def space():
    grid = Grid(tuple(np.linspace(0.01, 0.99, 129)))
    target = sample_function(grid, lambda x: np.sin(3.0 * x))
    bump = sample_function(grid, lambda x: np.ones_like(x))
    return grid, target, bump


class TestLowerDensityEstimate:
    def test_constant_orbit_full_density(self, space):
        _, target, _ = space
        value = lower_density_estimate(lambda t: target, target, 0.1, 16.0, 2.0)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_square_wave_half_density(self, space):
        _, target, bump = space
        def orbit(t):
            return target if int(math.floor(t)) % 2 == 0 else GridFunction(
                target.grid, target.values + bump.values)
        value = lower_density_estimate(orbit, target, 0.5, 16.0, 2.0)
        assert value == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.parametrize("duty", [0.25, 0.75])
    def test_duty_cycle_recovered(self, space, duty):
        _, target, bump = space
        def orbit(t):
            phase = t - 2.0 * math.floor(t / 2.0)
            inside = phase < 2.0 * duty
            return target if inside else GridFunction(
                target.grid, target.values + bump.values)
        value = lower_density_estimate(orbit, target, 0.5, 16.0, 2.0)
        assert value == pytest.approx(duty, abs=2e-3)

    def test_escaping_orbit_zero_density(self, space):
        _, target, bump = space
        def orbit(t):
            return GridFunction(target.grid,
                                target.values + (1.0 + t) * bump.values)
        value = lower_density_estimate(orbit, target, 0.5, 16.0, 2.0)
        assert value == 0.0

    def test_validation(self, space):
        _, target, _ = space
        with pytest.raises(ValueError):
            lower_density_estimate(lambda t: target, target, -1.0, 16.0, 2.0)
        with pytest.raises(ValueError):
            lower_density_estimate(lambda t: target, target, 0.5, 0.0, 2.0)
        with pytest.raises(ValueError):
            lower_density_estimate(lambda t: target, target, 0.5, 16.0, 2.0,
                                   mesh=4)


class TestPipelineCoherence:
    def test_chaotic_verdict_implies_convergent_coorbit(self):
        # when the pipeline certifies chaos, the right-inverse orbit norms
        # must be integrable over time on a reference interval
        prob = vfl_problem(gamma=0.0, p=1.0)
        sf = Semiflow(prob)
        report = chaos_test(sf)
        assert report.verdict == VERDICT_CHAOTIC
        grid = build_grid(prob)
        spec = make_indicator_spec(sf, (0.25, 0.5))
        value, diag = orbit_norm_integral(sf, spec, 1.0, operator="S",
                                          grid=grid)
        assert diag.verdict == "convergent"
        assert value == pytest.approx(0.25, abs=1e-3)
