"""Chaos classification for weighted composition semigroups.

This module decides whether the semigroup built from a scalar problem is
chaotic (and admits the full family of right inverses) by evaluating, on every
monotone component of the drift, an improper criterion integral

    integral over the component of  exp(-p * A(w)) * rho(w) dw,
    A(w) = integral from the basepoint x to w of  Re h(y) / F(y) dy.

Convergence of that integral on every component - together with the standing
hypotheses on the weight and a null zero set for the drift - yields the
verdict ``CHAOTIC_AND_FHC``.  A divergent component integral, or a
positive-measure zero set, yields ``NOT_CHAOTIC``.  Anything the numerics
cannot settle is reported ``INCONCLUSIVE``; the pipeline never overclaims.

The improper integral is evaluated shell by shell: geometrically shrinking
shells toward a finite component endpoint (each half as far from the endpoint
as the last), dyadically growing shells toward an infinite one.  Successive
shell masses are classified by their trailing ratios.  For an integrand that
behaves like distance**(s-1) near a finite endpoint the shell ratio is
2**(-s), so decision thresholds must sit close to 1: shells are called
convergent at ratio <= 0.95 and divergent at ratio >= 0.999.  (The coarser
0.7 threshold used for time tails would misread slowly convergent component
integrals, e.g. s = 0.2 gives ratio ~0.87.)

Also provided: a direct classifier for the unit-interval linear-decay
problem, an orbit-decay probe, and a lower-density estimator for orbit
recurrence statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .expressions import EvaluationError
from .flows import Component, Semiflow
from .lpspace import GridFunction, lp_distance, lp_norm
from .numerics import TailDiagnosis, classify_tail, gauss_rule
from .problem import ProblemDef
from .semigroup import apply_T, _density
from .weights import HypothesisReport, check_hypotheses

__all__ = [
    "ComponentCriterion",
    "ChaosReport",
    "VflReport",
    "DecayProbe",
    "criterion_integral",
    "chaos_test",
    "vfl_classify",
    "decay_probe",
    "lower_density_estimate",
]

# Shell protocol for improper integrals in space (see module docstring for
# why these sit closer to 1 than the time-tail thresholds).
SHELL_DECAY_RATIO = 0.95
SHELL_GROWTH_RATIO = 0.999
SHELL_RUNS = 4
MAX_FINITE_SHELLS = 54          # gap * 2**-54 is below fp resolution
MAX_INFINITE_SHELLS = 44        # widths up to ~1.8e13
_NEGLIGIBLE = 1e-16

VERDICT_CHAOTIC = "CHAOTIC_AND_FHC"
VERDICT_NOT_CHAOTIC = "NOT_CHAOTIC"
VERDICT_INCONCLUSIVE = "INCONCLUSIVE"

_GAUSS_NODES, _GAUSS_WEIGHTS = gauss_rule(8)


# ---------------------------------------------------------------------------
# quadrature helpers


def _segment_quad(fn: Callable[[np.ndarray], np.ndarray],
                  los: np.ndarray, his: np.ndarray) -> np.ndarray:
    """Signed Gauss-Legendre integral of ``fn`` over each segment [lo, hi]."""
    los = np.asarray(los, dtype=float)
    his = np.asarray(his, dtype=float)
    mid = 0.5 * (los + his)
    half = 0.5 * (his - los)
    pts = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
    vals = np.asarray(fn(pts.ravel()), dtype=float).reshape(pts.shape)
    return (vals * _GAUSS_WEIGHTS[None, :]).sum(axis=1) * half


def _shell_mass(q_fn: Callable[[np.ndarray], np.ndarray],
                rho_fn: Callable[[np.ndarray], np.ndarray],
                p: float, a: float, b: float, a_start: float,
                panels: int = 4) -> tuple[float, float]:
    """Integrate exp(-p*A)*rho over the shell from ``a`` to ``b``.

    ``A`` is the antiderivative of ``q`` anchored so that A(a) = ``a_start``;
    it is accumulated across panel edges by cumulative quadrature and
    corrected inside each panel per evaluation point.  Returns the (signed)
    shell integral and A(b).  The shell may be traversed in either direction.
    """
    edges = np.linspace(a, b, panels + 1)
    panel_increments = _segment_quad(q_fn, edges[:-1], edges[1:])
    a_edges = a_start + np.concatenate(([0.0], np.cumsum(panel_increments)))
    total = 0.0
    with np.errstate(over="ignore", under="ignore"):
        for i in range(panels):
            lo, hi = edges[i], edges[i + 1]
            mid = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo)
            pts = mid + half * _GAUSS_NODES
            partial = _segment_quad(q_fn, np.full(pts.shape, lo), pts)
            a_pts = a_edges[i] + partial
            integrand = np.exp(-p * a_pts) * np.asarray(rho_fn(pts), dtype=float)
            total += float(np.sum(integrand * _GAUSS_WEIGHTS) * half)
    return total, float(a_edges[-1])


def _directional_shells(q_fn, rho_fn, p: float, x: float, endpoint: float,
                        ) -> TailDiagnosis:
    """Improper integral of exp(-p*A)*rho from ``x`` toward ``endpoint``.

    Shell boundaries shrink geometrically toward a finite endpoint and grow
    dyadically toward an infinite one.  The trailing shell-mass ratios decide
    convergence; the verdict is forced early when shells become negligible
    (convergent) or non-finite (divergent).
    """
    if math.isfinite(endpoint):
        gap = endpoint - x
        boundaries = [endpoint - gap * 0.5 ** k for k in range(1, MAX_FINITE_SHELLS + 1)]
        # Keep shell distances well above the endpoint's ulp: closer in,
        # cancellation in (w - endpoint) corrupts the integrand and the
        # trailing ratios.  The dropped remainder is restored by the
        # geometric tail extrapolation when the integral converges.
        floor = 1e5 * np.finfo(float).eps * abs(endpoint)
        boundaries = [b for b in boundaries if abs(endpoint - b) > floor]
    else:
        step = 1.0
        sign = 1.0 if endpoint > 0 else -1.0
        boundaries = [x + sign * (2.0 ** (k + 1) - 1.0) * step
                      for k in range(MAX_INFINITE_SHELLS)]

    shells: list[float] = []
    forced: Optional[str] = None
    detail = ""
    a_cur = 0.0
    cur = x
    running = 0.0
    tiny_run = 0
    for edge in boundaries:
        try:
            signed, a_cur = _shell_mass(q_fn, rho_fn, p, cur, edge, a_cur)
        except EvaluationError as exc:
            raise ValueError(
                "criterion integrand is singular strictly inside the "
                f"component near {cur:.6g}..{edge:.6g}: {exc}; this indicates "
                "the component decomposition is wrong") from exc
        mass = abs(signed)
        shells.append(mass)
        if not math.isfinite(mass) or not math.isfinite(a_cur):
            forced = "divergent"
            detail = "shell mass overflowed"
            break
        running += mass
        if mass <= _NEGLIGIBLE * (running + 1e-300):
            tiny_run += 1
            if tiny_run >= 2:
                forced = "convergent"
                detail = "shells negligible"
                break
        else:
            tiny_run = 0
        cur = edge

    if forced is not None:
        tail = 0.0
        return TailDiagnosis(forced, tuple(shells), tail, detail)
    window = shells[-(SHELL_RUNS + 8):]
    diag = classify_tail(window, decay_ratio=SHELL_DECAY_RATIO,
                         growth_ratio=SHELL_GROWTH_RATIO, runs=SHELL_RUNS)
    return TailDiagnosis(diag.verdict, tuple(shells), diag.tail_estimate,
                         diag.detail)


def _component_bounds(component) -> tuple[float, float]:
    if isinstance(component, Component):
        return float(component.lo), float(component.hi)
    lo, hi = component
    return float(lo), float(hi)


def _as_problem(problem: Union[ProblemDef, Semiflow]) -> ProblemDef:
    return problem.problem if isinstance(problem, Semiflow) else problem


# ---------------------------------------------------------------------------
# criterion integral


def criterion_integral(problem: Union[ProblemDef, Semiflow], component,
                       p: Optional[float] = None,
                       basepoint: Optional[float] = None,
                       ) -> tuple[float, TailDiagnosis]:
    """Criterion integral of one drift component with anchored antiderivative.

    Computes ``integral exp(-p*A(w)) rho(w) dw`` over the component, where
    ``A(w) = integral from basepoint to w of Re h / F``, as two improper
    integrals toward the component endpoints.  Returns the value (``inf``
    when divergent) and a tail diagnosis combining both directions.  For a
    convergent verdict the value includes the geometrically extrapolated
    remainder beyond the computed shells.
    """
    prob = _as_problem(problem)
    if p is None:
        p = prob.p
    p = float(p)
    if p < 1.0:
        raise ValueError("exponent p must satisfy p >= 1")
    lo, hi = _component_bounds(component)
    if basepoint is None:
        raise ValueError("a basepoint strictly inside the component is required")
    x = float(basepoint)
    if not (lo < x < hi):
        raise ValueError(
            f"basepoint {x} must lie strictly inside the component ({lo}, {hi})")

    h_re = prob.h_re
    f_expr = prob.F
    rho_expr = prob.rho

    def q_fn(ys: np.ndarray) -> np.ndarray:
        num = np.asarray(h_re(ys), dtype=float)
        den = np.asarray(f_expr(ys), dtype=float)
        out = np.divide(num, den, out=np.full_like(num, np.nan),
                        where=den != 0.0)
        if not np.all(np.isfinite(out)):
            bad = np.asarray(ys, dtype=float)[~np.isfinite(out)]
            raise ValueError(
                "criterion integrand Re h / F is singular strictly inside "
                f"the component (near {bad.flat[0]:.6g}); this indicates the "
                "component decomposition is wrong")
        return out

    def rho_fn(ys: np.ndarray) -> np.ndarray:
        return np.asarray(rho_expr(ys), dtype=float)

    lower = _directional_shells(q_fn, rho_fn, p, x, lo)
    upper = _directional_shells(q_fn, rho_fn, p, x, hi)

    verdicts = (lower.verdict, upper.verdict)
    if "divergent" in verdicts:
        verdict = "divergent"
    elif "inconclusive" in verdicts:
        verdict = "inconclusive"
    else:
        verdict = "convergent"
    tail = lower.tail_estimate + upper.tail_estimate
    if verdict == "divergent":
        value = math.inf
    else:
        value = float(sum(lower.blocks) + sum(upper.blocks) + tail)
    detail = f"toward {lo:g}: {lower.verdict} ({lower.detail}); " \
             f"toward {hi:g}: {upper.verdict} ({upper.detail})"
    diag = TailDiagnosis(verdict, lower.blocks + upper.blocks, tail, detail)
    return value, diag


# ---------------------------------------------------------------------------
# full pipeline


@dataclass(frozen=True)
class ComponentCriterion:
    """Criterion-integral outcome for one monotone drift component."""

    interval: tuple[float, float]
    basepoint: float
    value: float
    tail: TailDiagnosis
    second_basepoint: float
    second_value: float
    agreement: bool
    verdict: str                 # 'convergent' | 'divergent' | 'inconclusive'


@dataclass(frozen=True)
class ChaosReport:
    """Aggregate verdict with the evidence that produced it."""

    hypotheses: HypothesisReport
    zero_set_null: bool
    components: tuple[ComponentCriterion, ...]
    verdict: str                 # CHAOTIC_AND_FHC | NOT_CHAOTIC | INCONCLUSIVE
    p: float
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "p": self.p,
            "zero_set_null": self.zero_set_null,
            "hypotheses": _hypotheses_dict(self.hypotheses),
            "components": [
                {
                    "interval": [_json_float(c.interval[0]),
                                 _json_float(c.interval[1])],
                    "basepoint": c.basepoint,
                    "integral": _json_float(c.value),
                    "second_basepoint": c.second_basepoint,
                    "second_integral": _json_float(c.second_value),
                    "basepoints_agree": c.agreement,
                    "tail": {
                        "verdict": c.tail.verdict,
                        "tail_estimate": _json_float(c.tail.tail_estimate),
                        "detail": c.tail.detail,
                    },
                    "verdict": c.verdict,
                }
                for c in self.components
            ],
            "notes": list(self.notes),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def to_text(self) -> str:
        lines = [f"verdict: {self.verdict} (p = {self.p:g})"]
        hyp = self.hypotheses
        lines.append(
            "hypotheses: divergence-rate match "
            f"{hyp.hyp_a_ok}, endpoint integrability {hyp.hyp_b_ok} "
            f"(side: {hyp.side}), Re h bounded {hyp.re_h_bounded}, "
            f"F' bounded {hyp.f_prime_bounded}")
        lines.append(
            f"zero set of drift null: {'yes' if self.zero_set_null else 'no'}")
        for c in self.components:
            val = "infinite" if not math.isfinite(c.value) else f"{c.value:.6g}"
            lines.append(
                f"component ({c.interval[0]:g}, {c.interval[1]:g}): "
                f"integral {val} at x = {c.basepoint:g} -> {c.verdict}"
                + ("" if c.agreement else "  [basepoints disagree]"))
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines)


def _json_float(v: float) -> Optional[float]:
    v = float(v)
    return v if math.isfinite(v) else None


def _hypotheses_dict(hyp: HypothesisReport) -> dict:
    return {
        "gamma": hyp.gamma,
        "divergence_rate_match": hyp.hyp_a_ok,
        "endpoint_integrability": hyp.hyp_b_ok,
        "re_h_bounded": hyp.re_h_bounded,
        "f_prime_bounded": hyp.f_prime_bounded,
        "side": hyp.side,
        "notes": list(hyp.notes),
    }


def _component_basepoints(prob: ProblemDef, lo: float, hi: float,
                          ) -> tuple[float, float]:
    """Two distinct probe points strictly inside the component."""
    w_lo, w_hi = prob.sample_window()
    a = max(lo, w_lo)
    b = min(hi, w_hi)
    if not (a < b):
        a, b = lo, hi            # window missed the component; fall back
        if not math.isfinite(a):
            a = b - 1.0
        if not math.isfinite(b):
            b = a + 1.0
    span = b - a
    return a + 0.5 * span, a + 0.25 * span


def chaos_test(sf: Semiflow, p: Optional[float] = None,
               ) -> ChaosReport:
    """Run the full chaos pipeline and return an evidence-backed verdict.

    Evaluates the criterion integral on every monotone component of the
    drift (at two basepoints each - the verdicts must agree), checks the
    standing hypotheses on the weight, and checks that the drift's zero set
    is null.  ``CHAOTIC_AND_FHC`` requires every check to pass; a divergent
    component integral or a positive-measure zero set gives ``NOT_CHAOTIC``;
    everything else is ``INCONCLUSIVE``.
    """
    prob = sf.problem
    if p is None:
        p = prob.p
    p = float(p)
    hyp = check_hypotheses(sf)
    dec = sf.decompose()
    zero_null = not dec.zero_set_measure_flag

    notes: list[str] = []
    components: list[ComponentCriterion] = []
    component_list = () if not zero_null else dec.components
    for comp in component_list:
        lo, hi = float(comp.lo), float(comp.hi)
        x1, x2 = _component_basepoints(prob, lo, hi)
        v1, d1 = criterion_integral(prob, comp, p, x1)
        v2, d2 = criterion_integral(prob, comp, p, x2)
        agreement = d1.verdict == d2.verdict
        verdict = d1.verdict if agreement else "inconclusive"
        if not agreement:
            notes.append(
                f"component ({lo:g}, {hi:g}): criterion verdicts disagree "
                f"between basepoints {x1:g} ({d1.verdict}) and {x2:g} "
                f"({d2.verdict})")
        components.append(ComponentCriterion(
            interval=(lo, hi), basepoint=x1, value=v1, tail=d1,
            second_basepoint=x2, second_value=v2, agreement=agreement,
            verdict=verdict))

    hyp_states = (hyp.hyp_a_ok, hyp.hyp_b_ok, hyp.re_h_bounded,
                  hyp.f_prime_bounded)
    hypotheses_pass = all(s == "verified" for s in hyp_states)
    if hyp.side in ("left", "right"):
        notes.append(
            "endpoint integrability hypothesis verified on the "
            f"{hyp.side} endpoint family only; treating the asymmetry as "
            "acceptable but flagging it")
    if not zero_null:
        notes.append("drift zero set may have positive measure; chaos is "
                     "excluded by the null-zero-set necessity and the "
                     "criterion integrals are skipped")

    any_divergent = any(c.verdict == "divergent" for c in components)
    all_convergent = bool(components) and all(
        c.verdict == "convergent" for c in components)

    if not zero_null or any_divergent:
        verdict = VERDICT_NOT_CHAOTIC
    elif hypotheses_pass and all_convergent:
        verdict = VERDICT_CHAOTIC
    else:
        verdict = VERDICT_INCONCLUSIVE
        if not hypotheses_pass:
            bad = [name for name, state in zip(
                ("divergence-rate match", "endpoint integrability",
                 "Re h bounded", "F' bounded"), hyp_states)
                if state != "verified"]
            notes.append("hypotheses not fully verified: " + ", ".join(bad))
        if not components:
            notes.append("no monotone components found")
        elif not all_convergent:
            notes.append("some component integrals were inconclusive")

    return ChaosReport(hypotheses=hyp, zero_set_null=zero_null,
                       components=tuple(components), verdict=verdict, p=p,
                       notes=tuple(notes))


# ---------------------------------------------------------------------------
# direct classifier for the unit-interval linear-decay problem


@dataclass(frozen=True)
class VflReport:
    """Threshold classification for the unit-interval linear-decay problem."""

    chaotic: bool
    h_at_zero: float
    threshold: float             # -1/p
    margin: float                # h_at_zero - threshold
    boundary: bool
    precondition_verdict: str
    cross_check: str             # 'agree' | 'numeric-inconclusive' | 'disagree'
    chaos: ChaosReport
    p: float
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "chaotic": self.chaotic,
            "h_at_zero": self.h_at_zero,
            "threshold": self.threshold,
            "margin": self.margin,
            "boundary": self.boundary,
            "precondition": self.precondition_verdict,
            "cross_check": self.cross_check,
            "p": self.p,
            "pipeline_verdict": self.chaos.verdict,
            "notes": list(self.notes),
        }


def vfl_classify(sf: Semiflow, p: Optional[float] = None) -> VflReport:
    """Classify the unit-interval problem with drift -x by its weight at 0.

    Requires the domain (0, 1) and drift F(x) = -x.  Verifies numerically
    that (h(x) - Re h(0)) / x is integrable near 0 (refusing with a
    diagnostic otherwise), then classifies: chaotic exactly when
    Re h(0) > -1/p, with a boundary annotation at equality.  The verdict is
    cross-checked against the criterion-integral pipeline.
    """
    prob = sf.problem
    if p is None:
        p = prob.p
    p = float(p)
    if not (prob.omega_lo == 0.0 and prob.omega_hi == 1.0):
        raise ValueError(
            "classifier requires the unit-interval domain (0, 1); got "
            f"({prob.omega_lo:g}, {prob.omega_hi:g})")
    xs = np.linspace(1e-6, 1.0 - 1e-6, 257)
    drift = np.asarray(prob.F(xs), dtype=float)
    if not np.all(np.abs(drift + xs) <= 1e-10 * (1.0 + np.abs(xs))):
        raise ValueError("classifier requires the linear decay drift F(x) = -x")

    try:
        h0 = float(prob.h_re(0.0))
        h0_im = float(prob.h_im(0.0))
    except EvaluationError as exc:
        raise ValueError(
            f"weight cannot be evaluated at 0 ({exc}); the endpoint value "
            "Re h(0) is required for classification") from exc

    h_re, h_im = prob.h_re, prob.h_im

    def deviation(ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        dev = np.hypot(np.asarray(h_re(ys), dtype=float) - h0,
                       np.asarray(h_im(ys), dtype=float) - h0_im)
        return dev / ys

    def flat_rho(ys: np.ndarray) -> np.ndarray:
        return np.ones_like(np.asarray(ys, dtype=float))

    # Integrability of the weight deviation near 0, by the same shell
    # protocol used for the criterion integral (p = 0 disables the
    # exponential factor, leaving the bare deviation integrand).
    pre = _directional_shells(lambda ys: np.zeros_like(np.asarray(ys, float)),
                              deviation, 0.0, 0.5, 0.0)
    if pre.verdict != "convergent":
        raise ValueError(
            "the weight-deviation integrability condition near 0 could not "
            f"be verified (shell test: {pre.verdict}; {pre.detail}); "
            "refusing to classify")

    threshold = -1.0 / p
    margin = h0 - threshold
    boundary = abs(margin) <= 1e-12
    chaotic = margin > 0.0 and not boundary

    notes: list[str] = []
    if boundary:
        notes.append(
            "boundary case: Re h(0) equals -1/p exactly; the strict "
            "inequality fails, so the problem is classified not chaotic")
    elif not chaotic:
        notes.append("Re h(0) below the chaos threshold; decay regime "
                     "(strongly stable when Re h(0) < -1/p)")

    report = chaos_test(sf, p)
    if report.verdict == VERDICT_INCONCLUSIVE:
        cross = "numeric-inconclusive"
        notes.append("criterion-integral pipeline was inconclusive; "
                     "threshold classification stands on its own")
    else:
        pipeline_chaotic = report.verdict == VERDICT_CHAOTIC
        cross = "agree" if pipeline_chaotic == chaotic else "disagree"
        if cross == "disagree":
            notes.append(
                f"threshold classification ({'chaotic' if chaotic else 'not chaotic'}) "
                f"disagrees with the criterion pipeline ({report.verdict})")

    return VflReport(chaotic=chaotic, h_at_zero=h0, threshold=threshold,
                     margin=margin, boundary=boundary,
                     precondition_verdict=pre.verdict, cross_check=cross,
                     chaos=report, p=p, notes=tuple(notes))


# ---------------------------------------------------------------------------
# decay probe


@dataclass(frozen=True)
class DecayProbe:
    """Orbit norms over a time grid with a fitted exponential rate."""

    entries: tuple[tuple[float, float], ...]   # (t, norm)
    rate: float                                # slope of log-norm vs t

    def to_dict(self) -> dict:
        return {
            "entries": [[t, _json_float(n)] for t, n in self.entries],
            "rate": _json_float(self.rate),
        }


def decay_probe(sf: Semiflow, f: GridFunction, p: Optional[float] = None,
                t_grid: Sequence[float] = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
                *, rho=None) -> DecayProbe:
    """Table of forward-orbit norms over ``t_grid`` plus a fitted decay rate.

    The rate is the least-squares slope of log-norm against time over the
    entries with positive finite norm (``nan`` if fewer than two qualify).
    """
    if p is None:
        p = sf.problem.p
    p = float(p)
    density = _density(sf, rho)
    entries = []
    for t in t_grid:
        t = float(t)
        norm = lp_norm(apply_T(sf, t, f), p, rho=density)
        entries.append((t, float(norm)))
    ts = [t for t, n in entries if n > 0.0 and math.isfinite(n)]
    logs = [math.log(n) for t, n in entries if n > 0.0 and math.isfinite(n)]
    if len(ts) >= 2:
        rate = float(np.polyfit(np.asarray(ts), np.asarray(logs), 1)[0])
    else:
        rate = math.nan
    return DecayProbe(entries=tuple(entries), rate=rate)


# ---------------------------------------------------------------------------
# lower density of time spent near a target


def lower_density_estimate(orbit: Callable[[float], GridFunction],
                           target: GridFunction, radius: float,
                           horizon: float, p: float, *, rho=None,
                           mesh: int = 512) -> float:
    """Lower-density proxy for the time an orbit spends near a target.

    Measures ``{t <= tau : distance(orbit(t), target) < radius}`` as a union
    of intervals (threshold crossings are refined by root bracketing on the
    sampled mesh) and returns the minimum of measure/tau over dyadic
    checkpoints tau = 1, 2, 4, ... up to the horizon - a conservative proxy
    for the liminf density.  The result lies in [0, 1].
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    if mesh < 8:
        raise ValueError("mesh must have at least 8 cells")
    p = float(p)

    def gap(t: float) -> float:
        return lp_distance(orbit(t), target, p, rho=rho) - radius

    ts = np.linspace(0.0, float(horizon), mesh + 1)
    values = np.array([gap(float(t)) for t in ts])
    below = values < 0.0

    intervals: list[tuple[float, float]] = []
    state = bool(below[0])
    start = 0.0
    for i in range(mesh):
        if below[i] == below[i + 1]:
            continue
        try:
            crossing = float(brentq(gap, ts[i], ts[i + 1],
                                    xtol=1e-9 * (1.0 + horizon), maxiter=200))
        except ValueError:
            crossing = 0.5 * float(ts[i] + ts[i + 1])
        if state:
            intervals.append((start, crossing))
        else:
            start = crossing
        state = bool(below[i + 1])
    if state:
        intervals.append((start, float(horizon)))

    def measure_up_to(tau: float) -> float:
        return sum(max(0.0, min(b, tau) - a) for a, b in intervals if a < tau)

    checkpoints = []
    tau = 1.0
    while tau < horizon:
        checkpoints.append(tau)
        tau *= 2.0
    checkpoints.append(float(horizon))
    densities = [measure_up_to(tau) / tau for tau in checkpoints]
    return float(min(1.0, max(0.0, min(densities))))
