"""Weight cocycle, transported densities, admissibility, and hypothesis checks.

The multiplicative weight along the flow is ``h_t(x) = exp(∫₀ᵗ h(φ(s,x)) ds)``.
Two transported density families govern boundedness and chaos of the weighted
composition semigroup::

    backward:  ρ_{−t,p}(x) = |h_t(x)|^{−p} · exp(∫₀ᵗ F'(φ(s,x)) ds) · ρ(φ(t,x))
    forward:   ρ_{t,p}(x)  = χ_{φ(t,Ω)}(x) · |h_t(x̃)|^{p} · exp(−∫₀ᵗ F'(φ(s,x̃)) ds) · ρ(x̃)

with x̃ = φ(−t, x).  Both reduce to ρ at t = 0.  ``estimate_admissibility``
searches for constants (M, ω) bounding the growth ratio

    R(t, x) = |h_t(x)|^p ρ(x) / (ρ(φ(t,x)) · exp(∫₀ᵗ F'(φ(s,x)) ds)) ≤ M e^{ωt},

and ``check_hypotheses`` verifies that h is constant on {F = 0} and that
Im h / F is integrable near at least one end of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .expressions import EvaluationError
from .flows import Semiflow
from .numerics import integrate_interval

__all__ = [
    "DensityProfile", "AdmissibilityEstimate", "HypothesisReport",
    "weight_cocycle", "weight_magnitude", "rho_backward", "rho_forward",
    "rho_backward_values", "rho_forward_values",
    "estimate_admissibility", "check_hypotheses",
]


# ---------------------------------------------------------------------------
# Weight cocycle
# ---------------------------------------------------------------------------

def weight_cocycle(sf: Semiflow, t: float, x: float) -> complex:
    """h_t(x) = exp(∫₀ᵗ h(φ(s,x)) ds)."""
    state = sf.path_integrals(t, np.array([float(x)]))
    return complex(np.exp(state.int_h_re[0] + 1j * state.int_h_im[0]))


def weight_magnitude(sf: Semiflow, t: float, xs) -> np.ndarray:
    """|h_t(x)| = exp(∫₀ᵗ Re h(φ(s,x)) ds) for a batch of points."""
    state = sf.path_integrals(t, xs)
    with np.errstate(over="ignore"):
        return np.exp(state.int_h_re)


# ---------------------------------------------------------------------------
# Transported densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityProfile:
    """Vectorized evaluator for one of the transported density families."""

    semiflow: Semiflow
    p: float
    direction: str          # 'forward' (ρ_{t,p}) or 'backward' (ρ_{−t,p})

    def __post_init__(self) -> None:
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")

    def values(self, t: float, xs) -> np.ndarray:
        if self.direction == "backward":
            return rho_backward_values(self.semiflow, t, self.p, xs)
        return rho_forward_values(self.semiflow, t, self.p, xs)

    def at(self, t: float, x: float) -> float:
        return float(self.values(t, np.array([float(x)]))[0])


def rho_backward_values(sf: Semiflow, t: float, p: float, xs) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    state = sf.path_integrals(t, xs)
    rho_end = np.asarray(sf.problem.rho(state.position), dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(-p * state.int_h_re + state.int_fprime) * rho_end


def rho_forward_values(sf: Semiflow, t: float, p: float, xs) -> np.ndarray:
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    state = sf.inverse_flow_batch(t, xs)
    out = np.zeros(xs.shape)
    mask = state.in_domain
    if mask.any():
        pre = state.position[mask]
        rho_pre = np.asarray(sf.problem.rho(pre), dtype=float)
        with np.errstate(over="ignore", under="ignore"):
            out[mask] = np.exp(p * state.int_h_re[mask]
                               - state.int_fprime[mask]) * rho_pre
    return out


def rho_backward(sf: Semiflow, t: float, p: float, x: float) -> float:
    """ρ_{−t,p}(x); equals ρ(x) at t = 0."""
    return float(rho_backward_values(sf, t, p, np.array([float(x)]))[0])


def rho_forward(sf: Semiflow, t: float, p: float, x: float) -> float:
    """ρ_{t,p}(x); zero when x ∉ φ(t, Ω)."""
    return float(rho_forward_values(sf, t, p, np.array([float(x)]))[0])


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityEstimate:
    M: float
    omega_rate: float
    max_ratio_trace: float
    verdict: str            # 'admissible_witness' | 'violation' | 'inconclusive'
    notes: tuple[str, ...] = ()


def _growth_ratio(sf: Semiflow, p: float, t: float, xs: np.ndarray) -> np.ndarray:
    """R(t,·) on a batch; nan marks points where both densities underflowed
    to zero (beyond floating-point resolution, excluded from sups)."""
    state = sf.path_integrals(t, xs)
    rho_start = np.asarray(sf.problem.rho(xs), dtype=float)
    rho_end = np.asarray(sf.problem.rho(state.position), dtype=float)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        return np.exp(p * state.int_h_re - state.int_fprime) * rho_start / rho_end


def _finite_sup(values: np.ndarray) -> float:
    usable = values[~np.isnan(values)]
    return float(np.max(usable)) if usable.size else math.nan


def _refined_grid(sf: Semiflow, base: np.ndarray, level: int) -> np.ndarray:
    """Refinement `level` of the x-sample: denser, and pushed toward the ends
    (outward for unbounded sides, toward the boundary for finite ones)."""
    lo, hi = sf.problem.omega_lo, sf.problem.omega_hi
    x0, x1 = float(base.min()), float(base.max())
    if math.isfinite(lo):
        x0 = lo + (x0 - lo) / 4.0 ** level
    else:
        x0 = x0 - (x1 - x0) * (2.0 ** level - 1.0)
    if math.isfinite(hi):
        x1 = hi - (hi - x1) / 4.0 ** level
    else:
        x1 = x1 + (x1 - x0) * (2.0 ** level - 1.0)
    count = min(len(base) * 2 ** level, 16384)
    return np.linspace(x0, x1, count)


def estimate_admissibility(sf: Semiflow, p: float, t_grid: Sequence[float],
                           x_grid: Sequence[float]) -> AdmissibilityEstimate:
    """Fit (M, ω) with sup_x R(t,x) ≤ M e^{ωt} and probe for divergence in x.

    ω is the least-squares slope of log sup_x R against t; M exponentiates the
    largest residual (including the exact point R(0,·) = 1), so the reported
    pair bounds every sample.  The violation probe tracks sup_x R at the
    largest t across four x-grid refinements; monotone unbounded growth flags
    a violation.
    """
    t_arr = np.asarray(sorted(float(t) for t in t_grid), dtype=float)
    x_arr = np.asarray(x_grid, dtype=float)
    if t_arr.size == 0 or x_arr.size == 0:
        raise ValueError("t_grid and x_grid must be non-empty")
    if t_arr[0] < 0:
        raise ValueError("t_grid must be non-negative")

    notes: list[str] = []
    sups = np.array([_finite_sup(_growth_ratio(sf, p, t, x_arr)) for t in t_arr])
    usable = ~np.isnan(sups)
    if not usable.any():
        return AdmissibilityEstimate(math.nan, math.nan, math.nan, "inconclusive",
                                     ("density unresolvable on the sample grid",))
    if np.any(np.isinf(sups[usable])) or np.any(sups[usable] <= 0.0):
        return AdmissibilityEstimate(
            math.inf, math.nan, math.inf, "violation",
            ("growth ratio overflowed on the sample grid",))

    log_s = np.log(sups[usable])
    t_use = t_arr[usable]
    positive = t_use > 0
    if np.count_nonzero(positive) >= 2:
        slope = float(np.polyfit(t_use[positive], log_s[positive], 1)[0])
    elif np.count_nonzero(positive) == 1:
        slope = float(log_s[positive][0] / t_use[positive][0])
    else:
        slope = 0.0
    residuals = log_s - slope * t_use
    M = float(np.exp(max(float(np.max(residuals)), 0.0)))
    max_trace = float(np.max(sups[usable]))

    t_star = float(t_arr[-1]) if t_arr[-1] > 0 else 1.0
    level_sups: list[float] = []
    for level in range(4):
        grid = _refined_grid(sf, x_arr, level)
        top = _finite_sup(_growth_ratio(sf, p, t_star, grid))
        if math.isnan(top):
            break
        level_sups.append(top)
        if not math.isfinite(top):
            break
    if len(level_sups) < 2:
        return AdmissibilityEstimate(max(M, 1.0), slope, max_trace, "inconclusive",
                                     ("refinement sweep left the resolvable range",))
    monotone = all(b >= a * (1.0 - 1e-9) for a, b in zip(level_sups, level_sups[1:]))
    exploded = (not math.isfinite(level_sups[-1])) or (
        level_sups[-1] >= 10.0 * max(level_sups[0], 1e-300))
    if monotone and exploded:
        verdict = "violation"
        notes.append(
            f"sup ratio at t={t_star:g} grew {level_sups[0]:.3g} -> "
            f"{level_sups[-1]:.3g} under x-grid refinement")
    elif math.isfinite(level_sups[-1]) and level_sups[-1] <= 1.5 * max(level_sups[0], 1e-300):
        verdict = "admissible_witness"
    else:
        verdict = "inconclusive"
        notes.append("sup ratio drifted under refinement without clear divergence")
    return AdmissibilityEstimate(max(M, 1.0), slope, max_trace, verdict,
                                 tuple(notes))


# ---------------------------------------------------------------------------
# Classification hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    gamma: Optional[float]
    hyp_a_ok: str            # 'verified' | 'violated' | 'inconclusive'
    hyp_b_ok: str
    re_h_bounded: str
    f_prime_bounded: str
    side: str                # 'left' | 'right' | 'both' | 'none'
    notes: tuple[str, ...] = ()


def _combine(*states: str) -> str:
    if any(s == "violated" for s in states):
        return "violated"
    if any(s == "inconclusive" for s in states):
        return "inconclusive"
    return "verified"


def _tail_integrable(fn, anchor: float, probe: float, *, infinite: bool) -> str:
    """Tail test of ∫|fn| toward ``anchor`` using nested shrinking increments.

    ``probe`` is a point on the sound side; for ``infinite`` anchors the
    increments expand outward instead of shrinking.
    """
    increments = []
    try:
        if infinite:
            direction = 1.0 if anchor > 0 else -1.0
            width = max(abs(probe), 1.0)
            cuts = [probe + direction * width * (2.0 ** k - 1.0) for k in range(9)]
        else:
            gap = probe - anchor
            cuts = [anchor + gap * 4.0 ** -k for k in range(9)]
        for near, far in zip(cuts[1:], cuts[:-1]):
            a, b = (near, far) if near < far else (far, near)
            increments.append(abs(integrate_interval(
                lambda y: np.abs(fn(y)), a, b, panels=12, order=8)))
    except EvaluationError:
        return "inconclusive"
    arr = np.asarray(increments)
    if not np.all(np.isfinite(arr)):
        return "violated"
    total = float(np.sum(arr))
    if arr[-1] <= 1e-15 * (1.0 + total):
        return "verified"
    ratios = arr[1:] / np.maximum(arr[:-1], 1e-300)
    window = ratios[-4:]
    if np.all(window < 0.9):
        return "verified"
    if np.all(window >= 1.0 - 1e-9):
        return "violated"
    return "inconclusive"


def check_hypotheses(sf: Semiflow) -> HypothesisReport:
    """Check h ≡ γ on {F=0} and endpoint integrability of Im h / F."""
    problem = sf.problem
    notes: list[str] = []
    dec = sf.decompose()

    # Hypothesis a): h constant on the zero set.
    gamma: Optional[float] = None
    if not dec.zeros:
        hyp_a = "verified"
        notes.append("zero set of F is empty; constancy of h on it is vacuous")
    else:
        values = np.array([complex(float(problem.h_re(z)), float(problem.h_im(z)))
                           for z in dec.zeros])
        spread = float(np.max(np.abs(values - values[0])))
        if spread <= 1e-9:
            gamma = float(values[0].real)
            hyp_a = "verified"
            if abs(values[0].imag) > 1e-9:
                notes.append(f"h on the zero set has imaginary part {values[0].imag:.3g}")
        else:
            hyp_a = "violated"
            notes.append(f"h varies by {spread:.3g} across the zeros of F")

    # Hypothesis b): Im h / F integrable near one end (and across interior zeros).
    if problem.h_is_real:
        hyp_b, side = "verified", "both"
        notes.append("Im h vanishes identically; integrability is trivial")
    else:
        def quotient(y):
            return np.asarray(problem.h_im(y), dtype=float) / np.asarray(
                problem.F(y), dtype=float)

        lo_w, hi_w = problem.sample_window()
        span = hi_w - lo_w
        interior_states = []
        for z in dec.zeros:
            gap = 0.1 * span
            interior_states.append(_tail_integrable(quotient, z, z + gap, infinite=False))
            interior_states.append(_tail_integrable(quotient, z, z - gap, infinite=False))
        interior = _combine(*interior_states) if interior_states else "verified"

        left_tail = _tail_integrable(
            quotient, problem.omega_lo, lo_w + 0.25 * span,
            infinite=not math.isfinite(problem.omega_lo))
        right_tail = _tail_integrable(
            quotient, problem.omega_hi, hi_w - 0.25 * span,
            infinite=not math.isfinite(problem.omega_hi))
        left_family = _combine(left_tail, interior)
        right_family = _combine(right_tail, interior)
        if left_family == "verified" and right_family == "verified":
            hyp_b, side = "verified", "both"
        elif left_family == "verified":
            hyp_b, side = "verified", "left"
        elif right_family == "verified":
            hyp_b, side = "verified", "right"
        elif left_family == "violated" and right_family == "violated":
            hyp_b, side = "violated", "none"
        else:
            hyp_b, side = "inconclusive", "none"
        notes.append(f"Im h/F endpoint families: left={left_family}, right={right_family}")

    # Boundedness of the sampled coefficient ranges.
    validation = problem.validate()
    def bounded_state(report):
        if math.isnan(report.minimum):
            return "inconclusive"
        return "violated" if report.flagged else "verified"
    re_h_bounded = bounded_state(validation.h_re_range)
    f_prime_bounded = bounded_state(validation.f_prime_range)

    if dec.zero_set_measure_flag:
        notes.append("flat stretch of F detected; zero set may have positive measure")

    return HypothesisReport(gamma, hyp_a, hyp_b, re_h_bounded, f_prime_bounded,
                            side, tuple(notes))
