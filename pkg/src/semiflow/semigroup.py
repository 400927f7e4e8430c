"""Weighted composition semigroup, its right inverses, and occupancy bounds.

The forward operator composes with the flow and multiplies by the weight
cocycle::

    (T(t)f)(x) = h_t(x) · f(φ(t, x))

The right inverse acts on finite sums of component-interior indicators::

    (S_t u)(x) = χ_{φ(t,Ω)}(x) · h_t(φ(−t,x))⁻¹ · u(φ(−t,x))

Both return grid functions whose sharp support edges are placed exactly on
nodes (preimages/images of the input support edges), so norm identities can be
checked at quadrature accuracy rather than grid-cell accuracy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .flows import EscapeError, FlowError, NotInRange, Semiflow
from .lpspace import (Grid, GridFunction, IndicatorSpec, build_grid, indicator,
                      lp_distance, lp_norm, pairing)
from .numerics import (TailDiagnosis, classify_tail, dyadic_time_blocks,
                       integrate_interval)

__all__ = [
    "SemigroupError", "FhcIdentityReport", "OccupancyBound",
    "apply_T", "apply_S", "verify_fhc_identities",
    "orbit_norm_integral", "coorbit_pairing_integral",
    "occupancy_time", "occupancy_bound",
]

DEFAULT_HORIZON = 50.0
# |h_t| = exp(∫ Re h) is positive analytically; magnitudes below this floor
# mean the configuration left the numeric range, not that the cocycle vanished.
COCYCLE_LOG_FLOOR = math.log(1e-300)
# Relative half-width of the band around interval edges inside which a
# round-tripped position counts as the edge itself.  The ODE integrator's
# forward/backward roundtrip drifts by a few 1e-9 over moderate times, so the
# band must sit well above that while staying far below any grid cell.
EDGE_SNAP_REL = 1e-7

IndicatorTerms = Union[IndicatorSpec, Sequence[tuple[IndicatorSpec, complex]]]


class SemigroupError(RuntimeError):
    """An operator value could not be produced reliably."""


@dataclass(frozen=True)
class FhcIdentityReport:
    """Relative L^p errors of T(t)S_t u = u and T(t)S_r u = S_{r−t} u."""

    right_inverse: tuple[tuple[float, float], ...]          # (t, error)
    cascade: tuple[tuple[float, float, float], ...]          # (t, r, error)
    max_right_inverse_error: float
    max_cascade_error: float


@dataclass(frozen=True)
class OccupancyBound:
    """Measured occupancy versus the explicit constant max{∫_I dr/|F|, s}."""

    interval: tuple[float, float]
    reciprocal_integral: float
    transit: float
    c_formula: float
    measured_sup: float
    measurements: tuple[tuple[float, float], ...]            # (probe y, occupancy)


def _as_terms(source: IndicatorTerms) -> tuple[tuple[IndicatorSpec, complex], ...]:
    if isinstance(source, IndicatorSpec):
        return ((source, 1.0 + 0.0j),)
    terms = tuple((spec, complex(coeff)) for spec, coeff in source)
    if not terms:
        raise ValueError("at least one indicator term is required")
    return terms


def _density(sf: Semiflow, rho) -> Callable[[np.ndarray], np.ndarray]:
    return rho if rho is not None else sf.problem.rho


# ---------------------------------------------------------------------------
# Forward operator T(t)
# ---------------------------------------------------------------------------

def _forward_states(sf: Semiflow, t: float, xs: np.ndarray):
    """Forward positions and h-log integrals, tolerant of pointwise escape."""
    try:
        state = sf.path_integrals(t, xs, direction="forward")
        return (state.position, state.int_h_re, state.int_h_im,
                np.ones(xs.shape, dtype=bool))
    except (EscapeError, FlowError):
        pos = np.full(xs.shape, np.nan)
        log_re = np.zeros(xs.shape)
        log_im = np.zeros(xs.shape)
        alive = np.zeros(xs.shape, dtype=bool)
        for i, x in enumerate(xs):
            try:
                one = sf.path_integrals(t, np.array([x]), direction="forward")
            except (EscapeError, FlowError):
                continue
            pos[i] = one.position[0]
            log_re[i] = one.int_h_re[0]
            log_im[i] = one.int_h_im[0]
            alive[i] = True
        return pos, log_re, log_im, alive


def _preimage_interval(sf: Semiflow, t: float, piece: tuple[float, float],
                       alive_pos: np.ndarray, hull: tuple[float, float]
                       ) -> Optional[tuple[float, float]]:
    """{x : φ(t,x) ∈ piece} clipped to the hull (φ monotone in x)."""
    a, b = piece
    lo = sf.inverse_flow(t, max(a, sf.problem.omega_lo))
    hi = sf.inverse_flow(t, min(b, sf.problem.omega_hi))
    if lo is NotInRange:
        if alive_pos.size and float(np.max(alive_pos)) >= a:
            lo = hull[0]
        else:
            return None
    if hi is NotInRange:
        if alive_pos.size and float(np.min(alive_pos)) <= b:
            hi = hull[1]
        else:
            return None
    lo = max(float(lo), hull[0])
    hi = min(float(hi), hull[1])
    if hi <= lo:
        return None
    return (lo, hi)


def apply_T(sf: Semiflow, t: float, f: GridFunction, *,
            grid: Optional[Grid] = None) -> GridFunction:
    """(T(t)f)(x) = h_t(x)·f(φ(t,x)); zero where the path exits f's support."""
    t = float(t)
    if t < 0:
        raise ValueError("t must be non-negative")
    base = grid if grid is not None else f.grid
    pos0, log_re0, log_im0, alive0 = _forward_states(sf, t, base.nodes)
    hull = base.hull
    pieces = []
    for piece in f.support_intervals():
        got = _preimage_interval(sf, t, piece, pos0[alive0], hull)
        if got is not None:
            pieces.append(got)
    out_grid = base.with_points([e for piece in pieces for e in piece])
    if out_grid is base:
        pos, log_re, log_im, alive = pos0, log_re0, log_im0, alive0
    else:
        pos, log_re, log_im, alive = _forward_states(sf, t, out_grid.nodes)

    values = np.zeros(out_grid.nodes.shape, dtype=complex)
    if alive.any():
        inner_x = pos[alive].copy()
        # snap positions onto support edges at flow-accuracy scale, so the
        # round-tripped edge nodes of the support land exactly on the edges
        for a, b in f.support_intervals():
            for edge in (a, b):
                snap = EDGE_SNAP_REL * (1.0 + abs(edge))
                inner_x[np.abs(inner_x - edge) <= snap] = edge
        inner = f.eval(inner_x)
        with np.errstate(over="ignore", invalid="ignore"):
            weighted = np.where(inner == 0.0, 0.0,
                                np.exp(log_re[alive] + 1j * log_im[alive]) * inner)
        if not np.all(np.isfinite(weighted)):
            raise SemigroupError(
                "magnitude of the weight cocycle overflowed on the support")
        values[alive] = weighted
    return GridFunction(out_grid, values, tuple(pieces))


# ---------------------------------------------------------------------------
# Right inverse S_t on indicator sums
# ---------------------------------------------------------------------------

def _forward_edge(sf: Semiflow, t: float, edge: float,
                  hull: tuple[float, float]) -> float:
    """φ(t, edge); an escaped/blown-up edge is pushed beyond the hull."""
    try:
        return float(sf.flow(t, edge))
    except (EscapeError, FlowError):
        direction = float(np.sign(float(sf.problem.F(edge)))) or 1.0
        return hull[1] + 1.0 if direction > 0 else hull[0] - 1.0


def apply_S(sf: Semiflow, t: float, source: IndicatorTerms,
            grid: Optional[Grid] = None, *,
            invert_cocycle_sign: bool = False) -> GridFunction:
    """Right inverse on u = Σ cⱼ χ_{Iⱼ}, extended linearly.

    ``invert_cocycle_sign`` is a deliberate fault hook for end-to-end
    verification runs: it multiplies by the cocycle instead of dividing,
    which breaks T(t)S_t = id whenever the cocycle differs from 1.
    """
    t = float(t)
    if t < 0:
        raise ValueError("t must be non-negative")
    terms = _as_terms(source)
    base = grid if grid is not None else build_grid(sf.problem)
    hull = base.hull

    pieces = []
    for spec, _ in terms:
        lo = max(_forward_edge(sf, t, spec.lo, hull), hull[0])
        hi = min(_forward_edge(sf, t, spec.hi, hull), hull[1])
        if hi > lo:
            pieces.append((lo, hi))
    out_grid = base.with_points([e for piece in pieces for e in piece])

    state = sf.inverse_flow_batch(t, out_grid.nodes)
    pre = state.position
    coeffs = np.zeros(out_grid.nodes.shape, dtype=complex)
    for spec, coeff in terms:
        # slack at flow-accuracy scale so round-tripped edge nodes stay inside
        tol_lo = EDGE_SNAP_REL * (1.0 + abs(spec.lo))
        tol_hi = EDGE_SNAP_REL * (1.0 + abs(spec.hi))
        inside = state.in_domain & (pre >= spec.lo - tol_lo) & (pre <= spec.hi + tol_hi)
        coeffs[inside] += coeff
    active = coeffs != 0.0

    values = np.zeros(out_grid.nodes.shape, dtype=complex)
    if active.any():
        log_re = state.int_h_re[active]
        if np.any(log_re < COCYCLE_LOG_FLOOR):
            raise SemigroupError(
                "weight cocycle magnitude fell below the invertibility floor "
                "1e-300 on the support")
        sign = 1.0 if invert_cocycle_sign else -1.0
        with np.errstate(over="ignore"):
            weighted = coeffs[active] * np.exp(
                sign * (log_re + 1j * state.int_h_im[active]))
        if not np.all(np.isfinite(weighted)):
            raise SemigroupError(
                "magnitude of the weight cocycle overflowed on the support")
        values[active] = weighted
    return GridFunction(out_grid, values, tuple(pieces))


# ---------------------------------------------------------------------------
# FHC identities
# ---------------------------------------------------------------------------

def verify_fhc_identities(sf: Semiflow, spec: IndicatorSpec,
                          t_grid: Sequence[float], r_grid: Sequence[float],
                          p: float, *, grid: Optional[Grid] = None,
                          rho=None) -> FhcIdentityReport:
    """Relative L^p errors of the right-inverse and cascade identities."""
    base = grid if grid is not None else build_grid(sf.problem)
    rho_fn = _density(sf, rho)
    chi = indicator(spec, base)
    norm_chi = lp_norm(chi, p, rho_fn)

    right_inverse = []
    for t in sorted({float(t) for t in t_grid}):
        u = apply_S(sf, t, spec, base)
        back = apply_T(sf, t, u)
        err = lp_distance(back, chi, p, rho_fn) / norm_chi
        right_inverse.append((t, err))

    cascade = []
    for t in sorted({float(t) for t in t_grid}):
        for r in sorted({float(r) for r in r_grid}):
            if r <= t:
                continue
            left = apply_T(sf, t, apply_S(sf, r, spec, base))
            right = apply_S(sf, r - t, spec, base)
            denom = lp_norm(right, p, rho_fn)
            dist = lp_distance(left, right, p, rho_fn)
            cascade.append((t, r, dist / denom if denom > 0 else dist))

    return FhcIdentityReport(
        right_inverse=tuple(right_inverse),
        cascade=tuple(cascade),
        max_right_inverse_error=max((e for _, e in right_inverse), default=0.0),
        max_cascade_error=max((e for _, _, e in cascade), default=0.0),
    )


# ---------------------------------------------------------------------------
# Pettis-finiteness integrals over time
# ---------------------------------------------------------------------------

def _time_integral(fn: Callable[[float], float], horizon: float
                   ) -> tuple[float, list[float]]:
    """∫₀^horizon fn dt block-by-block on the dyadic partition."""
    blocks: list[float] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for a, b in dyadic_time_blocks(horizon):
            val, _ = quad(fn, a, b, epsabs=1e-10, epsrel=1e-8, limit=200)
            blocks.append(float(val))
    return float(sum(blocks)), blocks


def _s_mode_grid(sf: Semiflow, terms, t: float, base: Grid) -> Grid:
    """A grid covering φ(t, I) even when the image leaves the base hull.

    On unbounded domains the transported support eventually walks off any
    fixed window; norms computed there would decay spuriously.
    """
    lo_img, hi_img = math.inf, -math.inf
    for spec, _ in terms:
        for edge in (spec.lo, spec.hi):
            try:
                val = float(sf.flow(t, edge))
            except (EscapeError, FlowError):
                continue
            lo_img = min(lo_img, val)
            hi_img = max(hi_img, val)
    if not (math.isfinite(lo_img) and math.isfinite(hi_img)):
        return base
    h_lo, h_hi = base.hull
    if h_lo <= lo_img and hi_img <= h_hi:
        return base
    span = max(hi_img - lo_img, 1e-6 * (1.0 + abs(hi_img)))
    a, b = lo_img - 0.05 * span, hi_img + 0.05 * span
    if math.isfinite(sf.problem.omega_lo):
        a = max(a, sf.problem.omega_lo + 1e-9 * span)
    if math.isfinite(sf.problem.omega_hi):
        b = min(b, sf.problem.omega_hi - 1e-9 * span)
    if b <= a:
        return base
    return Grid(np.linspace(a, b, 1025))


def orbit_norm_integral(sf: Semiflow, source, p: float,
                        horizon: float = DEFAULT_HORIZON, *,
                        operator: str = "T", grid: Optional[Grid] = None,
                        rho=None) -> tuple[float, TailDiagnosis]:
    """∫₀^horizon ‖T(t)f‖_p dt (or the S_t analogue) with a tail verdict."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rho_fn = _density(sf, rho)
    if operator == "T":
        if not isinstance(source, GridFunction):
            raise TypeError("operator 'T' integrates a grid function orbit")
        fn = lambda t: lp_norm(apply_T(sf, t, source), p, rho_fn)   # noqa: E731
    elif operator == "S":
        terms = _as_terms(source)
        base = grid if grid is not None else build_grid(sf.problem)
        fn = lambda t: lp_norm(                                      # noqa: E731
            apply_S(sf, t, terms, _s_mode_grid(sf, terms, t, base)), p, rho_fn)
    else:
        raise ValueError("operator must be 'T' or 'S'")
    value, blocks = _time_integral(fn, horizon)
    return value, classify_tail(blocks)


def coorbit_pairing_integral(sf: Semiflow, g: GridFunction, spec: IndicatorSpec,
                             horizon: float = DEFAULT_HORIZON, *,
                             operator: str = "S", grid: Optional[Grid] = None,
                             rho=None) -> tuple[float, TailDiagnosis]:
    """∫₀^horizon |⟨g, S_tχ_I⟩| dt (or the T(t) analogue) with a tail verdict."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rho_fn = _density(sf, rho)
    base = grid if grid is not None else build_grid(sf.problem)
    if operator == "S":
        terms = _as_terms(spec)
        fn = lambda t: abs(pairing(                                         # noqa: E731
            g, apply_S(sf, t, terms, _s_mode_grid(sf, terms, t, base)), rho_fn))
    elif operator == "T":
        chi = indicator(spec, base)
        fn = lambda t: abs(pairing(g, apply_T(sf, t, chi), rho_fn))         # noqa: E731
    else:
        raise ValueError("operator must be 'T' or 'S'")
    value, blocks = _time_integral(fn, horizon)
    return value, classify_tail(blocks)


# ---------------------------------------------------------------------------
# Occupancy times and their closed-form bound
# ---------------------------------------------------------------------------

def _flow_or_beyond(sf: Semiflow, tau: float, x0: float, direction: float) -> float:
    """φ(τ, x0), with escape/blow-up mapped far beyond the travel direction."""
    try:
        return float(sf.flow(tau, x0))
    except (EscapeError, FlowError):
        return math.copysign(1e18, direction if direction != 0 else 1.0)


def _condition_interval(sf: Semiflow, x0: float, target: float, horizon: float,
                        *, want_le: bool) -> Optional[tuple[float, float]]:
    """{t ∈ [0, horizon] : φ(t, x0) ≤ target} (or ≥) — an interval, since the
    scalar autonomous trajectory is monotone in t."""
    direction = float(np.sign(float(sf.problem.F(x0))))

    def m(tau: float) -> float:
        return _flow_or_beyond(sf, float(tau), x0, direction) - target

    m0 = x0 - target
    mH = m(horizon)
    ok0 = (m0 <= 0) if want_le else (m0 >= 0)
    okH = (mH <= 0) if want_le else (mH >= 0)
    if ok0 and okH:
        return (0.0, horizon)
    if not ok0 and not okH:
        return None
    root = float(brentq(m, 0.0, horizon, xtol=1e-12, maxiter=300))
    return (0.0, root) if ok0 else (root, horizon)


def occupancy_time(sf: Semiflow, interval: tuple[float, float], y: float,
                   horizon: float = DEFAULT_HORIZON, *,
                   mode: str = "image") -> float:
    """λ{t ≤ horizon : y ∈ φ(t, I)} or λ{t ≤ horizon : φ(t, y) ∈ I}.

    Entry/exit times come from root-bracketing the monotone endpoint
    trajectories, so the measured set is an exact interval intersection.
    """
    a, b = float(interval[0]), float(interval[1])
    if not (a < b):
        raise ValueError("interval must satisfy a < b")
    y = float(y)
    if not (sf.problem.omega_lo < y < sf.problem.omega_hi):
        raise ValueError("probe point must lie inside the domain")
    if mode == "image":
        lower = _condition_interval(sf, a, y, horizon, want_le=True)
        upper = _condition_interval(sf, b, y, horizon, want_le=False)
    elif mode == "trajectory":
        lower = _condition_interval(sf, y, a, horizon, want_le=False)
        upper = _condition_interval(sf, y, b, horizon, want_le=True)
    else:
        raise ValueError("mode must be 'image' or 'trajectory'")
    if lower is None or upper is None:
        return 0.0
    lo = max(lower[0], upper[0])
    hi = min(lower[1], upper[1])
    return max(0.0, hi - lo)


def _event_transit(sf: Semiflow, a: float, b: float, guess: float) -> float:
    """Crossing time of [a, b] measured on the trajectory itself."""
    direction = float(np.sign(float(sf.problem.F(0.5 * (a + b)))))
    start, target = (a, b) if direction > 0 else (b, a)

    def m(tau: float) -> float:
        return _flow_or_beyond(sf, float(tau), start, direction) - target

    hi = max(guess * 1.25, 1e-6)
    for _ in range(90):
        if m(hi) * (start - target) < 0.0:
            break
        hi *= 1.5
    else:
        raise FlowError("trajectory never crossed the interval")
    return float(brentq(m, 0.0, hi, xtol=1e-12, maxiter=300))


def occupancy_bound(sf: Semiflow, source: Union[IndicatorSpec, tuple[float, float]],
                    y_grid=None, horizon: float = DEFAULT_HORIZON) -> OccupancyBound:
    """Occupancy over a probe grid against C = max{∫_I dr/|F|, transit time}."""
    interval = source.interval if isinstance(source, IndicatorSpec) else (
        float(source[0]), float(source[1]))
    a, b = interval
    reciprocal = integrate_interval(
        lambda r: 1.0 / np.abs(np.asarray(sf.problem.F(r), dtype=float)),
        a, b, panels=64, order=8)
    transit = _event_transit(sf, a, b, reciprocal)
    c_formula = max(reciprocal, transit)

    if y_grid is None:
        lo_w, hi_w = sf.problem.sample_window()
        span = hi_w - lo_w
        y_grid = np.linspace(lo_w + span / 202.0, hi_w - span / 202.0, 101)
    measurements = []
    for y in np.asarray(y_grid, dtype=float):
        occ = max(occupancy_time(sf, interval, y, horizon, mode="image"),
                  occupancy_time(sf, interval, y, horizon, mode="trajectory"))
        measurements.append((float(y), float(occ)))
    measured_sup = max((occ for _, occ in measurements), default=0.0)
    return OccupancyBound(interval, float(reciprocal), float(transit),
                          float(c_formula), float(measured_sup),
                          tuple(measurements))
