"""Flow maps of one-dimensional autonomous ODEs, with path integrals along them.

:class:`Semiflow` evaluates the solution map φ(t, x) of ``dx/dt = F(x)`` on an
open interval, together with the integrals accumulated along the trajectory
that every downstream quantity needs::

    a(t, x) = ∫₀ᵗ F'(φ(s, x)) ds      (log of the spatial derivative ∂₂φ)
    b(t, x) = ∫₀ᵗ Re h(φ(s, x)) ds    (log-magnitude of the weight factor)
    c(t, x) = ∫₀ᵗ Im h(φ(s, x)) ds    (phase of the weight factor)

Everything is solved in batches: one adaptive solve (DOP853, dense output)
covers a whole array of starting points, is cached, and is re-evaluated at any
intermediate time for free.  When F matches one of the registered closed forms
(constant, λ·x, x(1−x)) exact formulas replace the solver.

Scalar autonomous trajectories are monotone in t, so a trajectory that leaves
the open interval can never re-enter it; membership of the final point is
therefore a complete escape test and is used both for forward invariance
checks and for deciding whether a point lies in the image φ(t, Ω).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .expressions import (
    BinaryOp,
    EvaluationError,
    Expression,
    Negate,
    Variable,
    constant_value,
)
from .numerics import integrate_interval, segment_points
from .problem import ProblemDef

__all__ = [
    "Semiflow", "PathState", "Component", "ComponentDecomposition",
    "InvarianceReport", "FlowError", "EscapeError", "NotInRange",
    "F_MIN", "EPS_FLAT",
]

#: Minimum |F| required on an interval handed to interval operations.
F_MIN = 1e-8

#: |F| below this on two or more adjacent cells flags a possible flat zero set.
EPS_FLAT = 1e-12

#: Trajectories are abandoned once |position| exceeds this magnitude.
TRAJECTORY_CAP = 1e12

DEFAULT_DECOMPOSE_GRID = 4096


class FlowError(RuntimeError):
    """Integrator failure, blow-up, or an inconsistent cross-check."""


class EscapeError(FlowError):
    """A forward trajectory left the domain: forward invariance is violated."""


class _NotInRangeType:
    """Marker for points outside φ(t, Ω); falsy and a singleton."""

    _instance = None

    def __new__(cls) -> "_NotInRangeType":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotInRange"

    def __bool__(self) -> bool:
        return False


NotInRange = _NotInRangeType()


@dataclass(frozen=True)
class PathState:
    """Positions and path integrals after time ``t``.

    For ``direction='backward'`` the ``position`` array holds φ(−t, ·) and the
    integral fields still refer to the *forward* path started at that preimage
    (the substitution u = t − s makes the backward accumulations coincide with
    them).  ``in_domain`` marks entries whose position lies strictly inside Ω;
    for forward motion all entries are in the closed domain or an escape was
    raised.
    """

    t: float
    position: np.ndarray
    int_fprime: np.ndarray
    int_h_re: np.ndarray
    int_h_im: np.ndarray
    in_domain: np.ndarray


@dataclass(frozen=True)
class Component:
    lo: float
    hi: float
    sign: int


@dataclass(frozen=True)
class ComponentDecomposition:
    """Zero set and sign components of F on the sampled domain.

    ``zero_set_measure_flag`` is True when a flat stretch (|F| < EPS_FLAT over
    at least two adjacent cells) was detected, i.e. when the zero set may have
    positive measure and a null zero set cannot be certified.
    """

    zeros: tuple[float, ...]
    components: tuple[Component, ...]
    zero_set_measure_flag: bool


@dataclass(frozen=True)
class InvarianceReport:
    verdict: str                  # 'verified' | 'violated' | 'inconclusive'
    notes: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# Closed-form registry
# ---------------------------------------------------------------------------

class _TranslationFlow:
    """F = c."""

    def __init__(self, c: float) -> None:
        self.c = c

    def flow(self, t: float, xs: np.ndarray) -> np.ndarray:
        return xs + self.c * t

    def int_fprime(self, t: float, xs: np.ndarray) -> np.ndarray:
        return np.zeros_like(xs)


class _LinearFlow:
    """F = λ·x."""

    def __init__(self, lam: float) -> None:
        self.lam = lam

    def flow(self, t: float, xs: np.ndarray) -> np.ndarray:
        return xs * math.exp(self.lam * t)

    def int_fprime(self, t: float, xs: np.ndarray) -> np.ndarray:
        return np.full_like(xs, self.lam * t)


class _LogisticFlow:
    """F = x(1−x); exact on [0, 1] for all times, overflow-safe for t ≥ 0."""

    def flow(self, t: float, xs: np.ndarray) -> np.ndarray:
        if t >= 0.0:
            decay = math.exp(-t)
            return xs / (xs + (1.0 - xs) * decay)
        grow = math.exp(t)
        return xs * grow / (1.0 - xs + xs * grow)

    def int_fprime(self, t: float, xs: np.ndarray) -> np.ndarray:
        if t >= 0.0:
            decay = math.exp(-t)
            return -t - 2.0 * np.log(xs + (1.0 - xs) * decay)
        grow = math.exp(t)
        return t - 2.0 * np.log(1.0 - xs + xs * grow)


def _match_linear(e: Expression) -> Optional[float]:
    if e == Variable():
        return 1.0
    if isinstance(e, Negate):
        inner = _match_linear(e.operand)
        return None if inner is None else -inner
    if isinstance(e, BinaryOp) and e.op == "*":
        if e.right == Variable():
            coeff = constant_value(e.left)
            if coeff is not None:
                return coeff
        if e.left == Variable():
            coeff = constant_value(e.right)
            if coeff is not None:
                return coeff
    return None


def _is_one_minus_x(e: Expression) -> bool:
    return (isinstance(e, BinaryOp) and e.op == "-"
            and constant_value(e.left) == 1.0 and e.right == Variable())


def _match_logistic(e: Expression) -> bool:
    if not (isinstance(e, BinaryOp) and e.op == "*"):
        return False
    return ((e.left == Variable() and _is_one_minus_x(e.right))
            or (e.right == Variable() and _is_one_minus_x(e.left)))


def match_closed_form(F: Expression):
    """Exact flow for F in {constant, λ·x, x(1−x)} matched structurally."""
    c = constant_value(F)
    if c is not None:
        return _TranslationFlow(c)
    lam = _match_linear(F)
    if lam is not None:
        return _LinearFlow(lam)
    if _match_logistic(F):
        return _LogisticFlow()
    return None


# ---------------------------------------------------------------------------
# Semiflow
# ---------------------------------------------------------------------------

@dataclass
class _DenseTraj:
    dense: object           # scipy OdeSolution
    t_max: float
    message: str

    def state(self, t: float) -> np.ndarray:
        if t > self.t_max * (1 + 1e-12) + 1e-15:
            raise FlowError(
                f"integration stopped at t={self.t_max:.6g} before t={t:.6g}: {self.message}")
        return np.asarray(self.dense(min(t, self.t_max)))


class Semiflow:
    """Flow maps, path integrals, decomposition, and transit times for F.

    Evaluation is pure given the problem; the internal trajectory cache only
    reuses dense solutions and never changes results.
    """

    def __init__(self, problem: ProblemDef, *, rtol: float = 1e-9,
                 atol: float = 1e-13, max_step: float = math.inf,
                 use_closed_form: bool = True) -> None:
        self.problem = problem
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self._closed = match_closed_form(problem.F) if use_closed_form else None
        self._cache: dict[tuple[str, bytes], _DenseTraj] = {}
        lo, hi = problem.omega_lo, problem.omega_hi
        span = min(hi, 1e8) - max(lo, -1e8)
        margin = 1e-13 * max(span, 1.0)
        self._fallback_lo = lo + margin if math.isfinite(lo) else -1e15
        self._fallback_hi = hi - margin if math.isfinite(hi) else 1e15

    @property
    def has_closed_form(self) -> bool:
        return self._closed is not None

    # -- public flow API ----------------------------------------------------

    def flow(self, t: float, x: float) -> float:
        """φ(t, x) for t ≥ 0; raises :class:`EscapeError` if the path leaves Ω."""
        return float(self.flow_batch(t, np.array([float(x)]))[0])

    def flow_batch(self, t: float, xs) -> np.ndarray:
        state = self.path_integrals(t, xs, with_weights=False)
        return state.position

    def inverse_flow(self, t: float, y: float) -> Union[float, _NotInRangeType]:
        """The x with φ(t, x) = y when y ∈ φ(t, Ω); NotInRange otherwise."""
        state = self.inverse_flow_batch(t, np.array([float(y)]))
        if not state.in_domain[0]:
            return NotInRange
        return float(state.position[0])

    def inverse_flow_batch(self, t: float, ys, *, with_weights: bool = True) -> PathState:
        """Backward state for a batch; ``in_domain`` marks y ∈ φ(t, Ω)."""
        return self.path_integrals(t, ys, direction="backward",
                                   with_weights=with_weights)

    def flow_derivative(self, t: float, x: float) -> float:
        """∂₂φ(t, x) = exp(∫₀ᵗ F'(φ(s, x)) ds) > 0."""
        state = self.path_integrals(t, np.array([float(x)]), with_weights=False)
        return float(np.exp(state.int_fprime[0]))

    def inverse_flow_derivative(self, t: float, y: float) -> Union[float, _NotInRangeType]:
        """Spatial derivative of φ(−t, ·) at y, when y ∈ φ(t, Ω)."""
        state = self.inverse_flow_batch(t, np.array([float(y)]), with_weights=False)
        if not state.in_domain[0]:
            return NotInRange
        return float(np.exp(-state.int_fprime[0]))

    def path_integrals(self, t: float, x, *, direction: str = "forward",
                       with_weights: bool = True) -> PathState:
        """Positions plus the accumulated F', Re h, Im h path integrals."""
        if direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        t = float(t)
        if t < 0:
            raise ValueError("t must be non-negative")
        xs = np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=float)))
        self._require_start_points(xs)
        zeros = np.zeros_like(xs)
        if t == 0.0:
            return PathState(0.0, xs.copy(), zeros, zeros.copy(), zeros.copy(),
                             self._inside_open(xs) | self._on_boundary(xs))
        if self._closed is not None:
            with np.errstate(all="ignore"):
                pos, a, b, c = self._closed_state(t, xs, direction, with_weights)
        else:
            pos, a, b, c = self._numeric_state(t, xs, direction)
        if direction == "forward":
            pos = self._check_forward_positions(t, pos)
            mask = np.ones(xs.shape, dtype=bool)
        else:
            with np.errstate(invalid="ignore"):
                mask = np.isfinite(pos) & self._inside_open(pos)
        return PathState(t, pos, a, b, c, mask)

    # -- membership helpers ---------------------------------------------------

    def _inside_open(self, v: np.ndarray) -> np.ndarray:
        return (v > self.problem.omega_lo) & (v < self.problem.omega_hi)

    def _on_boundary(self, v: np.ndarray) -> np.ndarray:
        return (v == self.problem.omega_lo) | (v == self.problem.omega_hi)

    def _require_start_points(self, xs: np.ndarray) -> None:
        lo, hi = self.problem.omega_lo, self.problem.omega_hi
        if np.any(~np.isfinite(xs)) or np.any(xs < lo) or np.any(xs > hi):
            raise ValueError("start points must lie in the closure of the domain")

    def _check_forward_positions(self, t: float, pos: np.ndarray) -> np.ndarray:
        lo, hi = self.problem.omega_lo, self.problem.omega_hi
        bad = ~np.isfinite(pos)
        if bad.any():
            raise EscapeError(
                f"trajectory left every compact subset of the domain by t={t:.6g} "
                "(blow-up)")
        tol_lo = 1e-9 * (1.0 + abs(lo)) if math.isfinite(lo) else 0.0
        tol_hi = 1e-9 * (1.0 + abs(hi)) if math.isfinite(hi) else 0.0
        below = pos < lo - tol_lo
        above = pos > hi + tol_hi
        if below.any() or above.any():
            worst = pos[below | above][0]
            raise EscapeError(
                f"forward invariance violated: φ({t:.6g}, ·) = {worst:.6g} "
                f"outside ({lo:.6g}, {hi:.6g})")
        return np.clip(pos, lo, hi)

    # -- closed-form route ----------------------------------------------------

    def _closed_state(self, t: float, xs: np.ndarray, direction: str,
                      with_weights: bool):
        cf = self._closed
        if direction == "forward":
            pos = np.asarray(cf.flow(t, xs), dtype=float)
            base = xs
        else:
            pos = np.asarray(cf.flow(-t, xs), dtype=float)
            base = pos
        a = np.asarray(cf.int_fprime(t, base), dtype=float)
        if with_weights:
            b, c = self._closed_h_integrals(t, base)
        else:
            b = np.zeros_like(xs)
            c = np.zeros_like(xs)
        return pos, a, b, c

    def _closed_h_integrals(self, t: float, base: np.ndarray):
        ch = self.problem.constant_h
        if ch is not None:
            ones = np.ones_like(base)
            return ch.real * t * ones, ch.imag * t * ones
        panels = max(4, min(256, int(2.0 * t) + 1))
        edges = np.linspace(0.0, t, panels + 1)
        pts, wts = segment_points(edges[:-1], edges[1:], 8)
        b = np.zeros_like(base)
        c = np.zeros_like(base)
        h_im_zero = self.problem.h_is_real
        for s, w in zip(pts.ravel(), wts.ravel()):
            q = np.asarray(self._closed.flow(float(s), base), dtype=float)
            b += w * self._traj_eval(self.problem.h_re, q)
            if not h_im_zero:
                c += w * self._traj_eval(self.problem.h_im, q)
        return b, c

    # -- numeric route ----------------------------------------------------------

    def _traj_eval(self, expr: Expression, x: np.ndarray) -> np.ndarray:
        """Evaluate a coefficient along a trajectory, clipping into the domain
        when the raw point is outside the expression's range (escaped paths)."""
        try:
            return np.asarray(expr(x), dtype=float)
        except EvaluationError:
            clipped = np.clip(x, self._fallback_lo, self._fallback_hi)
            try:
                return np.asarray(expr(clipped), dtype=float)
            except EvaluationError as err:
                raise FlowError(f"cannot evaluate coefficient along trajectory: {err}") from err

    def _solve_dense(self, direction: str, xs: np.ndarray, t: float) -> _DenseTraj:
        key = (direction, xs.tobytes())
        entry = self._cache.get(key)
        if entry is not None and entry.t_max >= t:
            return entry
        horizon = max(1.5 * t, 2.0 * entry.t_max if entry else 0.0, 1e-6)
        n = xs.size
        sign = 1.0 if direction == "forward" else -1.0
        problem = self.problem

        def rhs(_s, state):
            x = state[:n]
            return np.concatenate([
                sign * self._traj_eval(problem.F, x),
                self._traj_eval(problem.F_prime, x),
                self._traj_eval(problem.h_re, x),
                self._traj_eval(problem.h_im, x),
            ])

        def too_far(_s, state):
            return TRAJECTORY_CAP - float(np.max(np.abs(state[:n])))
        too_far.terminal = True

        y0 = np.concatenate([xs, np.zeros(3 * n)])
        with np.errstate(all="ignore"):
            sol = solve_ivp(rhs, (0.0, horizon), y0, method="DOP853",
                            rtol=self.rtol, atol=self.atol, max_step=self.max_step,
                            dense_output=True, events=[too_far])
        message = "" if sol.success else str(sol.message)
        if sol.status == 1:
            message = f"trajectory magnitude exceeded {TRAJECTORY_CAP:.0e}"
        entry = _DenseTraj(sol.sol, float(sol.t[-1]), message)
        self._cache[key] = entry
        return entry

    def _numeric_state(self, t: float, xs: np.ndarray, direction: str):
        n = xs.size
        try:
            state = self._solve_dense(direction, xs, t).state(t)
        except FlowError as err:
            if direction == "backward":
                return self._backward_fallback(t, xs)
            self._raise_forward_failure(t, xs, err)
        return state[:n], state[n:2 * n], state[2 * n:3 * n], state[3 * n:]

    def _raise_forward_failure(self, t: float, xs: np.ndarray, err: FlowError):
        entry = self._cache.get(("forward", xs.tobytes()))
        if entry is not None:
            last = entry.state(entry.t_max)[:xs.size]
            lo, hi = self.problem.omega_lo, self.problem.omega_hi
            if np.any(~np.isfinite(last)) or np.any(last < lo) or np.any(last > hi):
                raise EscapeError(
                    f"forward invariance violated before t={t:.6g} "
                    f"(integration stopped at t={entry.t_max:.6g})") from err
            if np.max(np.abs(last)) >= 0.5 * TRAJECTORY_CAP:
                raise FlowError(
                    f"trajectory magnitude exceeded cap before t={t:.6g} "
                    "(possible blow-up)") from err
        raise err

    def _backward_fallback(self, t: float, ys: np.ndarray):
        """Per-element backward solve after a batch failure.

        Elements whose backward path blows up or exceeds the magnitude cap lie
        outside φ(t, Ω) (the image cannot reach past a backward blow-up), so
        they are marked out of range instead of failing the whole batch.
        """
        n = ys.size
        pos = np.full(n, np.nan)
        a = np.full(n, np.nan)
        b = np.full(n, np.nan)
        c = np.full(n, np.nan)
        for i, y in enumerate(ys):
            single = np.array([float(y)])
            try:
                state = self._solve_dense("backward", single, t).state(t)
            except FlowError:
                entry = self._cache.get(("backward", single.tobytes()))
                if entry is not None:
                    last = float(entry.state(entry.t_max)[0])
                    far = abs(last) >= 0.5 * TRAJECTORY_CAP or not math.isfinite(last)
                    outside = not (self.problem.omega_lo < last < self.problem.omega_hi)
                    if far or outside:
                        pos[i] = math.inf    # definitively out of range
                        continue
                raise
            pos[i], a[i], b[i], c[i] = (state[0], state[1], state[2], state[3])
        return pos, a, b, c

    # -- decomposition -----------------------------------------------------------

    def decompose(self, grid_size: int = DEFAULT_DECOMPOSE_GRID) -> ComponentDecomposition:
        """Zeros of F (bisection to 1e−12), sign components, and plateau flag."""
        if grid_size < 64:
            raise ValueError("grid_size must be at least 64")
        lo_w, hi_w = self.problem.sample_window()
        span = hi_w - lo_w
        eps = span * 1e-9
        xs = np.linspace(lo_w + eps, hi_w - eps, grid_size)
        try:
            fs = np.asarray(self.problem.F(xs), dtype=float)
        except EvaluationError as err:
            raise FlowError(f"F cannot be sampled on the domain: {err}") from err

        small = np.abs(fs) < EPS_FLAT
        plateau = False
        run = 0
        for flag in small:
            run = run + 1 if flag else 0
            if run >= 3:            # three nodes = two adjacent cells
                plateau = True
                break

        zeros: list[float] = [float(x) for x, f in zip(xs, fs) if f == 0.0]
        scalar_f = lambda r: float(self.problem.F(float(r)))
        for i in range(grid_size - 1):
            if fs[i] * fs[i + 1] < 0.0:
                zeros.append(float(brentq(scalar_f, xs[i], xs[i + 1], xtol=1e-12)))
        zeros_arr = np.sort(np.unique(np.asarray(zeros, dtype=float)))
        merged: list[float] = []
        for z in zeros_arr:
            if merged and abs(z - merged[-1]) <= 1e-10 * (1.0 + abs(z)):
                continue
            merged.append(float(z))

        edges = [self.problem.omega_lo, *merged, self.problem.omega_hi]
        components = []
        for left, right in zip(edges[:-1], edges[1:]):
            if right - left <= 0:
                continue
            probe_lo = max(left, lo_w)
            probe_hi = min(right, hi_w)
            mid = 0.5 * (probe_lo + probe_hi)
            inside = xs[(xs > left) & (xs < right)]
            sample = float(inside[len(inside) // 2]) if inside.size else mid
            try:
                value = float(self.problem.F(sample))
            except EvaluationError:
                value = 0.0
            sign = 0 if abs(value) < EPS_FLAT else (1 if value > 0 else -1)
            components.append(Component(float(left), float(right), sign))
        return ComponentDecomposition(tuple(merged), tuple(components), plateau)

    # -- transit times --------------------------------------------------------------

    def transit_time(self, interval: tuple[float, float]) -> float:
        """Time to traverse [a, b]: ∫ dr/|F|, cross-checked against the ODE."""
        a, b = float(interval[0]), float(interval[1])
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ValueError("interval must be a finite [a, b] with a < b")
        if not (a > self.problem.omega_lo and b < self.problem.omega_hi):
            raise ValueError("interval must lie strictly inside the domain")
        rs = np.linspace(a, b, 513)
        fs = np.asarray(self.problem.F(rs), dtype=float)
        if np.min(np.abs(fs)) < F_MIN:
            raise ValueError(f"|F| falls below the floor {F_MIN:g} on the interval")
        if np.any(fs > 0) and np.any(fs < 0):
            raise ValueError("F changes sign on the interval")

        value = integrate_interval(
            lambda r: 1.0 / np.abs(np.asarray(self.problem.F(r), dtype=float)),
            a, b, panels=64, order=8)

        start, target = (a, b) if fs[0] > 0 else (b, a)
        measured = self._event_time(start, target, value)
        if abs(measured - value) > 1e-6 * max(value, 1e-12):
            raise FlowError(
                f"transit-time cross-check failed: quadrature {value:.12g} vs "
                f"event time {measured:.12g}")
        return value

    def _position_no_check(self, t: float, x: float) -> float:
        xs = np.array([float(x)])
        if self._closed is not None:
            return float(np.asarray(self._closed.flow(t, xs), dtype=float)[0])
        return float(self._solve_dense("forward", xs, t).state(t)[0])

    def _event_time(self, start: float, target: float, guess: float) -> float:
        offset = float(start - target)

        def g(tau: float) -> float:
            if tau <= 0.0:
                return offset
            return self._position_no_check(tau, start) - target

        hi = max(guess * 1.001, guess + 1e-9)
        for _ in range(60):
            if g(hi) * offset < 0.0:
                break
            hi *= 1.5
        else:
            raise FlowError("event detection never reached the interval endpoint")
        return float(brentq(g, 0.0, hi, xtol=1e-12, maxiter=200))

    # -- forward invariance ------------------------------------------------------------

    def check_forward_invariance(self, horizon: float = 50.0) -> InvarianceReport:
        """Endpoint sign conditions (bounded ends) / trajectory probes (unbounded)."""
        verdicts: list[str] = []
        notes: list[str] = []
        lo_w, hi_w = self.problem.sample_window()
        span = hi_w - lo_w
        try:
            sampled = np.abs(np.asarray(
                self.problem.F(np.linspace(lo_w + span * 1e-6, hi_w - span * 1e-6, 257)),
                dtype=float))
            scale = 1.0 + float(np.max(sampled[np.isfinite(sampled)], initial=0.0))
        except EvaluationError:
            scale = 1.0

        for side in ("lower", "upper"):
            endpoint = self.problem.omega_lo if side == "lower" else self.problem.omega_hi
            if math.isfinite(endpoint):
                verdict, note = self._endpoint_sign_condition(side, endpoint, span, scale)
            else:
                verdict, note = self._probe_unbounded_side(side, lo_w, hi_w, horizon)
            verdicts.append(verdict)
            notes.append(note)

        if "violated" in verdicts:
            overall = "violated"
        elif "inconclusive" in verdicts:
            overall = "inconclusive"
        else:
            overall = "verified"
        return InvarianceReport(overall, tuple(notes))

    def _endpoint_sign_condition(self, side: str, endpoint: float, span: float,
                                 scale: float) -> tuple[str, str]:
        direction = 1.0 if side == "lower" else -1.0
        values = []
        for k in range(2, 46):
            probe = endpoint + direction * span * 2.0 ** -k
            try:
                values.append(float(self.problem.F(probe)))
            except EvaluationError:
                continue
        if len(values) < 4:
            return "inconclusive", f"{side} endpoint: F not evaluable near the boundary"
        stable = abs(values[-1] - values[-2]) <= 1e-6 * scale
        limit = values[-1]
        tol = 1e-9 * scale
        satisfied = limit >= -tol if side == "lower" else limit <= tol
        if stable and satisfied:
            return "verified", f"{side} endpoint: boundary limit of F is {limit:.3g}"
        if stable and not satisfied:
            return "violated", (f"{side} endpoint: boundary limit of F is {limit:.3g}, "
                                "pointing out of the domain")
        return "inconclusive", f"{side} endpoint: boundary limit of F did not stabilize"

    def _probe_unbounded_side(self, side: str, lo_w: float, hi_w: float,
                              horizon: float) -> tuple[str, str]:
        span = hi_w - lo_w
        if side == "lower":
            seeds = np.array([lo_w + 0.01 * span, lo_w + 0.25 * span])
        else:
            seeds = np.array([hi_w - 0.25 * span, hi_w - 0.01 * span])
        try:
            self.flow_batch(horizon, seeds)
        except EscapeError:
            return "violated", f"{side} side: a probe trajectory left the domain"
        except FlowError as err:
            return "inconclusive", f"{side} side: probe not certifiable ({err})"
        return "verified", f"{side} side: probes stayed in the domain to t={horizon:g}"
