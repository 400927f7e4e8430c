"""Weighted composition semigroup on the pinned Sobolev space over [a, b].

The state space is W-star: absolutely continuous functions on the compact
interval [a, b] with f(a) = 0, normed by
``(|f|_p^p + |f'|_p^p)**(1/p)``.  The semigroup acts by
``S(t)f = h_t * (f o phi(t, .))`` for a drift with F(a) = 0 that keeps
(a, b) forward invariant and a Lipschitz weight that is real and constant
on the drift's zero set, with (h - h(a)) / F essentially bounded.

Chaos classification does not happen on the Sobolev space directly: the
semigroup is linearly conjugate to the interval semigroup with weight
``F' + h(a)`` and flat density on L^p(a, b), so the classifier builds that
derived problem and delegates to the interval pipeline.  The conjugating
bijection has no closed form and is never constructed; a generic
conjugacy-transport utility validates the right-inverse transport argument
on synthetic intertwiners instead.

The derivative channel of S(t)f uses the exact spatial derivative of the
cocycle: for scalar autonomous flows ``d/dx int_0^t h(phi(s, x)) ds``
collapses to ``(h(phi(t, x)) - h(x)) / F(x)``, which rewritten through the
bounded hypothesis quotient ``q = (h - h(a)) / F`` becomes
``q(phi(t, x)) * d2phi(t, x) - q(x)`` - stable at drift zeros where direct
division is not.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .chaos import ChaosReport, chaos_test
from .expressions import (
    BinaryOp,
    EvaluationError,
    Expression,
    Literal,
    differentiate,
)
from .flows import EscapeError, FlowError, Semiflow
from .lpspace import Grid
from .problem import ProblemDef

__all__ = [
    "SobolevError",
    "SobolevGridFunction",
    "Intertwiner",
    "sobolev_grid",
    "sobolev_sample",
    "w_norm",
    "check_sobolev_hypotheses",
    "derived_interval_problem",
    "sobolev_apply_S",
    "sobolev_chaos_classify",
    "conjugacy_transport",
    "sobolev_write_csv",
    "sobolev_read_csv",
]

QUOTIENT_BOUND = 1e4        # ess-sup proxy for the (h - h(a))/F hypothesis
WEIGHT_SLOPE_BOUND = 1e6    # Lipschitz-weight proxy bound for |h'|
_IM_TOL = 1e-12             # |Im h(a)| tolerance (h(a) must be real)


class SobolevError(RuntimeError):
    """A Sobolev-space hypothesis or operation failed."""


# ---------------------------------------------------------------------------
# domain type


@dataclass(frozen=True)
class SobolevGridFunction:
    """Function on [a, b] with pinned left value and a derivative channel.

    ``values[0]`` must be exactly zero (the space pins f(a) = 0).  The
    derivative channel carries f' per node; consistency with the cumulative
    integral of the derivative is measured by :meth:`reconstruction_error`.
    """

    grid: Grid
    values: np.ndarray
    derivative: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        derivative = np.asarray(self.derivative, dtype=complex)
        n = self.grid.nodes.size
        if values.shape != (n,) or derivative.shape != (n,):
            raise ValueError("values and derivative must match the grid size")
        if values[0] != 0:
            raise ValueError("the left endpoint value must be exactly zero")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(derivative))):
            raise ValueError("values and derivative must be finite")
        values.flags.writeable = False
        derivative.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "derivative", derivative)

    @property
    def a(self) -> float:
        return float(self.grid.nodes[0])

    @property
    def b(self) -> float:
        return float(self.grid.nodes[-1])

    def reconstruction_error(self) -> float:
        """Max deviation between values and the integrated derivative."""
        rebuilt = cumulative_trapezoid(self.derivative, self.grid.nodes,
                                       initial=0.0)
        return float(np.max(np.abs(self.values - rebuilt)))

    def __sub__(self, other: "SobolevGridFunction") -> "SobolevGridFunction":
        if not isinstance(other, SobolevGridFunction):
            return NotImplemented
        if other.grid != self.grid:
            raise ValueError("grids must match for pointwise arithmetic")
        return SobolevGridFunction(self.grid, self.values - other.values,
                                   self.derivative - other.derivative)

    def __mul__(self, scalar) -> "SobolevGridFunction":
        if not np.isscalar(scalar):
            return NotImplemented
        return SobolevGridFunction(self.grid, self.values * scalar,
                                   self.derivative * scalar)

    __rmul__ = __mul__


def sobolev_grid(a: float, b: float, size: int = 1025) -> Grid:
    """Uniform grid on the closed interval [a, b], endpoints included."""
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise ValueError("the interval must be bounded with a < b")
    return Grid(tuple(np.linspace(a, b, size)))


def sobolev_sample(grid: Grid, fn: Callable[[np.ndarray], np.ndarray],
                   dfn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   ) -> SobolevGridFunction:
    """Sample a function (and its derivative) with the left value pinned.

    ``fn`` must vanish at the left endpoint to 1e-9; the stored value is
    pinned to exactly zero.  Without ``dfn`` the derivative channel is the
    second-order finite-difference gradient of the sampled values.
    """
    nodes = grid.nodes
    values = np.asarray(fn(nodes), dtype=complex)
    if abs(values[0]) > 1e-9 * (1.0 + float(np.max(np.abs(values)))):
        raise ValueError("the sampled function must vanish at the left "
                         f"endpoint; got {values[0]!r}")
    values = values.copy()
    values[0] = 0.0
    if dfn is not None:
        derivative = np.asarray(dfn(nodes), dtype=complex)
    else:
        derivative = np.gradient(values, nodes)
    return SobolevGridFunction(grid, values, derivative)


def w_norm(f: SobolevGridFunction, p: float) -> float:
    """Norm combining both channels: (|f|_p^p + |f'|_p^p)**(1/p)."""
    p = float(p)
    if p < 1.0:
        raise ValueError("p must satisfy p >= 1")
    nodes = f.grid.nodes
    value_part = float(np.trapezoid(np.abs(f.values) ** p, nodes))
    deriv_part = float(np.trapezoid(np.abs(f.derivative) ** p, nodes))
    return (value_part + deriv_part) ** (1.0 / p)


# ---------------------------------------------------------------------------
# hypotheses


def _endpoint_stack(a: float, b: float, anchor: float) -> np.ndarray:
    """Sample points approaching ``anchor`` geometrically from inside."""
    span = b - a
    distances = span * 10.0 ** (-np.arange(1, 49) / 4.0)
    if anchor <= a + 0.5 * span:
        pts = anchor + distances
    else:
        pts = anchor - distances
    return pts[(pts > a) & (pts < b)]


def check_sobolev_hypotheses(sf: Semiflow) -> tuple[str, ...]:
    """Verify the standing hypotheses; raise SobolevError on violation.

    Checks: bounded interval; F(a) = 0; forward invariance of (a, b) via the
    endpoint signs; h(a) real; h equal to h(a) on the drift's zero set; the
    quotient (h - h(a))/F essentially bounded (geometric sampling toward the
    endpoints and every interior zero); |h'| bounded.  Returns notes.
    """
    prob = sf.problem
    a, b = prob.omega_lo, prob.omega_hi
    if not (math.isfinite(a) and math.isfinite(b)):
        raise SobolevError("the Sobolev semigroup needs a bounded interval")
    span = b - a
    notes: list[str] = []

    f_at_a = float(prob.F(a))
    if abs(f_at_a) > 1e-12 * (1.0 + abs(a)):
        raise SobolevError(
            f"the drift must vanish at the left endpoint; F({a:g}) = {f_at_a:g}")
    f_at_b = float(prob.F(b))
    if f_at_b > 1e-12 * (1.0 + abs(b)):
        raise SobolevError(
            "the interval is not forward invariant: the drift points "
            f"outward at the right endpoint (F({b:g}) = {f_at_b:g})")

    h_a = complex(float(prob.h_re(a)), float(prob.h_im(a)))
    if abs(h_a.imag) > _IM_TOL:
        raise SobolevError(
            f"the weight must be real at the left endpoint; Im h({a:g}) = "
            f"{h_a.imag:g}")

    dec = sf.decompose()
    zero_points = [a] + [z for z in dec.zeros if a < z < b]
    if abs(f_at_b) <= 1e-12 * (1.0 + abs(b)):
        zero_points.append(b)
    for z in zero_points:
        h_z = complex(float(prob.h_re(z)), float(prob.h_im(z)))
        if abs(h_z - h_a) > 1e-9 * (1.0 + abs(h_a)):
            raise SobolevError(
                "the weight must be constant on the drift's zero set; "
                f"h({z:g}) = {h_z:g} differs from h({a:g}) = {h_a:g}")

    sample_sets = [np.linspace(a + span / 2050, b - span / 2050, 2049)]
    for anchor in zero_points:
        sample_sets.append(_endpoint_stack(a, b, anchor))
    sample_sets.append(_endpoint_stack(a, b, b))
    xs = np.unique(np.concatenate(sample_sets))
    try:
        f_vals = np.asarray(prob.F(xs), dtype=float)
        h_vals = (np.asarray(prob.h_re(xs), dtype=float)
                  + 1j * np.asarray(prob.h_im(xs), dtype=float))
    except EvaluationError as exc:
        raise SobolevError(f"coefficients cannot be sampled on [a, b]: {exc}")
    nonzero = np.abs(f_vals) > 1e-300
    quotient = np.abs(h_vals[nonzero] - h_a) / np.abs(f_vals[nonzero])
    q_sup = float(np.max(quotient, initial=0.0))
    if not math.isfinite(q_sup) or q_sup > QUOTIENT_BOUND:
        raise SobolevError(
            "the quotient (h - h(a))/F looks unbounded on the interval "
            f"(sampled sup {q_sup:.3g} exceeds {QUOTIENT_BOUND:g})")
    notes.append(f"quotient (h - h(a))/F sampled sup {q_sup:.3g}")

    h_re_prime = differentiate(prob.h_re)
    h_im_prime = differentiate(prob.h_im)
    try:
        slope = np.hypot(np.asarray(h_re_prime(xs), dtype=float),
                         np.asarray(h_im_prime(xs), dtype=float))
        s_sup = float(np.max(slope, initial=0.0))
    except EvaluationError:
        s_sup = math.inf
    if not math.isfinite(s_sup) or s_sup > WEIGHT_SLOPE_BOUND:
        raise SobolevError(
            "the weight must be Lipschitz on [a, b]; sampled |h'| sup "
            f"{s_sup:.3g} exceeds {WEIGHT_SLOPE_BOUND:g}")
    notes.append(f"weight slope sampled sup {s_sup:.3g}")
    return tuple(notes)


# ---------------------------------------------------------------------------
# semigroup action


def _quotient_fn(prob: ProblemDef, h_a: complex,
                 ) -> Callable[[np.ndarray], np.ndarray]:
    """The bounded quotient (h - h(a))/F, with the 0/0 limit h'/F' at zeros."""
    h_re_prime = differentiate(prob.h_re)
    h_im_prime = differentiate(prob.h_im)

    def q(ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        f_vals = np.asarray(prob.F(ys), dtype=float)
        h_vals = (np.asarray(prob.h_re(ys), dtype=float)
                  + 1j * np.asarray(prob.h_im(ys), dtype=float))
        out = np.zeros(ys.shape, dtype=complex)
        safe = np.abs(f_vals) > 1e-9 * (1.0 + np.abs(ys))
        out[safe] = (h_vals[safe] - h_a) / f_vals[safe]
        if not np.all(safe):
            at_zero = ys[~safe]
            fp = np.asarray(prob.F_prime(at_zero), dtype=float)
            hp = (np.asarray(h_re_prime(at_zero), dtype=float)
                  + 1j * np.asarray(h_im_prime(at_zero), dtype=float))
            limit = np.zeros(at_zero.shape, dtype=complex)
            nondegenerate = np.abs(fp) > 1e-12
            limit[nondegenerate] = hp[nondegenerate] / fp[nondegenerate]
            out[~safe] = limit
        return out

    return q


def sobolev_apply_S(sf: Semiflow, t: float, f: SobolevGridFunction,
                    *, check_hypotheses: bool = True) -> SobolevGridFunction:
    """Apply S(t)f = h_t * (f o phi(t, .)) with both channels.

    The value channel composes the flow with the interpolated values; the
    derivative channel applies the product/chain rule with the cocycle's
    exact spatial derivative ``h_t * (q(phi) * d2phi - q(x))`` (see module
    docstring).  The left endpoint stays pinned at exactly zero.
    """
    t = float(t)
    if t < 0:
        raise ValueError("time must be nonnegative")
    if check_hypotheses:
        check_sobolev_hypotheses(sf)
    if t == 0.0:
        return f
    prob = sf.problem
    a, b = prob.omega_lo, prob.omega_hi
    nodes = f.grid.nodes
    if not (abs(nodes[0] - a) <= 1e-12 * (1.0 + abs(a))
            and abs(nodes[-1] - b) <= 1e-12 * (1.0 + abs(b))):
        raise ValueError("the grid must span the problem interval [a, b]")

    try:
        states = sf.path_integrals(t, nodes, direction="forward",
                                   with_weights=True)
    except (EscapeError, FlowError) as exc:
        raise SobolevError(f"the flow left the interval: {exc}") from exc
    positions = np.clip(np.asarray(states.position, dtype=float), a, b)
    cocycle = np.exp(np.asarray(states.int_h_re, dtype=float)
                     + 1j * np.asarray(states.int_h_im, dtype=float))
    d2phi = np.exp(np.asarray(states.int_fprime, dtype=float))
    if not (np.all(np.isfinite(cocycle)) and np.all(np.isfinite(d2phi))):
        raise SobolevError("the cocycle overflowed on the interval")

    inner_value = (np.interp(positions, nodes, f.values.real)
                   + 1j * np.interp(positions, nodes, f.values.imag))
    inner_deriv = (np.interp(positions, nodes, f.derivative.real)
                   + 1j * np.interp(positions, nodes, f.derivative.imag))

    h_a = complex(float(prob.h_re(a)), float(prob.h_im(a)))
    q = _quotient_fn(prob, h_a)
    cocycle_log_deriv = q(positions) * d2phi - q(nodes)

    values = cocycle * inner_value
    derivative = cocycle * (cocycle_log_deriv * inner_value
                            + inner_deriv * d2phi)
    values[0] = 0.0
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(derivative))):
        raise SobolevError("the semigroup action overflowed")
    return SobolevGridFunction(f.grid, values, derivative)


# ---------------------------------------------------------------------------
# classification via the derived interval problem


def derived_interval_problem(prob: ProblemDef) -> ProblemDef:
    """The conjugate interval problem: weight F' + h(a), flat density."""
    a = prob.omega_lo
    h_a_re = float(prob.h_re(a))
    derived_h = BinaryOp("+", differentiate(prob.F), Literal(h_a_re))
    return ProblemDef(omega_lo=prob.omega_lo, omega_hi=prob.omega_hi,
                      F=prob.F, h_re=derived_h, h_im=Literal(0.0),
                      rho=Literal(1.0), p=prob.p)


def sobolev_chaos_classify(sf: Semiflow, p: Optional[float] = None,
                           ) -> ChaosReport:
    """Chaos verdict for the Sobolev semigroup via the conjugate problem.

    Verifies the standing hypotheses, builds the interval problem with
    weight F' + h(a) and flat density on (a, b), and delegates to the
    interval chaos pipeline; the returned report is tagged with the
    reduction used.  The verdict transfers through the linear conjugacy.
    """
    notes = check_sobolev_hypotheses(sf)
    if p is None:
        p = sf.problem.p
    derived = derived_interval_problem(sf.problem)
    report = chaos_test(Semiflow(derived), p=float(p))
    tag = ("Sobolev verdict: classified through the conjugate interval "
           "problem with weight F' + h(a) and flat density",) + notes
    return replace(report, notes=report.notes + tag)


# ---------------------------------------------------------------------------
# conjugacy transport


@dataclass(frozen=True)
class Intertwiner:
    """A linear bijection between two function spaces, as black-box maps."""

    forward: Callable
    inverse: Callable
    domain: str = ""
    codomain: str = ""


def conjugacy_transport(t1_apply: Callable, s_apply: Callable,
                        phi: Intertwiner, *, t2_apply: Callable,
                        test_vectors: Sequence, distance: Callable,
                        embed: Optional[Callable] = None,
                        t_grid: Sequence[float] = (0.5, 1.0),
                        r_grid: Sequence[float] = (1.5,),
                        tol: float = 1e-6) -> Callable:
    """Transport a right-inverse family through an intertwiner.

    Given semigroup actions ``t1_apply(t, f)`` and ``t2_apply(t, g)``, a
    right-inverse family ``s_apply(t, x)`` for the first semigroup over
    abstract vectors ``x`` (mapped into functions by ``embed``), and an
    intertwiner with ``T2(t) o phi = phi o T1(t)``, returns the transported
    family ``s_tilde(t, x) = phi(s_apply(t, x))``.

    Before returning, verifies on the test set: the intertwiner round
    trips, the intertwining relation, ``T2(t) s_tilde(t, .) = phi(embed(x))``
    and the cascade ``T2(t) s_tilde(r, .) = s_tilde(r - t, .)`` for r > t.
    Raises :class:`SobolevError` when any identity exceeds ``tol``.
    """
    if embed is None:
        embed = lambda x: x

    def s_tilde(t: float, x):
        return phi.forward(s_apply(t, x))

    failures: list[str] = []
    for i, x in enumerate(test_vectors):
        fx = embed(x)
        gx = phi.forward(fx)
        err = distance(phi.inverse(gx), fx)
        if not err <= tol:
            failures.append(f"vector {i}: inverse o forward deviates by {err:.3g}")
        err = distance(phi.forward(phi.inverse(gx)), gx)
        if not err <= tol:
            failures.append(f"vector {i}: forward o inverse deviates by {err:.3g}")
        for t in t_grid:
            err = distance(t2_apply(t, gx), phi.forward(t1_apply(t, fx)))
            if not err <= tol:
                failures.append(
                    f"vector {i}, t={t:g}: intertwining deviates by {err:.3g}")
            err = distance(t2_apply(t, s_tilde(t, x)), gx)
            if not err <= tol:
                failures.append(
                    f"vector {i}, t={t:g}: right inverse deviates by {err:.3g}")
            for r in r_grid:
                if not r > t:
                    continue
                err = distance(t2_apply(t, s_tilde(r, x)),
                               s_tilde(r - t, x))
                if not err <= tol:
                    failures.append(
                        f"vector {i}, t={t:g}, r={r:g}: cascade deviates "
                        f"by {err:.3g}")
    if failures:
        raise SobolevError("conjugacy transport identities failed: "
                           + "; ".join(failures))
    return s_tilde


# ---------------------------------------------------------------------------
# serialization


def _format_channel(value: complex) -> str:
    if value.imag == 0.0:
        return repr(float(value.real))
    return repr(complex(value))


def sobolev_write_csv(f: SobolevGridFunction, path) -> None:
    """Write node, value, derivative rows; floats round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "value", "derivative"])
        for node, value, deriv in zip(f.grid.nodes.tolist(),
                                      f.values.tolist(),
                                      f.derivative.tolist()):
            writer.writerow([repr(node), _format_channel(value),
                             _format_channel(deriv)])


def _parse_channel(text: str) -> complex:
    try:
        return complex(float(text))
    except ValueError:
        return complex(text)


def sobolev_read_csv(path) -> SobolevGridFunction:
    """Read a three-column file written by :func:`sobolev_write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file") from None
        if [c.strip() for c in header] != ["node", "value", "derivative"]:
            raise ValueError("expected header node,value,derivative; got "
                             + ",".join(header))
        nodes, values, derivs = [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"expected 3 columns, got {len(row)}")
            nodes.append(float(row[0]))
            values.append(_parse_channel(row[1]))
            derivs.append(_parse_channel(row[2]))
    grid = Grid(tuple(nodes))
    return SobolevGridFunction(grid, np.asarray(values, dtype=complex),
                               np.asarray(derivs, dtype=complex))
