"""Endpoint implementations: build the problem, run the analysis, shape JSON.

Every function takes a validated request model and returns a plain dict that
is JSON-serializable without special encoders (no infinities, no complex
numbers — complex channels are split into real/imaginary arrays).
"""

from __future__ import annotations

import logging
import math
from typing import Callable, Optional

import numpy as np

from ..chaos import (
    VERDICT_CHAOTIC,
    VERDICT_INCONCLUSIVE,
    VERDICT_NOT_CHAOTIC,
    chaos_test,
    vfl_classify,
)
from ..expressions import evaluate, parse_expression
from ..flows import EscapeError, FlowError, Semiflow
from ..lpspace import (
    Grid,
    GridFunction,
    build_grid,
    indicator,
    lp_distance,
    lp_norm,
    make_indicator_spec,
    sample_function,
)
from ..numerics import integrate_interval
from ..problem import ProblemDef
from ..semigroup import apply_S, apply_T, occupancy_bound
from ..sobolev import (
    SobolevGridFunction,
    check_sobolev_hypotheses,
    sobolev_apply_S,
    sobolev_chaos_classify,
    sobolev_grid,
    sobolev_sample,
    w_norm,
)
from ..weights import rho_backward_values, rho_forward_values
from .schemas import (
    AnalyzeRequest,
    InitialSpec,
    OccupancyRequest,
    SimulateRequest,
    VerifyRequest,
)

log = logging.getLogger("semiflow.service")

EXIT_CODES = {
    VERDICT_CHAOTIC: 0,
    VERDICT_NOT_CHAOTIC: 1,
    VERDICT_INCONCLUSIVE: 2,
}

BOUNDARY_TOL = 1e-12


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def run_analyze(req: AnalyzeRequest) -> dict:
    prob = req.problem.build(req.p)
    sf = Semiflow(prob)
    report = chaos_test(sf)

    threshold = None
    try:
        threshold = vfl_classify(sf)
    except ValueError:
        pass  # not a unit-interval linear-decay problem; generic verdict stands

    text_lines = [report.to_text()]
    if threshold is not None:
        text_lines.append("")
        text_lines.append("threshold analysis (unit-interval linear-decay form)")
        text_lines.append(f"  weight at 0        : {threshold.h_at_zero!r}")
        text_lines.append(f"  chaos threshold    : > {threshold.threshold!r}")
        text_lines.append(f"  margin             : {threshold.margin!r}")
        text_lines.append(f"  boundary case      : {threshold.boundary}")
        text_lines.append(f"  threshold verdict  : "
                          f"{'chaotic' if threshold.chaotic else 'not chaotic'}")
        text_lines.append(f"  cross check        : {threshold.cross_check}")
        for note in threshold.notes:
            text_lines.append(f"  note: {note}")

    return {
        "verdict": report.verdict,
        "exit_code": EXIT_CODES[report.verdict],
        "report": report.to_dict(),
        "threshold_analysis": None if threshold is None else threshold.to_dict(),
        "text": "\n".join(text_lines),
    }


# ---------------------------------------------------------------------------
# sobolev-analyze
# ---------------------------------------------------------------------------

def run_sobolev_analyze(req: AnalyzeRequest) -> dict:
    prob = req.problem.build(req.p)
    sf = Semiflow(prob)
    report = sobolev_chaos_classify(sf)

    p = prob.p
    h_a = float(np.real(np.asarray(prob.h_re(prob.omega_lo), dtype=float)))
    algebraic_threshold = 1.0 - 1.0 / p
    margin = h_a - algebraic_threshold
    boundary = abs(margin) <= BOUNDARY_TOL
    algebraic_chaotic = margin > 0.0 and not boundary

    if report.verdict == VERDICT_INCONCLUSIVE:
        agreement = "numeric-inconclusive"
    elif (report.verdict == VERDICT_CHAOTIC) == algebraic_chaotic:
        agreement = "agree"
    else:
        agreement = "disagree"

    text_lines = [report.to_text(), "",
                  "algebraic threshold (pinned Sobolev space)",
                  f"  weight at left endpoint : {h_a!r}",
                  f"  chaos threshold         : > {algebraic_threshold!r}",
                  f"  margin                  : {margin!r}",
                  f"  boundary case           : {boundary}",
                  f"  threshold verdict       : "
                  f"{'chaotic' if algebraic_chaotic else 'not chaotic'}",
                  f"  route agreement         : {agreement}"]
    if boundary:
        text_lines.append("  note: weight sits exactly on the chaos boundary; "
                          "the space is not chaotic there")

    return {
        "verdict": report.verdict,
        "exit_code": EXIT_CODES[report.verdict],
        "report": report.to_dict(),
        "algebraic": {
            "h_at_left_endpoint": h_a,
            "threshold": algebraic_threshold,
            "margin": margin,
            "boundary": boundary,
            "chaotic": algebraic_chaotic,
        },
        "agreement": agreement,
        "text": "\n".join(text_lines),
    }


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _expression_fn(source: str) -> Callable[[np.ndarray], np.ndarray]:
    node = parse_expression(source)
    return lambda xs: np.asarray(evaluate(node, np.asarray(xs, dtype=float)))


def _complex_channel(spec_re, spec_im) -> np.ndarray:
    re = np.asarray(spec_re, dtype=float)
    if spec_im is None:
        return re
    return re + 1j * np.asarray(spec_im, dtype=float)


def _split_channel(values: np.ndarray) -> tuple[list, Optional[list]]:
    arr = np.asarray(values)
    if np.iscomplexobj(arr) and np.any(arr.imag != 0.0):
        return arr.real.tolist(), arr.imag.tolist()
    return np.real(arr).tolist(), None


def _interval_initial(sf: Semiflow, initial: InitialSpec, grid_size: int) -> GridFunction:
    prob = sf.problem
    if initial.kind == "indicator":
        grid = build_grid(prob, size=grid_size)
        spec = make_indicator_spec(sf, tuple(initial.interval))
        return indicator(spec, grid)
    if initial.kind == "samples":
        nodes = np.asarray(initial.nodes, dtype=float)
        values = _complex_channel(initial.values_re, initial.values_im)
        return GridFunction(Grid(nodes), values)
    grid = build_grid(prob, size=grid_size)
    return sample_function(grid, _expression_fn(initial.source))


def _sobolev_initial(prob: ProblemDef, initial: InitialSpec,
                     grid_size: int) -> SobolevGridFunction:
    if initial.kind == "indicator":
        raise ValueError("indicator initial data is discontinuous; the Sobolev "
                         "mode needs sampled values or an expression")
    if initial.kind == "samples":
        nodes = np.asarray(initial.nodes, dtype=float)
        values = _complex_channel(initial.values_re, initial.values_im)
        if initial.derivative_re is None:
            derivative = np.gradient(values, nodes)
        else:
            derivative = _complex_channel(initial.derivative_re,
                                          initial.derivative_im)
        return SobolevGridFunction(Grid(nodes), values, derivative)
    grid = sobolev_grid(prob.omega_lo, prob.omega_hi, size=grid_size)
    return sobolev_sample(grid, _expression_fn(initial.source))


def run_simulate(req: SimulateRequest) -> dict:
    prob = req.problem.build(req.p)
    sf = Semiflow(prob)
    times = [float(t) for t in req.times]

    if req.mode == "interval":
        f0 = _interval_initial(sf, req.initial, req.grid)
        evolve = lambda t: apply_T(sf, t, f0)                        # noqa: E731
        norm_of = lambda g: lp_norm(g, prob.p, prob.rho)             # noqa: E731
    else:
        check_sobolev_hypotheses(sf)
        f0 = _sobolev_initial(prob, req.initial, req.grid)
        evolve = lambda t: sobolev_apply_S(sf, t, f0,                # noqa: E731
                                           check_hypotheses=False)
        norm_of = lambda g: w_norm(g, prob.p)                        # noqa: E731

    profiles = []
    norms = []
    for t in times:
        g = evolve(t)
        values_re, values_im = _split_channel(g.values)
        profile = {
            "t": t,
            "nodes": g.grid.nodes.tolist(),
            "values_re": values_re,
            "values_im": values_im,
        }
        if req.mode == "sobolev":
            deriv_re, deriv_im = _split_channel(g.derivative)
            profile["derivative_re"] = deriv_re
            profile["derivative_im"] = deriv_im
        profiles.append(profile)
        norms.append([t, float(norm_of(g))])

    return {"mode": req.mode, "p": prob.p, "profiles": profiles, "norms": norms}


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def transported_density_integral(sf: Semiflow, t: float, p: float,
                                 a: float, b: float, *,
                                 direction: str) -> float:
    """∫_a^b of a transported density, split where the density jumps to zero.

    The forward family vanishes outside the time-t image of the domain, so a
    finite domain endpoint maps to a jump point of the integrand; integrating
    each smooth piece separately keeps the quadrature accurate.
    """
    if direction == "forward":
        density = lambda x: rho_forward_values(sf, t, p, x)      # noqa: E731
    elif direction == "backward":
        density = lambda x: rho_backward_values(sf, t, p, x)     # noqa: E731
    else:
        raise ValueError("direction must be 'forward' or 'backward'")

    cuts = [a, b]
    if direction == "forward":
        for endpoint in (sf.problem.omega_lo, sf.problem.omega_hi):
            if not math.isfinite(endpoint):
                continue
            try:
                image = float(sf.flow(t, endpoint))
            except (EscapeError, FlowError):
                continue
            if a < image < b:
                cuts.append(image)
    cuts = sorted(cuts)
    return float(sum(
        integrate_interval(density, lo, hi, panels=32, order=8)
        for lo, hi in zip(cuts[:-1], cuts[1:])))


def _relative_sup(diff: np.ndarray, reference: np.ndarray) -> float:
    scale = 1.0 + np.max(np.abs(reference))
    return float(np.max(np.abs(diff)) / scale)


def _fhc_errors(sf: Semiflow, spec, grid, p: float, rho,
                t_grid, r_grid, fault: bool) -> tuple[float, float]:
    chi = indicator(spec, grid)
    norm_chi = lp_norm(chi, p, rho)
    right_inverse = 0.0
    cascade = 0.0
    for t in t_grid:
        u = apply_S(sf, t, spec, grid, invert_cocycle_sign=fault)
        back = apply_T(sf, t, u)
        right_inverse = max(right_inverse,
                            lp_distance(back, chi, p, rho) / norm_chi)
        for r in r_grid:
            if r <= t:
                continue
            left = apply_T(sf, t, apply_S(sf, r, spec, grid,
                                          invert_cocycle_sign=fault))
            right = apply_S(sf, r - t, spec, grid, invert_cocycle_sign=fault)
            denom = lp_norm(right, p, rho)
            cascade = max(cascade,
                          lp_distance(left, right, p, rho) / denom)
    return right_inverse, cascade


def run_verify(req: VerifyRequest) -> dict:
    prob = req.problem.build(req.p)
    sf = Semiflow(prob)
    p = prob.p
    rng = np.random.default_rng(req.seed)

    lo_w, hi_w = prob.sample_window()
    span = hi_w - lo_w
    xs = np.sort(lo_w + span * rng.uniform(0.15, 0.85, size=8))
    t_grid = (0.1, 0.5, 1.0)
    r_grid = tuple(sorted({t + dr for t in t_grid for dr in (0.2, 1.0)}))

    checks: list[dict] = []

    def add(name: str, error: float, tolerance: float, detail: str = "") -> None:
        checks.append({
            "name": name,
            "max_error": float(error),
            "tolerance": float(tolerance),
            "passed": bool(error <= tolerance),
            "detail": detail,
        })

    # --- flow identities -------------------------------------------------
    group_err = 0.0
    inversion_err = 0.0
    skipped_pairs = 0
    for t in t_grid:
        try:
            mid = sf.flow_batch(t, xs)
            inv = sf.inverse_flow_batch(t, mid)
            inversion_err = max(inversion_err, _relative_sup(inv.position - xs, xs))
            for s in t_grid:
                direct = sf.flow_batch(t + s, xs)
                via = sf.flow_batch(s, mid)
                group_err = max(group_err, _relative_sup(via - direct, direct))
        except (EscapeError, FlowError):
            skipped_pairs += 1
    flow_tol = max(1e4 * req.tol_flow, 1e-10)
    skip_note = (f"{skipped_pairs} time pairs skipped (trajectory escaped)"
                 if skipped_pairs else "")
    add("flow-group-law", group_err, flow_tol, skip_note)
    add("flow-inversion", inversion_err, flow_tol, skip_note)

    # --- spatial derivative against finite differences -------------------
    fd_err = 0.0
    t_fd = 0.5
    try:
        state = sf.path_integrals(t_fd, xs, direction="forward")
        d2phi = np.exp(state.int_fprime)
        delta = 1e-6 * (1.0 + np.abs(xs))
        fd = (sf.flow_batch(t_fd, xs + delta)
              - sf.flow_batch(t_fd, xs - delta)) / (2.0 * delta)
        fd_err = float(np.max(np.abs(fd - d2phi) / (1.0 + np.abs(d2phi))))
    except (EscapeError, FlowError):
        pass
    add("flow-derivative-vs-finite-differences", fd_err, 1e-4)

    # --- cocycle composition identity ------------------------------------
    cocycle_err = 0.0
    try:
        for t in (0.3, 0.7):
            s = 0.4
            first = sf.path_integrals(t, xs, direction="forward")
            second = sf.path_integrals(s, first.position, direction="forward")
            joint = sf.path_integrals(t + s, xs, direction="forward")
            left = np.exp(joint.int_h_re + 1j * joint.int_h_im)
            right = np.exp((first.int_h_re + second.int_h_re)
                           + 1j * (first.int_h_im + second.int_h_im))
            cocycle_err = max(cocycle_err,
                              _relative_sup(left - right, right))
    except (EscapeError, FlowError):
        pass
    add("cocycle-composition", cocycle_err, 1e-8)

    # --- transported density at t = 0 ------------------------------------
    rho_now = np.asarray(prob.rho(xs), dtype=float)
    rho_zero = rho_backward_values(sf, 0.0, p, xs)
    add("transported-density-at-zero",
        _relative_sup(rho_zero - rho_now, rho_now), 1e-12)

    # --- right-inverse and cascade identities -----------------------------
    grid = build_grid(prob, size=req.grid)
    intervals = ((lo_w + 0.25 * span, lo_w + 0.45 * span),
                 (lo_w + 0.55 * span, lo_w + 0.80 * span))
    specs = [make_indicator_spec(sf, iv) for iv in intervals]
    ri_err = 0.0
    cascade_err = 0.0
    for spec in specs:
        ri, ca = _fhc_errors(sf, spec, grid, p, prob.rho, t_grid, r_grid,
                             req.inject_fault)
        ri_err = max(ri_err, ri)
        cascade_err = max(cascade_err, ca)
    fault_note = "fault injection active: cocycle sign flipped" if req.inject_fault else ""
    add("right-inverse-identity", ri_err, req.tol_norm, fault_note)
    add("cascade-identity", cascade_err, req.tol_norm, fault_note)

    # --- norm identities ---------------------------------------------------
    def _rel_gap(measured: float, predicted: float) -> float:
        scale = max(abs(measured), abs(predicted), 1e-30)
        return abs(measured - predicted) / scale

    norm_err = 0.0
    for spec in specs:
        a, b = spec.interval
        for t in (0.5, 1.0):
            s_norm = lp_norm(apply_S(sf, t, spec, grid), p, prob.rho) ** p
            s_pred = transported_density_integral(sf, t, p, a, b,
                                                  direction="backward")
            norm_err = max(norm_err, _rel_gap(s_norm, s_pred))
        for t in (0.2, 0.5):
            t_norm = lp_norm(apply_T(sf, t, indicator(spec, grid)), 1.0, prob.rho)
            t_pred = transported_density_integral(sf, t, 1.0, a, b,
                                                  direction="forward")
            norm_err = max(norm_err, _rel_gap(t_norm, t_pred))
    add("norm-identities", norm_err, req.tol_norm)

    # --- occupancy bound ----------------------------------------------------
    y_grid = np.linspace(lo_w + span / 42.0, hi_w - span / 42.0, 21)
    bound = occupancy_bound(sf, intervals[0], y_grid, req.horizon)
    excess = max(0.0, bound.measured_sup - bound.c_formula)
    add("occupancy-bound", excess, req.tol_norm,
        f"measured sup {bound.measured_sup!r} vs constant {bound.c_formula!r}")
    add("occupancy-consistency", abs(bound.transit - bound.reciprocal_integral),
        1e-8, f"transit {bound.transit!r} vs integral {bound.reciprocal_integral!r}")

    # --- grid refinement ------------------------------------------------------
    refinement = None
    if req.refine:
        rows = []
        for size in sorted({65, req.grid}):
            coarse = build_grid(prob, size=size)
            ri, ca = _fhc_errors(sf, specs[0], coarse, p, prob.rho,
                                 (0.5,), (1.5,), req.inject_fault)
            rows.append({"grid": int(coarse.nodes.size),
                         "right_inverse_error": ri,
                         "cascade_error": ca})
        refinement = rows
        monotone = all(
            rows[i + 1]["right_inverse_error"] <= rows[i]["right_inverse_error"] + 1e-15
            and rows[i + 1]["cascade_error"] <= rows[i]["cascade_error"] + 1e-15
            for i in range(len(rows) - 1))
        add("refinement-monotone", 0.0 if monotone else 1.0, 0.5,
            "identity errors shrink as the grid refines")

    all_pass = all(c["passed"] for c in checks)
    return {"checks": checks, "all_pass": all_pass, "refinement": refinement,
            "p": p, "grid": req.grid, "seed": req.seed}


# ---------------------------------------------------------------------------
# occupancy
# ---------------------------------------------------------------------------

def run_occupancy(req: OccupancyRequest) -> dict:
    prob = req.problem.build(None)
    sf = Semiflow(prob)
    lo_w, hi_w = prob.sample_window()
    span = hi_w - lo_w
    margin = span / (2.0 * req.probes)
    y_grid = np.linspace(lo_w + margin, hi_w - margin, req.probes)

    bound = occupancy_bound(sf, tuple(req.interval), y_grid, req.horizon)
    witness_y, witness_occ = max(bound.measurements, key=lambda item: item[1])

    return {
        "interval": [bound.interval[0], bound.interval[1]],
        "reciprocal_integral": bound.reciprocal_integral,
        "transit": bound.transit,
        "c_formula": bound.c_formula,
        "consistency_gap": abs(bound.transit - bound.reciprocal_integral),
        "measured_sup": bound.measured_sup,
        "bound_satisfied": bound.measured_sup <= bound.c_formula + 1e-6,
        "witness": {"y": witness_y, "occupancy": witness_occ},
        "measurements": [[y, occ] for y, occ in bound.measurements],
        "horizon": req.horizon,
        "probes": req.probes,
    }
