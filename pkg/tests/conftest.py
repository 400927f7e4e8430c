"""Shared builders for the reference problems used across test modules."""

import math

import numpy as np

from semiflow.flows import Semiflow
from semiflow.lpspace import Grid, GridFunction
from semiflow.problem import ProblemDef, make_problem


def vfl_problem(gamma: float = 0.0, p: float = 1.0, rho: str = "1",
                gamma_im: float = 0.0) -> ProblemDef:
    """Decay field −x on (0, 1) with constant weight γ (+ iγ_im)."""
    return make_problem(0.0, 1.0, "-x", h_re=repr(float(gamma)),
                        h_im=repr(float(gamma_im)), rho=rho, p=p)


def translation_problem(lo: float = 0.0, hi: float = math.inf, rho: str = "1",
                        h_re: str = "0", p: float = 1.0) -> ProblemDef:
    """Unit-speed drift on an interval, default (0, ∞)."""
    return make_problem(lo, hi, "1", h_re=h_re, rho=rho, p=p)


def logistic_problem(h_re: str = "0", p: float = 1.0) -> ProblemDef:
    """Logistic field x(1−x) on (0, 1)."""
    return make_problem(0.0, 1.0, "x*(1-x)", h_re=h_re, p=p)


def boxcar(grid: Grid, a: float, b: float) -> GridFunction:
    """Indicator-shaped grid function without component validation."""
    lo, hi = grid.hull
    a2, b2 = max(float(a), lo), min(float(b), hi)
    sharp = grid.with_points([a2, b2])
    values = ((sharp.nodes >= a2) & (sharp.nodes <= b2)).astype(complex)
    return GridFunction(sharp, values, ((a2, b2),))


def forced_numeric(problem: ProblemDef) -> Semiflow:
    """A semiflow that must integrate the field numerically."""
    return Semiflow(problem, use_closed_form=False)
