"""Problem definitions: the data (Ω, F, h, ρ, p) and the config-file loader.

A problem file is line-oriented ``key = value`` text.  Expression values are
quoted; endpoints and the exponent are plain numbers (``inf``/``-inf`` allowed
for endpoints).  ``#`` starts a comment outside quotes.

::

    # pull toward the origin, constant weight
    omega_lo = 0
    omega_hi = 1
    F   = "-x"
    h_re = "-0.5"
    rho = "1"
    p   = 2

Required keys: ``omega_lo``, ``omega_hi``, ``F``, ``p``.  Omitted ``h_re``,
``h_im``, ``rho`` default to ``"0"``, ``"0"``, ``"1"`` respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .expressions import (
    EvaluationError,
    Expression,
    constant_value,
    differentiate,
    parse_expression,
)

__all__ = [
    "ProblemDef", "ProblemError", "RangeReport", "ProblemValidation",
    "load_problem", "parse_problem_text", "make_problem",
    "parse_expression", "differentiate", "Expression",
]

#: Reported ranges above this magnitude are flagged as effectively unbounded.
MAGNITUDE_CAP = 1e6

#: Half-width of the sampling window used on unbounded sides of Ω.
SAMPLE_WINDOW = 20.0

_POSITIVITY_SAMPLES = 1024
_RANGE_SAMPLES = 4096


class ProblemError(ValueError):
    """Malformed problem file or inconsistent problem data."""


@dataclass(frozen=True)
class RangeReport:
    """Sampled [min, max] of a coefficient over Ω, with an unboundedness flag."""

    name: str
    minimum: float
    maximum: float
    flagged: bool
    note: str = ""


@dataclass(frozen=True)
class ProblemValidation:
    rho_positive: bool
    f_prime_range: RangeReport
    h_re_range: RangeReport


@dataclass(frozen=True)
class ProblemDef:
    """One weighted composition problem on the open interval (omega_lo, omega_hi).

    ``F`` drives the flow, ``h = h_re + i h_im`` is the multiplicative weight
    generator, ``rho`` the positive space density, ``p`` the integrability
    exponent.  ``F_prime`` is derived symbolically and ``q`` is the conjugate
    exponent (``inf`` when p = 1).
    """

    omega_lo: float
    omega_hi: float
    F: Expression
    h_re: Expression
    h_im: Expression
    rho: Expression
    p: float

    def __post_init__(self) -> None:
        if not self.omega_lo < self.omega_hi:
            raise ProblemError("omega_lo must be strictly below omega_hi")
        if math.isnan(self.omega_lo) or math.isnan(self.omega_hi):
            raise ProblemError("interval endpoints must not be nan")
        if not (math.isfinite(self.p) and self.p >= 1.0):
            raise ProblemError("p must be a finite number >= 1")

    @cached_property
    def F_prime(self) -> Expression:
        return differentiate(self.F)

    @cached_property
    def q(self) -> float:
        return math.inf if self.p == 1.0 else self.p / (self.p - 1.0)

    @cached_property
    def constant_h(self) -> Optional[complex]:
        """h as a complex number when it does not depend on x, else None."""
        re = constant_value(self.h_re)
        im = constant_value(self.h_im)
        if re is None or im is None:
            return None
        return complex(re, im)

    @cached_property
    def constant_F_prime(self) -> Optional[float]:
        return constant_value(self.F_prime)

    @cached_property
    def h_is_real(self) -> bool:
        return constant_value(self.h_im) == 0.0

    @cached_property
    def rho_is_one(self) -> bool:
        return constant_value(self.rho) == 1.0

    def contains(self, x: float) -> bool:
        return self.omega_lo < x < self.omega_hi

    def sample_window(self, width: float = SAMPLE_WINDOW) -> tuple[float, float]:
        """A finite subinterval of Ω used for sampling; equals Ω when bounded."""
        lo, hi = self.omega_lo, self.omega_hi
        if math.isfinite(lo) and math.isfinite(hi):
            return lo, hi
        if math.isfinite(lo):
            return lo, lo + 2.0 * width
        if math.isfinite(hi):
            return hi - 2.0 * width, hi
        return -width, width

    def interior_samples(self, count: int, *, refine_endpoints: bool = False) -> np.ndarray:
        """Strictly interior sample points, optionally crowded toward finite ends."""
        lo, hi = self.sample_window()
        span = hi - lo
        xs = lo + span * (np.arange(count) + 0.5) / count
        if refine_endpoints:
            scales = span * 2.0 ** -np.arange(2.0, 44.0)
            extra = []
            if math.isfinite(self.omega_lo):
                extra.append(self.omega_lo + scales)
            if math.isfinite(self.omega_hi):
                extra.append(self.omega_hi - scales)
            if extra:
                xs = np.concatenate([xs, *extra])
        xs = np.unique(xs)
        return xs[(xs > self.omega_lo) & (xs < self.omega_hi)]

    def validate(self) -> ProblemValidation:
        """Check ρ > 0 on a 1024-point sample and report coefficient ranges.

        Raises :class:`ProblemError` if the density fails positivity; range
        checks never raise, they flag.
        """
        xs = self.interior_samples(_POSITIVITY_SAMPLES)
        try:
            rho_vals = self.rho(xs)
        except EvaluationError as err:
            raise ProblemError(f"rho cannot be evaluated on the domain: {err}") from err
        if not np.all(np.isfinite(rho_vals)) or np.any(rho_vals <= 0.0):
            raise ProblemError("rho must be finite and strictly positive on the domain")
        grid = self.interior_samples(_RANGE_SAMPLES, refine_endpoints=True)
        return ProblemValidation(
            rho_positive=True,
            f_prime_range=_range_report("F_prime", self.F_prime, grid),
            h_re_range=_range_report("h_re", self.h_re, grid),
        )


def _range_report(name: str, expr: Expression, grid: np.ndarray) -> RangeReport:
    try:
        vals = np.asarray(expr(grid), dtype=float)
    except EvaluationError as err:
        return RangeReport(name, math.nan, math.nan, True, f"evaluation failed: {err}")
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        return RangeReport(name, math.nan, math.nan, True, "no finite samples")
    lo, hi = float(np.min(finite)), float(np.max(finite))
    flagged = max(abs(lo), abs(hi)) > MAGNITUDE_CAP or finite.size < vals.size
    note = "magnitude exceeds cap" if flagged else ""
    return RangeReport(name, lo, hi, flagged, note)


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------

_NUMBER_KEYS = ("omega_lo", "omega_hi", "p")
_EXPRESSION_KEYS = ("F", "h_re", "h_im", "rho")
_REQUIRED_KEYS = ("omega_lo", "omega_hi", "F", "p")
_DEFAULTS = {"h_re": "0", "h_im": "0", "rho": "1"}


def _strip_comment(line: str) -> str:
    out = []
    quoted = False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_endpoint(raw: str, key: str, lineno: int) -> float:
    text = raw.strip().lower()
    if text in ("inf", "+inf"):
        return math.inf
    if text == "-inf":
        return -math.inf
    try:
        return float(raw)
    except ValueError:
        raise ProblemError(f"line {lineno}: {key} must be a number or inf/-inf") from None


def parse_problem_text(text: str, *, source: str = "<string>",
                       validate: bool = True) -> ProblemDef:
    """Parse problem-file text into a :class:`ProblemDef`."""
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ProblemError(f"line {lineno}: expected 'key = value'")
        key, _, value = body.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _NUMBER_KEYS and key not in _EXPRESSION_KEYS:
            raise ProblemError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ProblemError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ProblemError(f"line {lineno}: empty value for {key!r}")
        raw[key] = (value, lineno)

    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ProblemError(f"{source}: missing required key {key!r}")

    fields: dict[str, object] = {}
    for key in _NUMBER_KEYS:
        value, lineno = raw[key]
        if key == "p":
            try:
                fields[key] = float(value)
            except ValueError:
                raise ProblemError(f"line {lineno}: p must be a number") from None
        else:
            fields[key] = _parse_endpoint(value, key, lineno)
    for key in _EXPRESSION_KEYS:
        if key in raw:
            value, lineno = raw[key]
            if len(value) < 2 or value[0] != '"' or value[-1] != '"':
                raise ProblemError(f"line {lineno}: {key} must be a quoted expression")
            source_text = value[1:-1]
        else:
            source_text, lineno = _DEFAULTS[key], 0
        try:
            fields[key] = parse_expression(source_text)
        except ValueError as err:
            raise ProblemError(f"line {lineno}: bad expression for {key}: {err}") from err

    try:
        problem = ProblemDef(**fields)  # type: ignore[arg-type]
    except ProblemError as err:
        raise ProblemError(f"{source}: {err}") from None
    if validate:
        problem.validate()
    return problem


def load_problem(path: Union[str, Path], *, validate: bool = True) -> ProblemDef:
    """Load and validate a problem file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ProblemError(f"cannot read problem file {path}: {err}") from err
    return parse_problem_text(text, source=str(path), validate=validate)


def make_problem(omega_lo: float, omega_hi: float, F: str, *, h_re: str = "0",
                 h_im: str = "0", rho: str = "1", p: float = 2.0,
                 validate: bool = True) -> ProblemDef:
    """Build a problem from expression strings (the test/service convenience)."""
    problem = ProblemDef(
        omega_lo=float(omega_lo), omega_hi=float(omega_hi),
        F=parse_expression(F), h_re=parse_expression(h_re),
        h_im=parse_expression(h_im), rho=parse_expression(rho), p=float(p),
    )
    if validate:
        problem.validate()
    return problem
