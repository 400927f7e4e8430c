"""Request schemas for the HTTP analysis service.

Domain endpoints travel as numbers or the strings ``"inf"`` / ``"-inf"``
(JSON has no infinity literal).  Every model rejects unknown keys so typos
in problem files surface as validation errors instead of silent defaults.
"""

from __future__ import annotations

import math
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..problem import ProblemDef, make_problem

GRID_MIN = 65
GRID_MAX = 1_048_576
HORIZON_MAX = 1.0e6
P_MAX = 64.0


class ProblemSpec(BaseModel):
    """Declarative problem description: domain, drift, weight, density, exponent."""

    model_config = ConfigDict(extra="forbid")

    omega_lo: Union[float, str]
    omega_hi: Union[float, str]
    F: str
    h_re: str = "0"
    h_im: str = "0"
    rho: str = "1"
    p: float = Field(default=2.0, ge=1.0, le=P_MAX)

    @field_validator("omega_lo", "omega_hi")
    @classmethod
    def _coerce_bound(cls, value):
        try:
            result = float(value)
        except (TypeError, ValueError) as exc:
            raise ValueError(
                f"domain endpoint {value!r} is not a number "
                "(use 'inf' or '-inf' for an unbounded side)") from exc
        if math.isnan(result):
            raise ValueError("domain endpoint may not be NaN")
        return result

    def build(self, p_override: Optional[float] = None) -> ProblemDef:
        p = float(self.p if p_override is None else p_override)
        return make_problem(float(self.omega_lo), float(self.omega_hi), self.F,
                            h_re=self.h_re, h_im=self.h_im, rho=self.rho, p=p)


class InitialSpec(BaseModel):
    """Initial datum for simulation: indicator interval, samples, or expression."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["indicator", "samples", "expression"]
    interval: Optional[tuple[float, float]] = None
    nodes: Optional[list[float]] = None
    values_re: Optional[list[float]] = None
    values_im: Optional[list[float]] = None
    derivative_re: Optional[list[float]] = None
    derivative_im: Optional[list[float]] = None
    source: Optional[str] = None

    @model_validator(mode="after")
    def _check_payload(self):
        if self.kind == "indicator":
            if self.interval is None or not self.interval[0] < self.interval[1]:
                raise ValueError("indicator initial data needs interval=[a, b] with a < b")
        elif self.kind == "samples":
            if self.nodes is None or self.values_re is None:
                raise ValueError("sampled initial data needs 'nodes' and 'values_re'")
            n = len(self.nodes)
            for name in ("values_re", "values_im", "derivative_re", "derivative_im"):
                channel = getattr(self, name)
                if channel is not None and len(channel) != n:
                    raise ValueError(f"'{name}' must have the same length as 'nodes'")
        elif self.source is None:
            raise ValueError("expression initial data needs 'source'")
        return self


class AnalyzeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    p: Optional[float] = Field(default=None, ge=1.0, le=P_MAX)


class SimulateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    times: list[float] = Field(min_length=1)
    initial: InitialSpec
    mode: Literal["interval", "sobolev"] = "interval"
    grid: int = Field(default=4096, ge=GRID_MIN, le=GRID_MAX)
    p: Optional[float] = Field(default=None, ge=1.0, le=P_MAX)

    @field_validator("times")
    @classmethod
    def _nonnegative(cls, times):
        if any(t < 0 or not math.isfinite(t) for t in times):
            raise ValueError("simulation times must be finite and nonnegative")
        return times


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    grid: int = Field(default=4096, ge=GRID_MIN, le=GRID_MAX)
    horizon: float = Field(default=50.0, gt=0.0, le=HORIZON_MAX)
    tol_flow: float = Field(default=1e-9, gt=0.0, lt=1.0)
    tol_norm: float = Field(default=1e-6, gt=0.0, lt=1.0)
    p: Optional[float] = Field(default=None, ge=1.0, le=P_MAX)
    seed: int = Field(default=0, ge=0)
    inject_fault: bool = False
    refine: bool = True


class OccupancyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    interval: tuple[float, float]
    horizon: float = Field(default=50.0, gt=0.0, le=HORIZON_MAX)
    probes: int = Field(default=101, ge=3, le=100_001)

    @field_validator("interval")
    @classmethod
    def _ordered(cls, interval):
        if not interval[0] < interval[1]:
            raise ValueError("interval must satisfy a < b")
        return interval
