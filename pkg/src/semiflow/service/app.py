"""HTTP facade for the analysis pipeline.

The service is stateless: each request carries the full problem description
and the response carries the full report.  File output, formatting, and exit
codes live in the command-line client.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..expressions import ExpressionError
from ..flows import FlowError
from ..problem import ProblemError
from ..semigroup import SemigroupError
from ..sobolev import SobolevError
from . import ops
from .schemas import AnalyzeRequest, OccupancyRequest, SimulateRequest, VerifyRequest

log = logging.getLogger("semiflow.service")

_CLIENT_ERRORS = (ProblemError, ExpressionError, SobolevError, FlowError,
                  SemigroupError, ValueError, ZeroDivisionError, OverflowError)


def _guard(fn, request):
    try:
        return fn(request)
    except _CLIENT_ERRORS as exc:
        log.info("request rejected: %s", exc)
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(
        title="semiflow service",
        version=__version__,
        description="Weighted composition semigroup analysis over HTTP.",
    )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/analyze")
    def analyze(request: AnalyzeRequest) -> dict:
        return _guard(ops.run_analyze, request)

    @app.post("/sobolev-analyze")
    def sobolev_analyze(request: AnalyzeRequest) -> dict:
        return _guard(ops.run_sobolev_analyze, request)

    @app.post("/simulate")
    def simulate(request: SimulateRequest) -> dict:
        return _guard(ops.run_simulate, request)

    @app.post("/verify")
    def verify(request: VerifyRequest) -> dict:
        return _guard(ops.run_verify, request)

    @app.post("/occupancy")
    def occupancy(request: OccupancyRequest) -> dict:
        return _guard(ops.run_occupancy, request)

    return app
