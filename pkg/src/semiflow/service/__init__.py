"""HTTP service exposing the analysis pipeline (FastAPI application)."""

from .app import create_app

__all__ = ["create_app"]
