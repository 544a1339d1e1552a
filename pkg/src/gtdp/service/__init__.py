"""HTTP service exposing the design optimizer: value/table/bounds queries,
Monte Carlo runs, the reproduction suite, and interactive advisory sessions."""

from .app import app, create_app

__all__ = ["app", "create_app"]
