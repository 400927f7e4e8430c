"""Weighted composition semigroups on the line: flows, densities, and chaos tests."""

__version__ = "0.1.0"
