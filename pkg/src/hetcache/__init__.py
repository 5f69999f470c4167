"""Hybrid caching and multicasting in two-tier cache-enabled networks."""

__version__ = "0.1.0"
