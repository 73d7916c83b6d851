"""Numerical geometry of lifted submanifolds in tangent bundles with g-natural metrics."""

__version__ = "0.1.0"
