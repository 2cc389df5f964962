"""Workflow performance prediction with resource-centric regression agents."""

__version__ = "0.1.0"
