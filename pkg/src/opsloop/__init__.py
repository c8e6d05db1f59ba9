"""Closed-loop cluster remediation engine with a deterministic simulator
and a complete A/B evaluation pipeline."""

__version__ = "0.1.0"
