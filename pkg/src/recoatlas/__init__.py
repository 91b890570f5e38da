"""Recommendation-agent benchmark harness.

Builds a catalog tool environment from item metadata and interaction logs,
trains the behavior-aligned heads, runs tool-budgeted agent episodes and
scores the resulting reports.
"""

__version__ = "0.1.0"
