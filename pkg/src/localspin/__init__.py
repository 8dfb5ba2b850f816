"""Local-spin (LT) heuristic for MAXCUT with tuning, exact oracle and benchmarks."""

__version__ = "0.1.0"
