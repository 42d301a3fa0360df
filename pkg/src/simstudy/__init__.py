"""Monte Carlo simulation-study harness."""

__version__ = "0.1.0"
