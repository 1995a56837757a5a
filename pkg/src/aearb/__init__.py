"""Monte Carlo verification of exponential long-term arbitrage bounds."""

__version__ = "0.1.0"
