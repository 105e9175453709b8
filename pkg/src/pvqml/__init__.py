"""Hybrid quantum-classical photovoltaic power forecasting."""

__version__ = "0.1.0"
