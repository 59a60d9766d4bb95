"""Prediction-market microstructure, censored median estimation and market simulators."""

__version__ = "0.1.0"
