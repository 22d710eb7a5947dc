"""Bayesian quantum neural network for AC power-flow regression."""

__version__ = "0.1.0"
