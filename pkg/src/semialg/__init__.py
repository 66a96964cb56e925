"""Moment-SOS bounds on Gaussian and exponential measures of semi-algebraic sets."""

__version__ = "0.1.0"
