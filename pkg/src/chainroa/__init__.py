"""Certified outer approximations of finite-time regions of attraction
for chain-sparse polynomial ODE systems."""

__version__ = "0.1.0"
