"""Stochastic-gradient Langevin dynamics with control-variate gradients and zero-variance post-processing."""
__version__ = "0.1.0"
