"""Exact time-dependent distributions for stochastic chemical reaction systems.

Closed-form probability generating functions for semi-linear and
single-species binary reaction systems, checked against a truncated
master-equation integrator and a Gillespie simulator.
"""

__version__ = "0.1.0"
