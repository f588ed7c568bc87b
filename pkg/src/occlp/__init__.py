"""Occupational-measure linear programming for infinite-horizon optimal control.

Modules: ``expr`` (expression language), ``dynamics`` (systems and RK4
trajectories), ``occupation`` (occupational measures, W-residuals, metric),
``values`` (grid dynamic programming and periodic orbits), ``lp`` (revised
simplex), ``idlp`` (discretized primal, dual certificates, feedback) and
``cli`` (the ``occlp`` command).
"""

__version__ = "0.1.0"
