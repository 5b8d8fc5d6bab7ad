"""Frenet-frame NMPC path planner with obstacle-augmented lane boundaries.

Submodules: geometry, splines, dynamics, projection, corridor, ocp, mpc,
scenario, sim and cli.
"""

__version__ = "0.1.0"
