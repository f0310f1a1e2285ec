"""Standalone plotting for exported trajectory and level-set grid files."""

from plotkit.files import (AxisMismatch, FileFormatError, GridFile,
                           TrajectoryFile, load_grid, load_trajectory)
from plotkit.figures import plot_levelsets, plot_trajectories

__all__ = [
    "AxisMismatch",
    "FileFormatError",
    "GridFile",
    "TrajectoryFile",
    "load_grid",
    "load_trajectory",
    "plot_levelsets",
    "plot_trajectories",
]
