"""Motion-normality toolkit.

Learns the normal motion of an agent in an environment from trajectory
observations, partitions the learned velocity field into quasi-constant
velocity zones, and scores new trajectories for abnormality with a bank of
per-zone Kalman filters. A scenario simulator and a first-person renderer
provide synthetic data for end-to-end experiments.
"""

from .model import (CURVE, STRAIGHT, SpatialGrid, Trajectory, VelocityField,
                    Zone, ZoneMap, derive_velocities, locate_cell)

__version__ = "0.1.0"

__all__ = [
    "CURVE", "STRAIGHT", "SpatialGrid", "Trajectory", "VelocityField",
    "Zone", "ZoneMap", "derive_velocities", "locate_cell", "__version__",
]
