"""Object-relative UAV navigation: error-state EKF with anonymous object pose landmarks.

Modules:

- ``geometry``: quaternions, rotations, poses
- ``homography``: intrinsics-only pixel remapping between cameras
- ``estimator``: IMU-driven error-state EKF core
- ``landmarks``: object pose measurements, assignment, gating, anchoring
- ``mission``: global/object-relative switching and arc waypoints
- ``poet_sim``: statistical emulator of the object pose detector
- ``harness``: closed-loop simulation, replay and metrics
- ``config``, ``io``, ``cli``: scenario files, outputs and command line
"""

from .config import ScenarioConfig, arc_config, hover_config, load_config, parse_config
from .geometry import Pose
from .harness import FlightLog, Metrics, compute_metrics, run_closed_loop, run_offline

__all__ = [
    "FlightLog",
    "Metrics",
    "Pose",
    "ScenarioConfig",
    "arc_config",
    "compute_metrics",
    "hover_config",
    "load_config",
    "parse_config",
    "run_closed_loop",
    "run_offline",
]
__version__ = "0.1.0"
