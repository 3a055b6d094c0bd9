"""Aerial manipulator planning and learned joint-torque tracking."""

from aeroarm.arm import ArmParams, JointState, forward_kinematics, inverse_kinematics
from aeroarm.corridor import FeasibleCorridor, compute_corridor
from aeroarm.planner import Obstacle, PlannerConfig, plan_base_path, time_to_collision
from aeroarm.qlearn import Discretizer, LearnConfig, QLearningTracker, QTable, TrackingEnv
from aeroarm.quad import QuadParams, QuadState, quad_step
from aeroarm.trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "ArmParams", "JointState", "forward_kinematics", "inverse_kinematics",
    "FeasibleCorridor", "compute_corridor", "Obstacle", "PlannerConfig",
    "plan_base_path", "time_to_collision", "Discretizer", "LearnConfig",
    "QLearningTracker", "QTable", "TrackingEnv", "QuadParams", "QuadState",
    "quad_step", "Trajectory",
]
