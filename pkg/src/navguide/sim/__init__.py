from .expert import ExpertConfig, ExpertSample, expert_path, gen_expert_dataset
from .robot import RobotState, follow_step
from .trial import SUITES, TrialConfig, TrialTrace, run_trial, start_pose, suite_world
from .world import SensorConfig, World, add_extra_obstacles, gen_world, raycast_depth

__all__ = [
    "ExpertConfig", "ExpertSample", "RobotState", "SUITES", "SensorConfig", "TrialConfig",
    "TrialTrace", "World", "add_extra_obstacles", "expert_path", "follow_step",
    "gen_expert_dataset", "gen_world", "raycast_depth", "run_trial", "start_pose", "suite_world",
]
