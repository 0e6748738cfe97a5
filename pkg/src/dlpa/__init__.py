"""Model-based reinforcement learning for parameterized action spaces."""

from .actions import (
    ParamAction,
    ParamActionSpec,
    Transition,
    TrajectorySegment,
    discrete_distance,
    encode_action,
    validate_action,
)
from .envs import make_env
from .model import DynamicsModel, OracleModel, imagine_rollout
from .planner import PlannerConfig, init_distribution, plan, random_shooting_plan
from .trainer import TrainConfig, evaluate, run_training

__all__ = [
    "ParamAction",
    "ParamActionSpec",
    "Transition",
    "TrajectorySegment",
    "discrete_distance",
    "encode_action",
    "validate_action",
    "make_env",
    "DynamicsModel",
    "OracleModel",
    "imagine_rollout",
    "PlannerConfig",
    "init_distribution",
    "plan",
    "random_shooting_plan",
    "TrainConfig",
    "evaluate",
    "run_training",
]
