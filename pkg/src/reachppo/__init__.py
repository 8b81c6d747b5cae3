"""Reaching with PPO on a UR5e kinematic model, with Poisson action ensembles
and a policy-feedback discount."""
from .env import EnvConfig, ReachEnv, RewardParams
from .kinematics import ArmModel, Workspace, forward_kinematics
from .ppo import PpoAgent, PpoConfig

__version__ = "0.1.0"
__all__ = ["ArmModel", "EnvConfig", "PpoAgent", "PpoConfig", "ReachEnv", "RewardParams", "Workspace",
           "forward_kinematics"]
