"""Experiment harness: configuration, checkpoints, training and evaluation runs."""
from .checkpoint import (
    Checkpoint,
    CheckpointFormatError,
    agent_from_checkpoint,
    checkpoint_from_agent,
    checkpoint_load,
    checkpoint_save,
)
from .config import ConfigError, RunConfig, dump_config, load_config
from .runner import EvalReport, TrainResult, compare, evaluate, evaluate_agent, train, train_seed

__all__ = [
    "Checkpoint", "CheckpointFormatError", "ConfigError", "EvalReport", "RunConfig", "TrainResult",
    "agent_from_checkpoint", "checkpoint_from_agent", "checkpoint_load", "checkpoint_save", "compare",
    "dump_config", "evaluate", "evaluate_agent", "load_config", "train", "train_seed",
]
