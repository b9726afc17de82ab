"""Multi-agent compare-and-select video summarization engine."""

from .core import ActionSpace, AgentConfiguration, ClipTrack, RewardBundle, max_agents, validate_track
from .evaluation import Summary, extract_summary, f_score
from .policy import PolicyParameters, init_parameters
from .rewards import RewardConfig
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import EpisodeTrace, TrainConfig, run_episode, train, update

__all__ = [
    "ActionSpace",
    "AgentConfiguration",
    "ClipTrack",
    "EpisodeTrace",
    "PolicyParameters",
    "RewardBundle",
    "RewardConfig",
    "Summary",
    "SyntheticSpec",
    "TrainConfig",
    "extract_summary",
    "f_score",
    "generate_synthetic",
    "init_parameters",
    "max_agents",
    "run_episode",
    "train",
    "update",
    "validate_track",
]

__version__ = "0.1.0"
