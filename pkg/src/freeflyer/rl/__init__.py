"""On-policy actor-critic training (PPO with a VPG-equivalent ablation)."""

from .checkpoint import load_checkpoint, save_checkpoint
from .nets import Adam, MlpParams, gaussian_log_prob, init_params, policy_forward
from .ppo import RolloutBuffer, compute_gae, ppo_update
from .train import TrainConfig, deploy, evaluate_policy, random_policy_baseline, train

__all__ = [
    "Adam", "MlpParams", "RolloutBuffer", "TrainConfig",
    "compute_gae", "deploy", "evaluate_policy", "gaussian_log_prob",
    "init_params", "load_checkpoint", "policy_forward", "ppo_update",
    "random_policy_baseline", "save_checkpoint", "train",
]
