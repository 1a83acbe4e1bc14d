from .agent import (
    CHECKPOINT_VERSION,
    LossStats,
    PolicyParams,
    PpoConfig,
    RolloutBuffer,
    action_mask,
    gae,
    load_checkpoint,
    masked_probs,
    policy_forward,
    ppo_loss,
    sample_actions,
    save_checkpoint,
    update,
)
from .gradcheck import gradient_check, gradient_check_ppo
from .net import AdamState, MlpParams, adam_step, init_mlp, mlp_backward, mlp_forward
from .trainer import TrainLog, collect_rollout, train_policy

__all__ = [
    "AdamState",
    "CHECKPOINT_VERSION",
    "LossStats",
    "MlpParams",
    "PolicyParams",
    "PpoConfig",
    "RolloutBuffer",
    "TrainLog",
    "action_mask",
    "adam_step",
    "collect_rollout",
    "gae",
    "gradient_check",
    "gradient_check_ppo",
    "init_mlp",
    "load_checkpoint",
    "masked_probs",
    "mlp_backward",
    "mlp_forward",
    "policy_forward",
    "ppo_loss",
    "sample_actions",
    "save_checkpoint",
    "train_policy",
    "update",
]
