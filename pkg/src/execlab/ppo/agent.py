"""Actor-critic PPO with a clipped objective, GAE, entropy bonus and
masked discrete actions.

The actor and critic are separate 64x64 tanh networks (see net.py).  Action
masks zero out probabilities of actions above the remaining inventory before
normalization, so an illegal action has probability exactly 0.  The clipped
surrogate, value loss and entropy term follow the standard form

    loss = -E[min(r A, clip(r, 1-eps, 1+eps) A)]
           + value_coef * E[(V(s) - target)^2]
           - entropy_coef * E[H(pi(.|s))]

with r the new/old probability ratio and advantages normalized per
minibatch.  Gradients are assembled by hand and verified against central
finite differences (gradcheck.py).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AllMaskedError, NonFiniteLossError
from .net import AdamState, MlpParams, ForwardCache, adam_step, init_mlp, mlp_backward, mlp_forward

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PpoConfig:
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    update_epochs: int = 4
    minibatch_size: int = 256
    rollout_steps: int = 2048
    normalize_advantages: bool = True
    max_grad_norm: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.clip_ratio < 1.0):
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not (0.0 <= self.discount <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("discount and gae_lambda must lie in [0, 1]")


@dataclass
class PolicyParams:
    actor: MlpParams
    critic: MlpParams
    actor_opt: AdamState
    critic_opt: AdamState
    n_inputs: int
    n_actions: int
    updates_done: int = 0

    @classmethod
    def init(cls, rng: np.random.Generator, n_inputs: int, n_actions: int) -> "PolicyParams":
        actor = init_mlp(rng, n_inputs, n_actions, out_scale=0.01)
        critic = init_mlp(rng, n_inputs, 1, out_scale=0.01)
        return cls(
            actor=actor,
            critic=critic,
            actor_opt=AdamState.zeros(actor.size),
            critic_opt=AdamState.zeros(critic.size),
            n_inputs=n_inputs,
            n_actions=n_actions,
        )

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            actor=self.actor.copy(),
            critic=self.critic.copy(),
            actor_opt=AdamState(self.actor_opt.m.copy(), self.actor_opt.v.copy(), self.actor_opt.t),
            critic_opt=AdamState(
                self.critic_opt.m.copy(), self.critic_opt.v.copy(), self.critic_opt.t
            ),
            n_inputs=self.n_inputs,
            n_actions=self.n_actions,
            updates_done=self.updates_done,
        )


def masked_probs(logits: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Softmax over legal actions; masked entries get probability exactly 0."""
    if not masks.any(axis=-1).all():
        raise AllMaskedError("a state admits no legal action")
    shifted = np.where(masks, logits, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    expd = np.where(masks, np.exp(shifted), 0.0)
    return expd / expd.sum(axis=-1, keepdims=True)


def policy_forward(
    params: PolicyParams, states: np.ndarray, masks: np.ndarray
) -> tuple[np.ndarray, np.ndarray, ForwardCache, ForwardCache]:
    """(action probabilities, values, actor cache, critic cache) for a batch."""
    states = np.atleast_2d(states)
    masks = np.atleast_2d(masks)
    actor_cache = mlp_forward(params.actor, states)
    critic_cache = mlp_forward(params.critic, states)
    probs = masked_probs(actor_cache.out, masks)
    return probs, critic_cache.out[:, 0], actor_cache, critic_cache


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row; masked actions can never be drawn."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])
    return (u[:, None] > cdf).sum(axis=-1)


def action_mask(inventory: np.ndarray | int, n_actions: int) -> np.ndarray:
    """Legal actions are 0..inventory inclusive."""
    inv = np.atleast_1d(np.asarray(inventory))
    return np.arange(n_actions)[None, :] <= inv[:, None]


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    discount: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets.

    delta_t = r_t + discount * V(s_{t+1}) * (1 - done_t) - V(s_t), advantages
    are the (discount * lam)-weighted suffix sums of the deltas, and targets
    are advantages + values.  The value after a terminal step is 0.
    """
    n = len(rewards)
    advantages = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + discount * next_value * nonterminal - values[t]
        running = delta + discount * lam * nonterminal * running
        advantages[t] = running
    return advantages, advantages + values


@dataclass
class RolloutBuffer:
    states: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray = field(default=None)  # type: ignore[assignment]
    value_targets: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __len__(self) -> int:
        return len(self.actions)

    def finalize(self, config: PpoConfig) -> None:
        self.advantages, self.value_targets = gae(
            self.rewards, self.values, self.dones, config.discount, config.gae_lambda
        )


@dataclass
class LossStats:
    total: float
    clip_objective: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


def ppo_loss(
    params: PolicyParams,
    batch: dict[str, np.ndarray],
    config: PpoConfig,
) -> tuple[LossStats, MlpParams, MlpParams]:
    """Loss statistics and analytic gradients for one minibatch.

    Returns (stats, actor gradients, critic gradients).  Raises
    NonFiniteLossError when the loss stops being finite.
    """
    states = batch["states"]
    actions = batch["actions"]
    masks = batch["masks"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    targets = batch["value_targets"]
    n = len(actions)
    eps = config.clip_ratio

    if config.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    probs, values, actor_cache, critic_cache = policy_forward(params, states, masks)
    rows = np.arange(n)
    p_taken = probs[rows, actions]
    logp = np.log(p_taken)
    ratio = np.exp(logp - old_logp)

    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    objective = np.minimum(unclipped, clipped)

    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
    entropy = -plogp.sum(axis=-1)

    value_err = values - targets
    value_loss = float(np.mean(value_err**2))
    clip_obj = float(objective.mean())
    entropy_mean = float(entropy.mean())
    total = -clip_obj + config.value_coef * value_loss - config.entropy_coef * entropy_mean
    if not np.isfinite(total):
        raise NonFiniteLossError(f"loss={total}")

    # Actor gradient.  The min() gates the ratio path: gradient flows only
    # where the unclipped branch attains the minimum.
    active = (unclipped <= clipped).astype(float)
    coef = active * ratio * adv  # d objective / d logp(a)
    one_hot = np.zeros_like(probs)
    one_hot[rows, actions] = 1.0
    grad_logits = -(coef[:, None] * (one_hot - probs)) / n
    # Entropy term: dH/dz_k = -p_k (log p_k + H); loss carries -entropy_coef * H.
    with np.errstate(divide="ignore", invalid="ignore"):
        logp_full = np.where(probs > 0, np.log(probs), 0.0)
    grad_logits += config.entropy_coef * probs * (logp_full + entropy[:, None]) / n
    grad_logits = np.where(masks, grad_logits, 0.0)
    actor_grads = mlp_backward(params.actor, actor_cache, grad_logits)

    grad_value = (config.value_coef * 2.0 * value_err / n)[:, None]
    critic_grads = mlp_backward(params.critic, critic_cache, grad_value)

    for g in (*actor_grads.arrays, *critic_grads.arrays):
        if not np.isfinite(g).all():
            raise NonFiniteLossError("non-finite gradient")

    stats = LossStats(
        total=total,
        clip_objective=clip_obj,
        value_loss=value_loss,
        entropy=entropy_mean,
        approx_kl=float(np.mean(old_logp - logp)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
    )
    return stats, actor_grads, critic_grads


def _clip_grad_norm(grads: MlpParams, max_norm: float) -> None:
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.arrays)))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.arrays:
            g *= scale


def update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    config: PpoConfig,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Several epochs of minibatch Adam steps over one rollout; returns means."""
    if buffer.advantages is None:
        buffer.finalize(config)
    n = len(buffer)
    stats_acc: dict[str, list[float]] = {
        k: [] for k in ("total", "clip_objective", "value_loss", "entropy", "approx_kl", "clip_fraction")
    }
    for _ in range(config.update_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.minibatch_size):
            idx = order[lo : lo + config.minibatch_size]
            if len(idx) < 2:
                continue
            batch = {
                "states": buffer.states[idx],
                "actions": buffer.actions[idx],
                "masks": buffer.masks[idx],
                "log_probs": buffer.log_probs[idx],
                "advantages": buffer.advantages[idx],
                "value_targets": buffer.value_targets[idx],
            }
            stats, actor_grads, critic_grads = ppo_loss(params, batch, config)
            if config.max_grad_norm > 0:
                _clip_grad_norm(actor_grads, config.max_grad_norm)
                _clip_grad_norm(critic_grads, config.max_grad_norm)
            adam_step(params.actor, actor_grads, params.actor_opt, config.actor_lr)
            adam_step(params.critic, critic_grads, params.critic_opt, config.critic_lr)
            for key in stats_acc:
                stats_acc[key].append(getattr(stats, key))
    params.updates_done += 1
    return {k: float(np.mean(v)) for k, v in stats_acc.items()}


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str | Path, params: PolicyParams, config: PpoConfig, meta: dict | None = None) -> None:
    arrays = {}
    for net_name, net in (("actor", params.actor), ("critic", params.critic)):
        for field_name, arr in zip(("w1", "b1", "w2", "b2", "w3", "b3"), net.arrays):
            arrays[f"{net_name}_{field_name}"] = arr
    arrays["actor_opt_m"] = params.actor_opt.m
    arrays["actor_opt_v"] = params.actor_opt.v
    arrays["critic_opt_m"] = params.critic_opt.m
    arrays["critic_opt_v"] = params.critic_opt.v
    header = {
        "version": CHECKPOINT_VERSION,
        "n_inputs": params.n_inputs,
        "n_actions": params.n_actions,
        "updates_done": params.updates_done,
        "actor_opt_t": params.actor_opt.t,
        "critic_opt_t": params.critic_opt.t,
        "config": asdict(config),
        "meta": meta or {},
    }
    arrays["header_json"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> tuple[PolicyParams, PpoConfig, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header_json"]).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        nets = {}
        for net_name in ("actor", "critic"):
            nets[net_name] = MlpParams(
                *(data[f"{net_name}_{f}"].copy() for f in ("w1", "b1", "w2", "b2", "w3", "b3"))
            )
        params = PolicyParams(
            actor=nets["actor"],
            critic=nets["critic"],
            actor_opt=AdamState(
                data["actor_opt_m"].copy(), data["actor_opt_v"].copy(), header["actor_opt_t"]
            ),
            critic_opt=AdamState(
                data["critic_opt_m"].copy(), data["critic_opt_v"].copy(), header["critic_opt_t"]
            ),
            n_inputs=header["n_inputs"],
            n_actions=header["n_actions"],
            updates_done=header["updates_done"],
        )
    return params, PpoConfig(**header["config"]), header["meta"]
