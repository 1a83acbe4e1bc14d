"""Rollout collection against the execution environment and the training loop.

A rollout runs a batch of environments in lockstep: one batched forward pass
per decision level, one scalar env.step per environment; episodes that
finish early drop out of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..capture.resample import FrameSet
from ..env import ExecutionEnv, ProblemSpec
from .agent import (
    PolicyParams,
    PpoConfig,
    RolloutBuffer,
    action_mask,
    policy_forward,
    sample_actions,
    update,
)


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    COLUMNS = (
        "update",
        "episodes",
        "mean_episode_reward_bps",
        "total",
        "clip_objective",
        "value_loss",
        "entropy",
        "approx_kl",
        "clip_fraction",
    )

    def append(self, **kwargs) -> None:
        self.rows.append(kwargs)

    def csv_lines(self) -> list[str]:
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(format(row[c], ".8g") if isinstance(row[c], float) else str(row[c]) for c in self.COLUMNS))
        return lines


def collect_rollout(
    envs: list[ExecutionEnv],
    starts: np.ndarray,
    params: PolicyParams,
    config: PpoConfig,
    rng: np.random.Generator,
    inventories: np.ndarray | None = None,
    steps_left: np.ndarray | None = None,
) -> tuple[RolloutBuffer, np.ndarray]:
    """Run len(envs) episodes in lockstep; returns (buffer, per-episode rewards).

    Episodes may start mid-horizon (exploring starts); finished episodes drop
    out of the lockstep batch.
    """
    n_env = len(envs)
    spec = envs[0].spec
    n_actions = params.n_actions

    states = [
        env.reset(
            int(s),
            inventory=None if inventories is None else int(inventories[i]),
            steps_left=None if steps_left is None else int(steps_left[i]),
        )
        for i, (env, s) in enumerate(zip(envs, starts))
    ]
    per_env: list[dict[str, list]] = [
        {k: [] for k in ("states", "actions", "masks", "log_probs", "rewards", "values", "dones")}
        for _ in range(n_env)
    ]
    episode_reward = np.zeros(n_env)
    active = list(range(n_env))
    while active:
        vecs = np.stack([states[i].vector(spec) for i in active])
        inv = np.array([states[i].inventory for i in active])
        masks = action_mask(inv, n_actions)
        probs, values, _, _ = policy_forward(params, vecs, masks)
        actions = sample_actions(probs, rng)
        logp = np.log(probs[np.arange(len(active)), actions])
        still_active = []
        for j, i in enumerate(active):
            result = envs[i].step(int(actions[j]))
            episode_reward[i] += result.reward
            rec = per_env[i]
            rec["states"].append(vecs[j])
            rec["actions"].append(int(actions[j]))
            rec["masks"].append(masks[j])
            rec["log_probs"].append(float(logp[j]))
            rec["rewards"].append(result.reward)
            rec["values"].append(float(values[j]))
            rec["dones"].append(result.done)
            states[i] = result.state
            if not result.done:
                still_active.append(i)
        active = still_active

    def flat(key, dtype=None):
        chunks = [np.asarray(per_env[i][key]) for i in range(n_env)]
        arr = np.concatenate(chunks, axis=0)
        return arr.astype(dtype) if dtype is not None else arr

    buffer = RolloutBuffer(
        states=flat("states"),
        actions=flat("actions", np.int64),
        masks=flat("masks", bool),
        log_probs=flat("log_probs"),
        rewards=flat("rewards"),
        values=flat("values"),
        dones=flat("dones", bool),
    )
    return buffer, episode_reward


def train_policy(
    frames: FrameSet,
    spec: ProblemSpec,
    features: dict[str, np.ndarray],
    target_venue: str,
    config: PpoConfig,
    n_updates: int,
    seed: int,
    explore_starts: float = 0.2,
    anneal_entropy: bool = False,
) -> tuple[PolicyParams, TrainLog]:
    """Train a policy on episodes sampled from one capture.

    A fraction `explore_starts` of each rollout's episodes begins at a random
    (inventory, steps_left) instead of the full problem, so late-horizon
    states with inventory remaining stay represented in every rollout; the
    sell-by-the-deadline behavior would otherwise decay once the policy stops
    visiting them.  Evaluation always runs full episodes.  With
    `anneal_entropy` the entropy coefficient decays linearly to zero so the
    final policy commits instead of keeping exploration mass.
    """
    rng = np.random.default_rng(seed)
    n_actions = spec.total_units + 1
    n_inputs = len(features) + 2
    params = PolicyParams.init(rng, n_inputs, n_actions)

    episodes_per_rollout = max(1, config.rollout_steps // spec.n_decisions)
    envs = [ExecutionEnv(frames, spec, features, target_venue) for _ in range(episodes_per_rollout)]
    log = TrainLog()
    full_rewards_slice = slice(0, None)
    for upd in range(n_updates):
        starts = envs[0].sample_starts(episodes_per_rollout, rng)
        inventories = np.full(episodes_per_rollout, spec.total_units)
        steps = np.full(episodes_per_rollout, spec.n_decisions)
        n_explore = int(round(explore_starts * episodes_per_rollout))
        if n_explore:
            # The tail indices explore; the head stays full episodes so the
            # logged mean episode reward remains comparable across updates.
            # Explored inventories sit near the natural q ~ V * m/H manifold:
            # that is where stranding failures actually happen, and staying
            # near it keeps the explored episodes' penalty advantages from
            # swamping minibatch normalization.
            m_exp = rng.integers(1, spec.n_decisions + 1, n_explore)
            frac = m_exp / spec.n_decisions * rng.uniform(0.3, 2.5, n_explore)
            q_exp = np.clip(np.round(spec.total_units * frac), 1, spec.total_units)
            inventories[-n_explore:] = q_exp.astype(int)
            steps[-n_explore:] = m_exp
            full_rewards_slice = slice(0, episodes_per_rollout - n_explore)
        step_config = config
        if anneal_entropy and n_updates > 1:
            step_config = replace(
                config, entropy_coef=config.entropy_coef * (1.0 - upd / (n_updates - 1))
            )
        buffer, episode_rewards = collect_rollout(
            envs, starts, params, step_config, rng, inventories=inventories, steps_left=steps
        )
        buffer.finalize(step_config)
        stats = update(params, buffer, step_config, rng)
        log.append(
            update=upd,
            episodes=episodes_per_rollout,
            mean_episode_reward_bps=float(episode_rewards[full_rewards_slice].mean() * 1e4),
            **stats,
        )
    return params, log
