"""TWAP baseline, shortfall metrics, paired policy comparison, heatmaps.

All policies inside one `compare` call see the same episode start rows, so
the reported gains are paired differences rather than independent samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capture.resample import FrameSet
from .env import EpisodeTrace, ExecState, ExecutionEnv, ProblemSpec, run_episode
from .ppo.agent import PolicyParams, action_mask, policy_forward, sample_actions


def twap_schedule(spec: ProblemSpec) -> list[int]:
    """Equal slices; a non-divisible remainder is spread over the earliest steps."""
    base, rem = divmod(spec.total_units, spec.n_decisions)
    return [base + 1 if i < rem else base for i in range(spec.n_decisions)]


def cash(trace: EpisodeTrace) -> float:
    """Total cash of an episode: fills net of fee/impact, terminal liquidation,
    minus the ending penalty.  The environment accumulates exactly these terms."""
    return trace.total_cash


def implementation_shortfall(cash_value: float, total_units: float, start_price: float) -> float:
    """(cash - V * p0) / (V * p0), as a fraction; multiply by 1e4 for bps."""
    benchmark = total_units * start_price
    return (cash_value - benchmark) / benchmark


def gain(is_model: float, is_twap: float) -> float:
    """Gain over TWAP in bps from shortfall fractions."""
    return (is_model - is_twap) * 1e4


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class TwapPolicy:
    """Sell the fixed schedule regardless of state (capped by inventory)."""

    def __init__(self, spec: ProblemSpec):
        self.schedule = twap_schedule(spec)
        self.n = spec.n_decisions

    def __call__(self, state: ExecState, vector: np.ndarray) -> int:
        step_index = self.n - state.steps_left
        return min(self.schedule[step_index], state.inventory)


class GreedyPolicy:
    """Argmax over the trained policy's masked action probabilities.

    Deterministic, but it can wander into states the stochastic policy never
    visits during training; SampledPolicy is the default evaluation mode.
    """

    def __init__(self, params: PolicyParams):
        self.params = params

    def _probs(self, state: ExecState, vector: np.ndarray) -> np.ndarray:
        mask = action_mask(state.inventory, self.params.n_actions)
        probs, _, _, _ = policy_forward(self.params, vector[None, :], mask)
        return probs[0]

    def expected_action(self, state: ExecState, vector: np.ndarray) -> float:
        probs = self._probs(state, vector)
        return float(probs @ np.arange(self.params.n_actions))

    def __call__(self, state: ExecState, vector: np.ndarray) -> int:
        return int(np.argmax(self._probs(state, vector)))


class SampledPolicy(GreedyPolicy):
    """Draw from the trained policy's action distribution (seeded).

    This evaluates the stochastic policy PPO actually optimizes; reports
    stay deterministic because the draw stream is seeded.
    """

    def __init__(self, params: PolicyParams, seed: int = 0):
        super().__init__(params)
        self.rng = np.random.default_rng(seed)

    def __call__(self, state: ExecState, vector: np.ndarray) -> int:
        probs = self._probs(state, vector)
        return int(sample_actions(probs[None, :], self.rng)[0])


class RandomPolicy:
    """Uniform over legal actions; useful as an arbitrary-policy oracle."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def __call__(self, state: ExecState, vector: np.ndarray) -> int:
        return int(self.rng.integers(0, state.inventory + 1))


# ---------------------------------------------------------------------------
# Paired comparison
# ---------------------------------------------------------------------------


@dataclass
class PolicyResult:
    name: str
    shortfalls_bps: np.ndarray
    traces: list[EpisodeTrace] = field(default_factory=list)

    @property
    def mean_bps(self) -> float:
        return float(self.shortfalls_bps.mean())

    @property
    def variance_bps(self) -> float:
        return float(self.shortfalls_bps.var(ddof=1))

    @property
    def std_bps(self) -> float:
        return float(self.shortfalls_bps.std(ddof=1))


@dataclass
class RunReport:
    results: dict[str, PolicyResult]
    start_rows: np.ndarray
    baseline: str
    histogram_edges: np.ndarray
    histogram_counts: dict[str, np.ndarray]
    config_echo: dict = field(default_factory=dict)

    def gain_bps(self, name: str) -> float:
        base = self.results[self.baseline].shortfalls_bps
        model = self.results[name].shortfalls_bps
        return float((model - base).mean())

    def table(self) -> list[dict]:
        rows = []
        for name, res in self.results.items():
            rows.append(
                {
                    "policy": name,
                    "IS_mean_bps": res.mean_bps,
                    "IS_variance_bps": res.variance_bps,
                    "IS_std_bps": res.std_bps,
                    "Gain_bps": self.gain_bps(name),
                }
            )
        return rows

    def to_json_dict(self) -> dict:
        return {
            "episodes": int(len(self.start_rows)),
            "baseline": self.baseline,
            "table": self.table(),
            "config": self.config_echo,
        }

    def histogram_csv_lines(self) -> list[str]:
        names = list(self.results)
        lines = [",".join(["bin_left", "bin_right"] + names)]
        for i in range(len(self.histogram_edges) - 1):
            cells = [
                format(self.histogram_edges[i], ".9g"),
                format(self.histogram_edges[i + 1], ".9g"),
            ]
            cells += [str(int(self.histogram_counts[n][i])) for n in names]
            lines.append(",".join(cells))
        return lines


@dataclass
class Arm:
    """One policy plus the feature set its states are built from."""

    policy: object
    features: dict[str, np.ndarray] = field(default_factory=dict)


def compare(
    arms: dict[str, Arm],
    frames: FrameSet,
    spec: ProblemSpec,
    target_venue: str,
    n_episodes: int = 1000,
    seed: int = 0,
    baseline: str = "TWAP",
    histogram_bins: int = 40,
    keep_traces: bool = False,
    config_echo: dict | None = None,
) -> RunReport:
    """Run every arm over the same episode starts and report IS statistics.

    Start rows depend only on (frames, spec, target venue), so all arms are
    paired even though each sees its own feature scope.
    """
    if baseline not in arms:
        raise ValueError(f"baseline {baseline!r} not among arms")
    envs = {
        name: ExecutionEnv(frames, spec, arm.features, target_venue)
        for name, arm in arms.items()
    }
    rng = np.random.default_rng(seed)
    starts = next(iter(envs.values())).sample_starts(n_episodes, rng)

    results: dict[str, PolicyResult] = {}
    for name, arm in arms.items():
        env = envs[name]
        shortfalls = np.empty(n_episodes)
        traces: list[EpisodeTrace] = []
        for i, start in enumerate(starts):
            trace = run_episode(env, arm.policy, int(start))
            p0 = float(env.frames.venues[target_venue].best_bid[start])
            shortfalls[i] = implementation_shortfall(trace.total_cash, spec.total_units, p0) * 1e4
            if keep_traces:
                traces.append(trace)
        results[name] = PolicyResult(name, shortfalls, traces)

    pooled = np.concatenate([r.shortfalls_bps for r in results.values()])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, histogram_bins + 1)
    counts = {
        name: np.histogram(res.shortfalls_bps, bins=edges)[0]
        for name, res in results.items()
    }
    return RunReport(
        results=results,
        start_rows=starts,
        baseline=baseline,
        histogram_edges=edges,
        histogram_counts=counts,
        config_echo=config_echo or {},
    )


# ---------------------------------------------------------------------------
# Action-space heatmap
# ---------------------------------------------------------------------------

SIGNAL_BUCKETS = ("increase", "unchanged", "decrease")


@dataclass
class HeatmapGrid:
    """Mean aggressiveness a/q over (remaining time, remaining volume) cells,
    one grid per signal bucket.  Cells below min_count visits are missing."""

    n_buckets: int
    sums: dict[str, np.ndarray]
    counts: dict[str, np.ndarray]
    min_count: int = 1

    def mean(self, bucket: str) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            out = self.sums[bucket] / self.counts[bucket]
        return np.where(self.counts[bucket] >= self.min_count, out, np.nan)

    def global_mean(self, bucket: str) -> float:
        total = self.counts[bucket].sum()
        return float(self.sums[bucket].sum() / total) if total else math.nan

    def csv_lines(self) -> list[str]:
        lines = ["time_bucket,volume_bucket,signal_bucket,aggressiveness"]
        for bucket in SIGNAL_BUCKETS:
            mean = self.mean(bucket)
            for t in range(self.n_buckets):
                for v in range(self.n_buckets):
                    val = mean[t, v]
                    cell = "" if not np.isfinite(val) else format(val, ".9g")
                    lines.append(f"{t},{v},{bucket},{cell}")
        return lines


def action_heatmap(
    policy,
    frames: FrameSet,
    spec: ProblemSpec,
    features: dict[str, np.ndarray],
    target_venue: str,
    signal_name: str,
    n_episodes: int = 200,
    seed: int = 0,
    n_buckets: int = 10,
    min_count: int = 5,
) -> HeatmapGrid:
    """Aggressiveness of a policy bucketed by remaining time, remaining volume
    and the sign of a designated signal (thresholded at one standard deviation).

    States are visited by rolling the policy out; the recorded aggressiveness
    is the policy's expected action fraction when the policy exposes
    `expected_action` (the policy surface, free of per-draw noise), otherwise
    the action actually taken.  Cells visited fewer than `min_count` times
    are reported as missing.
    """
    env = ExecutionEnv(frames, spec, features, target_venue)
    rng = np.random.default_rng(seed)
    starts = env.sample_starts(n_episodes, rng)
    sig_idx = env.feature_names.index(signal_name)
    sigma = float(np.nanstd(features[signal_name]))
    expected = getattr(policy, "expected_action", None)

    sums = {b: np.zeros((n_buckets, n_buckets)) for b in SIGNAL_BUCKETS}
    counts = {b: np.zeros((n_buckets, n_buckets), dtype=int) for b in SIGNAL_BUCKETS}
    for start in starts:
        state = env.reset(int(start))
        done = False
        while not done:
            if state.inventory > 0:
                vector = state.vector(spec)
                action = int(policy(state, vector))
                recorded = float(expected(state, vector)) if expected else float(action)
                time_frac = state.steps_left / spec.n_decisions
                vol_frac = state.inventory / spec.total_units
                t_b = min(int(time_frac * n_buckets), n_buckets - 1)
                v_b = min(int(vol_frac * n_buckets), n_buckets - 1)
                sig = state.signals[sig_idx]
                if sigma > 0 and sig > sigma:
                    bucket = "increase"
                elif sigma > 0 and sig < -sigma:
                    bucket = "decrease"
                else:
                    bucket = "unchanged"
                sums[bucket][t_b, v_b] += recorded / state.inventory
                counts[bucket][t_b, v_b] += 1
            else:
                action = 0
            result = env.step(action)
            state = result.state
            done = result.done
    return HeatmapGrid(n_buckets=n_buckets, sums=sums, counts=counts, min_count=min_count)


# ---------------------------------------------------------------------------
# File emitters
# ---------------------------------------------------------------------------


def write_report_json(report: RunReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_histogram_csv(report: RunReport, path: str | Path) -> None:
    Path(path).write_text("\n".join(report.histogram_csv_lines()) + "\n", encoding="utf-8")


def write_heatmap_csv(grid: HeatmapGrid, path: str | Path) -> None:
    Path(path).write_text("\n".join(grid.csv_lines()) + "\n", encoding="utf-8")


def write_trace_csv(trace: EpisodeTrace, grid_ts: np.ndarray, path: str | Path) -> None:
    lines = ["t,mid,q,action,reward,cash"]
    for i in range(len(trace.actions)):
        lines.append(
            ",".join(
                [
                    str(int(grid_ts[trace.rows[i]])),
                    format(trace.mids[i], ".9g"),
                    str(trace.inventory[i]),
                    str(trace.actions[i]),
                    format(trace.rewards[i], ".9g"),
                    format(trace.cash[i], ".9g"),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
