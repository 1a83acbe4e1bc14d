"""The discrete optimal-execution MDP over resampled frames.

An episode sells `total_units` over `horizon_s` seconds in `n_decisions`
equally spaced decisions on one target venue.  The environment's reference
price series S_t is the target venue's best bid at decision times: the
quote-fill price, the reward, and the cash/shortfall accounting all share
that basis, which is what makes the summed per-step rewards equal the
episode's implementation shortfall exactly.

Per-step reward (relative P&L):

    R_t = [ q_next * (S_next - S_t) - (a * S_t - net proceeds) - C ] / (V * S_0)

where net proceeds come from the configured fill model and C is the
optional impact cost.  Under quote fill this reduces to the plain
fee-times-turnover form.  At the terminal step the remaining inventory is
liquidated at S_T and the quadratic ending penalty is charged to both the
reward and the cash.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as scipy_stats

from .capture.resample import GRID_NS, FrameSet
from .errors import CaptureTooShort, OversellError
from .lob import BookView, fill_market_sell

FILL_QUOTE = "quote"
FILL_BOOK_WALK = "walk"
FILL_LINEAR_IMPACT = "linear"
FILL_MODELS = (FILL_QUOTE, FILL_BOOK_WALK, FILL_LINEAR_IMPACT)


@dataclass(frozen=True)
class ProblemSpec:
    total_units: int = 50
    horizon_s: float = 50.0
    n_decisions: int = 10
    fee_rate: float = 3e-4
    impact_coef: float = 1e-5
    penalty_coef: float = 0.02
    fill_model: str = FILL_QUOTE
    linear_impact_k: float = 0.0
    impact_enabled: bool = False

    def __post_init__(self):
        if self.total_units <= 0 or self.n_decisions < 1:
            raise ValueError("total_units must be > 0 and n_decisions >= 1")
        if self.fee_rate < 0 or self.impact_coef < 0 or self.penalty_coef < 0:
            raise ValueError("fee, impact and penalty coefficients must be >= 0")
        if self.fill_model not in FILL_MODELS:
            raise ValueError(f"fill_model must be one of {FILL_MODELS}")

    @property
    def decision_interval_s(self) -> float:
        return self.horizon_s / self.n_decisions

    def decision_steps(self, grid_ns: int = GRID_NS) -> int:
        steps_ns = self.horizon_s / self.n_decisions * 1e9
        steps = int(round(steps_ns / grid_ns))
        if steps < 1 or abs(steps * grid_ns - steps_ns) > 0.5:
            raise ValueError("decision interval must be a multiple of the grid")
        return steps


def impact_cost(action: float, spec: ProblemSpec, start_price: float) -> float:
    """Extra cost of trading faster than a tenth of the target per decision."""
    if action < 0:
        raise ValueError("action must be >= 0")
    v = spec.total_units
    return spec.impact_coef * max(0.0, action / v - 0.1) * v * start_price


def settle_terminal(inventory: float, terminal_price: float, spec: ProblemSpec) -> tuple[float, float]:
    """(liquidation cash, ending penalty) for inventory left at the horizon."""
    penalty = spec.penalty_coef * inventory * inventory * terminal_price
    return inventory * terminal_price, penalty


@dataclass(frozen=True)
class ExecState:
    inventory: int
    steps_left: int
    signals: np.ndarray
    start_price: float
    price: float
    row: int
    missing: tuple[str, ...] = ()

    def vector(self, spec: ProblemSpec) -> np.ndarray:
        return np.concatenate(
            [
                self.signals,
                [self.inventory / spec.total_units, self.steps_left / spec.n_decisions],
            ]
        )


@dataclass(frozen=True)
class StepResult:
    reward: float
    cash_delta: float
    state: ExecState
    done: bool
    info: dict = field(default_factory=dict)


class ExecutionEnv:
    """One episode at a time over a shared FrameSet.

    Environments are independent values over immutable frames; parallel
    rollouts use one instance per episode stream.
    """

    def __init__(
        self,
        frames: FrameSet,
        spec: ProblemSpec,
        features: dict[str, np.ndarray],
        target_venue: str,
    ):
        self.frames = frames
        self.spec = spec
        self.target_venue = target_venue
        self.feature_names = tuple(features)
        self._feature_matrix = (
            np.column_stack([features[k] for k in self.feature_names])
            if features
            else np.zeros((frames.n_frames, 0))
        )
        vf = frames.venues[target_venue]
        self._ref_price = vf.best_bid
        self._present = vf.present
        self._step_rows = spec.decision_steps(frames.grid_ns)
        self._span = self._step_rows * spec.n_decisions
        self._state: ExecState | None = None

    # -- episode admission ---------------------------------------------------

    def admissible_starts(self) -> np.ndarray:
        n = self.frames.n_frames
        last_start = n - 1 - self._span
        if last_start < 0:
            raise CaptureTooShort(
                f"need {self._span + 1} frames for one episode, have {n}"
            )
        starts = np.arange(last_start + 1)
        rows = starts[:, None] + np.arange(self.spec.n_decisions + 1)[None, :] * self._step_rows
        ok = self._present[rows].all(axis=1)
        starts = starts[ok]
        if len(starts) == 0:
            raise CaptureTooShort("no start with the target venue present throughout")
        return starts

    def sample_starts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        starts = self.admissible_starts()
        return starts[rng.integers(0, len(starts), size=n)]

    # -- state construction --------------------------------------------------

    def _build_state(self, row: int, inventory: int, steps_left: int, start_price: float) -> ExecState:
        raw = self._feature_matrix[row]
        missing = tuple(
            name for name, v in zip(self.feature_names, raw) if not np.isfinite(v)
        )
        signals = np.where(np.isfinite(raw), raw, 0.0)
        return ExecState(
            inventory=inventory,
            steps_left=steps_left,
            signals=signals,
            start_price=start_price,
            price=float(self._ref_price[row]),
            row=row,
            missing=missing,
        )

    # -- episode API -----------------------------------------------------------

    def reset(
        self,
        start_row: int,
        inventory: int | None = None,
        steps_left: int | None = None,
    ) -> ExecState:
        """Start an episode; evaluation always uses the full (V, H) start.

        Training may pass a partial (inventory, steps_left) start so that
        late-episode states stay covered by rollouts (exploring starts); the
        reward denominator still references the configured start row's price.
        """
        inventory = self.spec.total_units if inventory is None else inventory
        steps_left = self.spec.n_decisions if steps_left is None else steps_left
        if not (0 <= inventory <= self.spec.total_units):
            raise ValueError("inventory outside [0, total_units]")
        if not (1 <= steps_left <= self.spec.n_decisions):
            raise ValueError("steps_left outside [1, n_decisions]")
        price0 = float(self._ref_price[start_row])
        self._state = self._build_state(start_row, inventory, steps_left, price0)
        return self._state

    def book_view(self, row: int) -> BookView:
        vf = self.frames.venues[self.target_venue]
        bids = tuple(
            (float(p), float(q))
            for p, q in zip(vf.bid_price[row], vf.bid_qty[row])
            if np.isfinite(p) and q > 0
        )
        asks = tuple(
            (float(p), float(q))
            for p, q in zip(vf.ask_price[row], vf.ask_qty[row])
            if np.isfinite(p) and q > 0
        )
        return BookView(bids, asks)

    def _fill(self, row: int, action: int, price: float) -> tuple[float, float]:
        """(net proceeds, average fill price before fee) for `action` units."""
        spec = self.spec
        if action == 0:
            return 0.0, 0.0
        if spec.fill_model == FILL_QUOTE:
            fill_px = price
        elif spec.fill_model == FILL_BOOK_WALK:
            result = fill_market_sell(self.book_view(row), float(action))
            leftover = float(action) - result.filled_qty
            if leftover > 0:
                # Visible depth exhausted: the remainder clears at the worst
                # visible bid so inventory accounting stays exact.
                worst = self.book_view(row).bids[-1][0]
                notional = result.avg_price * result.filled_qty + worst * leftover
            else:
                notional = result.avg_price * result.filled_qty
            fill_px = notional / float(action)
        else:  # linear impact in execution speed
            fill_px = price - spec.linear_impact_k * float(action)
        proceeds = action * fill_px * (1.0 - spec.fee_rate)
        return proceeds, fill_px

    def step(self, action: int) -> StepResult:
        state = self._state
        if state is None or state.steps_left == 0:
            raise RuntimeError("episode not active; call reset()")
        if not (0 <= action <= state.inventory):
            raise OversellError(f"action {action} outside [0, {state.inventory}]")
        spec = self.spec
        row = state.row
        next_row = row + self._step_rows
        price = float(self._ref_price[row])
        next_price = float(self._ref_price[next_row])
        q_next = state.inventory - action

        proceeds, fill_px = self._fill(row, action, price)
        cost = impact_cost(action, spec, state.start_price) if spec.impact_enabled else 0.0
        denom = spec.total_units * state.start_price
        reward = (q_next * (next_price - price) - (action * price - proceeds) - cost) / denom
        cash_delta = proceeds - cost

        steps_left = state.steps_left - 1
        done = steps_left == 0
        info = {"fill_price": fill_px, "impact_cost": cost, "proceeds": proceeds}
        if done:
            liquidation, penalty = settle_terminal(q_next, next_price, spec)
            reward -= penalty / denom
            cash_delta += liquidation - penalty
            info["penalty"] = penalty
            info["liquidation"] = liquidation
            info["terminal_price"] = next_price
        next_state = self._build_state(next_row, q_next, steps_left, state.start_price)
        self._state = next_state
        return StepResult(reward=reward, cash_delta=cash_delta, state=next_state, done=done, info=info)


# ---------------------------------------------------------------------------
# Episode running
# ---------------------------------------------------------------------------

Policy = Callable[[ExecState, np.ndarray], int]
"""A policy maps (state, state vector) to integer units to sell."""


@dataclass
class EpisodeTrace:
    start_row: int
    rows: list[int] = field(default_factory=list)
    mids: list[float] = field(default_factory=list)
    inventory: list[int] = field(default_factory=list)
    actions: list[int] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    cash: list[float] = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))

    @property
    def total_cash(self) -> float:
        return self.cash[-1] if self.cash else 0.0


def run_episode(env: ExecutionEnv, policy: Policy, start_row: int) -> EpisodeTrace:
    spec = env.spec
    state = env.reset(start_row)
    mid = env.frames.venues[env.target_venue].mid
    trace = EpisodeTrace(start_row=start_row)
    cash = 0.0
    done = False
    while not done:
        action = int(policy(state, state.vector(spec)))
        trace.rows.append(state.row)
        trace.mids.append(float(mid[state.row]))
        trace.inventory.append(state.inventory)
        trace.actions.append(action)
        result = env.step(action)
        cash += result.cash_delta
        trace.rewards.append(result.reward)
        trace.cash.append(cash)
        state = result.state
        done = result.done
    return trace


def uniform_start_pvalue(starts: Sequence[int], n_admissible: int, buckets: int = 10) -> float:
    """Chi-square p-value that sampled starts are uniform over the admissible range."""
    edges = np.linspace(0, n_admissible, buckets + 1)
    counts, _ = np.histogram(starts, bins=edges)
    return float(scipy_stats.chisquare(counts).pvalue)
