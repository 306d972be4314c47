"""Per-zone Q-learning agents, replay buffer, schedules and the baseline.

Every zone is controlled by one agent choosing a heating setpoint from
15.0 C to 25.0 C in 1 C steps (11 actions).  Agents observe a 10-vector:
the six building-wide state variables plus the four variables of their own
zone, min-max normalized.  All agents receive the one shared building-level
reward, so a replay entry is a bundle holding every active agent's
(observation, action, next observation) around that shared reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .neural import AdamState, QNetwork, adam_step

N_ACTIONS = 11
SETPOINT_BASE = 15.0
SETPOINT_STEP = 1.0
OBS_DIM = 10
N_GENERAL = 6
N_PER_ZONE = 4

# Min/max normalization bounds of the state variables, in vector order:
# day of week, minutes of day, calendar week, outdoor temperature, direct
# solar, indirect (diffuse) solar, then per zone: temperature, relative
# people count now / in 1 hour / in 2 hours.
GENERAL_BOUNDS = (
    (0.0, 6.0),
    (0.0, 1439.0),
    (1.0, 53.0),
    (-20.0, 40.0),
    (0.0, 350.0),
    (0.0, 1000.0),
)
ZONE_BOUNDS = (
    (10.0, 34.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (0.0, 1.0),
)


def action_to_setpoint(index: int) -> float:
    """Map an action index 0..10 onto the 15.0..25.0 C setpoint grid."""
    if not (0 <= index < N_ACTIONS):
        raise ValueError(f"action index {index} outside [0, {N_ACTIONS - 1}]")
    return SETPOINT_BASE + SETPOINT_STEP * index


_OBS_LO = np.array([lo for lo, _ in GENERAL_BOUNDS + ZONE_BOUNDS])
_OBS_SPAN = np.array([hi - lo for lo, hi in GENERAL_BOUNDS + ZONE_BOUNDS])


def build_observation(global_state: Sequence[float], zone_index: int, n_zones: int) -> np.ndarray:
    """Slice one agent's 10-vector out of the global state and normalize it.

    The global state has 6 + 4 * n_zones entries; the agent keeps the six
    general variables plus the four of its own zone.  Values are clamped
    into their bounds, then min-max scaled to [0, 1].
    """
    state = np.asarray(global_state, dtype=np.float64)
    expected = N_GENERAL + N_PER_ZONE * n_zones
    if state.shape != (expected,):
        raise ValueError(f"global state must have {expected} entries, got {state.shape}")
    if not (0 <= zone_index < n_zones):
        raise ValueError(f"zone index {zone_index} outside [0, {n_zones - 1}]")
    start = N_GENERAL + N_PER_ZONE * zone_index
    raw = np.concatenate([state[:N_GENERAL], state[start : start + N_PER_ZONE]])
    np.clip(raw, _OBS_LO, _OBS_LO + _OBS_SPAN, out=raw)
    return (raw - _OBS_LO) / _OBS_SPAN


def select_action(net: QNetwork, observation, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break toward the lowest index.

    With epsilon = 0 this is a pure function of the network parameters and
    the observation (the generator is not consulted).
    """
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(net.forward(observation)))


# ---------------------------------------------------------------------------
# Replay buffer
# ---------------------------------------------------------------------------


@dataclass
class Transition:
    """One environment step: per-agent rows around one shared reward."""

    observations: np.ndarray  # (n_agents, OBS_DIM)
    actions: np.ndarray  # (n_agents,)
    reward: float
    next_observations: np.ndarray  # (n_agents, OBS_DIM)
    terminal: bool


class ReplayBuffer:
    """FIFO ring of transition bundles; default capacity 576 (24 days).

    Bundles are stored column-wise in preallocated rings (all bundles in
    one buffer share the same agent count), so uniform batches come out as
    contiguous arrays without per-bundle assembly work.
    """

    def __init__(self, capacity: int = 576):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._size = 0
        self._write = 0
        self._obs: Optional[np.ndarray] = None  # (capacity, n_agents, OBS_DIM)
        self._actions: Optional[np.ndarray] = None
        self._rewards: Optional[np.ndarray] = None
        self._next_obs: Optional[np.ndarray] = None
        self._terminals: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self._size

    def push(self, bundle: Transition) -> None:
        if self._obs is None:
            n_agents, obs_dim = bundle.observations.shape
            self._obs = np.empty((self.capacity, n_agents, obs_dim))
            self._actions = np.empty((self.capacity, n_agents), dtype=np.intp)
            self._rewards = np.empty(self.capacity)
            self._next_obs = np.empty_like(self._obs)
            self._terminals = np.empty(self.capacity, dtype=bool)
        if bundle.observations.shape != self._obs.shape[1:]:
            raise ValueError("bundle shape differs from the buffer's first bundle")
        w = self._write
        self._obs[w] = bundle.observations
        self._actions[w] = bundle.actions
        self._rewards[w] = bundle.reward
        self._next_obs[w] = bundle.next_observations
        self._terminals[w] = bundle.terminal
        self._write = (w + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _bundle_at(self, i: int) -> Transition:
        return Transition(
            observations=self._obs[i].copy(),
            actions=self._actions[i].copy(),
            reward=float(self._rewards[i]),
            next_observations=self._next_obs[i].copy(),
            terminal=bool(self._terminals[i]),
        )

    def snapshot(self) -> List[Transition]:
        """Contents in insertion order (oldest first)."""
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._write + k) % self.capacity for k in range(self.capacity)]
        return [self._bundle_at(i) for i in order]

    def sample(self, rng: np.random.Generator, batch_size: int) -> List[Transition]:
        """Uniform sample without replacement, truncated to the buffer size."""
        n = min(batch_size, self._size)
        if n == 0:
            return []
        idx = rng.choice(self._size, size=n, replace=False)
        return [self._bundle_at(i) for i in idx]

    def sample_arrays(self, rng: np.random.Generator, batch_size: int):
        """Like :meth:`sample` but returns stacked column arrays.

        Returns (observations, actions, rewards, next_observations,
        terminals) with leading dimension = batch, or None when empty.
        """
        n = min(batch_size, self._size)
        if n == 0:
            return None
        idx = rng.choice(self._size, size=n, replace=False)
        return (
            self._obs[idx],
            self._actions[idx],
            self._rewards[idx],
            self._next_obs[idx],
            self._terminals[idx],
        )

    def clear(self) -> None:
        self._size = 0
        self._write = 0


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSchedule:
    """Linear interpolation from start to end over total_units, then flat."""

    start: float
    end: float
    total_units: int

    def value(self, units: float) -> float:
        if self.total_units <= 0:
            return self.end
        f = min(max(units / self.total_units, 0.0), 1.0)
        return self.start + f * (self.end - self.start)


@dataclass(frozen=True)
class StepwiseSchedule:
    """Piecewise-constant levels switching at fractions of total_units."""

    milestones: Tuple[Tuple[float, float], ...]  # (fraction, value), ascending
    total_units: int

    def __post_init__(self) -> None:
        if not self.milestones or self.milestones[0][0] != 0.0:
            raise ValueError("stepwise schedule needs a milestone at fraction 0.0")
        fracs = [f for f, _ in self.milestones]
        if fracs != sorted(fracs):
            raise ValueError("milestone fractions must ascend")

    def value(self, units: float) -> float:
        f = units / self.total_units if self.total_units > 0 else 1.0
        current = self.milestones[0][1]
        for frac, val in self.milestones:
            if f >= frac:
                current = val
        return current


DEFAULT_EPSILON = (1.0, 0.05)
# Published endpoints 0.8 -> 0.01, stepped down at quarters of the phase.
DEFAULT_LR_MILESTONES = ((0.0, 0.8), (0.25, 0.2), (0.5, 0.05), (0.75, 0.01))


# ---------------------------------------------------------------------------
# Q-learner
# ---------------------------------------------------------------------------


def compute_td_targets(
    online: QNetwork,
    target: QNetwork,
    rewards: np.ndarray,
    next_obs: np.ndarray,
    terminals: np.ndarray,
    gamma: float,
    variant: str,
) -> np.ndarray:
    """Bootstrap targets y = r + gamma * (target-net value of s').

    The plain variant maximizes the target network directly; the double
    variant evaluates the target network at the online network's argmax,
    which curbs overestimation.  Terminal rows use y = r.
    """
    if variant not in ("dqn", "ddqn"):
        raise ValueError(f"unknown learner variant {variant!r}")
    q_next_target = target.forward_batch(next_obs)
    if variant == "dqn":
        bootstrap = q_next_target.max(axis=1)
    else:
        greedy = np.argmax(online.forward_batch(next_obs), axis=1)
        bootstrap = q_next_target[np.arange(len(greedy)), greedy]
    return rewards + gamma * bootstrap * (1.0 - terminals.astype(np.float64))


class QLearner:
    """Online/target network pair with Adam, shared by one or more zones."""

    def __init__(
        self,
        layer_sizes: Sequence[int] = (OBS_DIM, 64, 64, N_ACTIONS),
        seed: Optional[int] = None,
        variant: str = "ddqn",
    ):
        if variant not in ("dqn", "ddqn"):
            raise ValueError(f"unknown learner variant {variant!r}")
        self.online = QNetwork(layer_sizes, seed=seed)
        self.target = self.online.clone()
        self.adam = AdamState.for_params(self.online.n_params)
        self.variant = variant
        self.learn_steps = 0
        self.samples_seen = 0
        self.target_updates = 0

    def select_action(self, observation, epsilon: float, rng: np.random.Generator) -> int:
        return select_action(self.online, observation, epsilon, rng)

    def learn_from_arrays(
        self,
        observations: np.ndarray,  # (batch, n_agents, OBS_DIM)
        actions: np.ndarray,  # (batch, n_agents)
        rewards: np.ndarray,  # (batch,)
        next_observations: np.ndarray,
        terminals: np.ndarray,  # (batch,)
        gamma: float,
        lr: float,
        agent_slice: Optional[int] = None,
    ) -> None:
        """One Adam step on the mean squared TD error over the batch.

        Every agent row of every bundle is a separate sample sharing that
        bundle's reward; pass ``agent_slice`` to learn from one agent's rows
        only.
        """
        batch, n_agents, obs_dim = observations.shape
        if agent_slice is None:
            obs = observations.reshape(batch * n_agents, obs_dim)
            acts = actions.reshape(batch * n_agents)
            next_obs = next_observations.reshape(batch * n_agents, obs_dim)
            rews = np.repeat(rewards, n_agents)
            terms = np.repeat(terminals, n_agents)
        else:
            obs = observations[:, agent_slice]
            acts = actions[:, agent_slice]
            next_obs = next_observations[:, agent_slice]
            rews = rewards
            terms = terminals
        targets = compute_td_targets(
            self.online, self.target, rews, next_obs, terms, gamma, self.variant
        )
        grad = self.online.backward_batch(obs, acts, targets)
        adam_step(self.online.theta, grad, self.adam, lr)
        self.learn_steps += 1
        self.samples_seen += len(acts)

    def learn_from_bundles(
        self,
        bundles: Sequence[Transition],
        gamma: float,
        lr: float,
        agent_slice: Optional[int] = None,
    ) -> None:
        """Bundle-list front end of :meth:`learn_from_arrays`; empty batch
        is a no-op."""
        if not bundles:
            return
        self.learn_from_arrays(
            np.stack([b.observations for b in bundles]),
            np.stack([b.actions for b in bundles]),
            np.array([b.reward for b in bundles]),
            np.stack([b.next_observations for b in bundles]),
            np.array([b.terminal for b in bundles], dtype=bool),
            gamma,
            lr,
            agent_slice=agent_slice,
        )

    def update_target(self) -> None:
        self.target.copy_params_from(self.online)
        self.target_updates += 1

    def clone_networks(self, seed_unused: Optional[int] = None) -> "QLearner":
        """Independent learner starting from value-identical networks."""
        dup = QLearner(self.online.layer_sizes, variant=self.variant)
        dup.online.copy_params_from(self.online)
        dup.target.copy_params_from(self.target)
        return dup


# ---------------------------------------------------------------------------
# Rule-based baseline
# ---------------------------------------------------------------------------

BASELINE_OCCUPIED_SETPOINT = 21.0
BASELINE_SETBACK_SETPOINT = 15.0
BASELINE_START_MINUTES = 7 * 60
BASELINE_END_MINUTES = 18 * 60


def baseline_action(day_of_week: int, minutes_of_day: int) -> float:
    """Fixed-schedule setpoint: 21.0 C Mon-Fri 07:00-17:59, else 15.0 C."""
    if not (0 <= day_of_week <= 6) or not (0 <= minutes_of_day < 1440):
        raise ValueError("invalid calendar time")
    if day_of_week < 5 and BASELINE_START_MINUTES <= minutes_of_day < BASELINE_END_MINUTES:
        return BASELINE_OCCUPIED_SETPOINT
    return BASELINE_SETBACK_SETPOINT


class RuleBasedAgent:
    """Callable wrapper around the fixed weekday heating schedule."""

    def setpoint(self, day_of_week: int, minutes_of_day: int) -> float:
        return baseline_action(day_of_week, minutes_of_day)
