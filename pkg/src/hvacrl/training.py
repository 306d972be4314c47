"""Training orchestration: episodes, pretraining, sharing, fine-tuning.

One episode is one simulated month at 1-hour resolution.  A full training
run has up to three phases: optional single-agent pretraining (broadcast or
partially rule-based), main training with one Q-network shared by every
zone agent, and a short individual phase where each agent fine-tunes its
own copy.  Everything is driven by one seeded generator, so identical
configs reproduce identical metrics.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .agents import (
    DEFAULT_LR_MILESTONES,
    LinearSchedule,
    N_ACTIONS,
    OBS_DIM,
    QLearner,
    ReplayBuffer,
    RuleBasedAgent,
    StepwiseSchedule,
    Transition,
    _OBS_LO,
    _OBS_SPAN,
    action_to_setpoint,
)
from .occupancy import OccupancySchedule, generate_schedule, load_schedule
from .reward import RewardConfig, complaint_magnitude, compute_reward, flatten_energy, temp_deviation
from .thermal import (
    Building,
    BuildingConfig,
    WeatherRecord,
    building_5zone,
    generate_weather,
    load_building,
    load_weather,
)

EVAL_WEEK_HOURS = 168


class DivergenceError(RuntimeError):
    """Raised when network parameters go non-finite during training."""

    def __init__(self, phase: str, episode: int, step: int):
        super().__init__(
            f"non-finite network parameters in phase {phase!r}, episode {episode}, step {step}"
        )
        self.phase = phase
        self.episode = episode
        self.step = step


def time_features(t: int) -> Tuple[int, int, int]:
    """(day of week, minutes of day, calendar week) for hour index ``t``.

    The episode starts on a Monday at 00:00 in calendar week 1.
    """
    day = t // 24
    return day % 7, (t % 24) * 60, min(53, 1 + day // 7)


@dataclass
class TrainingConfig:
    """All hyper-parameters of a training run.

    Published defaults: discount 0.9, batch 256, buffer 576, target-network
    update every 2 episodes, epsilon 1.00 -> 0.05 linear per phase, learning
    rate stepped 0.8 -> 0.01, 12500 pretraining plus 12500 main episodes.
    When pretraining is disabled the main phase runs twice as long.  The
    desk preset in the CLI shrinks episode counts (and the learning rate,
    which at the published endpoints is far too hot for Adam at desk scale)
    without changing any of the structure.
    """

    hidden_dims: Tuple[int, ...] = (64, 64)
    variant: str = "ddqn"
    gamma: float = 0.9
    batch_size: int = 256
    buffer_capacity: int = 576
    target_update_episodes: int = 2
    pretraining_mode: str = "broadcast"  # none | broadcast | partial_rule_based
    pretraining_episodes: int = 12500
    main_episodes: int = 12500
    individual_episodes: int = 250
    epsilon_start: float = 1.0
    epsilon_final: float = 0.05
    lr_milestones: Tuple[Tuple[float, float], ...] = DEFAULT_LR_MILESTONES
    episode_days: int = 31
    initial_zone_temp: float = 15.0
    building_path: Optional[str] = None
    weather_seed: int = 11
    weather_path: Optional[str] = None
    schedule_seed: int = 7
    schedule_path: Optional[str] = None
    controlled_zones: Optional[Tuple[int, ...]] = None
    reward: RewardConfig = field(default_factory=RewardConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pretraining_mode not in ("none", "broadcast", "partial_rule_based"):
            raise ValueError(f"unknown pretraining mode {self.pretraining_mode!r}")
        if self.variant not in ("dqn", "ddqn"):
            raise ValueError(f"unknown learner variant {self.variant!r}")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")

    @property
    def episode_hours(self) -> int:
        return self.episode_days * 24

    @property
    def effective_main_episodes(self) -> int:
        """Main-phase length; doubled when no pretraining takes place."""
        if self.pretraining_mode == "none":
            return 2 * self.main_episodes
        return self.main_episodes

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (OBS_DIM, *self.hidden_dims, N_ACTIONS)


# ---------------------------------------------------------------------------
# World: simulator + schedule + weather + reward
# ---------------------------------------------------------------------------


class World:
    """Bundles the building, occupancy schedule, weather and reward."""

    def __init__(
        self,
        building_config: BuildingConfig,
        schedule: OccupancySchedule,
        weather: Sequence[WeatherRecord],
        reward_config: RewardConfig,
        initial_zone_temp: float = 15.0,
    ):
        if schedule.zone_names != building_config.zone_names:
            raise ValueError(
                f"schedule zones {schedule.zone_names} do not match "
                f"building zones {building_config.zone_names}"
            )
        self.building = Building(building_config, initial_temp=initial_zone_temp)
        self.schedule = schedule
        self.weather = list(weather)
        self.reward_config = reward_config
        self.initial_zone_temp = initial_zone_temp

    @property
    def n_zones(self) -> int:
        return self.building.n_zones

    def reset(self) -> None:
        self.building.reset(self.initial_zone_temp)

    def global_state(self, t: int) -> np.ndarray:
        """Full state vector (6 + 4 * n_zones entries) at hour ``t``."""
        dow, minutes, week = time_features(t)
        rec = self.weather[t]
        now = self.schedule.occupancy_at(t)
        in1 = self.schedule.occupancy_forecast(t, 1)
        in2 = self.schedule.occupancy_forecast(t, 2)
        temps = self.building.temperatures
        state = np.empty(6 + 4 * self.n_zones)
        state[0:6] = (dow, minutes, week, rec.outdoor_temp, rec.direct_solar, rec.diffuse_solar)
        for z in range(self.n_zones):
            base = 6 + 4 * z
            state[base] = temps[z]
            state[base + 1] = now[z][0]
            state[base + 2] = in1[z]
            state[base + 3] = in2[z]
        return state

    def step(self, setpoints: Sequence[float], t: int):
        """Advance one hour; returns (states, e_all, per-zone complaints).

        Complaints compare the end-of-hour temperature with the mean wish
        of the occupants present during the hour.
        """
        occupants = self.schedule.headcounts_at(t)
        states, e_all = self.building.step(setpoints, self.weather[t], occupants)
        wishes = self.schedule.occupancy_at(t)
        complaints = [
            complaint_magnitude(temp_deviation(state.temperature, wish[1]))
            for state, wish in zip(states, wishes)
        ]
        return states, e_all, complaints


def build_world(config: TrainingConfig) -> World:
    """Construct the world described by a training config."""
    building_config = (
        load_building(config.building_path) if config.building_path else building_5zone()
    )
    if config.weather_path:
        weather = load_weather(config.weather_path)
    else:
        weather = generate_weather(config.weather_seed, days=config.episode_days)
    if len(weather) < config.episode_hours:
        raise ValueError(
            f"weather series has {len(weather)} hours, episode needs {config.episode_hours}"
        )
    if config.schedule_path:
        schedule = load_schedule(config.schedule_path)
    else:
        schedule = generate_schedule(config.schedule_seed)
    return World(
        building_config,
        schedule,
        weather,
        config.reward,
        initial_zone_temp=config.initial_zone_temp,
    )


# ---------------------------------------------------------------------------
# Control teams: who sets which zone's setpoint
# ---------------------------------------------------------------------------


@dataclass
class ControlSlot:
    """One replay-bundle row: a learner reading one zone's observation."""

    learner: QLearner
    obs_zone: int


class ControlTeam:
    """Per-zone controller assignment plus the replay-row layout.

    ``zone_sources[z]`` is either ("rl", slot_index) or ("rule", None).
    Slot order defines the agent-row order inside replay bundles.
    """

    def __init__(self, n_zones: int, zone_sources: List[Tuple[str, Optional[int]]],
                 slots: List[ControlSlot]):
        self.n_zones = n_zones
        self.zone_sources = zone_sources
        self.slots = slots
        self.rule_agent = RuleBasedAgent()
        # observation gather indices: row per slot = 6 general entries plus
        # the slot zone's 4 entries of the global state
        self._obs_index = np.array(
            [
                list(range(6)) + list(range(6 + 4 * slot.obs_zone, 6 + 4 * slot.obs_zone + 4))
                for slot in slots
            ],
            dtype=np.intp,
        ).reshape(len(slots), OBS_DIM)
        # groups of slot indices sharing one learner, for batched greedy acts
        self._learner_groups: List[Tuple[QLearner, List[int]]] = []
        for i, slot in enumerate(slots):
            for learner, members in self._learner_groups:
                if learner is slot.learner:
                    members.append(i)
                    break
            else:
                self._learner_groups.append((slot.learner, [i]))

    # -- constructors ------------------------------------------------------

    @classmethod
    def broadcast(cls, n_zones: int, learner: QLearner) -> "ControlTeam":
        """One learnable agent whose chosen setpoint reaches every zone."""
        slots = [ControlSlot(learner, obs_zone=0)]
        return cls(n_zones, [("rl", 0)] * n_zones, slots)

    @classmethod
    def partial_rule_based(cls, n_zones: int, learner: QLearner) -> "ControlTeam":
        """Zone 0 learnable, all other zones on the rule-based schedule."""
        slots = [ControlSlot(learner, obs_zone=0)]
        sources: List[Tuple[str, Optional[int]]] = [("rl", 0)]
        sources += [("rule", None)] * (n_zones - 1)
        return cls(n_zones, sources, slots)

    @classmethod
    def shared(cls, n_zones: int, learner: QLearner) -> "ControlTeam":
        """Every zone controlled through one common network."""
        slots = [ControlSlot(learner, obs_zone=z) for z in range(n_zones)]
        return cls(n_zones, [("rl", z) for z in range(n_zones)], slots)

    @classmethod
    def individual(cls, n_zones: int, learners: Sequence[QLearner]) -> "ControlTeam":
        """Every zone controlled by its own learner."""
        if len(learners) != n_zones:
            raise ValueError("need one learner per zone")
        slots = [ControlSlot(lnr, obs_zone=z) for z, lnr in enumerate(learners)]
        return cls(n_zones, [("rl", z) for z in range(n_zones)], slots)

    @classmethod
    def custom(cls, n_zones: int, rl_zones: Sequence[Tuple[int, QLearner]]) -> "ControlTeam":
        """Selected zones RL-controlled, the rest rule-based."""
        sources: List[Tuple[str, Optional[int]]] = [("rule", None)] * n_zones
        slots = []
        for slot_idx, (zone, learner) in enumerate(rl_zones):
            slots.append(ControlSlot(learner, obs_zone=zone))
            sources[zone] = ("rl", slot_idx)
        return cls(n_zones, sources, slots)

    @classmethod
    def all_rule_based(cls, n_zones: int) -> "ControlTeam":
        return cls(n_zones, [("rule", None)] * n_zones, [])

    # -- behavior -----------------------------------------------------------

    @property
    def has_learners(self) -> bool:
        return bool(self.slots)

    def unique_learners(self) -> List[QLearner]:
        return [learner for learner, _ in self._learner_groups]

    @property
    def is_shared(self) -> bool:
        return len(self.slots) > 1 and len(self._learner_groups) == 1

    def slot_observations(self, global_state: np.ndarray) -> np.ndarray:
        """Normalized observation rows, one per slot (vectorized gather)."""
        if not self.slots:
            return np.zeros((0, OBS_DIM))
        raw = global_state[self._obs_index]
        np.clip(raw, _OBS_LO, _OBS_LO + _OBS_SPAN, out=raw)
        return (raw - _OBS_LO) / _OBS_SPAN

    def act_from_obs(self, slot_obs: np.ndarray, t: int, epsilon: float, rng: np.random.Generator):
        """Setpoints for every zone given precomputed slot observations.

        Greedy actions are batched per learner; the per-slot epsilon draws
        consume the generator in slot order, matching ``select_action``.
        """
        n_slots = len(self.slots)
        slot_actions = np.zeros(n_slots, dtype=np.intp)
        for learner, members in self._learner_groups:
            q = learner.online.forward_batch(slot_obs[members])
            slot_actions[members] = np.argmax(q, axis=1)
        if epsilon > 0.0:
            for i in range(n_slots):
                if rng.random() < epsilon:
                    slot_actions[i] = rng.integers(N_ACTIONS)
        dow, minutes, _ = time_features(t)
        setpoints = []
        for source, idx in self.zone_sources:
            if source == "rl":
                setpoints.append(action_to_setpoint(int(slot_actions[idx])))
            else:
                setpoints.append(self.rule_agent.setpoint(dow, minutes))
        return setpoints, slot_actions

    def act(self, global_state: np.ndarray, t: int, epsilon: float, rng: np.random.Generator):
        """Setpoints for every zone plus the slot observations/actions."""
        slot_obs = self.slot_observations(global_state)
        setpoints, slot_actions = self.act_from_obs(slot_obs, t, epsilon, rng)
        return setpoints, slot_obs, slot_actions

    def learn(self, buffer: ReplayBuffer, rng: np.random.Generator,
              batch_size: int, gamma: float, lr: float) -> None:
        """One learning pass: a single gradient step on a shared network
        (all agent rows as one sample stream), or one step per learner on
        its own rows otherwise."""
        uniques = self.unique_learners()
        if len(uniques) == 1:
            batch = buffer.sample_arrays(rng, batch_size)
            if batch is not None:
                uniques[0].learn_from_arrays(*batch, gamma, lr)
        else:
            for slot_idx, slot in enumerate(self.slots):
                batch = buffer.sample_arrays(rng, batch_size)
                if batch is not None:
                    slot.learner.learn_from_arrays(*batch, gamma, lr, agent_slice=slot_idx)

    def update_targets(self) -> None:
        for learner in self.unique_learners():
            learner.update_target()


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass
class EpisodeMetrics:
    """Per-step traces and per-episode totals of one rollout."""

    e_all: List[float] = field(default_factory=list)
    e_flat: List[float] = field(default_factory=list)
    complaints: List[List[float]] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    setpoints: List[List[float]] = field(default_factory=list)
    zone_temps: List[List[float]] = field(default_factory=list)
    zone_energy: List[List[float]] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.rewards)

    @property
    def e_total(self) -> float:
        return float(sum(self.e_all))

    @property
    def m_total(self) -> float:
        return float(sum(sum(c) for c in self.complaints))

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0

    def zone_e_total(self, zone: int) -> float:
        return float(sum(row[zone] for row in self.zone_energy))

    def zone_m_total(self, zone: int) -> float:
        return float(sum(row[zone] for row in self.complaints))


def run_episode(
    world: World,
    team: ControlTeam,
    *,
    epsilon: float,
    learn: bool,
    rng: np.random.Generator,
    hours: Optional[int] = None,
    buffer: Optional[ReplayBuffer] = None,
    batch_size: int = 256,
    gamma: float = 0.9,
    lr: float = 0.001,
    phase: str = "",
    episode: int = 0,
) -> EpisodeMetrics:
    """Roll out one episode; optionally store transitions and learn.

    Learning performs one team learning pass per environment step once the
    buffer holds at least one batch of bundles.  The final step is marked
    terminal.
    """
    if learn and team.has_learners and buffer is None:
        raise ValueError("learning requires a replay buffer")
    hours = hours if hours is not None else len(world.weather)
    if hours > len(world.weather):
        raise ValueError(f"episode of {hours} hours exceeds the {len(world.weather)}-hour weather series")
    world.reset()
    metrics = EpisodeMetrics()
    start = time.perf_counter()
    slot_obs = team.slot_observations(world.global_state(0))
    for t in range(hours):
        setpoints, slot_actions = team.act_from_obs(slot_obs, t, epsilon, rng)
        states, e_all, complaints = world.step(setpoints, t)
        reward = compute_reward(e_all, complaints, world.reward_config)
        terminal = t == hours - 1
        if not terminal:
            slot_obs_next = team.slot_observations(world.global_state(t + 1))
        else:
            slot_obs_next = slot_obs  # never bootstrapped from: terminal uses y = r
        if learn and team.has_learners:
            buffer.push(
                Transition(
                    observations=slot_obs,
                    actions=slot_actions,
                    reward=reward,
                    next_observations=slot_obs_next,
                    terminal=terminal,
                )
            )
            if len(buffer) >= batch_size:
                team.learn(buffer, rng, batch_size, gamma, lr)
                for learner in team.unique_learners():
                    if not np.all(np.isfinite(learner.online.theta)):
                        raise DivergenceError(phase, episode, t)
        slot_obs = slot_obs_next
        metrics.e_all.append(e_all)
        metrics.e_flat.append(flatten_energy(e_all, world.reward_config))
        metrics.complaints.append(complaints)
        metrics.rewards.append(reward)
        metrics.setpoints.append(list(setpoints))
        metrics.zone_temps.append([s.temperature for s in states])
        metrics.zone_energy.append([s.energy_consumed for s in states])
    metrics.seconds = time.perf_counter() - start
    return metrics


# ---------------------------------------------------------------------------
# Full training protocol
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    """Outcome of a training run: final learners and the metrics log."""

    config: TrainingConfig
    zone_learners: List[QLearner]  # one per zone; rule-based zones carry None
    episode_rows: List[dict]
    phase3_start_params: List[np.ndarray]  # per-agent parameter snapshots


# sink callbacks: on_phase_start(phase, team), on_episode(row, metrics),
# on_phase_end(phase, learners) -- all optional, None sink writes nothing.
class TrainingSink:
    def on_phase_start(self, phase: str, team: ControlTeam) -> None:  # pragma: no cover
        pass

    def on_episode(self, row: dict, metrics: EpisodeMetrics) -> None:  # pragma: no cover
        pass

    def on_phase_end(self, phase: str, learners: List[Optional[QLearner]]) -> None:  # pragma: no cover
        pass


def _run_phase(
    world: World,
    team: ControlTeam,
    config: TrainingConfig,
    episodes: int,
    rng: np.random.Generator,
    sink: Optional[TrainingSink],
    phase: str,
    rows: List[dict],
    episode_offset: int,
    epsilon_schedule: LinearSchedule,
    lr_schedule: StepwiseSchedule,
) -> int:
    buffer = ReplayBuffer(config.buffer_capacity)
    if sink:
        sink.on_phase_start(phase, team)
    for ep in range(episodes):
        epsilon = epsilon_schedule.value(ep)
        lr = lr_schedule.value(ep)
        metrics = run_episode(
            world,
            team,
            epsilon=epsilon,
            learn=True,
            rng=rng,
            hours=config.episode_hours,
            buffer=buffer,
            batch_size=config.batch_size,
            gamma=config.gamma,
            lr=lr,
            phase=phase,
            episode=ep,
        )
        if (ep + 1) % config.target_update_episodes == 0:
            team.update_targets()
        row = {
            "episode": episode_offset + ep,
            "phase": phase,
            "phase_episode": ep,
            "E_total": metrics.e_total,
            "M_total": metrics.m_total,
            "mean_reward": metrics.mean_reward,
            "epsilon": epsilon,
            "lr": lr,
            "seconds": metrics.seconds,
        }
        rows.append(row)
        if sink:
            sink.on_episode(row, metrics)
    return episode_offset + episodes


def train(config: TrainingConfig, sink: Optional[TrainingSink] = None) -> TrainResult:
    """Run the full (up to) three-phase protocol described by ``config``.

    Phase 1 pretrains a single agent in broadcasting or partially
    rule-based mode; its network seeds all agents.  Phase 2 trains every
    agent through one shared online/target network pair.  Phase 3 copies
    the shared network into per-zone learners and fine-tunes them
    individually at the final exploration rate.  When
    ``config.controlled_zones`` is set, only those zones are RL-controlled
    (each with its own learner, the rest rule-based throughout) and the
    run consists of a single main phase.
    """
    ss = np.random.SeedSequence(config.seed)
    net_seed_seq, rng_seq = ss.spawn(2)
    rng = np.random.default_rng(rng_seq)
    world = build_world(config)
    n = world.n_zones
    rows: List[dict] = []
    episode_counter = 0

    def make_learner() -> QLearner:
        return QLearner(config.layer_sizes, seed=net_seed_seq.spawn(1)[0], variant=config.variant)

    def epsilon_schedule(episodes: int) -> LinearSchedule:
        return LinearSchedule(config.epsilon_start, config.epsilon_final, episodes)

    def lr_schedule(episodes: int) -> StepwiseSchedule:
        return StepwiseSchedule(config.lr_milestones, episodes)

    final_lr = config.lr_milestones[-1][1]

    if config.controlled_zones is not None:
        learners = {z: make_learner() for z in config.controlled_zones}
        team = ControlTeam.custom(n, [(z, learners[z]) for z in config.controlled_zones])
        episodes = config.effective_main_episodes
        episode_counter = _run_phase(
            world, team, config, episodes, rng, sink, "main", rows, episode_counter,
            epsilon_schedule(episodes), lr_schedule(episodes),
        )
        zone_learners: List[Optional[QLearner]] = [learners.get(z) for z in range(n)]
        if sink:
            sink.on_phase_end("main", zone_learners)
        return TrainResult(config, zone_learners, rows, [])

    pretrained: Optional[QLearner] = None
    if config.pretraining_mode != "none":
        pre_learner = make_learner()
        if config.pretraining_mode == "broadcast":
            team = ControlTeam.broadcast(n, pre_learner)
        else:
            team = ControlTeam.partial_rule_based(n, pre_learner)
        episode_counter = _run_phase(
            world, team, config, config.pretraining_episodes, rng, sink,
            "pretrain", rows, episode_counter,
            epsilon_schedule(config.pretraining_episodes),
            lr_schedule(config.pretraining_episodes),
        )
        pretrained = pre_learner
        if sink:
            sink.on_phase_end("pretrain", [pre_learner])

    shared = make_learner()
    if pretrained is not None:
        # every agent starts from a copy of the pretrained agent's network
        shared.online.copy_params_from(pretrained.online)
        shared.target.copy_params_from(pretrained.online)
    main_episodes = config.effective_main_episodes
    team2 = ControlTeam.shared(n, shared)
    episode_counter = _run_phase(
        world, team2, config, main_episodes, rng, sink, "shared", rows, episode_counter,
        epsilon_schedule(main_episodes), lr_schedule(main_episodes),
    )
    if sink:
        sink.on_phase_end("shared", [shared])

    # phase 3: duplicate into per-agent copies, fine-tune individually
    learners_by_zone = [shared.clone_networks() for _ in range(n)]
    phase3_start = [l.online.theta.copy() for l in learners_by_zone]
    team3 = ControlTeam.individual(n, learners_by_zone)
    if sink:
        sink.on_phase_start("individual", team3)
    episode_counter = _run_phase(
        world, team3, config, config.individual_episodes, rng, sink,
        "individual", rows, episode_counter,
        LinearSchedule(config.epsilon_final, config.epsilon_final, config.individual_episodes),
        StepwiseSchedule(((0.0, final_lr),), config.individual_episodes),
    )
    zone_learners = list(learners_by_zone)
    if sink:
        sink.on_phase_end("individual", zone_learners)
    return TrainResult(config, zone_learners, rows, phase3_start)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalResult:
    e_total: float
    m_total: float
    metrics: EpisodeMetrics


def evaluate(world: World, team: ControlTeam, hours: int = EVAL_WEEK_HOURS) -> EvalResult:
    """Deterministic greedy rollout over the evaluation window."""
    rng = np.random.default_rng(0)  # never consulted at epsilon = 0
    metrics = run_episode(world, team, epsilon=0.0, learn=False, rng=rng, hours=hours)
    return EvalResult(e_total=metrics.e_total, m_total=metrics.m_total, metrics=metrics)


def evaluation_team(result: TrainResult, n_zones: int) -> ControlTeam:
    """Build the greedy evaluation team matching a training result."""
    if result.config.controlled_zones is not None:
        pairs = [(z, result.zone_learners[z]) for z in result.config.controlled_zones]
        return ControlTeam.custom(n_zones, pairs)
    return ControlTeam.individual(n_zones, result.zone_learners)
