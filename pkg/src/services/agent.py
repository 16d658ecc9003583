import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from tqdm import tqdm

from ..config import AgentConfig, AnnealSchedule
from ..utils.errors import ContractError, InputError, RoutingFailure
from .architecture import Architecture, Placement, random_placement
from .circuit import DepthMetrics, LogicalCircuit, RoutedCircuit, RoutedOp, cdo_cdr, ensure_valid
from .qvalue_model import Experience, QNetwork, ReplayBuffer, sync_target
from .routing_env import RoutingEnv, RoutingState
from .swap_search import EMPTY_SWAP_SET, QualityFn, SwapSet, anneal_action, eligible_edges

logger = logging.getLogger(__name__)

TRAINING_LOG_HEADER = "episode,steps,return,loss,epsilon"


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    steps: int
    total_return: float
    loss: float | None
    epsilon: float
    failed: bool = False

    def csv_row(self) -> str:
        loss = "" if self.loss is None else f"{self.loss:.6f}"
        return f"{self.episode},{self.steps},{self.total_return:.6f},{loss},{self.epsilon:.6f}"


@dataclass
class TrainingLog:
    records: list[EpisodeRecord] = field(default_factory=list)

    def append(self, record: EpisodeRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def mean_return(self, start: int = 0, stop: int | None = None) -> float:
        window = self.records[start:stop]
        if not window:
            return 0.0
        return sum(r.total_return for r in window) / len(window)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.records if r.failed)

    def to_csv(self) -> str:
        return "\n".join([TRAINING_LOG_HEADER, *(r.csv_row() for r in self.records)]) + "\n"


@dataclass(frozen=True)
class Episode:
    initial_placement: Placement
    ops: tuple[RoutedOp, ...]
    final_state: RoutingState
    total_return: float
    steps: int
    failed: bool
    losses: tuple[float, ...] = ()


@dataclass(frozen=True)
class EvaluationResult:
    routed: RoutedCircuit
    metrics: DepthMetrics | None
    env_steps: int


class DQNAgent:
    """
    Pair-quality DDQN agent.

    The online network scores transitions while acting; the target network,
    re-synced every target_sync_interval steps, scores them for replay targets.
    """

    def __init__(self, env: RoutingEnv, config: AgentConfig, model: QNetwork | None = None):
        self.env = env
        self.arch = env.arch
        self.config = config
        self.model = model
        self.target = sync_target(model) if model is not None else None
        self.buffer = ReplayBuffer.from_config(config.model)
        self.epsilon = config.epsilon_start
        self.total_steps = 0

    def transition_quality(self, state: RoutingState, model: QNetwork, weight: float) -> QualityFn:
        """Score of an action: simulated reward plus weight * Q(state, next state)."""
        env = self.env

        def quality(swaps: SwapSet) -> float:
            outcome = env.step(state, swaps)
            return outcome.reward + weight * model.predict(env.pair_features(state, outcome.next_state))

        return quality

    def random_action(self, state: RoutingState, rng: np.random.Generator) -> SwapSet:
        """
        Random parallel swap set.

        The size s >= 1 is drawn with P(s) proportional to 2 ** -s up to the
        eligible edge count; edges are then taken in random order while they
        stay node-disjoint.
        """
        edges = eligible_edges(state, self.arch)
        if not edges:
            return EMPTY_SWAP_SET

        sizes = np.arange(1, len(edges) + 1)
        weights = 2.0 ** (-sizes.astype(np.float64))
        size = int(rng.choice(sizes, p=weights / weights.sum()))

        chosen: list[tuple[int, int]] = []
        used: set[int] = set()
        for i in rng.permutation(len(edges)):
            n0, n1 = edges[int(i)]
            if n0 in used or n1 in used:
                continue
            chosen.append((n0, n1))
            used.update((n0, n1))
            if len(chosen) == size:
                break
        return frozenset(chosen)

    def select_action(
        self,
        state: RoutingState,
        epsilon: float,
        rng: np.random.Generator,
        schedule: AnnealSchedule | None = None,
    ) -> SwapSet:
        """Epsilon-greedy: random set with probability epsilon, else the annealed best."""
        if epsilon >= 1.0 or (epsilon > 0.0 and rng.random() < epsilon):
            return self.random_action(state, rng)
        if self.model is None:
            raise ContractError("Greedy action selection needs a model")

        quality = self.transition_quality(state, self.model, self.config.gamma)
        best, _ = anneal_action(state, self.arch, quality, schedule or self.config.anneal, rng)
        return best

    def td_target(self, experience: Experience, rng: np.random.Generator) -> float:
        """
        Bootstrapped target r + gamma * max over a' of the target-network
        quality of (s', env(s', a')), the max found by a short anneal.
        """
        if experience.done:
            return experience.reward
        if self.target is None:
            raise ContractError("TD targets need a target network")

        next_state = experience.next_state
        quality = self.transition_quality(next_state, self.target, 1.0)
        _, best_quality = anneal_action(
            next_state, self.arch, quality, self.config.replay_schedule, rng
        )
        return experience.reward + self.config.gamma * best_quality

    def replay(self, rng: np.random.Generator) -> float:
        """Train the online network on one prioritized batch; returns the pre-update loss."""
        indices, batch, importance = self.buffer.sample(self.config.batch_size, rng)
        phi = np.stack([self.env.pair_features(e.state, e.next_state) for e in batch])
        targets = np.array([self.td_target(e, rng) for e in batch])

        predictions = self.model.predict_batch(phi)
        self.buffer.update_priorities(indices, targets - predictions)
        loss = self.model.train_batch(phi, targets, importance)

        self.epsilon = max(self.config.epsilon_min, self.epsilon * self.config.epsilon_decay)
        return loss

    def run_episode(
        self,
        circuit: LogicalCircuit,
        placement: Placement,
        rng: np.random.Generator,
        epsilon: float | None = None,
        learn: bool = False,
    ) -> Episode:
        """
        Route one circuit from reset to completion or the step cap.

        With learn=True every transition goes to the replay buffer and a batch
        is replayed per step once the buffer holds batch_size experiences.
        """
        env = self.env
        state = env.reset(circuit, placement)
        cap = env.step_cap(circuit)
        ops: list[RoutedOp] = []
        losses: list[float] = []
        total_return = 0.0
        steps = 0

        while not state.done:
            if steps >= cap:
                return Episode(placement, tuple(ops), state, total_return, steps, True, tuple(losses))

            action = self.select_action(state, self.epsilon if epsilon is None else epsilon, rng)
            outcome = env.step(state, action)
            ops.extend(outcome.emitted_ops)
            total_return += outcome.reward
            steps += 1

            if learn:
                self.buffer.add(Experience(state, outcome.next_state, outcome.reward, outcome.done))
                if len(self.buffer) >= self.config.batch_size:
                    losses.append(self.replay(rng))
                self.total_steps += 1
                if self.total_steps % self.config.target_sync_interval == 0:
                    self.target = sync_target(self.model)
                    logger.debug(f"Target network synced at step {self.total_steps}")

            state = outcome.next_state

        return Episode(placement, tuple(ops), state, total_return, steps, False, tuple(losses))

    def route(
        self,
        circuit: LogicalCircuit,
        placement: Placement,
        rng: np.random.Generator,
        epsilon: float = 0.0,
    ) -> tuple[RoutedCircuit, int]:
        """
        Route a circuit without learning.

        Returns:
            (routed circuit, environment steps taken)

        Raises:
            RoutingFailure: If the step cap is reached (carries the partial transcript)
        """
        episode = self.run_episode(circuit, placement, rng, epsilon=epsilon)
        routed = RoutedCircuit(
            self.arch.arch_id, placement, episode.ops, episode.final_state.placement
        )
        if episode.failed:
            raise RoutingFailure(
                f"Routing aborted after {episode.steps} steps on {self.arch.arch_id}", partial=routed
            )
        return routed, episode.steps


def select_action(
    agent: DQNAgent,
    state: RoutingState,
    epsilon: float,
    schedule: AnnealSchedule,
    rng: np.random.Generator,
) -> SwapSet:
    return agent.select_action(state, epsilon, rng, schedule)


def td_target(agent: DQNAgent, experience: Experience, rng: np.random.Generator) -> float:
    return agent.td_target(experience, rng)


def train(
    arch: Architecture,
    training_circuits: Sequence[LogicalCircuit],
    config: AgentConfig,
    rng: np.random.Generator,
    show_progress: bool = False,
) -> tuple[QNetwork, TrainingLog]:
    """
    Train a pair-quality model on an architecture.

    Circuits are used round-robin, each with a fresh random placement.
    Episodes that hit the step cap are logged as failures and training continues.

    Returns:
        (trained online network, per-episode log)
    """
    if config.episodes > 0 and not training_circuits:
        raise InputError("Training needs at least one circuit")

    env = RoutingEnv(arch, config.rewards)
    model = QNetwork.for_features(2 * arch.feature_length, config.model, rng, arch.arch_id)
    agent = DQNAgent(env, config, model)
    log = TrainingLog()

    logger.info(
        f"Training on {arch.arch_id}: {config.episodes} episodes, "
        f"{len(training_circuits)} circuits, feature length {2 * arch.feature_length}"
    )

    for episode_index in tqdm(range(config.episodes), desc="train", disable=not show_progress):
        circuit = training_circuits[episode_index % len(training_circuits)]
        placement = random_placement(arch, circuit.n_qubits, rng)
        episode = agent.run_episode(circuit, placement, rng, learn=True)

        mean_loss = sum(episode.losses) / len(episode.losses) if episode.losses else None
        log.append(
            EpisodeRecord(
                episode=episode_index,
                steps=episode.steps,
                total_return=episode.total_return,
                loss=mean_loss,
                epsilon=agent.epsilon,
                failed=episode.failed,
            )
        )
        if episode.failed:
            logger.warning(f"Episode {episode_index} hit the step cap after {episode.steps} steps")
        if (episode_index + 1) % 50 == 0:
            logger.info(
                f"Episode {episode_index + 1}/{config.episodes}: "
                f"mean return (last 50) {log.mean_return(-50):.3f}, epsilon {agent.epsilon:.3f}"
            )

    logger.info(f"Training finished: {len(log)} episodes, {log.failures} failed")
    return model, log


def evaluate(
    model: QNetwork,
    arch: Architecture,
    circuits: Sequence[LogicalCircuit],
    placements: Sequence[Placement],
    config: AgentConfig,
    rng: np.random.Generator | None = None,
) -> list[EvaluationResult]:
    """
    Route each circuit greedily and validate the transcript.

    Raises:
        ContractError: If the model was built for a different feature length
        ValidationError: If a transcript is invalid (an environment bug)
        RoutingFailure: If an episode reaches the step cap
    """
    if model.input_dim != 2 * arch.feature_length:
        raise ContractError(
            f"Model expects {model.input_dim} features, {arch.arch_id} produces {2 * arch.feature_length}"
        )
    if len(circuits) != len(placements):
        raise ContractError("Need exactly one placement per circuit")

    rng = rng if rng is not None else np.random.default_rng(0)
    agent = DQNAgent(RoutingEnv(arch, config.rewards), config, model)
    results = []
    for circuit, placement in zip(circuits, placements):
        routed, steps = agent.route(circuit, placement, rng)
        ensure_valid(circuit, routed, arch)
        original_depth = circuit.depth
        metrics = cdo_cdr(original_depth, routed.depth) if original_depth > 0 else None
        results.append(EvaluationResult(routed, metrics, steps))
    return results


def mean_cdr(results: Sequence[EvaluationResult]) -> float:
    values = [float(r.metrics.cdr) for r in results if r.metrics is not None]
    return sum(values) / len(values) if values else math.nan
