"""
Routing MDP: gates are scheduled as soon as their qubits are adjacent and
mutually targeting, and each step fills the current timestep with SWAPs on
unprotected nodes.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ..config import RewardConfig
from ..utils.errors import CapacityError, ContractError
from .architecture import Architecture, Edge, Placement, normalize_edge
from .circuit import LogicalCircuit, OpKind, RoutedOp

logger = logging.getLogger(__name__)


class Interaction(NamedTuple):
    partner: int
    gate: int


class ScheduledGate(NamedTuple):
    q0: int
    q1: int
    gate: int


@dataclass(frozen=True)
class RoutingState:
    placement: Placement
    queues: tuple[tuple[Interaction, ...], ...]
    progress: tuple[int, ...]
    protected: frozenset[int]
    scheduled: tuple[ScheduledGate, ...]
    timestep: int = 1

    @property
    def done(self) -> bool:
        return not self.scheduled and not any(self.queues)

    @property
    def remaining(self) -> int:
        """Pending interactions summed over qubits (two per unfinished gate)."""
        return sum(len(q) for q in self.queues)

    def key(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Everything that determines future behaviour; scheduling is derived from it."""
        return (self.placement.node_to_qubit, self.progress)


@dataclass(frozen=True)
class StepOutcome:
    next_state: RoutingState
    reward: float
    done: bool
    emitted_ops: tuple[RoutedOp, ...]


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """
    d[i - 1] counts qubits at distance i from their target; e[k] counts
    target-holding nodes with exactly k usable edges toward that target.
    """

    d: np.ndarray
    e: np.ndarray

    def at_distance(self, i: int) -> int:
        return int(self.d[i - 1])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.d, self.e])


def qubit_targets(state: RoutingState) -> dict[int, int]:
    """Next interaction partner of every qubit that still has one."""
    return {q: queue[0].partner for q, queue in enumerate(state.queues) if queue}


class RoutingEnv:
    """Deterministic routing environment bound to one architecture."""

    def __init__(self, arch: Architecture, rewards: RewardConfig | None = None):
        self.arch = arch
        self.rewards = rewards or RewardConfig()
        self._dist = arch.dist.tolist()

    def step_cap(self, circuit: LogicalCircuit) -> int:
        """Episode length after which a policy is considered stuck."""
        return 2 * (len(circuit.gates) + 1) * self.arch.diameter

    def reset(self, circuit: LogicalCircuit, placement: Placement) -> RoutingState:
        """
        Build the initial state and schedule every gate that can run immediately.

        Raises:
            CapacityError: If the circuit has more qubits than the architecture has nodes
            ContractError: If the placement does not cover the architecture
        """
        if circuit.n_qubits > self.arch.n_nodes:
            raise CapacityError(
                f"Circuit uses {circuit.n_qubits} qubits but {self.arch.arch_id} "
                f"only has {self.arch.n_nodes} nodes"
            )
        if placement.n_nodes != self.arch.n_nodes:
            raise ContractError(
                f"Placement covers {placement.n_nodes} nodes, architecture has {self.arch.n_nodes}"
            )

        queues: list[list[Interaction]] = [[] for _ in range(self.arch.n_nodes)]
        for gate in circuit.gates:
            queues[gate.q0].append(Interaction(gate.q1, gate.index))
            queues[gate.q1].append(Interaction(gate.q0, gate.index))
        frozen_queues = tuple(tuple(q) for q in queues)

        scheduled = self._schedule(placement, frozen_queues)
        return RoutingState(
            placement=placement,
            queues=frozen_queues,
            progress=(0,) * self.arch.n_nodes,
            protected=self._protected_nodes(placement, scheduled),
            scheduled=scheduled,
            timestep=1,
        )

    def step(self, state: RoutingState, swaps: Iterable[Edge]) -> StepOutcome:
        """
        Execute the scheduled gates and the given SWAPs as one timestep.

        Raises:
            ContractError: If the swap set is not an eligible parallel action
        """
        swap_list = self._check_action(state, swaps)
        timestep = state.timestep
        qubit_to_node = state.placement.qubit_to_node

        ops = [
            RoutedOp(OpKind.CNOT, qubit_to_node[g.q0], qubit_to_node[g.q1], timestep, source_gate=g.gate)
            for g in state.scheduled
        ]
        ops.extend(RoutedOp(OpKind.SWAP, n0, n1, timestep) for n0, n1 in swap_list)

        queues = list(state.queues)
        progress = list(state.progress)
        for g in state.scheduled:
            for q in (g.q0, g.q1):
                queues[q] = queues[q][1:]
                progress[q] += 1
        frozen_queues = tuple(queues)

        placement = state.placement.apply_swaps(swap_list)
        scheduled = self._schedule(placement, frozen_queues)
        next_state = RoutingState(
            placement=placement,
            queues=frozen_queues,
            progress=tuple(progress),
            protected=self._protected_nodes(placement, scheduled),
            scheduled=scheduled,
            timestep=timestep + 1,
        )
        reward = self.compute_reward(state, swap_list, next_state)
        return StepOutcome(next_state, reward, next_state.done, tuple(ops))

    def compute_reward(
        self, pre_state: RoutingState, swaps: Iterable[Edge], post_state: RoutingState
    ) -> float:
        """
        Reward for one transition.

        gate_reward per newly scheduled gate, dist_reward per target-holding
        qubit that moved strictly closer to an unchanged target without being
        scheduled, completion_reward when the circuit is finished.
        """
        rewards = self.rewards
        reward = rewards.gate_reward * len(post_state.scheduled)

        finished = {q for g in pre_state.scheduled for q in (g.q0, g.q1)}
        newly_scheduled = {q for g in post_state.scheduled for q in (g.q0, g.q1)}
        pre_nodes = pre_state.placement.qubit_to_node
        post_nodes = post_state.placement.qubit_to_node

        closer = 0
        for q, queue in enumerate(pre_state.queues):
            if not queue or q in finished or q in newly_scheduled:
                continue
            target = queue[0].partner
            before = self._dist[pre_nodes[q]][pre_nodes[target]]
            after = self._dist[post_nodes[q]][post_nodes[target]]
            if after < before:
                closer += 1
        reward += rewards.dist_reward * closer

        if post_state.done:
            reward += rewards.completion_reward
        return reward

    def features(self, state: RoutingState) -> FeatureVector:
        arch = self.arch
        dist = self._dist
        d = np.zeros(arch.diameter, dtype=np.float64)
        e = np.zeros(arch.max_degree + 1, dtype=np.float64)
        qubit_to_node = state.placement.qubit_to_node
        protected = state.protected

        for q, queue in enumerate(state.queues):
            if not queue:
                continue
            node = qubit_to_node[q]
            target_node = qubit_to_node[queue[0].partner]
            distance = dist[node][target_node]
            d[distance - 1] += 1

            conforming = 0
            if node not in protected:
                for neighbour in arch.neighbours[node]:
                    if neighbour not in protected and dist[neighbour][target_node] < distance:
                        conforming += 1
            e[conforming] += 1

        return FeatureVector(d, e)

    def pair_features(self, state: RoutingState, next_state: RoutingState) -> np.ndarray:
        """Concatenated (d, e) vectors of a transition's two states."""
        n = self.arch.n_nodes
        if state.placement.n_nodes != n or next_state.placement.n_nodes != n:
            raise ContractError("States belong to a different architecture than this environment")
        first = self.features(state)
        second = self.features(next_state)
        return np.concatenate([first.d, first.e, second.d, second.e])

    def _schedule(
        self, placement: Placement, queues: tuple[tuple[Interaction, ...], ...]
    ) -> tuple[ScheduledGate, ...]:
        # ascending qubit id keeps emission order reproducible
        scheduled = []
        qubit_to_node = placement.qubit_to_node
        for q, queue in enumerate(queues):
            if not queue:
                continue
            partner, gate = queue[0]
            if partner <= q:
                continue
            partner_queue = queues[partner]
            if not partner_queue or partner_queue[0].partner != q:
                continue
            if self._dist[qubit_to_node[q]][qubit_to_node[partner]] == 1:
                scheduled.append(ScheduledGate(q, partner, gate))
        return tuple(scheduled)

    @staticmethod
    def _protected_nodes(placement: Placement, scheduled: tuple[ScheduledGate, ...]) -> frozenset[int]:
        nodes = placement.qubit_to_node
        return frozenset(nodes[q] for g in scheduled for q in (g.q0, g.q1))

    def _check_action(self, state: RoutingState, swaps: Iterable[Edge]) -> list[Edge]:
        if state.done:
            raise ContractError("Cannot step a finished episode")
        swap_list = sorted(normalize_edge(n0, n1) for n0, n1 in swaps)
        used: set[int] = set()
        for n0, n1 in swap_list:
            if not self.arch.has_edge(n0, n1):
                raise ContractError(f"SWAP ({n0}, {n1}) is not an edge of {self.arch.arch_id}")
            if n0 in state.protected or n1 in state.protected:
                raise ContractError(f"SWAP ({n0}, {n1}) touches a protected node")
            if n0 in used or n1 in used:
                raise ContractError(f"SWAP ({n0}, {n1}) overlaps another SWAP in the same timestep")
            used.update((n0, n1))
        return swap_list
