import logging

import numpy as np

from ..config import AgentConfig
from ..utils.errors import ContractError, InputError, NoSolutionError, RoutingFailure
from .agent import DQNAgent
from .architecture import Architecture, Edge, Placement
from .circuit import LogicalCircuit, RoutedCircuit, RoutedOp, ensure_valid
from .qvalue_model import QNetwork
from .routing_env import RoutingEnv, RoutingState
from .swap_search import SwapSet, eligible_edges, enumerate_swap_sets

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_NODES = 5
EXHAUSTIVE_MAX_GATES = 6
EXHAUSTIVE_MAX_BOUND = 8


def route(
    circuit: LogicalCircuit,
    arch: Architecture,
    placement: Placement,
    model: QNetwork,
    config: AgentConfig | None = None,
    rng: np.random.Generator | None = None,
) -> RoutedCircuit:
    """
    Route a circuit with a trained pair-quality model (no exploration).

    Raises:
        ContractError: If the model was trained for a different feature length
        RoutingFailure: If the step cap is reached
    """
    if model.input_dim != 2 * arch.feature_length:
        raise ContractError(
            f"Model expects {model.input_dim} features, {arch.arch_id} produces {2 * arch.feature_length}"
        )
    config = config or AgentConfig()
    agent = DQNAgent(RoutingEnv(arch, config.rewards), config, model)
    routed, _ = agent.route(circuit, placement, rng if rng is not None else np.random.default_rng(0))
    ensure_valid(circuit, routed, arch)
    return routed


def random_policy_route(
    circuit: LogicalCircuit,
    arch: Architecture,
    placement: Placement,
    rng: np.random.Generator,
    config: AgentConfig | None = None,
) -> RoutedCircuit:
    """Route with an agent that always explores (epsilon = 1)."""
    config = config or AgentConfig()
    agent = DQNAgent(RoutingEnv(arch, config.rewards), config)
    routed, _ = agent.route(circuit, placement, rng, epsilon=1.0)
    ensure_valid(circuit, routed, arch)
    return routed


def _front_pairs(state: RoutingState) -> list[tuple[int, int, int]]:
    """Unscheduled mutually-targeting pairs as (gate, q0, q1), lowest gate first."""
    scheduled = {g.gate for g in state.scheduled}
    pairs = []
    for q, queue in enumerate(state.queues):
        if not queue:
            continue
        partner, gate = queue[0]
        if partner <= q or gate in scheduled:
            continue
        partner_queue = state.queues[partner]
        if partner_queue and partner_queue[0].partner == q:
            pairs.append((gate, q, partner))
    pairs.sort()
    return pairs


class _GreedyPlanner:
    """Distance-sum descent over front pairs with a focus fallback."""

    def __init__(self, arch: Architecture):
        self.arch = arch
        self._dist = arch.dist.tolist()
        self.focus: int | None = None

    def _potential(self, pairs: list[tuple[int, int, int]], qubit_to_node: list[int]) -> int:
        dist = self._dist
        return sum(dist[qubit_to_node[q0]][qubit_to_node[q1]] for _, q0, q1 in pairs)

    def _descend(
        self,
        state: RoutingState,
        pairs: list[tuple[int, int, int]],
        blocked: set[int],
        chosen: list[Edge],
    ) -> None:
        node_to_qubit = list(state.placement.node_to_qubit)
        qubit_to_node = list(state.placement.qubit_to_node)
        for n0, n1 in chosen:
            _apply_swap(node_to_qubit, qubit_to_node, n0, n1)
        used = set(blocked)
        for n0, n1 in chosen:
            used.update((n0, n1))

        current = self._potential(pairs, qubit_to_node)
        candidates = eligible_edges(state, self.arch)
        while True:
            best_edge, best_value = None, current
            for n0, n1 in candidates:
                if n0 in used or n1 in used:
                    continue
                _apply_swap(node_to_qubit, qubit_to_node, n0, n1)
                value = self._potential(pairs, qubit_to_node)
                _apply_swap(node_to_qubit, qubit_to_node, n0, n1)
                if value < best_value:
                    best_edge, best_value = (n0, n1), value
            if best_edge is None:
                return
            _apply_swap(node_to_qubit, qubit_to_node, *best_edge)
            used.update(best_edge)
            chosen.append(best_edge)
            current = best_value

    def _focus_swap(self, state: RoutingState, q0: int, q1: int) -> Edge | None:
        dist = self._dist
        qubit_to_node = state.placement.qubit_to_node
        eligible = eligible_edges(state, self.arch)
        for mover, other in ((q0, q1), (q1, q0)):
            node, target = qubit_to_node[mover], qubit_to_node[other]
            for n0, n1 in eligible:
                if node not in (n0, n1):
                    continue
                neighbour = n1 if n0 == node else n0
                if dist[neighbour][target] < dist[node][target]:
                    return (n0, n1)
        return None

    def choose(self, state: RoutingState) -> SwapSet:
        pairs = _front_pairs(state)
        if self.focus is not None and all(gate != self.focus for gate, _, _ in pairs):
            self.focus = None

        chosen: list[Edge] = []
        blocked: set[int] = set()
        if self.focus is None:
            self._descend(state, pairs, blocked, chosen)
            if chosen or state.scheduled or not pairs:
                return frozenset(chosen)
            # stuck: commit to the earliest pending gate until it is scheduled
            self.focus = pairs[0][0]
            logger.debug(f"Greedy planner focusing on gate {self.focus}")

        _, q0, q1 = next(p for p in pairs if p[0] == self.focus)
        focus_edge = self._focus_swap(state, q0, q1)
        qubit_to_node = state.placement.qubit_to_node
        blocked.update((qubit_to_node[q0], qubit_to_node[q1]))
        if focus_edge is not None:
            chosen.append(focus_edge)
        self._descend(state, pairs, blocked, chosen)
        return frozenset(chosen)


def _apply_swap(node_to_qubit: list[int], qubit_to_node: list[int], n0: int, n1: int) -> None:
    a, b = node_to_qubit[n0], node_to_qubit[n1]
    node_to_qubit[n0], node_to_qubit[n1] = b, a
    qubit_to_node[a], qubit_to_node[b] = n1, n0


def greedy_step_cap(circuit: LogicalCircuit, arch: Architecture) -> int:
    return (len(circuit.gates) + 1) * arch.n_nodes * arch.diameter


def greedy_route(
    circuit: LogicalCircuit, arch: Architecture, placement: Placement
) -> RoutedCircuit:
    """
    Deterministic baseline router.

    Each timestep runs every schedulable gate, then keeps adding the
    non-conflicting eligible SWAP that most decreases the summed distance of
    unscheduled front pairs (ties go to the lowest edge id). When nothing is
    scheduled and no SWAP improves the sum, the earliest pending gate is
    walked together along a shortest path.

    Raises:
        RoutingFailure: If the step cap is reached
    """
    env = RoutingEnv(arch)
    planner = _GreedyPlanner(arch)
    state = env.reset(circuit, placement)
    cap = greedy_step_cap(circuit, arch)
    ops: list[RoutedOp] = []
    steps = 0

    while not state.done:
        if steps >= cap:
            partial = RoutedCircuit(arch.arch_id, placement, tuple(ops), state.placement)
            raise RoutingFailure(f"Greedy routing aborted after {steps} steps", partial=partial)
        outcome = env.step(state, planner.choose(state))
        ops.extend(outcome.emitted_ops)
        state = outcome.next_state
        steps += 1

    routed = RoutedCircuit(arch.arch_id, placement, tuple(ops), state.placement)
    ensure_valid(circuit, routed, arch)
    return routed


def exhaustive_route(
    circuit: LogicalCircuit,
    arch: Architecture,
    placement: Placement,
    depth_bound: int = EXHAUSTIVE_MAX_BOUND,
) -> int:
    """
    Minimum number of timesteps any policy needs, by breadth-first search.

    States are deduplicated by (placement, per-qubit progress); every
    parallelizable swap set over unprotected edges is expanded.

    Raises:
        InputError: If the instance is too large to search
        NoSolutionError: If no schedule finishes within depth_bound timesteps
    """
    if arch.n_nodes > EXHAUSTIVE_MAX_NODES or len(circuit.gates) > EXHAUSTIVE_MAX_GATES:
        raise InputError(
            f"Exhaustive search supports at most {EXHAUSTIVE_MAX_NODES} nodes and "
            f"{EXHAUSTIVE_MAX_GATES} gates, got {arch.n_nodes} and {len(circuit.gates)}"
        )
    if not 0 <= depth_bound <= EXHAUSTIVE_MAX_BOUND:
        raise InputError(f"depth_bound must lie in 0..{EXHAUSTIVE_MAX_BOUND}, got {depth_bound}")

    env = RoutingEnv(arch)
    start = env.reset(circuit, placement)
    if start.done:
        return 0

    seen = {start.key()}
    frontier = [start]
    for depth in range(1, depth_bound + 1):
        next_frontier = []
        for state in frontier:
            for action in enumerate_swap_sets(eligible_edges(state, arch)):
                outcome = env.step(state, action)
                if outcome.done:
                    logger.debug(f"Exhaustive search: optimum {depth}, {len(seen)} states visited")
                    return depth
                key = outcome.next_state.key()
                if key not in seen:
                    seen.add(key)
                    next_frontier.append(outcome.next_state)
        frontier = next_frontier
        if not frontier:
            break

    raise NoSolutionError(f"No routing finishes within {depth_bound} timesteps")
