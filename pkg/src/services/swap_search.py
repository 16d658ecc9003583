import logging
import math
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from ..config import AnnealSchedule
from ..utils.errors import ContractError
from .architecture import Architecture, Edge
from .routing_env import RoutingState

logger = logging.getLogger(__name__)

SwapSet = frozenset[Edge]
QualityFn = Callable[[SwapSet], float]

EMPTY_SWAP_SET: SwapSet = frozenset()


def eligible_edges(state: RoutingState, arch: Architecture) -> list[Edge]:
    """Architecture edges with neither endpoint protected, in edge-id order."""
    protected = state.protected
    return [edge for edge in arch.edges if edge[0] not in protected and edge[1] not in protected]


def is_parallelizable(swap_set: Iterable[Edge]) -> bool:
    """True iff no node appears in two edges."""
    seen: set[int] = set()
    for n0, n1 in swap_set:
        if n0 in seen or n1 in seen or n0 == n1:
            return False
        seen.add(n0)
        seen.add(n1)
    return True


def acceptance_probability(q_current: float, q_candidate: float, temperature: float) -> float:
    """Metropolis acceptance for a maximiser: uphill moves always pass."""
    if temperature <= 0:
        raise ContractError(f"Temperature must be positive, got {temperature}")
    if q_candidate > q_current:
        return 1.0
    return math.exp((q_candidate - q_current) / temperature)


def enumerate_swap_sets(edges: Sequence[Edge]) -> Iterator[SwapSet]:
    """Every parallelizable subset of edges, the empty set first."""

    def _extend(start: int, chosen: list[Edge], used: set[int]) -> Iterator[SwapSet]:
        yield frozenset(chosen)
        for i in range(start, len(edges)):
            n0, n1 = edges[i]
            if n0 in used or n1 in used:
                continue
            chosen.append(edges[i])
            used.update((n0, n1))
            yield from _extend(i + 1, chosen, used)
            chosen.pop()
            used.difference_update((n0, n1))

    yield from _extend(0, [], set())


def exhaustive_action(
    state: RoutingState, arch: Architecture, quality: QualityFn
) -> tuple[SwapSet, float]:
    """Brute-force argmax of quality over all eligible parallel swap sets."""
    best_set, best_quality = EMPTY_SWAP_SET, quality(EMPTY_SWAP_SET)
    for candidate in enumerate_swap_sets(eligible_edges(state, arch)):
        value = quality(candidate)
        if value > best_quality:
            best_set, best_quality = candidate, value
    return best_set, best_quality


def anneal_action(
    state: RoutingState,
    arch: Architecture,
    quality: QualityFn,
    schedule: AnnealSchedule,
    rng: np.random.Generator,
) -> tuple[SwapSet, float]:
    """
    Search for the swap set with the highest quality by simulated annealing.

    The chain starts from one random eligible swap and moves by toggling a
    random eligible edge. Candidates that are not parallelizable are dropped
    without cooling. The best set ever visited is returned, and the empty set
    is always among the visited candidates.

    Args:
        state: Current routing state (defines the protected nodes)
        arch: Architecture the state lives on
        quality: Scores a candidate swap set; higher is better
        schedule: Temperature schedule and probe budget
        rng: Random stream for proposals and acceptance draws

    Returns:
        (best swap set, its quality)
    """
    cache: dict[SwapSet, float] = {}

    def evaluate(candidate: SwapSet) -> float:
        value = cache.get(candidate)
        if value is None:
            value = quality(candidate)
            cache[candidate] = value
        return value

    best_set, best_quality = EMPTY_SWAP_SET, evaluate(EMPTY_SWAP_SET)

    edges = eligible_edges(state, arch)
    if not edges:
        return best_set, best_quality

    current = frozenset([edges[int(rng.integers(len(edges)))]])
    current_quality = evaluate(current)
    if current_quality > best_quality:
        best_set, best_quality = current, current_quality

    temperature = schedule.t_initial
    probes = 0
    while temperature > schedule.t_min and probes < schedule.max_iters:
        probes += 1
        edge = edges[int(rng.integers(len(edges)))]
        candidate = current - {edge} if edge in current else current | {edge}
        if not is_parallelizable(candidate):
            continue

        candidate_quality = evaluate(candidate)
        if rng.random() < acceptance_probability(current_quality, candidate_quality, temperature):
            current, current_quality = candidate, candidate_quality
        if candidate_quality > best_quality:
            best_set, best_quality = candidate, candidate_quality
        temperature *= schedule.decay

    if logger.isEnabledFor(logging.DEBUG):
        logger.debug(
            f"Annealing finished after {probes} probes, {len(cache)} distinct candidates, "
            f"best quality {best_quality:.4f}"
        )
    return best_set, best_quality
