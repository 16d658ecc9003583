"""Seeded random circuit families and the layer-sequential depth floor."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..config import AgentConfig
from ..utils.errors import InputError
from .architecture import Architecture, random_placement
from .circuit import LogicalCircuit

logger = logging.getLogger(__name__)


def gates_per_layer(n_qubits: int, density: float) -> int:
    """round(density * floor(n/2)), halves rounded up."""
    return math.floor(density * (n_qubits // 2) + 0.5)


def _random_matching(n_qubits: int, size: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    order = rng.permutation(n_qubits).tolist()
    return [(order[2 * i], order[2 * i + 1]) for i in range(size)]


def gen_single_full_layer(n_qubits: int, rng: np.random.Generator) -> LogicalCircuit:
    """
    One layer of floor(n/2) disjoint gates on a random matching.

    Raises:
        InputError: If n_qubits < 2
    """
    if n_qubits < 2:
        raise InputError(f"A full layer needs at least 2 qubits, got {n_qubits}")
    return LogicalCircuit.from_pairs(_random_matching(n_qubits, n_qubits // 2, rng), n_qubits)


def gen_multi_layer(
    n_qubits: int, n_layers: int, density: float, rng: np.random.Generator
) -> LogicalCircuit:
    """
    n_layers independent random matchings, each cut to round(density * floor(n/2)) gates.

    Raises:
        InputError: If a layer would hold no gates or the arguments are out of range
    """
    if n_qubits < 2:
        raise InputError(f"Layered circuits need at least 2 qubits, got {n_qubits}")
    if n_layers < 1:
        raise InputError(f"n_layers must be at least 1, got {n_layers}")
    if not 0 < density <= 1:
        raise InputError(f"density must lie in (0, 1], got {density}")

    size = gates_per_layer(n_qubits, density)
    if size < 1:
        raise InputError(
            f"density {density} leaves no gates per layer on {n_qubits} qubits"
        )

    pairs: list[tuple[int, int]] = []
    for _ in range(n_layers):
        pairs.extend(_random_matching(n_qubits, size, rng))
    return LogicalCircuit.from_pairs(pairs, n_qubits)


def gen_random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator) -> LogicalCircuit:
    """
    Gates between uniformly random distinct qubit pairs.

    A pair equal (as a set) to the previous gate's is redrawn.

    Raises:
        InputError: If n_qubits < 2 or n_gates < 1
    """
    if n_qubits < 2:
        raise InputError(f"Random circuits need at least 2 qubits, got {n_qubits}")
    if n_gates < 1:
        raise InputError(f"n_gates must be at least 1, got {n_gates}")

    pairs: list[tuple[int, int]] = []
    previous: frozenset[int] | None = None
    while len(pairs) < n_gates:
        q0 = int(rng.integers(n_qubits))
        q1 = int(rng.integers(n_qubits - 1))
        if q1 >= q0:
            q1 += 1
        pair = frozenset((q0, q1))
        if pair == previous and n_qubits > 2:
            continue
        previous = pair
        pairs.append((q0, q1))
    return LogicalCircuit.from_pairs(pairs, n_qubits)


def training_circuits(
    config: AgentConfig, n_qubits: int, rng: np.random.Generator
) -> list[LogicalCircuit]:
    """circuits_per_qubit * n_qubits circuits of the configured training family."""
    count = config.circuits_per_qubit * n_qubits
    family = config.training_family
    if family == "full_layer":
        circuits = [gen_single_full_layer(n_qubits, rng) for _ in range(count)]
    elif family == "multi_layer":
        circuits = [
            gen_multi_layer(n_qubits, config.training_layers, config.training_density, rng)
            for _ in range(count)
        ]
    else:
        circuits = [gen_random_circuit(n_qubits, config.training_gates, rng) for _ in range(count)]
    logger.info(f"Generated {count} {family} training circuits on {n_qubits} qubits")
    return circuits


@dataclass(frozen=True)
class LowerBound:
    samples: int
    density: float
    mean_furthest: float
    bound: float
    cdr_floor: float

    def format(self) -> str:
        return (
            f"samples={self.samples} density={self.density:.4f} "
            f"mean_furthest={self.mean_furthest:.4f} bound={self.bound:.4f} "
            f"cdr_floor={self.cdr_floor:.4f}"
        )


def layer_lower_bound(
    arch: Architecture, density: float, n_samples: int, rng: np.random.Generator
) -> LowerBound:
    """
    Depth floor for routers that finish one layer before starting the next.

    Each sample draws a random layer over all nodes and a random placement
    and takes the largest gate distance D. Bringing that pair together needs
    (D - 1) / 2 swap layers when both ends move, so the CDR floor is one plus
    the mean of that quantity; the bound itself is half the mean furthest distance.

    Raises:
        InputError: If density is outside (0, 1] or n_samples < 1
    """
    if not 0 < density <= 1:
        raise InputError(f"density must lie in (0, 1], got {density}")
    if n_samples < 1:
        raise InputError(f"n_samples must be at least 1, got {n_samples}")

    n = arch.n_nodes
    furthest = np.empty(n_samples, dtype=np.float64)
    for i in range(n_samples):
        layer = gen_multi_layer(n, 1, density, rng)
        qubit_to_node = random_placement(arch, n, rng).qubit_to_node
        furthest[i] = max(arch.dist[qubit_to_node[g.q0], qubit_to_node[g.q1]] for g in layer.gates)

    mean_furthest = float(furthest.mean())
    return LowerBound(
        samples=n_samples,
        density=density,
        mean_furthest=mean_furthest,
        bound=0.5 * mean_furthest,
        cdr_floor=1.0 + float(((furthest - 1.0) / 2.0).mean()),
    )
