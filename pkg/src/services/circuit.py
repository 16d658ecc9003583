import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Sequence

from ..utils.errors import ContractError, InputError, ValidationError
from .architecture import Architecture, Placement

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogicalGate:
    """Two-qubit gate at a 1-based position in its circuit."""

    index: int
    q0: int
    q1: int

    def __post_init__(self):
        if self.q0 == self.q1:
            raise InputError(f"Gate {self.index} acts twice on qubit {self.q0}")

    @property
    def qubits(self) -> tuple[int, int]:
        return (self.q0, self.q1)


@dataclass(frozen=True)
class LogicalCircuit:
    """Ordered list of two-qubit gates over logical qubits 0..n_qubits-1."""

    n_qubits: int
    gates: tuple[LogicalGate, ...] = ()

    def __post_init__(self):
        if self.n_qubits < 0:
            raise InputError(f"n_qubits must be non-negative, got {self.n_qubits}")
        for position, gate in enumerate(self.gates, start=1):
            if gate.index != position:
                raise InputError(f"Gate indices must be 1..{len(self.gates)} in order")
            for q in gate.qubits:
                if not 0 <= q < self.n_qubits:
                    raise InputError(
                        f"Gate {gate.index} references qubit {q} outside 0..{self.n_qubits - 1}"
                    )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], n_qubits: int | None = None) -> "LogicalCircuit":
        pairs = [(int(a), int(b)) for a, b in pairs]
        if n_qubits is None:
            n_qubits = max((max(p) for p in pairs), default=-1) + 1
        gates = tuple(LogicalGate(i, a, b) for i, (a, b) in enumerate(pairs, start=1))
        return cls(n_qubits, gates)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [g.qubits for g in self.gates]

    @property
    def depth(self) -> int:
        return circuit_depth(self.pairs, self.n_qubits)

    def __len__(self) -> int:
        return len(self.gates)


class OpKind(str, Enum):
    CNOT = "CNOT"
    SWAP = "SWAP"


@dataclass(frozen=True)
class RoutedOp:
    """
    Operation on two nodes in a given timestep.

    source_gate is the logical gate index a CNOT implements. swap_part (1..3)
    marks the CNOTs a SWAP was decomposed into.
    """

    kind: OpKind
    n0: int
    n1: int
    timestep: int
    source_gate: int | None = None
    swap_part: int | None = None

    def __post_init__(self):
        if self.n0 == self.n1:
            raise ContractError(f"Operation acts twice on node {self.n0}")
        if self.timestep < 1:
            raise ContractError(f"Timesteps start at 1, got {self.timestep}")

    @property
    def nodes(self) -> tuple[int, int]:
        return (self.n0, self.n1)

    def format(self) -> str:
        text = f"t={self.timestep} {self.kind.value} {self.n0} {self.n1}"
        if self.source_gate is not None:
            text += f" g={self.source_gate}"
        if self.swap_part is not None:
            text += f" s={self.swap_part}"
        return text


@dataclass(frozen=True)
class RoutedCircuit:
    arch_id: str
    initial_placement: Placement
    ops: tuple[RoutedOp, ...]
    final_placement: Placement

    @property
    def n_nodes(self) -> int:
        return self.initial_placement.n_nodes

    @property
    def depth(self) -> int:
        """Depth after compaction (empty timesteps removed by re-layering)."""
        return circuit_depth([op.nodes for op in self.ops], self.n_nodes)

    @property
    def swap_count(self) -> int:
        return sum(1 for op in self.ops if op.kind is OpKind.SWAP)

    @property
    def last_timestep(self) -> int:
        return max((op.timestep for op in self.ops), default=0)

    def ordered_ops(self) -> list[RoutedOp]:
        return sorted(self.ops, key=lambda op: op.timestep)


@dataclass(frozen=True)
class DepthMetrics:
    original_depth: int
    routed_depth: int
    cdo: int
    cdr: Fraction


def _fold_depths(gates: Iterable[tuple[int, int]], n_qubits: int) -> tuple[list[int], list[int]]:
    """Apply the per-qubit depth recurrence; returns (final counters, layer of each gate)."""
    counters = [0] * n_qubits
    layers = []
    for q0, q1 in gates:
        for q in (q0, q1):
            if not 0 <= q < n_qubits:
                raise InputError(f"Qubit {q} is outside 0..{n_qubits - 1}")
        layer = max(counters[q0], counters[q1]) + 1
        counters[q0] = counters[q1] = layer
        layers.append(layer)
    return counters, layers


def circuit_depth(gates: Sequence[tuple[int, int]], n_qubits: int) -> int:
    """
    Depth of an ordered two-qubit gate list.

    Each gate raises both its qubits' counters to max(counter) + 1; the depth
    is the largest counter afterwards.

    Raises:
        InputError: If a qubit id is out of range
    """
    counters, _ = _fold_depths(gates, n_qubits)
    return max(counters, default=0)


def decompose_layers(circuit: LogicalCircuit) -> list[list[LogicalGate]]:
    """Split a circuit into its as-soon-as-possible layers, preserving gate order within each."""
    _, gate_layers = _fold_depths(circuit.pairs, circuit.n_qubits)
    layers: list[list[LogicalGate]] = [[] for _ in range(max(gate_layers, default=0))]
    for gate, layer in zip(circuit.gates, gate_layers):
        layers[layer - 1].append(gate)
    return layers


def cdo_cdr(original_depth: int, routed_depth: int) -> DepthMetrics:
    """
    Circuit depth overhead and ratio of a routed circuit.

    Raises:
        InputError: If original_depth is 0 (ratio undefined)
        ContractError: If routed_depth < original_depth
    """
    if original_depth <= 0:
        raise InputError("Depth ratio is undefined for an empty original circuit")
    if routed_depth < original_depth:
        raise ContractError(
            f"Routed depth {routed_depth} is below original depth {original_depth}"
        )
    return DepthMetrics(
        original_depth=original_depth,
        routed_depth=routed_depth,
        cdo=routed_depth - original_depth,
        cdr=Fraction(routed_depth, original_depth),
    )


def relayer(ops: Sequence[RoutedOp], n_nodes: int) -> tuple[RoutedOp, ...]:
    """
    Re-stamp operations with their earliest timestep.

    Ops are taken in (timestep, position) order; per-node order is kept, so
    placement replay and logical gate order are unchanged.
    """
    ordered = sorted(enumerate(ops), key=lambda item: (item[1].timestep, item[0]))
    counters = [0] * n_nodes
    out = []
    for _, op in ordered:
        t = max(counters[op.n0], counters[op.n1]) + 1
        counters[op.n0] = counters[op.n1] = t
        out.append(
            RoutedOp(op.kind, op.n0, op.n1, t, source_gate=op.source_gate, swap_part=op.swap_part)
        )
    out.sort(key=lambda op: op.timestep)
    return tuple(out)


def decompose_swaps(routed: RoutedCircuit) -> RoutedCircuit:
    """Replace every SWAP by three CNOTs on the same node pair and re-layer."""
    expanded: list[RoutedOp] = []
    for op in routed.ordered_ops():
        if op.kind is OpKind.SWAP:
            # three consecutive CNOTs on one pair keep their relative order after relayering
            for part in (1, 2, 3):
                expanded.append(RoutedOp(OpKind.CNOT, op.n0, op.n1, op.timestep, swap_part=part))
        else:
            expanded.append(op)
    ops = relayer(expanded, routed.n_nodes)
    return RoutedCircuit(routed.arch_id, routed.initial_placement, ops, routed.final_placement)


class ViolationKind(str, Enum):
    NON_EDGE = "non_edge"
    WRONG_QUBITS = "wrong_qubits"
    ORDER = "order"
    MISSING_GATE = "missing_gate"
    DUPLICATE_GATE = "duplicate_gate"
    NODE_REUSE = "node_reuse"
    PLACEMENT = "placement"
    SWAP_DECOMPOSITION = "swap_decomposition"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    op_index: int | None
    detail: str = field(default="")

    def __str__(self) -> str:
        where = f"op {self.op_index}" if self.op_index is not None else "circuit"
        return f"{self.kind.value} at {where}: {self.detail}"


def validate_routed(
    original: LogicalCircuit, routed: RoutedCircuit, arch: Architecture
) -> list[Violation]:
    """
    Check a routed circuit against its logical circuit and architecture.

    Checks that every op sits on an edge, that tagged CNOTs act on the nodes
    holding their gate's qubits, that each qubit sees its gates in circuit
    order, that every gate appears exactly once and that no node is used
    twice in a timestep. An empty list means the circuit is valid.
    """
    violations: list[Violation] = []

    if routed.n_nodes != arch.n_nodes:
        return [
            Violation(
                ViolationKind.PLACEMENT,
                None,
                f"placement covers {routed.n_nodes} nodes, architecture has {arch.n_nodes}",
            )
        ]

    node_to_qubit = list(routed.initial_placement.node_to_qubit)
    pending: dict[int, deque[int]] = defaultdict(deque)
    for gate in original.gates:
        pending[gate.q0].append(gate.index)
        pending[gate.q1].append(gate.index)
    seen: set[int] = set()
    used_in_timestep: dict[int, set[int]] = defaultdict(set)
    open_swaps: dict[tuple[int, int], int] = {}

    indexed = sorted(enumerate(routed.ops), key=lambda item: (item[1].timestep, item[0]))
    for op_index, op in indexed:
        if not arch.has_edge(op.n0, op.n1):
            violations.append(
                Violation(ViolationKind.NON_EDGE, op_index, f"({op.n0}, {op.n1}) is not an edge")
            )

        used = used_in_timestep[op.timestep]
        for node in op.nodes:
            if node in used:
                violations.append(
                    Violation(
                        ViolationKind.NODE_REUSE,
                        op_index,
                        f"node {node} used twice in timestep {op.timestep}",
                    )
                )
            used.add(node)

        if not (0 <= op.n0 < arch.n_nodes and 0 <= op.n1 < arch.n_nodes):
            continue

        if op.kind is OpKind.SWAP:
            _swap_nodes(node_to_qubit, op.n0, op.n1)
            continue

        if op.swap_part is not None:
            pair = (min(op.nodes), max(op.nodes))
            expected = open_swaps.get(pair, 0) + 1
            if op.swap_part != expected:
                violations.append(
                    Violation(
                        ViolationKind.SWAP_DECOMPOSITION,
                        op_index,
                        f"expected part {expected} of the SWAP on {pair}, got {op.swap_part}",
                    )
                )
                open_swaps.pop(pair, None)
            elif expected == 3:
                _swap_nodes(node_to_qubit, op.n0, op.n1)
                open_swaps.pop(pair, None)
            else:
                open_swaps[pair] = expected
            continue

        if op.source_gate is None:
            continue

        g = op.source_gate
        if not 1 <= g <= len(original.gates):
            violations.append(
                Violation(ViolationKind.WRONG_QUBITS, op_index, f"gate {g} is not in the circuit")
            )
            continue
        if g in seen:
            violations.append(
                Violation(ViolationKind.DUPLICATE_GATE, op_index, f"gate {g} executed twice")
            )
            continue
        seen.add(g)

        gate = original.gates[g - 1]
        held = {node_to_qubit[op.n0], node_to_qubit[op.n1]}
        if held != set(gate.qubits):
            violations.append(
                Violation(
                    ViolationKind.WRONG_QUBITS,
                    op_index,
                    f"gate {g} needs qubits {sorted(gate.qubits)}, nodes hold {sorted(held)}",
                )
            )

        for q in gate.qubits:
            queue = pending[q]
            if queue and queue[0] == g:
                queue.popleft()
            else:
                violations.append(
                    Violation(
                        ViolationKind.ORDER,
                        op_index,
                        f"gate {g} runs before earlier gates on qubit {q}",
                    )
                )
                if g in queue:
                    queue.remove(g)

    for pair in sorted(open_swaps):
        violations.append(
            Violation(ViolationKind.SWAP_DECOMPOSITION, None, f"incomplete SWAP on {pair}")
        )

    for gate in original.gates:
        if gate.index not in seen:
            violations.append(
                Violation(ViolationKind.MISSING_GATE, None, f"gate {gate.index} never executed")
            )

    if tuple(node_to_qubit) != routed.final_placement.node_to_qubit:
        violations.append(
            Violation(ViolationKind.PLACEMENT, None, "replayed placement differs from final placement")
        )

    return violations


def ensure_valid(original: LogicalCircuit, routed: RoutedCircuit, arch: Architecture) -> None:
    """Raise ValidationError if validate_routed reports anything."""
    violations = validate_routed(original, routed, arch)
    if violations:
        summary = "; ".join(str(v) for v in violations[:5])
        raise ValidationError(
            f"Routed circuit failed validation ({len(violations)} violations): {summary}",
            violations,
        )


def _swap_nodes(node_to_qubit: list[int], n0: int, n1: int) -> None:
    node_to_qubit[n0], node_to_qubit[n1] = node_to_qubit[n1], node_to_qubit[n0]


def dump_routed(routed: RoutedCircuit) -> str:
    """One op per line: "t=<timestep> <CNOT|SWAP> <n0> <n1> [g=<gate>] [s=<part>]"."""
    return "".join(op.format() + "\n" for op in routed.ordered_ops())


def layer_density(circuit: LogicalCircuit) -> float:
    """Gates per layer as a fraction of the floor(n/2) maximum."""
    depth = circuit.depth
    max_per_layer = circuit.n_qubits // 2
    if depth == 0 or max_per_layer == 0:
        return 0.0
    return len(circuit.gates) / (depth * max_per_layer)
