import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from ..utils.errors import CapacityError, ContractError, InputError, ParseError

logger = logging.getLogger(__name__)

Edge = tuple[int, int]

TOPOLOGY_DIR = Path(__file__).parent.parent / "data" / "topologies"

NAMED_TOPOLOGIES = frozenset(["tokyo", "rueschlikon", "acorn"])

GRID_SPEC_PATTERN = re.compile(r"^grid:(\d+)x(\d+)$")
SIZED_SPEC_PATTERN = re.compile(r"^(line|complete):(\d+)$")


def normalize_edge(n0: int, n1: int) -> Edge:
    """Return an undirected edge with its smaller endpoint first."""
    return (n0, n1) if n0 < n1 else (n1, n0)


@dataclass(frozen=True, eq=False)
class Architecture:
    """Undirected, connected connectivity graph with precomputed distances."""

    arch_id: str
    n_nodes: int
    edges: tuple[Edge, ...]
    dist: np.ndarray
    diameter: int
    max_degree: int
    neighbours: tuple[tuple[int, ...], ...] = field(repr=False)
    _edge_ids: dict[Edge, int] = field(repr=False)

    def has_edge(self, n0: int, n1: int) -> bool:
        return normalize_edge(n0, n1) in self._edge_ids

    def edge_id(self, edge: Edge) -> int:
        """Position of an edge in the sorted edge list (used for tie-breaking)."""
        try:
            return self._edge_ids[normalize_edge(*edge)]
        except KeyError:
            raise ContractError(f"{edge} is not an edge of {self.arch_id}") from None

    @property
    def feature_length(self) -> int:
        """Length of one state's feature vector (distance part plus edge part)."""
        return self.diameter + self.max_degree + 1


@dataclass(frozen=True)
class Placement:
    """Bijection between nodes and qubits (padding qubits fill unused nodes)."""

    node_to_qubit: tuple[int, ...]
    qubit_to_node: tuple[int, ...]

    def __post_init__(self):
        n = len(self.node_to_qubit)
        if len(self.qubit_to_node) != n:
            raise ContractError("Placement maps must have equal size")
        for node, qubit in enumerate(self.node_to_qubit):
            if not 0 <= qubit < n or self.qubit_to_node[qubit] != node:
                raise ContractError("Placement maps are not mutually inverse bijections")

    @classmethod
    def from_node_to_qubit(cls, node_to_qubit: Sequence[int]) -> "Placement":
        node_to_qubit = tuple(int(q) for q in node_to_qubit)
        qubit_to_node = [-1] * len(node_to_qubit)
        for node, qubit in enumerate(node_to_qubit):
            if not 0 <= qubit < len(node_to_qubit) or qubit_to_node[qubit] != -1:
                raise ContractError(f"Not a bijection: {node_to_qubit}")
            qubit_to_node[qubit] = node
        return cls(node_to_qubit, tuple(qubit_to_node))

    @classmethod
    def identity(cls, n_nodes: int) -> "Placement":
        ids = tuple(range(n_nodes))
        return cls(ids, ids)

    @property
    def n_nodes(self) -> int:
        return len(self.node_to_qubit)

    def apply_swaps(self, swaps: Iterable[Edge]) -> "Placement":
        """Exchange the qubits on each swapped node pair."""
        node_to_qubit = list(self.node_to_qubit)
        qubit_to_node = list(self.qubit_to_node)
        for n0, n1 in swaps:
            q0, q1 = node_to_qubit[n0], node_to_qubit[n1]
            node_to_qubit[n0], node_to_qubit[n1] = q1, q0
            qubit_to_node[q0], qubit_to_node[q1] = n1, n0
        # both maps stay inverse by construction, skip re-validation
        placement = object.__new__(Placement)
        object.__setattr__(placement, "node_to_qubit", tuple(node_to_qubit))
        object.__setattr__(placement, "qubit_to_node", tuple(qubit_to_node))
        return placement

    def format(self) -> str:
        return " ".join(str(q) for q in self.node_to_qubit)


def parse_placement(text: str, n_nodes: int) -> Placement:
    """
    Parse whitespace-separated qubit ids, one per node in node order.

    Raises:
        InputError: If the ids are not a permutation of 0..n_nodes-1
    """
    tokens = text.split()
    try:
        node_to_qubit = [int(token) for token in tokens]
    except ValueError:
        raise InputError(f"Placement must be integers, got {text.strip()!r}") from None
    if sorted(node_to_qubit) != list(range(n_nodes)):
        raise InputError(f"Placement must be a permutation of 0..{n_nodes - 1}")
    return Placement.from_node_to_qubit(node_to_qubit)


def all_pairs_distances(n_nodes: int, edges: Iterable[Edge]) -> tuple[np.ndarray, int]:
    """
    Compute hop distances between every pair of nodes.

    Args:
        n_nodes: Number of nodes (ids 0..n_nodes-1)
        edges: Undirected edges

    Returns:
        (dist, diameter) where dist is an n_nodes x n_nodes integer matrix

    Raises:
        InputError: If the graph is disconnected
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(n_nodes))
    graph.add_edges_from(edges)

    if n_nodes == 0:
        raise InputError("Architecture has no nodes")

    if not nx.is_connected(graph):
        reachable = nx.node_connected_component(graph, 0)
        unreachable = min(set(range(n_nodes)) - reachable)
        raise InputError(
            f"Architecture graph is disconnected: node {unreachable} is unreachable from node 0"
        )

    dist = np.zeros((n_nodes, n_nodes), dtype=np.int64)
    for source, lengths in nx.all_pairs_shortest_path_length(graph):
        for target, length in lengths.items():
            dist[source, target] = length
    dist.setflags(write=False)
    return dist, int(dist.max())


def make_architecture(arch_id: str, n_nodes: int, edges: Iterable[Edge]) -> Architecture:
    """Build a validated Architecture from an edge list."""
    normalized: set[Edge] = set()
    for n0, n1 in edges:
        if n0 == n1:
            raise InputError(f"Self-loop on node {n0} in {arch_id}")
        if not (0 <= n0 < n_nodes and 0 <= n1 < n_nodes):
            raise InputError(f"Edge ({n0}, {n1}) references a node outside 0..{n_nodes - 1}")
        normalized.add(normalize_edge(n0, n1))

    sorted_edges = tuple(sorted(normalized))
    dist, diameter = all_pairs_distances(n_nodes, sorted_edges)

    neighbours: list[list[int]] = [[] for _ in range(n_nodes)]
    for n0, n1 in sorted_edges:
        neighbours[n0].append(n1)
        neighbours[n1].append(n0)

    return Architecture(
        arch_id=arch_id,
        n_nodes=n_nodes,
        edges=sorted_edges,
        dist=dist,
        diameter=diameter,
        max_degree=max(len(ns) for ns in neighbours),
        neighbours=tuple(tuple(sorted(ns)) for ns in neighbours),
        _edge_ids={edge: i for i, edge in enumerate(sorted_edges)},
    )


def grid(m: int, n: int) -> Architecture:
    """m x n lattice with 4-neighbour edges; node id = row * n + column."""
    if m < 1 or n < 1 or m * n < 2:
        raise InputError(f"Grid dimensions must satisfy m, n >= 1 and m*n >= 2, got {m}x{n}")
    edges = []
    for r in range(m):
        for c in range(n):
            node = r * n + c
            if c + 1 < n:
                edges.append((node, node + 1))
            if r + 1 < m:
                edges.append((node, node + n))
    return make_architecture(f"grid:{m}x{n}", m * n, edges)


def line(n: int) -> Architecture:
    if n < 2:
        raise InputError(f"Line needs at least 2 nodes, got {n}")
    return make_architecture(f"line:{n}", n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> Architecture:
    if n < 2:
        raise InputError(f"Complete graph needs at least 2 nodes, got {n}")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return make_architecture(f"complete:{n}", n, edges)


def parse_edge_list(text: str, source: str = "<string>") -> tuple[int, list[Edge]]:
    """
    Parse the edge-list format: header "nodes N" then one "i j" edge per line.

    "#" starts a comment; blank lines are ignored.
    """
    n_nodes: int | None = None
    edges: list[Edge] = []

    for line_number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        tokens = content.split()
        if n_nodes is None:
            if len(tokens) != 2 or tokens[0] != "nodes" or not tokens[1].isdigit():
                raise ParseError(f"{source}: expected header 'nodes N', got {content!r}", line_number)
            n_nodes = int(tokens[1])
            continue
        if len(tokens) != 2 or not all(t.isdigit() for t in tokens):
            raise ParseError(f"{source}: expected edge 'i j', got {content!r}", line_number)
        edges.append((int(tokens[0]), int(tokens[1])))

    if n_nodes is None:
        raise ParseError(f"{source}: missing 'nodes N' header")
    return n_nodes, edges


def load_edge_list(path: str | Path, arch_id: str | None = None) -> Architecture:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read edge list {path}: {e}") from e
    n_nodes, edges = parse_edge_list(text, source=str(path))
    return make_architecture(arch_id or f"edgelist:{path}", n_nodes, edges)


def build_topology(spec: str) -> Architecture:
    """
    Build an architecture from a spec string.

    Supported specs:
    - grid:MxN
    - line:N
    - complete:N
    - tokyo, rueschlikon, acorn (bundled edge lists)
    - edgelist:PATH

    Raises:
        InputError: For unknown specs, bad dimensions or disconnected graphs
    """
    spec = spec.strip()

    match = GRID_SPEC_PATTERN.match(spec)
    if match:
        return grid(int(match.group(1)), int(match.group(2)))

    match = SIZED_SPEC_PATTERN.match(spec)
    if match:
        kind, size = match.group(1), int(match.group(2))
        return line(size) if kind == "line" else complete(size)

    if spec in NAMED_TOPOLOGIES:
        arch = load_edge_list(TOPOLOGY_DIR / f"{spec}.edges", arch_id=spec)
        logger.debug(f"Loaded bundled topology {spec}: {arch.n_nodes} nodes, {len(arch.edges)} edges")
        return arch

    if spec.startswith("edgelist:"):
        return load_edge_list(spec[len("edgelist:"):])

    raise InputError(
        f"Unknown architecture spec: {spec!r}. "
        f"Expected grid:MxN, line:N, complete:N, edgelist:PATH or one of {sorted(NAMED_TOPOLOGIES)}."
    )


def random_placement(arch: Architecture, n_qubits: int, rng: np.random.Generator) -> Placement:
    """
    Draw a uniformly random placement.

    Qubits n_qubits..n_nodes-1 are idle padding qubits that never gain targets.

    Raises:
        CapacityError: If n_qubits exceeds the number of nodes
    """
    if n_qubits > arch.n_nodes:
        raise CapacityError(
            f"Circuit uses {n_qubits} qubits but {arch.arch_id} only has {arch.n_nodes} nodes"
        )
    node_to_qubit = rng.permutation(arch.n_nodes)
    return Placement.from_node_to_qubit(node_to_qubit.tolist())
