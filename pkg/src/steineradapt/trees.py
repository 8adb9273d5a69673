"""Domain types for planar Steiner trees and their structural/geometric checks.

A tree connects ``n`` terminals (prescribed points) through ``k`` extra
Steiner points. The edge set is partitioned by endpoint kind into
terminal-terminal, terminal-Steiner and Steiner-Steiner edges. Validity
means: at most ``n - 2`` Steiner points, every Steiner point of degree
exactly 3, terminals of degree 1 to 3, and the whole graph a tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from .errors import DegenerateEdgeError

# Edge length below this (in instance units) is treated as a node coincidence;
# every derivative formula divides by edge lengths.
COINCIDENT_THRESHOLD = 1e-12

# Target meeting angle at a Steiner point.
STEINER_ANGLE = 2.0 * math.pi / 3.0


class NodeKind(Enum):
    TERMINAL = "t"
    STEINER = "s"


@dataclass(frozen=True, order=True)
class NodeRef:
    """Reference to a node by kind and zero-based index within its kind."""

    kind: NodeKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}{self.index}"

    @staticmethod
    def terminal(index: int) -> "NodeRef":
        return NodeRef(NodeKind.TERMINAL, index)

    @staticmethod
    def steiner(index: int) -> "NodeRef":
        return NodeRef(NodeKind.STEINER, index)


@dataclass(frozen=True)
class Point2:
    """A planar position with finite coordinates."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @staticmethod
    def from_array(a) -> "Point2":
        return Point2(float(a[0]), float(a[1]))


def _normalized_pair(pair) -> tuple[int, int]:
    a, b = int(pair[0]), int(pair[1])
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class SteinerTopology:
    """Combinatorial structure of a Steiner tree.

    ``edges_T`` holds unordered terminal-terminal index pairs, ``edges_S``
    unordered Steiner-Steiner pairs (both stored sorted), and ``edges_TS``
    pairs ``(terminal_index, steiner_index)``. The constructor normalizes
    the edge containers; it does not validate, so arbitrary candidate
    structures can be represented and then checked with
    :func:`validate_topology`.
    """

    n: int
    k: int
    edges_T: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    edges_TS: frozenset[tuple[int, int]] = field(default_factory=frozenset)
    edges_S: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges_T", frozenset(_normalized_pair(e) for e in self.edges_T))
        object.__setattr__(self, "edges_TS", frozenset((int(a), int(b)) for a, b in self.edges_TS))
        object.__setattr__(self, "edges_S", frozenset(_normalized_pair(e) for e in self.edges_S))

    # value equality across subclasses: a specialized topology equals the
    # plain one with the same structure (matters for decoded documents)
    def __eq__(self, other) -> bool:
        if not isinstance(other, SteinerTopology):
            return NotImplemented
        return (self.n, self.k, self.edges_T, self.edges_TS, self.edges_S) == (
            other.n,
            other.k,
            other.edges_T,
            other.edges_TS,
            other.edges_S,
        )

    def __hash__(self) -> int:
        return hash((self.n, self.k, self.edges_T, self.edges_TS, self.edges_S))

    @property
    def edge_count(self) -> int:
        return len(self.edges_T) + len(self.edges_TS) + len(self.edges_S)

    def all_edges(self) -> Iterator[tuple[NodeRef, NodeRef]]:
        """Yield every edge as a pair of node references, deterministically ordered."""
        for i, j in sorted(self.edges_T):
            yield NodeRef.terminal(i), NodeRef.terminal(j)
        for j, i in sorted(self.edges_TS):
            yield NodeRef.terminal(j), NodeRef.steiner(i)
        for m, l in sorted(self.edges_S):
            yield NodeRef.steiner(m), NodeRef.steiner(l)

    def terminal_degrees(self) -> list[int]:
        deg = [0] * self.n
        for i, j in self.edges_T:
            if 0 <= i < self.n:
                deg[i] += 1
            if 0 <= j < self.n:
                deg[j] += 1
        for j, _ in self.edges_TS:
            if 0 <= j < self.n:
                deg[j] += 1
        return deg

    def steiner_degrees(self) -> list[int]:
        deg = [0] * self.k
        for _, i in self.edges_TS:
            if 0 <= i < self.k:
                deg[i] += 1
        for m, l in self.edges_S:
            if 0 <= m < self.k:
                deg[m] += 1
            if 0 <= l < self.k:
                deg[l] += 1
        return deg

    def steiner_neighbors(self) -> list[list[tuple[NodeKind, int]]]:
        """Adjacent nodes of each Steiner point as (kind, index) pairs."""
        nbrs: list[list[tuple[NodeKind, int]]] = [[] for _ in range(self.k)]
        for j, i in self.edges_TS:
            nbrs[i].append((NodeKind.TERMINAL, j))
        for m, l in self.edges_S:
            nbrs[m].append((NodeKind.STEINER, l))
            nbrs[l].append((NodeKind.STEINER, m))
        for lst in nbrs:
            lst.sort(key=lambda p: (p[0].value, p[1]))
        return nbrs


@dataclass(frozen=True)
class SteinerTree:
    """A topology together with concrete coordinates for every node.

    Flattening ``terminal_positions`` (respectively ``steiner_positions``)
    in index order as ``(x0, y0, x1, y1, ...)`` gives the terminal and
    Steiner coordinate vectors used throughout the derivative and
    adaptation machinery.
    """

    topology: SteinerTopology
    terminal_positions: tuple[Point2, ...]
    steiner_positions: tuple[Point2, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terminal_positions", tuple(self.terminal_positions))
        object.__setattr__(self, "steiner_positions", tuple(self.steiner_positions))
        if len(self.terminal_positions) != self.topology.n:
            raise ValueError(
                f"expected {self.topology.n} terminal positions, got {len(self.terminal_positions)}"
            )
        if len(self.steiner_positions) != self.topology.k:
            raise ValueError(
                f"expected {self.topology.k} steiner positions, got {len(self.steiner_positions)}"
            )

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def k(self) -> int:
        return self.topology.k

    def terminal_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.terminal_positions], dtype=float).reshape(self.n, 2)

    def steiner_array(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.steiner_positions], dtype=float).reshape(self.k, 2)

    def t_vector(self) -> np.ndarray:
        return self.terminal_array().reshape(-1)

    def s_vector(self) -> np.ndarray:
        return self.steiner_array().reshape(-1)

    @staticmethod
    def from_arrays(topology: SteinerTopology, terminals, steiner) -> "SteinerTree":
        t = np.asarray(terminals, dtype=float).reshape(topology.n, 2)
        s = np.asarray(steiner, dtype=float).reshape(topology.k, 2)
        return SteinerTree(
            topology,
            tuple(Point2(float(x), float(y)) for x, y in t),
            tuple(Point2(float(x), float(y)) for x, y in s),
        )

    def position_of(self, ref: NodeRef) -> np.ndarray:
        if ref.kind is NodeKind.TERMINAL:
            return self.terminal_positions[ref.index].as_array()
        return self.steiner_positions[ref.index].as_array()


@dataclass(frozen=True)
class TopologyValidation:
    ok: bool
    violations: tuple[str, ...]


@dataclass(frozen=True)
class GeometricConditionReport:
    """Edge-length and meeting-angle summary of a concrete tree.

    ``max_steiner_angle_deviation`` is the largest absolute deviation from
    120 degrees over all edge pairs at Steiner points;
    ``min_pairwise_angle`` is the smallest angle between tree edges meeting
    at any node. Both are radians in [0, pi].
    """

    min_edge_length: float
    max_steiner_angle_deviation: float
    min_pairwise_angle: float
    satisfies_angle_condition: bool


def validate_topology(topology: SteinerTopology) -> TopologyValidation:
    """Check every structural rule; violations are data, not exceptions.

    Each violation message names the failed rule and the offending node or
    edge, so callers can surface them directly.
    """
    v: list[str] = []
    n, k = topology.n, topology.k

    if n < 2:
        v.append(f"terminal-count: need at least 2 terminals, got {n}")
    if k < 0:
        v.append(f"steiner-count: negative steiner count {k}")
    if n >= 2 and k > n - 2:
        v.append(f"steiner-count: k <= n - 2 violated (k={k}, n={n})")

    in_range = True
    for i, j in topology.edges_T:
        if not (0 <= i < n and 0 <= j < n):
            v.append(f"index-range: terminal edge ({i},{j}) out of range")
            in_range = False
        elif i == j:
            v.append(f"self-loop: terminal edge ({i},{j})")
    for j, i in topology.edges_TS:
        if not (0 <= j < n and 0 <= i < k):
            v.append(f"index-range: terminal-steiner edge (t{j},s{i}) out of range")
            in_range = False
    for m, l in topology.edges_S:
        if not (0 <= m < k and 0 <= l < k):
            v.append(f"index-range: steiner edge ({m},{l}) out of range")
            in_range = False
        elif m == l:
            v.append(f"self-loop: steiner edge ({m},{l})")

    if n >= 2 and k >= 0 and in_range:
        expected = n + k - 1
        if topology.edge_count != expected:
            v.append(f"edge-count: a tree on {n + k} nodes needs {expected} edges, got {topology.edge_count}")
        for j, d in enumerate(topology.steiner_degrees()):
            if d != 3:
                v.append(f"steiner-degree: s{j} has degree {d} (expected exactly 3)")
        for j, d in enumerate(topology.terminal_degrees()):
            if not 1 <= d <= 3:
                v.append(f"terminal-degree: t{j} has degree {d} (expected 1 to 3)")
        if not _is_connected(topology):
            v.append("connectivity: graph is not connected")

    return TopologyValidation(ok=not v, violations=tuple(v))


def _is_connected(topology: SteinerTopology) -> bool:
    total = topology.n + topology.k
    if total == 0:
        return False
    # Node ids: terminals 0..n-1, steiner n..n+k-1.
    adj: list[list[int]] = [[] for _ in range(total)]
    for i, j in topology.edges_T:
        adj[i].append(j)
        adj[j].append(i)
    for j, i in topology.edges_TS:
        adj[j].append(topology.n + i)
        adj[topology.n + i].append(j)
    for m, l in topology.edges_S:
        adj[topology.n + m].append(topology.n + l)
        adj[topology.n + l].append(topology.n + m)
    seen = [False] * total
    stack = [0]
    seen[0] = True
    count = 0
    while stack:
        u = stack.pop()
        count += 1
        for w in adj[u]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return count == total


def steiner_forest_components(topology: SteinerTopology) -> list[list[int]]:
    """Connected components of the Steiner-Steiner subgraph.

    Returns a partition of ``{0, ..., k-1}`` as sorted lists, ordered by
    smallest member. Steiner points with no Steiner neighbor form
    singletons.
    """
    adj: dict[int, list[int]] = {i: [] for i in range(topology.k)}
    for m, l in topology.edges_S:
        adj[m].append(l)
        adj[l].append(m)
    seen: set[int] = set()
    components: list[list[int]] = []
    for start in range(topology.k):
        if start in seen:
            continue
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        components.append(sorted(comp))
    components.sort(key=lambda c: c[0])
    return components


def _edge_segments(tree: SteinerTree) -> list[tuple[NodeRef, NodeRef, np.ndarray, np.ndarray]]:
    return [(a, b, tree.position_of(a), tree.position_of(b)) for a, b in tree.topology.all_edges()]


def tree_length(tree: SteinerTree) -> float:
    """Sum of Euclidean edge lengths over the whole tree."""
    total = 0.0
    for _, _, pa, pb in _edge_segments(tree):
        total += math.hypot(pa[0] - pb[0], pa[1] - pb[1])
    return total


def min_edge_length(tree: SteinerTree) -> float:
    lengths = [math.hypot(pa[0] - pb[0], pa[1] - pb[1]) for _, _, pa, pb in _edge_segments(tree)]
    return min(lengths) if lengths else 0.0


def _pair_angle(u: np.ndarray, v: np.ndarray) -> float:
    # atan2 form is stable for nearly parallel and nearly opposite directions
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), dot)


def check_geometric_conditions(tree: SteinerTree, angle_tol: float = 1e-6) -> GeometricConditionReport:
    """Measure edge lengths and meeting angles against the 120-degree rules.

    The report satisfies the angle condition when every Steiner meeting
    angle is within ``angle_tol`` of 120 degrees and no two edges anywhere
    meet at less than 120 degrees minus ``angle_tol``.

    Raises:
        DegenerateEdgeError: if any edge is shorter than the coincidence
            threshold; angles are undefined there.
    """
    segments = _edge_segments(tree)
    min_len = math.inf
    for a, b, pa, pb in segments:
        length = math.hypot(pa[0] - pb[0], pa[1] - pb[1])
        if length <= COINCIDENT_THRESHOLD:
            raise DegenerateEdgeError(f"coincident nodes: edge {a}-{b} has length {length:.3e}")
        min_len = min(min_len, length)
    if not segments:
        min_len = 0.0

    # Unit directions of incident edges, grouped per node.
    incident: dict[NodeRef, list[np.ndarray]] = {}
    for a, b, pa, pb in segments:
        d = pb - pa
        u = d / np.linalg.norm(d)
        incident.setdefault(a, []).append(u)
        incident.setdefault(b, []).append(-u)

    max_dev = 0.0
    min_angle = math.pi
    for ref, dirs in incident.items():
        for i in range(len(dirs)):
            for j in range(i + 1, len(dirs)):
                angle = _pair_angle(dirs[i], dirs[j])
                min_angle = min(min_angle, angle)
                if ref.kind is NodeKind.STEINER:
                    max_dev = max(max_dev, abs(angle - STEINER_ANGLE))

    satisfied = max_dev <= angle_tol and min_angle >= STEINER_ANGLE - angle_tol
    return GeometricConditionReport(
        min_edge_length=float(min_len),
        max_steiner_angle_deviation=float(max_dev),
        min_pairwise_angle=float(min_angle),
        satisfies_angle_condition=bool(satisfied),
    )
