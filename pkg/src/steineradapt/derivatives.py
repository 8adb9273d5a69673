"""Analytic derivatives of the tree-length cost with respect to node positions.

The cost of a tree is the sum of its Euclidean edge lengths. Only edges
touching a Steiner point contribute to the Steiner gradient and to the
second partials; terminal-terminal edges are constant in the Steiner
variables. Every second-derivative block is built from the same rank-1
projection ``(I - u u^T / |u|^2) / |u|`` of an edge vector ``u``, which
makes the Steiner Hessian block-sparse: a diagonal block per Steiner
point plus one off-diagonal block per Steiner-Steiner edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateEdgeError
from .trees import COINCIDENT_THRESHOLD, NodeRef, SteinerTree


@dataclass(frozen=True)
class BlockMatrix2:
    """A block_rows x block_cols grid of 2x2 blocks with sparse storage.

    Absent blocks are semantically zero. ``blocks`` maps a (row, col)
    block index to its 2x2 array.
    """

    block_rows: int
    block_cols: int
    blocks: dict[tuple[int, int], np.ndarray]

    def block(self, i: int, j: int) -> np.ndarray:
        """The 2x2 block at (i, j), a zero block if absent."""
        if not (0 <= i < self.block_rows and 0 <= j < self.block_cols):
            raise IndexError(f"block index ({i}, {j}) out of range")
        b = self.blocks.get((i, j))
        return np.zeros((2, 2)) if b is None else b

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((2 * self.block_rows, 2 * self.block_cols))
        for (i, j), b in self.blocks.items():
            dense[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = b
        return dense


class EdgeTermKind(Enum):
    TERMINAL_STEINER = "terminal-steiner"
    STEINER_STEINER = "steiner-steiner"


@dataclass(frozen=True)
class EdgeTerm:
    """One edge's additive contribution to the Steiner Hessian.

    A terminal-Steiner edge contributes a single diagonal block at its
    Steiner index; a Steiner-Steiner edge (m, l) contributes the familiar
    graph-Laplacian pattern: +A at (m,m) and (l,l), -A at (m,l) and (l,m).
    """

    kind: EdgeTermKind
    edge: tuple[NodeRef, NodeRef]
    contribution: BlockMatrix2


def edge_projection(u) -> np.ndarray:
    """``(I - u u^T / |u|^2) / |u|`` for a nonzero 2-vector ``u``.

    Symmetric, nonnegative definite, rank 1, and annihilates ``u``.
    """
    u = np.asarray(u, dtype=float).reshape(2)
    d = float(np.hypot(u[0], u[1]))
    if d <= COINCIDENT_THRESHOLD:
        raise DegenerateEdgeError(f"degenerate edge: |u| = {d:.3e}")
    return (np.eye(2) - np.outer(u, u) / (d * d)) / d


def _projection_stack(u: np.ndarray) -> np.ndarray:
    """Vectorized edge_projection over rows of ``u`` (shape (E, 2) -> (E, 2, 2))."""
    d = np.linalg.norm(u, axis=1)
    if u.shape[0] and float(d.min()) <= COINCIDENT_THRESHOLD:
        e = int(np.argmin(d))
        raise DegenerateEdgeError(f"degenerate edge: row {e} has |u| = {d[e]:.3e}")
    outer = u[:, :, None] * u[:, None, :]
    eye = np.broadcast_to(np.eye(2), outer.shape)
    return (eye - outer / (d * d)[:, None, None]) / d[:, None, None]


def _edge_arrays(tree: SteinerTree):
    """Index arrays and position arrays for the Steiner-relevant edges."""
    ts = sorted(tree.topology.edges_TS)
    ss = sorted(tree.topology.edges_S)
    t = tree.terminal_array()
    s = tree.steiner_array()
    ts_t = np.array([j for j, _ in ts], dtype=int)
    ts_s = np.array([i for _, i in ts], dtype=int)
    ss_m = np.array([m for m, _ in ss], dtype=int)
    ss_l = np.array([l for _, l in ss], dtype=int)
    return t, s, ts_t, ts_s, ss_m, ss_l


def cost(tree: SteinerTree) -> float:
    """Total edge length of the tree; rejects degenerate edges."""
    total = 0.0
    t = tree.terminal_array()
    s = tree.steiner_array()
    for a, b in tree.topology.edges_T:
        total += _checked_length(t[a] - t[b], f"t{a}-t{b}")
    for j, i in tree.topology.edges_TS:
        total += _checked_length(s[i] - t[j], f"t{j}-s{i}")
    for m, l in tree.topology.edges_S:
        total += _checked_length(s[m] - s[l], f"s{m}-s{l}")
    return total


def _checked_length(u: np.ndarray, name: str) -> float:
    d = float(np.hypot(u[0], u[1]))
    if d <= COINCIDENT_THRESHOLD:
        raise DegenerateEdgeError(f"degenerate edge {name}: length {d:.3e}")
    return d


def gradient_s(tree: SteinerTree) -> np.ndarray:
    """Gradient of the cost with respect to the flattened Steiner vector.

    The 2-subvector for Steiner point ``i`` sums the unit vectors pointing
    from each neighbor toward ``i``; at a fixed-topology optimum it
    vanishes.
    """
    t, s, ts_t, ts_s, ss_m, ss_l = _edge_arrays(tree)
    g = np.zeros((tree.k, 2))
    if ts_t.size:
        u = s[ts_s] - t[ts_t]
        d = np.linalg.norm(u, axis=1)
        _reject_degenerate(d)
        np.add.at(g, ts_s, u / d[:, None])
    if ss_m.size:
        u = s[ss_m] - s[ss_l]
        d = np.linalg.norm(u, axis=1)
        _reject_degenerate(d)
        np.add.at(g, ss_m, u / d[:, None])
        np.add.at(g, ss_l, -u / d[:, None])
    return g.reshape(-1)


def _reject_degenerate(d: np.ndarray) -> None:
    if d.size and float(d.min()) <= COINCIDENT_THRESHOLD:
        raise DegenerateEdgeError(f"degenerate edge: length {float(d.min()):.3e}")


def hessian_ss(tree: SteinerTree) -> BlockMatrix2:
    """Second partial of the cost in the Steiner variables, as 2x2 blocks.

    Diagonal block ``i`` sums the edge projections of all edges at Steiner
    point ``i``; the off-diagonal block of an adjacent Steiner pair is the
    negated projection of their connecting edge. Non-adjacent pairs are
    absent (zero).
    """
    t, s, ts_t, ts_s, ss_m, ss_l = _edge_arrays(tree)
    blocks: dict[tuple[int, int], np.ndarray] = {i: np.zeros((2, 2)) for i in range(tree.k)}
    diag = {i: np.zeros((2, 2)) for i in range(tree.k)}
    if ts_t.size:
        proj = _projection_stack(s[ts_s] - t[ts_t])
        for e, i in enumerate(ts_s):
            diag[int(i)] += proj[e]
    off: dict[tuple[int, int], np.ndarray] = {}
    if ss_m.size:
        proj = _projection_stack(s[ss_m] - s[ss_l])
        for e in range(len(ss_m)):
            m, l = int(ss_m[e]), int(ss_l[e])
            diag[m] += proj[e]
            diag[l] += proj[e]
            off[(m, l)] = -proj[e]
            off[(l, m)] = -proj[e]
    blocks = {(i, i): b for i, b in diag.items()}
    blocks.update(off)
    return BlockMatrix2(tree.k, tree.k, blocks)


def mixed_ts(tree: SteinerTree) -> BlockMatrix2:
    """Mixed second partial: Steiner block rows against terminal block columns.

    Block (i, j) is the negated edge projection of the terminal-Steiner
    edge between them when such an edge exists, and absent otherwise.
    """
    t, s, ts_t, ts_s, ss_m, ss_l = _edge_arrays(tree)
    blocks: dict[tuple[int, int], np.ndarray] = {}
    if ts_t.size:
        proj = _projection_stack(s[ts_s] - t[ts_t])
        for e in range(len(ts_t)):
            blocks[(int(ts_s[e]), int(ts_t[e]))] = -proj[e]
    return BlockMatrix2(tree.k, tree.n, blocks)


def edge_terms(tree: SteinerTree) -> list[EdgeTerm]:
    """Per-edge decomposition of the Steiner Hessian.

    Summing every contribution reproduces :func:`hessian_ss` entrywise.
    Each term is nonnegative definite, which is what makes the assembled
    Hessian nonnegative definite before any angle argument is invoked.
    """
    t, s, ts_t, ts_s, ss_m, ss_l = _edge_arrays(tree)
    k = tree.k
    terms: list[EdgeTerm] = []
    if ts_t.size:
        proj = _projection_stack(s[ts_s] - t[ts_t])
        for e in range(len(ts_t)):
            i = int(ts_s[e])
            contribution = BlockMatrix2(k, k, {(i, i): proj[e].copy()})
            terms.append(
                EdgeTerm(
                    kind=EdgeTermKind.TERMINAL_STEINER,
                    edge=(NodeRef.terminal(int(ts_t[e])), NodeRef.steiner(i)),
                    contribution=contribution,
                )
            )
    if ss_m.size:
        proj = _projection_stack(s[ss_m] - s[ss_l])
        for e in range(len(ss_m)):
            m, l = int(ss_m[e]), int(ss_l[e])
            a = proj[e]
            contribution = BlockMatrix2(
                k,
                k,
                {(m, m): a.copy(), (l, l): a.copy(), (m, l): -a, (l, m): -a.copy()},
            )
            terms.append(
                EdgeTerm(
                    kind=EdgeTermKind.STEINER_STEINER,
                    edge=(NodeRef.steiner(m), NodeRef.steiner(l)),
                    contribution=contribution,
                )
            )
    return terms
