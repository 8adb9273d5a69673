"""Ground-truth machinery for small instances.

Two services live here: minimizing the tree length over Steiner positions
for a fixed topology, and exhaustively solving small instances by trying
every full topology. Both are used to verify the first-order adaptation
and to detect topology changes under large perturbations.

The fixed-topology objective is convex in the Steiner positions, so any
descent method that reaches the gradient tolerance certifies the optimum.
The minimizer alternates reweighted linear solves (each solve places the
free nodes at the weighted average of their neighbors, weights one over
edge length) with Newton polishing on the analytic Hessian. Optima that
want two nodes coincident are nonsmooth; they are handled by contracting
the nearly-zero edge, re-optimizing the smaller network, and checking the
subgradient condition that splitting the merged node cannot shorten the
tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trees import (
    COINCIDENT_THRESHOLD,
    NodeKind,
    NodeRef,
    Point2,
    SteinerTopology,
    SteinerTree,
    check_geometric_conditions,
    tree_length,
    validate_topology,
)

# Smoothing floor for edge lengths inside the minimizer; the objective's
# terms are non-differentiable at zero-length edges.
_SMOOTH_EPS = 1e-12
# Final edge length at or below this counts as a node coincidence.
_COLLAPSE_LEN = 1e-9
# Relative edge length below which a contraction is attempted. Eager on
# purpose: a wrong attempt is caught by the split test and remembered.
_CONTRACT_TRIGGER = 2e-2


@dataclass(frozen=True)
class FullTopology(SteinerTopology):
    """A topology with k = n - 2, degree-1 terminals and no terminal-terminal edges."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.k != self.n - 2:
            raise ValueError(f"full topology needs k = n - 2, got k={self.k}, n={self.n}")
        if self.edges_T:
            raise ValueError("full topology has no terminal-terminal edges")
        if any(d != 1 for d in self.terminal_degrees()):
            raise ValueError("full topology terminals must have degree 1")
        if any(d != 3 for d in self.steiner_degrees()):
            raise ValueError("full topology steiner points must have degree 3")


@dataclass(frozen=True)
class OptimizeResult:
    """Outcome of a fixed-topology minimization.

    ``collapsed_edges`` lists edges whose final length is at or below the
    coincidence threshold; the optimum then lives on the boundary where
    those nodes merge. When that happens ``gradient_norm`` is the
    first-order optimality residual of the merged (reduced) network, since
    the smooth gradient is undefined at coincident nodes.
    """

    tree: SteinerTree
    gradient_norm: float
    iterations: int
    collapsed_edges: frozenset[tuple[NodeRef, NodeRef]]
    converged: bool


@dataclass(frozen=True)
class ExactSolveResult:
    """Best tree over all topologies, with every co-optimal tree reported.

    ``ties`` holds all optima within the tie tolerance ordered by their
    canonical topology encoding; ``tree`` is ``ties[0]``. A single-element
    ``ties`` means the optimum is unique.
    """

    tree: SteinerTree
    length: float
    ties: tuple[SteinerTree, ...]


def _points_array(points) -> np.ndarray:
    seq = list(points)
    if seq and isinstance(seq[0], Point2):
        return np.array([[p.x, p.y] for p in seq], dtype=float)
    return np.asarray(seq, dtype=float).reshape(len(seq), 2)


# ---------------------------------------------------------------------------
# Internal network form: nodes 0..F-1 are fixed, F..F+nfree-1 are free.
# Every edge vector is an affine function of the free coordinates,
# u_e = A_e @ s + c_e, which makes reweighted solves and Hessian assembly
# direct.
# ---------------------------------------------------------------------------


@dataclass
class _Net:
    fixed: np.ndarray  # (F, 2)
    nfree: int
    edges: list[tuple[int, int]]


def _incidence(net: _Net) -> tuple[np.ndarray, np.ndarray]:
    nfix = len(net.fixed)
    A = np.zeros((len(net.edges), net.nfree))
    c = np.zeros((len(net.edges), 2))
    for e, (p, q) in enumerate(net.edges):
        if p >= nfix:
            A[e, p - nfix] += 1.0
        else:
            c[e] += net.fixed[p]
        if q >= nfix:
            A[e, q - nfix] -= 1.0
        else:
            c[e] -= net.fixed[q]
    return A, c


def _smooth_lengths(u: np.ndarray) -> np.ndarray:
    return np.sqrt((u * u).sum(axis=1) + _SMOOTH_EPS * _SMOOTH_EPS)


def _gradient(A: np.ndarray, c: np.ndarray, s: np.ndarray):
    u = A @ s + c
    d = _smooth_lengths(u)
    g = A.T @ (u / d[:, None])
    return g, float(np.linalg.norm(g)), d


def _irls_step(A: np.ndarray, c: np.ndarray, s: np.ndarray) -> np.ndarray:
    u = A @ s + c
    w = 1.0 / _smooth_lengths(u)
    m = A.T @ (A * w[:, None])
    rhs = -(A.T @ (c * w[:, None]))
    try:
        return np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(m, rhs, rcond=None)[0]


def _hessian(A: np.ndarray, c: np.ndarray, s: np.ndarray) -> np.ndarray:
    u = A @ s + c
    d = _smooth_lengths(u)
    uhat = u / d[:, None]
    proj = (np.eye(2) - uhat[:, :, None] * uhat[:, None, :]) / d[:, None, None]
    nfree = A.shape[1]
    H = np.zeros((2 * nfree, 2 * nfree))
    for e in range(A.shape[0]):
        nz = np.nonzero(A[e])[0]
        for i in nz:
            for j in nz:
                H[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] += A[e, i] * A[e, j] * proj[e]
    return H


def _newton(A, c, s, grad_tol, max_steps):
    """Polish with damped Newton steps, accepting on gradient-norm decrease."""
    g, gnorm, _ = _gradient(A, c, s)
    steps = 0
    while steps < max_steps:
        if gnorm < grad_tol:
            return s, gnorm, steps, True
        H = _hessian(A, c, s)
        try:
            delta = np.linalg.solve(H, -g.reshape(-1)).reshape(-1, 2)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        improved = False
        for _ in range(10):
            s_try = s + lam * delta
            g_try, gnorm_try, _ = _gradient(A, c, s_try)
            if gnorm_try < gnorm * (1.0 - 0.25 * lam) or gnorm_try < grad_tol:
                s, g, gnorm = s_try, g_try, gnorm_try
                improved = True
                break
            lam *= 0.5
        steps += 1
        if not improved:
            break
    return s, gnorm, steps, gnorm < grad_tol


def _contract(net: _Net, s: np.ndarray, row: int):
    """Merge the endpoints of one edge; returns the smaller net and a rebuilder."""
    nfix = len(net.fixed)
    a, b = net.edges[row]
    if b < nfix:
        a, b = b, a
    # b is free and merges into a (a may be fixed)
    removed = b - nfix

    def map_node(x: int) -> int:
        if x == b:
            x = a
        if x >= nfix and x - nfix > removed:
            return x - 1
        return x

    edges = [(map_node(p), map_node(q)) for e, (p, q) in enumerate(net.edges) if e != row]
    child = _Net(fixed=net.fixed, nfree=net.nfree - 1, edges=edges)
    s_child = np.delete(s, removed, axis=0)
    if a >= nfix:
        merged = a - nfix if a - nfix < removed else a - nfix - 1
        s_child[merged] = 0.5 * (s[removed] + s[a - nfix])

    def rebuild(cs: np.ndarray) -> np.ndarray:
        full = np.insert(cs, removed, 0.0, axis=0)
        full[removed] = net.fixed[a] if a < nfix else cs[a - nfix if a - nfix < removed else a - nfix - 1]
        return full

    return child, s_child, rebuild


def _split_improves(net: _Net, s: np.ndarray, row: int) -> bool:
    """Whether pulling apart the merged endpoints of ``row`` would shorten the tree.

    At a merged node the objective has a unit subgradient ball per
    coincident edge, so the merge is optimal iff the unit vectors of each
    endpoint's other edges sum to norm at most one (plus a ball per
    additional coincident edge).
    """
    nfix = len(net.fixed)
    pos = np.vstack([net.fixed, s]) if s.size else net.fixed
    for x in net.edges[row]:
        if x < nfix:
            continue
        r = np.zeros(2)
        slack = 0.0
        for e, (p, q) in enumerate(net.edges):
            if e == row or x not in (p, q):
                continue
            other = q if x == p else p
            u = pos[x] - pos[other]
            d = math.hypot(u[0], u[1])
            if d <= _COLLAPSE_LEN:
                slack += 1.0
            else:
                r += u / d
        if np.linalg.norm(r) > 1.0 + slack + 1e-9:
            return True
    return False


def _minimize(net: _Net, s0: np.ndarray, grad_tol: float, budget: int, scale: float):
    """Returns (positions, optimality residual, iterations used, converged)."""
    if net.nfree == 0:
        return np.zeros((0, 2)), 0.0, 0, True
    A, c = _incidence(net)
    # edges between two fixed nodes are constants and can never be contracted
    contractible = np.abs(A).sum(axis=1) > 0
    s = np.asarray(s0, dtype=float).reshape(net.nfree, 2).copy()
    it = 0
    gnorm = math.inf
    rejected: dict[int, float] = {}
    newton_cooldown = 0
    while it < budget:
        s = _irls_step(A, c, s)
        it += 1
        _, gnorm, d = _gradient(A, c, s)
        if gnorm < grad_tol:
            return s, gnorm, it, True
        shortest = int(np.argmin(np.where(contractible, d, math.inf)))
        if d[shortest] < _CONTRACT_TRIGGER * scale and (
            shortest not in rejected or d[shortest] < 0.3 * rejected[shortest]
        ):
            child, s_child, rebuild = _contract(net, s, shortest)
            cs, cg, used, conv = _minimize(child, s_child, grad_tol, budget - it, scale)
            it += used
            if conv:
                composed = rebuild(cs)
                if not _split_improves(net, composed, shortest):
                    return composed, cg, it, True
            rejected[shortest] = d[shortest]
            continue
        if newton_cooldown > 0:
            newton_cooldown -= 1
        elif it >= 2 and float(d.min()) > 1e-7 * scale:
            s, gnorm, used, ok = _newton(A, c, s, grad_tol, min(30, budget - it))
            it += used
            if ok:
                return s, gnorm, it, True
            # a failed burst means we are not yet in the Newton basin
            newton_cooldown = 4
    return s, gnorm, it, False


def _steiner_edge_list(topology: SteinerTopology) -> list[tuple[int, int]]:
    n = topology.n
    edges = [(j, n + i) for j, i in sorted(topology.edges_TS)]
    edges += [(n + m, n + l) for m, l in sorted(topology.edges_S)]
    return edges


def _edge_refs(topology: SteinerTopology) -> list[tuple[NodeRef, NodeRef]]:
    refs = [(NodeRef.terminal(j), NodeRef.steiner(i)) for j, i in sorted(topology.edges_TS)]
    refs += [(NodeRef.steiner(m), NodeRef.steiner(l)) for m, l in sorted(topology.edges_S)]
    return refs


def _instance_scale(t: np.ndarray) -> float:
    span = t.max(axis=0) - t.min(axis=0)
    return max(float(np.hypot(span[0], span[1])), 1e-9)


def _optimize_on(t: np.ndarray, topology: SteinerTopology, s0: np.ndarray, grad_tol: float, budget: int):
    net = _Net(fixed=t, nfree=topology.k, edges=_steiner_edge_list(topology))
    return _minimize(net, s0, grad_tol, budget, _instance_scale(t))


def optimize_fixed_topology(
    terminals,
    topology: SteinerTopology,
    initial_s,
    grad_tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> OptimizeResult:
    """Minimize total length over Steiner positions for a known topology.

    The objective is convex for a fixed topology, so the returned point is
    its global minimum up to degeneracies. Node coincidences at the
    optimum are reported through ``collapsed_edges`` rather than hidden.

    Raises:
        ValueError: invalid topology, nonpositive tolerance, or an initial
            position count that does not match the topology.
    """
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")
    validation = validate_topology(topology)
    if not validation.ok:
        raise ValueError("invalid topology: " + "; ".join(validation.violations))
    t = _points_array(terminals)
    if t.shape[0] != topology.n:
        raise ValueError(f"expected {topology.n} terminals, got {t.shape[0]}")
    s0 = _points_array(initial_s) if topology.k else np.zeros((0, 2))
    if s0.shape[0] != topology.k:
        raise ValueError(f"expected {topology.k} initial steiner positions, got {s0.shape[0]}")

    s, gnorm, iters, converged = _optimize_on(t, topology, s0, grad_tol, max_iterations)
    tree = SteinerTree.from_arrays(topology, t, s)
    pos = np.vstack([t, s]) if s.size else t
    collapsed = []
    for (ra, rb), (p, q) in zip(_edge_refs(topology), _steiner_edge_list(topology)):
        if math.hypot(*(pos[p] - pos[q])) <= _COLLAPSE_LEN:
            collapsed.append((ra, rb))
    return OptimizeResult(
        tree=tree,
        gradient_norm=gnorm,
        iterations=iters,
        collapsed_edges=frozenset(collapsed),
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Enumeration and comparison of topologies
# ---------------------------------------------------------------------------


def enumerate_full_topologies(n: int) -> list[FullTopology]:
    """Every full topology on ``n`` labeled terminals, 3 <= n <= 6.

    Built incrementally: each new terminal subdivides one existing edge
    with a fresh Steiner point. That yields each full topology exactly
    once up to Steiner relabeling, with counts 1, 3, 15, 105.
    """
    if not 3 <= n <= 6:
        raise ValueError(f"terminal count must be between 3 and 6, got {n}")
    t = NodeKind.TERMINAL
    s = NodeKind.STEINER
    states: list[list[tuple[tuple[NodeKind, int], tuple[NodeKind, int]]]] = [
        [((t, 0), (s, 0)), ((t, 1), (s, 0)), ((t, 2), (s, 0))]
    ]
    for term in range(3, n):
        fresh = (s, term - 2)
        grown = []
        for edges in states:
            for pos in range(len(edges)):
                a, b = edges[pos]
                rest = edges[:pos] + edges[pos + 1 :]
                grown.append(rest + [(a, fresh), (fresh, b), ((t, term), fresh)])
        states = grown

    out = []
    for edges in states:
        edges_ts = []
        edges_ss = []
        for a, b in edges:
            if a[0] is t:
                edges_ts.append((a[1], b[1]))
            elif b[0] is t:
                edges_ts.append((b[1], a[1]))
            else:
                edges_ss.append((a[1], b[1]))
        out.append(FullTopology(n=n, k=n - 2, edges_TS=frozenset(edges_ts), edges_S=frozenset(edges_ss)))
    return out


def canonical_encoding(topology: SteinerTopology) -> str:
    """A string invariant of the topology under Steiner relabeling.

    Terminals keep their labels; Steiner nodes are anonymous. Two valid
    topologies are equal up to Steiner renumbering iff their encodings
    match. The tree is encoded rooted at terminal 0 with children sorted
    recursively.
    """
    n, k = topology.n, topology.k
    total = n + k
    adj: list[list[int]] = [[] for _ in range(total)]
    for i, j in topology.edges_T:
        adj[i].append(j)
        adj[j].append(i)
    for j, i in topology.edges_TS:
        adj[j].append(n + i)
        adj[n + i].append(j)
    for m, l in topology.edges_S:
        adj[n + m].append(n + l)
        adj[n + l].append(n + m)

    visited = [False] * total

    def enc(u: int, parent: int) -> str:
        visited[u] = True
        label = f"t{u}" if u < n else "s"
        kids = sorted(enc(w, u) for w in adj[u] if w != parent)
        return label + "(" + ",".join(kids) + ")" if kids else label

    code = enc(0, -1)
    if not all(visited):
        raise ValueError("topology must be connected to encode")
    return code


def compare_topologies(a: SteinerTopology, b: SteinerTopology) -> bool:
    """True iff ``a`` and ``b`` coincide after some renumbering of Steiner points."""
    if (a.n, a.k) != (b.n, b.k):
        return False
    if (len(a.edges_T), len(a.edges_TS), len(a.edges_S)) != (len(b.edges_T), len(b.edges_TS), len(b.edges_S)):
        return False
    return canonical_encoding(a) == canonical_encoding(b)


# ---------------------------------------------------------------------------
# Exhaustive solving
# ---------------------------------------------------------------------------


def _seed_positions(t: np.ndarray, topology: SteinerTopology, salt: int) -> np.ndarray:
    """Deterministic start: each Steiner point at the (unit-weight) average of
    its neighbors, plus a small seeded jitter to break symmetric degeneracies."""
    net = _Net(fixed=t, nfree=topology.k, edges=_steiner_edge_list(topology))
    A, c = _incidence(net)
    base = np.linalg.solve(A.T @ A, -(A.T @ c))
    rng = np.random.default_rng(0x5EED + salt)
    return base + rng.normal(scale=1e-3 * _instance_scale(t), size=base.shape)


def _contract_collapsed(tree: SteinerTree, final_pos: np.ndarray, lengths_by_edge) -> SteinerTree | None:
    """Merge coincident nodes and rewire; None if the result is not a valid tree."""
    topo = tree.topology
    n, k = topo.n, topo.k
    total = n + k
    parent = list(range(total))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> None:
        rx, ry = find(x), find(y)
        if rx != ry:
            # terminals (ids < n) win representative elections
            if ry < rx:
                rx, ry = ry, rx
            parent[ry] = rx

    for (p, q), length in lengths_by_edge:
        if length <= _COLLAPSE_LEN:
            union(p, q)

    clusters: dict[int, list[int]] = {}
    for node in range(total):
        clusters.setdefault(find(node), []).append(node)
    for members in clusters.values():
        if sum(1 for m in members if m < n) > 1:
            return None  # two terminals forced coincident

    new_steiner_reps = sorted(rep for rep in clusters if rep >= n)
    steiner_renum = {rep: idx for idx, rep in enumerate(new_steiner_reps)}

    edges_t: set[tuple[int, int]] = set()
    edges_ts: set[tuple[int, int]] = set()
    edges_s: set[tuple[int, int]] = set()
    for (p, q), length in lengths_by_edge:
        rp, rq = find(p), find(q)
        if rp == rq:
            continue
        if rp < n and rq < n:
            edges_t.add((rp, rq))
        elif rp < n:
            edges_ts.add((rp, steiner_renum[rq]))
        elif rq < n:
            edges_ts.add((rq, steiner_renum[rp]))
        else:
            edges_s.add((steiner_renum[rp], steiner_renum[rq]))
    for i, j in topo.edges_T:
        edges_t.add((find(i), find(j)))

    reduced = SteinerTopology(
        n=n,
        k=len(new_steiner_reps),
        edges_T=frozenset(edges_t),
        edges_TS=frozenset(edges_ts),
        edges_S=frozenset(edges_s),
    )
    if not validate_topology(reduced).ok:
        return None
    s_new = np.array([final_pos[rep] for rep in new_steiner_reps]).reshape(len(new_steiner_reps), 2)
    return SteinerTree.from_arrays(reduced, tree.terminal_array(), s_new)


def solve_exact(terminals, grad_tol: float = 1e-10, max_iterations: int = 50_000) -> ExactSolveResult:
    """Shortest interconnecting tree over 2 to 6 pairwise-distinct terminals.

    Optimizes every full topology, merges any node coincidences at the
    per-topology optima into valid reduced trees, and returns the shortest.
    Co-optimal trees (within a 1e-9 relative tie tolerance) are all
    reported, ordered by canonical topology encoding.

    Raises:
        ValueError: terminal count out of range or coincident terminals.
    """
    t = _points_array(terminals)
    n = t.shape[0]
    if not 2 <= n <= 6:
        raise ValueError(f"terminal count must be between 2 and 6, got {n}")
    for i in range(n):
        for j in range(i + 1, n):
            if math.hypot(*(t[i] - t[j])) <= COINCIDENT_THRESHOLD:
                raise ValueError(f"coincident terminals t{i} and t{j}")

    if n == 2:
        topo = SteinerTopology(n=2, k=0, edges_T=frozenset({(0, 1)}))
        tree = SteinerTree.from_arrays(topo, t, np.zeros((0, 2)))
        return ExactSolveResult(tree=tree, length=tree_length(tree), ties=(tree,))

    candidates: list[tuple[float, SteinerTree]] = []
    for salt, topo in enumerate(enumerate_full_topologies(n)):
        s0 = _seed_positions(t, topo, salt)
        s, gnorm, _, converged = _optimize_on(t, topo, s0, grad_tol, max_iterations)
        if not converged:
            continue
        pos = np.vstack([t, s])
        lengths = [((p, q), math.hypot(*(pos[p] - pos[q]))) for p, q in _steiner_edge_list(topo)]
        full_tree = SteinerTree.from_arrays(topo, t, s)
        if any(length <= _COLLAPSE_LEN for _, length in lengths):
            reduced = _contract_collapsed(full_tree, pos, lengths)
            if reduced is None:
                continue
            candidates.append((tree_length(reduced), reduced))
        else:
            candidates.append((tree_length(full_tree), full_tree))

    if not candidates:
        raise RuntimeError("no topology produced a valid optimum")
    best = min(length for length, _ in candidates)
    tie_tol = 1e-9 * max(1.0, best)
    pool = [(canonical_encoding(tr.topology), length, tr) for length, tr in candidates if length <= best + tie_tol]
    pool.sort(key=lambda item: (item[0], item[1]))
    deduped: list[tuple[str, float, SteinerTree]] = []
    for code, length, tr in pool:
        if not deduped or deduped[-1][0] != code:
            deduped.append((code, length, tr))

    winner = deduped[0][2]
    report = check_geometric_conditions(winner, angle_tol=1e-6)
    if not (validate_topology(winner.topology).ok and report.satisfies_angle_condition):
        raise RuntimeError("exact solve produced a tree failing its own validity checks")
    return ExactSolveResult(tree=winner, length=deduped[0][1], ties=tuple(tr for _, _, tr in deduped))
