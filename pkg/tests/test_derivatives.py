import math

import numpy as np
import pytest

from steineradapt import (
    DegenerateEdgeError,
    EdgeTermKind,
    SteinerTopology,
    SteinerTree,
    cost,
    edge_projection,
    edge_terms,
    gradient_s,
    hessian_ss,
    mixed_ts,
    tree_length,
)
from conftest import FD_STEP, fd_gradient_s, fd_hessian_ss, fd_mixed_ts, random_valid_tree, relative_error


def star3() -> SteinerTopology:
    return SteinerTopology(n=3, k=1, edges_TS={(0, 0), (1, 0), (2, 0)})


def double_y() -> SteinerTopology:
    return SteinerTopology(n=4, k=2, edges_TS={(0, 0), (1, 0), (2, 1), (3, 1)}, edges_S={(0, 1)})


class TestEdgeProjection:
    def test_unit_x_axis(self):
        assert np.allclose(edge_projection([1.0, 0.0]), [[0, 0], [0, 1]])

    def test_scaling(self):
        assert np.allclose(edge_projection([2.0, 0.0]), [[0, 0], [0, 0.5]])

    def test_diagonal_edge_of_right_triangle(self):
        p = edge_projection([0.211, 0.211])
        assert np.allclose(p, [[1.675, -1.675], [-1.675, 1.675]], atol=3e-3)

    def test_matches_finite_differences_of_unit_vector(self):
        # edge_projection is the derivative of u -> u/|u|
        u = np.array([2.0, 0.0])
        fd = np.zeros((2, 2))
        for j in range(2):
            plus = u.copy()
            minus = u.copy()
            plus[j] += FD_STEP
            minus[j] -= FD_STEP
            fd[:, j] = (plus / np.linalg.norm(plus) - minus / np.linalg.norm(minus)) / (2 * FD_STEP)
        assert relative_error(edge_projection(u), fd) < 1e-9

    def test_properties_on_random_vectors(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = rng.normal(size=2)
            if np.linalg.norm(u) < 1e-3:
                continue
            p = edge_projection(u)
            assert np.allclose(p, p.T)
            eigs = np.linalg.eigvalsh(p)
            assert eigs[0] >= -1e-14
            assert np.linalg.matrix_rank(p, tol=1e-10) == 1
            assert np.allclose(p @ u, 0.0, atol=1e-12)

    def test_degenerate_vector_rejected(self):
        with pytest.raises(DegenerateEdgeError):
            edge_projection([0.0, 1e-13])


class TestCost:
    def test_single_edge(self):
        topo = SteinerTopology(n=2, k=0, edges_T={(0, 1)})
        tree = SteinerTree.from_arrays(topo, [(0, 0), (3, 4)], np.zeros((0, 2)))
        assert cost(tree) == pytest.approx(5.0)

    def test_agrees_with_tree_length(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            assert cost(tree) == pytest.approx(tree_length(tree), rel=1e-14)

    def test_example_tree_value(self, example1_tree):
        assert cost(example1_tree) == pytest.approx(1.932, abs=3e-3)

    def test_degenerate_edge_raises(self):
        tree = SteinerTree.from_arrays(star3(), [(0, 0), (1, 0), (0, 1)], [(0, 0)])
        with pytest.raises(DegenerateEdgeError):
            cost(tree)


class TestGradient:
    def test_zero_at_symmetric_center(self):
        angles = [0.3, 0.3 + 2 * math.pi / 3, 0.3 + 4 * math.pi / 3]
        terminals = [(math.cos(a), math.sin(a)) for a in angles]
        tree = SteinerTree.from_arrays(star3(), terminals, [(0.0, 0.0)])
        assert np.linalg.norm(gradient_s(tree)) < 1e-12

    def test_small_at_printed_optimum(self):
        tree = SteinerTree.from_arrays(star3(), [(0, 0), (1, 0), (0, 1)], [(0.211, 0.211)])
        assert np.linalg.norm(gradient_s(tree)) < 5e-3

    def test_displaced_point_matches_finite_differences(self):
        tree = SteinerTree.from_arrays(star3(), [(0, 0), (1, 0), (0, 1)], [(0.3, 0.3)])
        assert relative_error(gradient_s(tree), fd_gradient_s(tree)) < 1e-6

    def test_random_trees_match_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            assert relative_error(gradient_s(tree), fd_gradient_s(tree)) < 1e-5

    def test_subvector_norm_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            g = gradient_s(tree).reshape(-1, 2)
            assert (np.linalg.norm(g, axis=1) <= 3.0 + 1e-12).all()


class TestHessian:
    def test_right_triangle_golden_values(self, example1_tree):
        h = hessian_ss(example1_tree).to_dense()
        assert np.allclose(h, [[2.898, -1.061], [-1.061, 2.898]], atol=2e-3)

    def test_symmetric_star_is_isotropic(self):
        # three unit edges at 120 degrees: projections sum to 1.5 I
        angles = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
        terminals = [(math.cos(a), math.sin(a)) for a in angles]
        tree = SteinerTree.from_arrays(star3(), terminals, [(0.0, 0.0)])
        assert np.allclose(hessian_ss(tree).to_dense(), 1.5 * np.eye(2), atol=1e-12)

    def test_random_trees_match_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            assert relative_error(hessian_ss(tree).to_dense(), fd_hessian_ss(tree)) < 1e-5

    def test_block_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            tree = random_valid_tree(rng, int(rng.integers(4, 7)))
            h = hessian_ss(tree)
            for (i, j), block in h.blocks.items():
                assert np.allclose(block, h.block(j, i).T, atol=1e-14)

    def test_off_diagonal_sparsity_matches_steiner_edges(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            tree = random_valid_tree(rng, int(rng.integers(4, 7)))
            h = hessian_ss(tree)
            stored_off = {(i, j) for i, j in h.blocks if i != j}
            expected = set()
            for m, l in tree.topology.edges_S:
                expected.add((m, l))
                expected.add((l, m))
            assert stored_off == expected
            for i in range(tree.k):
                row = [key for key in h.blocks if key[0] == i]
                assert len(row) <= 4


class TestMixedPartial:
    def test_right_triangle_golden_matrix(self, example1_tree):
        printed = np.array(
            [
                [-1.673, 1.673, -0.082, -0.306, -1.143, -0.306],
                [1.673, -1.673, -0.306, -1.143, -0.306, -0.082],
            ]
        )
        assert np.allclose(mixed_ts(example1_tree).to_dense(), printed, atol=2e-3)

    def test_unattached_terminal_has_no_block(self):
        # t0 hangs off t1 by a terminal-terminal edge; only t1..t3 touch the
        # Steiner point, so the t0 block column must be absent entirely.
        topo = SteinerTopology(
            n=4, k=1, edges_T={(0, 1)}, edges_TS={(1, 0), (2, 0), (3, 0)}
        )
        tree = SteinerTree.from_arrays(
            topo, [(-2.0, 0.0), (0.0, 0.0), (1.5, 1.0), (1.5, -1.0)], [(0.8, 0.0)]
        )
        m = mixed_ts(tree)
        assert all(j != 0 for _, j in m.blocks)
        assert relative_error(m.to_dense(), fd_mixed_ts(tree)) < 1e-5

    def test_random_trees_match_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            assert relative_error(mixed_ts(tree).to_dense(), fd_mixed_ts(tree)) < 1e-5

    def test_sparsity_matches_terminal_steiner_edges(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            m = mixed_ts(tree)
            assert set(m.blocks) == {(i, j) for j, i in tree.topology.edges_TS}
            for i in range(tree.k):
                assert sum(1 for key in m.blocks if key[0] == i) <= 3

    def test_translation_identity_rows(self):
        # uniform translation of all nodes leaves the gradient unchanged, so
        # Hessian row sums cancel mixed-partial row sums exactly
        rng = np.random.default_rng(9)
        for _ in range(10):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            h = hessian_ss(tree)
            m = mixed_ts(tree)
            for i in range(tree.k):
                total = np.zeros((2, 2))
                for (r, c), block in h.blocks.items():
                    if r == i:
                        total += block
                for (r, c), block in m.blocks.items():
                    if r == i:
                        total += block
                assert np.abs(total).max() < 1e-12


class TestEdgeTerms:
    def test_right_triangle_counts_and_sum(self, example1_tree):
        terms = edge_terms(example1_tree)
        kinds = [t.kind for t in terms]
        assert kinds.count(EdgeTermKind.TERMINAL_STEINER) == 3
        assert kinds.count(EdgeTermKind.STEINER_STEINER) == 0
        total = sum(t.contribution.to_dense() for t in terms)
        assert np.allclose(total, [[2.898, -1.061], [-1.061, 2.898]], atol=2e-3)

    def test_double_y_counts(self):
        tree = SteinerTree.from_arrays(
            double_y(), [(-1, 1), (-1, -1), (1, 1), (1, -1)], [(-0.4, 0), (0.4, 0)]
        )
        kinds = [t.kind for t in edge_terms(tree)]
        assert kinds.count(EdgeTermKind.TERMINAL_STEINER) == 4
        assert kinds.count(EdgeTermKind.STEINER_STEINER) == 1

    def test_sum_reproduces_hessian_exactly(self):
        rng = np.random.default_rng(10)
        for _ in range(25):
            tree = random_valid_tree(rng, int(rng.integers(3, 7)))
            total = sum(t.contribution.to_dense() for t in edge_terms(tree))
            assert np.abs(total - hessian_ss(tree).to_dense()).max() < 1e-12

    def test_block_patterns(self):
        rng = np.random.default_rng(11)
        tree = random_valid_tree(rng, 6)
        for term in edge_terms(tree):
            blocks = term.contribution.blocks
            if term.kind is EdgeTermKind.TERMINAL_STEINER:
                assert len(blocks) == 1
                ((i, j),) = blocks
                assert i == j == term.edge[1].index
            else:
                m = term.edge[0].index
                l = term.edge[1].index
                assert set(blocks) == {(m, m), (m, l), (l, m), (l, l)}
                assert np.allclose(blocks[(m, m)], blocks[(l, l)])
                assert np.allclose(blocks[(m, l)], -blocks[(m, m)])
                assert np.allclose(blocks[(l, m)], -blocks[(m, m)])

    def test_every_term_nonnegative_definite(self):
        rng = np.random.default_rng(12)
        for _ in range(15):
            tree = random_valid_tree(rng, int(rng.integers(4, 7)))
            for term in edge_terms(tree):
                eigs = np.linalg.eigvalsh(term.contribution.to_dense())
                assert eigs[0] >= -1e-12


def test_rotation_equivariance_of_blocks():
    rng = np.random.default_rng(13)
    for _ in range(10):
        tree = random_valid_tree(rng, int(rng.integers(3, 7)))
        theta = rng.uniform(0, 2 * math.pi)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        rotated = SteinerTree.from_arrays(
            tree.topology, tree.terminal_array() @ rot.T, tree.steiner_array() @ rot.T
        )
        h0 = hessian_ss(tree)
        h1 = hessian_ss(rotated)
        for key, block in h0.blocks.items():
            assert np.abs(rot @ block @ rot.T - h1.block(*key)).max() < 1e-10
        m0 = mixed_ts(tree)
        m1 = mixed_ts(rotated)
        for key, block in m0.blocks.items():
            assert np.abs(rot @ block @ rot.T - m1.block(*key)).max() < 1e-10
