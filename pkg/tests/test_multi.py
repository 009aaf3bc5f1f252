import numpy as np
import pytest
from scipy.optimize import minimize

from graphalign.graph import GraphSet, LabeledGraph, compose, invert_permutation, permute_graph, random_permutation
from graphalign import multi
from graphalign.multi import (
    AlignmentError,
    BlockAlignment,
    MultiAlignConfig,
    align_set,
    center_graph,
    extract_alignments,
    fermat_align,
    galign,
    geometric_median,
    multi_align,
    project_consistent,
)
from graphalign.pairwise import is_doubly_stochastic

from conftest import brute_fermat, brute_galign, isomorphic, random_adj, random_graph

FERMAT = MultiAlignConfig(method="fermat")
K3 = LabeledGraph(np.ones((3, 3)) - np.eye(3))
P3 = LabeledGraph.from_edges(3, [(0, 1), (1, 2)])


def permuted_copies(g, n, rng):
    return GraphSet([g] + [permute_graph(g, random_permutation(g.m, rng)) for _ in range(n - 1)])


class TestCenter:
    def test_identical_graphs(self, rng):
        g = random_graph(6, rng)
        for tau in (0.2, 0.5, 0.9):
            c = center_graph(GraphSet([g, g, g, g]), tau)
            assert np.array_equal(c.soft, g.adj) and c.hard == g

    def test_one_edge_difference_ties_up(self):
        a = LabeledGraph.from_edges(3, [(0, 1), (1, 2)])
        b = LabeledGraph.from_edges(3, [(1, 2)])
        c = center_graph(GraphSet([a, b]), 0.5)
        assert c.soft[0, 1] == 0.5 and c.hard.adj[0, 1] == 1.0

    def test_median_against_numerical_oracle(self, rng):
        mats = np.stack([random_adj(4, rng, 0.5) * rng.random() for _ in range(5)])

        def cost(x):
            return np.sum(np.linalg.norm((mats - x.reshape(4, 4)).reshape(5, -1), axis=1))

        ours = geometric_median(mats)
        ref = minimize(cost, mats.mean(axis=0).ravel(), method="Powell", options={"xtol": 1e-10, "ftol": 1e-12})
        assert cost(ours.ravel()) <= ref.fun + 1e-6

    def test_hard_matches_threshold(self, rng):
        gs = GraphSet([random_graph(7, rng) for _ in range(5)])
        c = center_graph(gs, 0.4)
        off = ~np.eye(7, dtype=bool)
        assert np.array_equal(c.hard.adj[off] == 1.0, c.soft[off] >= 0.4)
        assert np.allclose(c.soft, c.soft.T) and c.soft.min() >= 0.0 and c.soft.max() <= 1.0

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            center_graph(GraphSet([K3]), 1.0)


class TestAlignSet:
    def test_identity_and_inverse(self, rng):
        gs = GraphSet([random_graph(5, rng) for _ in range(3)])
        ident = [np.arange(5)] * 3
        assert list(align_set(gs, ident)) == list(gs)
        ps = [random_permutation(5, rng) for _ in range(3)]
        back = align_set(align_set(gs, ps), [invert_permutation(p) for p in ps])
        assert list(back) == list(gs)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            align_set(GraphSet([K3, K3]), [np.arange(3)])


class TestExtract:
    def test_identity_blocks(self):
        assert all(np.array_equal(p, np.arange(4)) for p in extract_alignments(BlockAlignment.identity(3, 4)))

    def test_dominant_and_tied_blocks(self):
        blocks = BlockAlignment.identity(3, 2).blocks
        swap = np.array([[0.1, 0.9], [0.9, 0.1]])
        blocks[1, 0], blocks[0, 1] = swap, swap.T
        blocks[2, 0] = blocks[0, 2] = np.full((2, 2), 0.5)
        perms = extract_alignments(BlockAlignment(blocks))
        assert [p.tolist() for p in perms] == [[0, 1], [1, 0], [0, 1]]

    def test_full_round_trip(self, rng):
        b = BlockAlignment(rng.random((3, 3, 4, 4)))
        assert np.array_equal(BlockAlignment.from_full(b.full(), 3).blocks, b.blocks)


class TestGAlign:
    def test_identical_graphs(self, rng):
        g = random_graph(5, rng)
        res = galign(GraphSet([g] * 3))
        assert res.relaxed_objective == 0.0
        assert all(np.array_equal(p, np.arange(5)) for p in res.permutations)

    def test_permuted_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            g = random_graph(3, rng, 0.6)
            gs = permuted_copies(g, 3, rng)
            res = galign(gs)
            assert res.relaxed_objective <= 1e-6
            aligned = align_set(gs, res.permutations)
            assert all(np.array_equal(h.adj, gs[0].adj) for h in aligned)

    def test_triangle_and_path(self):
        res = galign(GraphSet([K3, P3]))
        assert brute_galign(np.stack([K3.adj, P3.adj])) == pytest.approx(2.0)
        assert res.relaxed_objective <= 2.0 + 1e-6

    def test_lower_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(8):
            n, m = int(rng.integers(2, 4)), int(rng.integers(2, 5))
            gs = GraphSet([random_graph(m, rng) for _ in range(n)])
            assert galign(gs).relaxed_objective <= brute_galign(gs.adjacency_stack()) + 1e-6

    def test_block_invariants(self, rng):
        gs = GraphSet([random_graph(5, rng) for _ in range(3)])
        res = galign(gs, MultiAlignConfig(outer_iters=50))
        b = res.blocks.blocks
        for i in range(3):
            assert np.array_equal(b[i, i], np.eye(5))
            for j in range(3):
                assert np.array_equal(b[j, i], b[i, j].T)
                assert is_doubly_stochastic(b[i, j], 1e-6, 1e-6)

    def test_consistency_by_composition(self, rng):
        gs = GraphSet([random_graph(6, rng) for _ in range(4)])
        perms = galign(gs, MultiAlignConfig(outer_iters=30)).permutations
        pair = {(i, j): compose(perms[i], invert_permutation(perms[j])) for i in range(4) for j in range(4)}
        for i in range(4):
            for l in range(4):
                for j in range(4):
                    assert np.array_equal(compose(pair[i, l], pair[l, j]), pair[i, j])

    def test_label_invariance(self):
        rng = np.random.default_rng(5)
        gs = GraphSet([random_graph(6, rng) for _ in range(3)])
        q = random_permutation(6, rng)
        moved = GraphSet([permute_graph(g, q) for g in gs])
        tight_fermat = MultiAlignConfig(method="fermat", tol=1e-10, outer_iters=2000, inner_iters=5000)
        for cfg in (MultiAlignConfig(), tight_fermat):
            a = multi_align(gs, cfg).relaxed_objective
            b = multi_align(moved, cfg).relaxed_objective
            assert abs(a - b) <= 1e-4

    def test_projection_reaches_feasibility(self, rng):
        x = rng.normal(size=(3, 3, 4, 4))
        y = project_consistent(x, iters=500, tol=1e-10)
        assert np.allclose(y[np.arange(3), np.arange(3)], np.eye(4), atol=1e-8)
        assert y.min() >= -1e-8
        full = BlockAlignment(y).full()
        assert np.linalg.eigvalsh((full + full.T) / 2).min() >= -1e-8

    def test_needs_two_graphs(self):
        with pytest.raises(ValueError):
            galign(GraphSet([K3]))


class TestFermat:
    def test_identical_graphs(self, rng):
        g = random_graph(5, rng)
        res = fermat_align(GraphSet([g] * 4), FERMAT)
        assert res.relaxed_objective == 0.0 and res.center.hard == g

    def test_permuted_pair(self):
        g = LabeledGraph.from_edges(4, [(0, 1), (1, 2), (1, 3)])
        gs = GraphSet([g, permute_graph(g, np.array([3, 0, 2, 1]))])
        res = fermat_align(gs, FERMAT)
        assert res.relaxed_objective <= 1e-4
        assert isomorphic(res.center.hard.adj, g.adj)

    def test_center_update_averages_at_identity(self):
        one_edge = LabeledGraph.from_edges(3, [(0, 1)])
        adj = np.stack([one_edge.adj, K3.adj])
        a0 = multi._center_update(adj, [np.eye(3), np.eye(3)], 1e-8, "test")
        assert np.allclose(a0, np.clip((one_edge.adj + K3.adj) / 2, 0, 1), atol=1e-7)

    def test_trace_non_increasing(self):
        rng = np.random.default_rng(8)
        for init in ("first", "mean"):
            gs = GraphSet([random_graph(7, rng) for _ in range(4)])
            res = fermat_align(gs, MultiAlignConfig(method="fermat", fermat_init=init))
            assert np.all(np.diff(res.objective_trace) <= 1e-9)

    def test_lower_bound(self):
        rng = np.random.default_rng(12)
        for _ in range(6):
            n, m = int(rng.integers(2, 4)), int(rng.integers(2, 5))
            gs = GraphSet([random_graph(m, rng) for _ in range(n)])
            assert fermat_align(gs, FERMAT).relaxed_objective <= brute_fermat(gs.adjacency_stack()) + 1e-6

    def test_outputs_in_first_frame(self, rng):
        g = random_graph(6, rng, 0.5)
        res = fermat_align(permuted_copies(g, 3, rng), FERMAT)
        assert np.array_equal(res.permutations[0], np.arange(6))

    def test_singular_update_names_iterate(self, monkeypatch, rng):
        def broken(*_):
            raise np.linalg.LinAlgError("singular")

        monkeypatch.setattr(multi.np.linalg, "solve", broken)
        gs = GraphSet([random_graph(4, rng) for _ in range(2)])
        with pytest.raises(AlignmentError, match="outer iterate"):
            fermat_align(gs, MultiAlignConfig(method="fermat", fermat_init="mean"))


@pytest.mark.parametrize(
    "kwargs",
    [dict(method="sdp"), dict(threshold=0.0), dict(ridge=0.0), dict(outer_iters=0), dict(fermat_init="zero")],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        MultiAlignConfig(**kwargs)
