import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steinmoments.bounds import neighbourhood_norm_bound
from steinmoments.core import ConfigError, DomainError
from steinmoments.graphs import (
    GraphOverlay,
    SparseGraph,
    StatisticSpec,
    _decode_pairs,
    ball,
    batched_statistic_values,
    evaluate_statistic,
    generate_er,
    neighbourhood_size_moments_mc,
    r_neighbourhood,
    resample_edges,
    skip_sample_pairs,
    statistic_values,
)
from steinmoments.rng import replicate_rng


def path_graph(n):
    return SparseGraph.from_edges(n, range(n - 1), range(1, n))


def complete_graph(n):
    pairs = list(itertools.combinations(range(n), 2))
    return SparseGraph.from_edges(n, [a for a, _ in pairs], [b for _, b in pairs])


def star(leaves):
    return SparseGraph.from_edges(leaves + 1, [0] * leaves, range(1, leaves + 1))


def assert_simple_symmetric(g: SparseGraph):
    seen = set()
    for a in range(g.n):
        nb = g.neighbors(a).tolist()
        assert nb == sorted(set(nb))
        assert a not in nb
        for b in nb:
            assert a in g.neighbors(b).tolist()
            seen.add((min(a, b), max(a, b)))
    assert len(seen) == g.n_edges


class TestPairDecoding:
    def test_matches_enumeration(self):
        n = 40
        expected = [(u, v) for v in range(n) for u in range(v)]
        u, v = _decode_pairs(np.arange(n * (n - 1) // 2))
        assert list(zip(u.tolist(), v.tolist())) == expected

    def test_large_index(self):
        n = 10**6
        last = n * (n - 1) // 2 - 1
        u, v = _decode_pairs(np.array([last]))
        assert (int(u[0]), int(v[0])) == (n - 2, n - 1)


class TestGenerateER:
    def test_p_zero_empty(self):
        g = generate_er(50, 0.0, replicate_rng(0, 0))
        assert g.n_edges == 0 and np.all(g.degrees() == 0)

    def test_p_one_complete(self):
        g = generate_er(30, 1.0, replicate_rng(0, 0))
        assert np.all(g.degrees() == 29)
        assert g.n_edges == 30 * 29 // 2

    def test_bad_p(self):
        with pytest.raises(DomainError):
            generate_er(10, 1.5, replicate_rng(0, 0))

    def test_mean_edge_count(self):
        n, p, reps = 200, 0.01, 10_000
        rng = replicate_rng(3, 0)
        gid, _, _ = skip_sample_pairs(n, p, rng, reps)
        counts = np.bincount(gid, minlength=reps)
        mean = 199.0
        se = counts.std(ddof=1) / math.sqrt(reps)
        assert abs(counts.mean() - mean) <= 3 * se

    def test_single_graph_edge_count(self):
        counts = [generate_er(200, 0.01, replicate_rng(5, i)).n_edges for i in range(400)]
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(np.mean(counts) - 199.0) <= 3 * se

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 120), st.floats(0, 1), st.integers(0, 2**32))
    def test_symmetric_and_simple(self, n, p, seed):
        assert_simple_symmetric(generate_er(n, p, replicate_rng(seed, 0)))

    def test_pairwise_marginal(self):
        # every pair appears with frequency p
        n, p, reps = 6, 0.3, 20_000
        gid, u, v = skip_sample_pairs(n, p, replicate_rng(11, 0), reps)
        freq = np.bincount(v * (v - 1) // 2 + u, minlength=15) / reps
        se = math.sqrt(p * (1 - p) / reps)
        assert np.all(np.abs(freq - p) <= 4 * se)


class TestSparseGraph:
    def test_rejects_self_loop(self):
        with pytest.raises(DomainError):
            SparseGraph.from_edges(3, [1], [1])

    def test_rejects_duplicate(self):
        with pytest.raises(DomainError):
            SparseGraph.from_edges(3, [0, 1], [1, 0])

    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            SparseGraph.from_edges(3, [0], [3])

    def test_edge_list_round_trip(self):
        g = generate_er(60, 0.1, replicate_rng(1, 0))
        text = g.to_edge_list_text()
        lines = [tuple(map(int, line.split())) for line in text.splitlines()]
        assert lines == sorted(lines) and all(a < b for a, b in lines)
        h = SparseGraph.from_edge_list_text(60, text)
        assert np.array_equal(h.indptr, g.indptr) and np.array_equal(h.indices, g.indices)

    def test_immutable(self):
        g = path_graph(4)
        with pytest.raises(ValueError):
            g.indices[0] = 2


class TestNeighbourhood:
    def test_radius_zero(self):
        nb = r_neighbourhood(path_graph(4), 2, 0)
        assert nb.vertices == (2,) and nb.induced_edges == ()

    def test_path(self):
        nb = r_neighbourhood(path_graph(4), 1, 1)
        assert nb.vertices == (0, 1, 2)
        assert set(nb.induced_edges) == {(0, 1), (1, 2)}

    def test_triangle_includes_outer_edge(self):
        nb = r_neighbourhood(complete_graph(3), 0, 1)
        assert nb.vertices == (0, 1, 2)
        assert set(nb.induced_edges) == {(0, 1), (0, 2), (1, 2)}

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            r_neighbourhood(path_graph(4), 4, 1)

    def test_distances(self):
        nb = r_neighbourhood(path_graph(6), 0, 3)
        assert dict(nb.distance) == {0: 0, 1: 1, 2: 2, 3: 3}

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 80), st.floats(0, 0.2), st.integers(0, 2**32), st.integers(0, 4))
    def test_nested_in_r(self, n, p, seed, r):
        g = generate_er(n, p, replicate_rng(seed, 0))
        v = seed % n
        small = set(r_neighbourhood(g, v, r).vertices)
        big = set(r_neighbourhood(g, v, r + 1).vertices)
        assert small <= big
        assert small == ball(g, [v], r)


class TestStatistics:
    def test_isolated_root(self):
        g = SparseGraph.from_edges(3, [1], [2])
        assert evaluate_statistic(StatisticSpec.degree_indicator({0}), r_neighbourhood(g, 0, 1)) == 1.0

    def test_triangles_in_k4(self):
        spec = StatisticSpec.rooted_subgraph_count([(0, 1), (1, 2), (0, 2)])
        assert (spec.c, spec.beta, spec.r) == (3.0, 2.0, 1)
        assert evaluate_statistic(spec, r_neighbourhood(complete_graph(4), 0, 1)) == 3.0

    def test_rooted_edge_count_is_degree(self):
        spec = StatisticSpec.rooted_subgraph_count([(0, 1)])
        g = generate_er(40, 0.15, replicate_rng(2, 0))
        vals = statistic_values(spec, g)
        assert np.array_equal(vals, g.degrees().astype(float))

    def test_rooted_path_count(self):
        # paths of length 2 through vertex 1 on the path 0-1-2-3: {0-1-2} and {1-2-3}
        spec = StatisticSpec.rooted_subgraph_count([(0, 1), (1, 2)])
        assert evaluate_statistic(spec, r_neighbourhood(path_graph(4), 1, spec.r)) == 2.0

    def test_star_hdfs(self):
        spec = StatisticSpec.high_degree_few_small_neighbours(d=2, k=1)
        assert evaluate_statistic(spec, r_neighbourhood(star(3), 0, 2)) == 0.0
        spec3 = StatisticSpec.high_degree_few_small_neighbours(d=2, k=3)
        assert evaluate_statistic(spec3, r_neighbourhood(star(3), 0, 2)) == 1.0

    def test_radius_mismatch(self):
        spec = StatisticSpec.degree_indicator({1})
        with pytest.raises(DomainError):
            evaluate_statistic(spec, r_neighbourhood(path_graph(3), 0, 2))

    def test_custom_growth_violation(self):
        spec = StatisticSpec.custom(lambda nb: 100.0, c=1.0, beta=0.0, r=1)
        with pytest.raises(AssertionError):
            evaluate_statistic(spec, r_neighbourhood(path_graph(3), 0, 1))

    def test_custom_size(self):
        spec = StatisticSpec.custom(lambda nb: float(nb.size), c=1.0, beta=1.0, r=2)
        assert evaluate_statistic(spec, r_neighbourhood(path_graph(6), 0, 2)) == 3.0

    def test_round_trip(self):
        for spec in (StatisticSpec.degree_indicator({0, 2}),
                     StatisticSpec.rooted_subgraph_count([(0, 1), (1, 2), (0, 2)]),
                     StatisticSpec.high_degree_few_small_neighbours(2, 1)):
            assert StatisticSpec.from_dict(spec.to_dict()) == spec
        with pytest.raises(ConfigError):
            StatisticSpec.from_dict({"kind": "nope"})

    @pytest.mark.parametrize("spec", [StatisticSpec.degree_indicator({0, 1}),
                                      StatisticSpec.high_degree_few_small_neighbours(2, 1)])
    def test_vectorized_matches_bfs(self, spec):
        g = generate_er(150, 2.5 / 150, replicate_rng(4, 0))
        fast = statistic_values(spec, g)
        slow = np.array([evaluate_statistic(spec, r_neighbourhood(g, i, spec.r)) for i in range(g.n)])
        assert np.array_equal(fast, slow)

    def test_batched_matches_per_graph(self):
        spec = StatisticSpec.high_degree_few_small_neighbours(2, 1)
        n, reps = 80, 12
        gid, u, v = skip_sample_pairs(n, 3.0 / n, replicate_rng(9, 0), reps)
        batched = batched_statistic_values(spec, n, reps, gid, u, v)
        for j in range(reps):
            g = SparseGraph.from_edges(n, u[gid == j], v[gid == j])
            assert np.array_equal(batched[j], statistic_values(spec, g))


class TestOverlay:
    def test_base_untouched(self):
        g = generate_er(50, 0.1, replicate_rng(0, 0))
        before = g.to_edge_list_text()
        ov = resample_edges(g, [0, 1, 2], 0.5, replicate_rng(0, 1))
        assert isinstance(ov, GraphOverlay)
        assert g.to_edge_list_text() == before
        assert_simple_symmetric(ov.materialize())

    def test_untouched_pairs_kept(self):
        g = generate_er(40, 0.2, replicate_rng(1, 0))
        ov = resample_edges(g, [3, 7], 0.2, replicate_rng(1, 1)).materialize()
        u, v = g.edges()
        old = {(a, b) for a, b in zip(u.tolist(), v.tolist()) if not {a, b} & {3, 7}}
        u2, v2 = ov.edges()
        new = {(a, b) for a, b in zip(u2.tolist(), v2.tolist()) if not {a, b} & {3, 7}}
        assert old == new

    def test_marginal(self):
        # resampled pairs are fresh Bernoulli(p): an empty base gains p per pair on average
        n, p, reps = 30, 0.25, 2000
        base = SparseGraph.from_edges(n, [], [])
        verts = [0, 5, 9]
        pairs = sum(1 for a, b in itertools.combinations(range(n), 2) if a in verts or b in verts)
        counts = [resample_edges(base, verts, p, replicate_rng(2, i)).n_edges for i in range(reps)]
        se = np.std(counts, ddof=1) / math.sqrt(reps)
        assert abs(np.mean(counts) - pairs * p) <= 4 * se

    def test_changed_vertices(self):
        g = complete_graph(5)
        ov = resample_edges(g, [0], 0.0, replicate_rng(0, 0))
        assert ov.degree(0) == 0
        assert set(ov.changed_vertices) == {0, 1, 2, 3, 4}


class TestNeighbourhoodSizes:
    def test_radius_zero(self):
        est = neighbourhood_size_moments_mc(50, 2.0, 0, 3, 60, seed=0)
        assert est.point == 1.0 and est.std_error == 0.0

    def test_lambda_zero(self):
        est = neighbourhood_size_moments_mc(50, 0.0, 3, 2, 60, seed=0)
        assert est.point == 1.0 and est.std_error == 0.0

    def test_indivisible(self):
        with pytest.raises(ConfigError):
            neighbourhood_size_moments_mc(50, 1.0, 1, 2, 61, seed=0)

    def test_below_closed_form(self):
        est = neighbourhood_size_moments_mc(300, 2.0, 2, 4, 3000, seed=1)
        assert est.point + 3 * est.std_error <= neighbourhood_norm_bound(2.0, 2, 4)

    def test_branching_domination(self):
        n, lam, r, reps = 10**4, 2.0, 2, 600
        sizes = [r_neighbourhood(generate_er(n, lam / n, replicate_rng(7, i)), 0, r).size
                 for i in range(reps)]
        se = np.std(sizes, ddof=1) / math.sqrt(reps)
        assert np.mean(sizes) <= sum(lam**s for s in range(r + 1)) + 3 * se
