import math

import pytest
import networkx as nx
import numpy as np

from config.schemas import SplitConfig
from heuristics.similarity import HEURISTICS, heuristic_score, parse_kind, score_pairs, score_samples
from splits.strategies import edge_sampling_split
from utils.errors import GraphQueryError
from tests.fixtures.graph_fixtures import graph_from_networkx, random_graphs, synthetic_dir, synthetic_graph, toy_graph


def _networkx_score(kind: str, g: nx.Graph, u: int, v: int) -> float:
    if kind == "CN":
        return float(len(list(nx.common_neighbors(g, u, v))))
    if kind == "AA":
        return sum(1.0 / math.log(g.degree(w)) for w in nx.common_neighbors(g, u, v))
    if kind == "RA":
        return next(nx.resource_allocation_index(g, [(u, v)]))[2]
    if kind == "Jaccard":
        union = set(g[u]) | set(g[v])
        return len(set(g[u]) & set(g[v])) / len(union) if union else 0.0
    return float(g.degree(u) * g.degree(v))


def _pairs(g: nx.Graph, rng: np.random.Generator, count: int):
    n = g.number_of_nodes()
    pairs = [tuple(int(i) for i in rng.choice(n, size=2, replace=False)) for _ in range(count)]
    return pairs + [tuple(e) for e in list(g.edges())[:count]]


@pytest.mark.heuristics
class TestHeuristics:
    """Similarity scores against networkx recomputation."""

    def test_registry_order_and_aliases(self):
        """All five heuristics are registered and aliases resolve."""
        assert list(HEURISTICS) == ["CN", "AA", "RA", "Jaccard", "PA"]
        assert parse_kind("adamic_adar") == "AA"
        assert parse_kind("jaccard") == "Jaccard"
        with pytest.raises(ValueError):
            parse_kind("katz")

    @pytest.mark.parametrize("kind", ["CN", "AA", "RA", "Jaccard", "PA"])
    def test_matches_networkx(self, kind):
        """Scores equal brute force on random graphs."""
        rng = np.random.default_rng(17)
        for g in random_graphs(100, 100, 0.05, seed=13):
            view = graph_from_networkx(g).full_view()
            pairs = _pairs(g, rng, 5)
            u = np.array([p[0] for p in pairs])
            v = np.array([p[1] for p in pairs])
            scores = score_pairs(kind, view, u, v)
            expected = [_networkx_score(kind, g, a, b) for a, b in pairs]
            np.testing.assert_allclose(scores, expected, rtol=1e-12, atol=1e-12)

    @pytest.mark.parametrize("kind", ["CN", "AA", "RA", "Jaccard", "PA"])
    def test_hidden_edge_matches_removal(self, kind):
        """Hiding a pair's edge equals scoring on the graph without that edge."""
        for g in random_graphs(40, 60, 0.08, seed=3):
            view = graph_from_networkx(g).full_view()
            for a, b in list(g.edges())[:5]:
                reduced = g.copy()
                reduced.remove_edge(a, b)
                expected = _networkx_score(kind, reduced, a, b)
                assert heuristic_score(kind, view, a, b, hide_edge=True) == pytest.approx(expected, abs=1e-12)
                assert heuristic_score(kind, view.hide_edge(a, b), a, b) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("kind", ["CN", "AA", "RA", "Jaccard", "PA"])
    def test_swapping_endpoints_keeps_score(self, kind):
        """score(u, v) equals score(v, u), with and without hiding the pair's edge."""
        rng = np.random.default_rng(29)
        for g in random_graphs(40, 60, 0.1, seed=31):
            view = graph_from_networkx(g).full_view()
            pairs = _pairs(g, rng, 6)
            u = np.array([p[0] for p in pairs])
            v = np.array([p[1] for p in pairs])
            for hidden in (None, np.ones(len(pairs), dtype=bool)):
                np.testing.assert_allclose(
                    score_pairs(kind, view, u, v, hidden=hidden),
                    score_pairs(kind, view, v, u, hidden=hidden),
                    rtol=1e-12,
                    atol=1e-12,
                )

    def test_isolated_nodes_score_zero(self, toy_graph):
        """Pairs with an isolated node score zero under every heuristic."""
        view = toy_graph.full_view()
        for kind in HEURISTICS:
            assert heuristic_score(kind, view, 4, 2) == 0.0

    def test_toy_values(self, toy_graph):
        """Known scores on the triangle-with-tail graph."""
        view = toy_graph.full_view()
        assert heuristic_score("CN", view, 0, 3) == 1.0
        assert heuristic_score("RA", view, 0, 3) == pytest.approx(1 / 3)
        assert heuristic_score("Jaccard", view, 0, 3) == pytest.approx(1 / 2)
        assert heuristic_score("PA", view, 0, 3) == 2.0

    def test_invalid_pairs(self, toy_graph):
        """u == v is a value error; unknown ids are graph query errors."""
        view = toy_graph.full_view()
        with pytest.raises(ValueError):
            heuristic_score("CN", view, 1, 1)
        with pytest.raises(GraphQueryError):
            heuristic_score("CN", view, 0, 42)

    def test_score_samples_hides_positive_edges(self, synthetic_graph):
        """Edge-sampling positives are scored with their own edge removed."""
        test = edge_sampling_split(synthetic_graph, SplitConfig(seed=3))["test"]
        view = test.context_view(synthetic_graph)
        scores = score_samples("PA", view, test)
        first = int(np.flatnonzero(test.labels == 1)[0])
        u, v = int(test.u[first]), int(test.v[first])
        assert scores[first] == (view.degree(u) - 1) * (view.degree(v) - 1)
