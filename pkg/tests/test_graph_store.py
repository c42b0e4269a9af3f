import pytest
import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from graph.features import batch_edges, batch_nodes, bin_series, step_count
from graph.store import (
    TransactionEvent,
    load_cache,
    load_dataset,
    restrict,
    save_cache,
    to_csr,
    write_dataset,
)
from utils.errors import DatasetFormatError, GraphQueryError
from tests.fixtures.graph_fixtures import make_graph, path_graph, toy_graph


def _write_files(tmp_path, nodes: str, transfers: str, header: str = "n=3\ncurrencies=2\nt_min=0\nt_max=100\n"):
    (tmp_path / "nodes.csv").write_text(nodes)
    (tmp_path / "transfers.csv").write_text(transfers)
    (tmp_path / "header.txt").write_text(header)
    return tmp_path / "nodes.csv", tmp_path / "transfers.csv"


@pytest.mark.graph
class TestGraphStore:
    """Loading, windowed views and neighbour queries."""

    def test_load_merges_both_directions(self, tmp_path):
        """Transfers a->b and b->a land in one undirected edge series."""
        nodes, transfers = _write_files(
            tmp_path,
            "node_id,timestamp,amount,currency\n0,5,10,0\n",
            "src_id,dst_id,timestamp,amount,currency\n0,1,10,5,0\n1,0,20,7,1\n1,2,30,9,0\n",
        )
        graph = load_dataset(nodes, transfers)
        assert graph.edge_count == 2
        eid = graph.edge_id(1, 0)
        assert eid == graph.edge_id(0, 1) >= 0
        assert [e.timestamp for e in graph.edge_series(eid)] == [10, 20]
        assert graph.node_series(0) == [TransactionEvent(5, 10, 0)]

    def test_empty_transfers_gives_isolated_nodes(self, tmp_path):
        """A transfers file with only the header yields n isolated nodes."""
        nodes, transfers = _write_files(
            tmp_path, "node_id,timestamp,amount,currency\n", "src_id,dst_id,timestamp,amount,currency\n"
        )
        graph = load_dataset(nodes, transfers)
        view = graph.full_view()
        assert graph.edge_count == 0
        assert all(view.degree(i) == 0 for i in range(3))

    def test_self_transfer_rejected_with_line(self, tmp_path):
        """A self-loop row fails with the file line number of that row."""
        nodes, transfers = _write_files(
            tmp_path,
            "node_id,timestamp,amount,currency\n",
            "src_id,dst_id,timestamp,amount,currency\n0,1,10,5,0\n2,2,10,5,0\n",
        )
        with pytest.raises(DatasetFormatError) as info:
            load_dataset(nodes, transfers)
        assert info.value.line == 3

    def test_bad_amount_and_id_rejected(self, tmp_path):
        """Zero amounts and ids outside 0..n-1 are format errors."""
        nodes, transfers = _write_files(
            tmp_path,
            "node_id,timestamp,amount,currency\n",
            "src_id,dst_id,timestamp,amount,currency\n0,1,10,0,0\n",
        )
        with pytest.raises(DatasetFormatError):
            load_dataset(nodes, transfers)
        nodes, transfers = _write_files(
            tmp_path,
            "node_id,timestamp,amount,currency\n7,1,10,0\n",
            "src_id,dst_id,timestamp,amount,currency\n",
        )
        with pytest.raises(DatasetFormatError):
            load_dataset(nodes, transfers)

    def test_restrict_keeps_edges_with_events_in_window(self, path_graph):
        """Only edges with a transfer in [t0, t1) are active."""
        view = restrict(path_graph, (1, 3))
        assert view.active_edges().tolist() == [[1, 2], [2, 3]]
        assert view.neighbors(2).tolist() == [1, 3]
        assert view.degree(0) == 0

    def test_full_window_equals_graph(self, toy_graph):
        """The whole-span view has every edge active."""
        view = toy_graph.full_view()
        assert view.edge_mask.all()
        assert view.neighbors(2).tolist() == [0, 1, 3]
        assert view.degree(4) == 0

    def test_views_do_not_interfere(self, path_graph):
        """Two views over the same graph answer independently."""
        early, late = restrict(path_graph, (0, 2)), restrict(path_graph, (2, 4))
        assert early.neighbors(1).tolist() == [0, 2]
        assert late.neighbors(1).tolist() == []
        assert early.neighbors(1).tolist() == [0, 2]

    def test_invalid_window_and_node(self, path_graph):
        """Inverted windows and unknown ids raise GraphQueryError."""
        with pytest.raises(GraphQueryError):
            restrict(path_graph, (5, 5))
        with pytest.raises(GraphQueryError):
            restrict(path_graph, (0, 50))
        with pytest.raises(GraphQueryError):
            path_graph.full_view().neighbors(9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1), st.lists(st.integers(0, 100), min_size=4, max_size=4))
    def test_restrict_is_monotone_and_symmetric(self, seed, cuts):
        """A window inside another keeps a subset of its edges; adjacency is symmetric."""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 16))
        src = rng.integers(0, n, size=30)
        dst = (src + rng.integers(1, n, size=30)) % n
        graph = make_graph(n, zip(src, dst), times=rng.integers(0, 100, size=30))
        a, b, c, d = sorted(cuts)
        assume(b < c)
        inner, outer = restrict(graph, (b, c)), restrict(graph, (a, d))
        assert not (inner.edge_mask & ~outer.edge_mask).any()
        for view in (inner, outer):
            for u in range(n):
                for v in view.neighbors(u):
                    assert u in view.neighbors(int(v)).tolist()
                assert view.degree(u) == view.neighbors(u).shape[0]

    def test_hide_edge_is_a_copy(self, toy_graph):
        """Hiding an edge leaves the source view untouched."""
        view = toy_graph.full_view()
        hidden = view.hide_edge(0, 1)
        assert not hidden.has_edge(0, 1)
        assert view.has_edge(0, 1)
        assert hidden.degrees[0] == view.degrees[0] - 1

    def test_csr_matches_neighbors(self, toy_graph):
        """The CSR adjacency agrees with neighbour lists."""
        view = toy_graph.full_view()
        csr = to_csr(view)
        for node in range(toy_graph.node_count):
            assert sorted(csr[node].indices.tolist()) == view.neighbors(node).tolist()

    def test_write_load_and_cache_round_trip(self, tmp_path, toy_graph):
        """Writing then loading, or caching, reproduces every array."""
        nodes, transfers, _ = write_dataset(toy_graph, tmp_path)
        assert load_dataset(nodes, transfers).equals(toy_graph)
        save_cache(toy_graph, tmp_path / "graph.cache")
        assert load_cache(tmp_path / "graph.cache").equals(toy_graph)

    def test_cache_rejects_foreign_file(self, tmp_path):
        """A file without the cache magic is refused."""
        path = tmp_path / "graph.cache"
        with open(path, "wb") as handle:
            np.savez(handle, other=np.zeros(1))
        with pytest.raises(DatasetFormatError):
            load_cache(path)


@pytest.mark.features
class TestTemporalFeatures:
    """Binning of purchase and transfer series."""

    def test_empty_series_gives_zero_rows(self):
        """No events gives ceil(len / period) all-zero steps."""
        bins = bin_series([], (0, 10), 3, currency_count=2)
        assert bins.shape == (4, 5)
        assert not bins.any()

    def test_single_event_lands_in_its_bin(self):
        """One event at t fills exactly step floor((t - t0) / period)."""
        bins = bin_series([TransactionEvent(7, 99, 1)], (0, 10), 3, currency_count=2, log_amounts=False)
        assert np.flatnonzero(bins[:, 0]).tolist() == [2]
        assert bins[2].tolist() == [1.0, 99.0, 99.0, 0.0, 1.0]

    def test_counts_sum_to_events_in_window(self):
        """Step counts add up to the number of in-window events."""
        events = [TransactionEvent(t, 10, 0) for t in (0, 1, 5, 9, 10, 12)]
        bins = bin_series(events, (0, 10), 4, currency_count=1)
        assert bins[:, 0].sum() == 4

    def test_invalid_period(self):
        """A non-positive period is rejected."""
        with pytest.raises(ValueError):
            step_count((0, 10), 0)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.tuples(st.integers(0, 49), st.integers(1, 500), st.integers(0, 2)), max_size=20),
        st.integers(-1000, 1000),
        st.integers(1, 12),
    )
    def test_shifting_series_and_window_keeps_bins(self, rows, shift, period):
        """Moving every event and the window by one offset leaves the bins unchanged."""
        rows = sorted(rows)
        events = [TransactionEvent(t, amount, currency) for t, amount, currency in rows]
        moved = [TransactionEvent(t + shift, amount, currency) for t, amount, currency in rows]
        expected = bin_series(events, (5, 45), period, currency_count=3)
        np.testing.assert_array_equal(bin_series(moved, (5 + shift, 45 + shift), period, currency_count=3), expected)

    def test_batch_edges_masks_hidden_and_missing(self, toy_graph):
        """Absent pairs and hidden rows are all-zero; present pairs are not."""
        view = toy_graph.full_view()
        batch = batch_edges(view, [(0, 1), (0, 3), (2, 3)], 5, hidden=np.array([False, False, True]))
        assert batch.data.shape == (3, 2, 5)
        assert batch.data[0].any()
        assert not batch.data[1].any()
        assert not batch.data[2].any()

    def test_batch_edges_matches_bin_series(self, toy_graph):
        """Vectorized edge binning equals per-edge binning."""
        view = toy_graph.full_view()
        batch = batch_edges(view, [(3, 2)], 3)
        expected = bin_series(toy_graph.edge_events(toy_graph.edge_id(2, 3)), view.window, 3, toy_graph.currencies)
        np.testing.assert_array_equal(batch.data[0], expected)

    def test_batch_nodes_respects_window(self, toy_graph):
        """Purchases outside the view window are dropped."""
        view = restrict(toy_graph, (0, 3))
        batch = batch_nodes(view, [0, 3], 1)
        assert batch.data[0, :, 0].sum() == 1
        assert batch.data[1, :, 0].sum() == 0

    def test_batch_rejects_unknown_node(self, toy_graph):
        """An id outside the graph raises GraphQueryError."""
        with pytest.raises(GraphQueryError):
            batch_nodes(toy_graph.full_view(), [99], 1)


def test_make_graph_helper_builds_requested_edges():
    """The fixture helper yields the edges it was given."""
    graph = make_graph(3, [(0, 2)])
    assert graph.edge_id(2, 0) == 0
