import pytest
import numpy as np

from config.schemas import GenConfig, Protocol, SplitConfig
from evaluation.metrics import roc_auc
from graph.store import restrict
from splits.samples import read_samples, write_samples
from splits.strategies import (
    EdgeSamplingSplit,
    OutOfTimeSplit,
    SplitStrategyFactory,
    default_segment_plan,
    edge_sampling_split,
    out_of_time_split,
)
from synth.generator import generate, generate_dataset, read_credit_labels, read_oracle
from utils.errors import ConfigError
from tests.fixtures.graph_fixtures import make_graph, synthetic_dir, synthetic_graph


@pytest.mark.synth
class TestSyntheticGenerator:
    """Generated datasets, oracle and credit labels."""

    def test_same_seed_gives_identical_files(self, tmp_path):
        """Two runs with one config write byte-identical artifacts."""
        cfg = GenConfig.small(seed=11, n=150)
        first = generate(cfg, tmp_path / "a")
        second = generate(cfg, tmp_path / "b")
        for name in ("nodes", "transfers", "oracle", "credit_labels", "manifest"):
            assert first[name].read_bytes() == second[name].read_bytes()

    def test_different_seed_changes_data(self):
        """A different seed changes the transfer series."""
        a = generate_dataset(GenConfig.small(seed=1, n=150)).graph
        b = generate_dataset(GenConfig.small(seed=2, n=150)).graph
        assert not a.equals(b)

    def test_oracle_and_labels_are_well_formed(self, synthetic_dir, synthetic_graph):
        """Oracle probabilities lie in [0, 1]; every node has a 0/1 credit label."""
        oracle = read_oracle(synthetic_dir / "oracle.csv")
        assert oracle
        assert all(0.0 <= p <= 1.0 for p in oracle.values())
        assert all(u < v for u, v in oracle)
        labels = read_credit_labels(synthetic_dir / "credit_labels.csv", synthetic_graph.node_count)
        assert set(np.unique(labels)) <= {0, 1}

    def test_future_links_follow_the_oracle(self):
        """Ties that transact in the target window have higher oracle scores."""
        cfg = GenConfig.small(seed=5, n=400)
        data = generate_dataset(cfg)
        target = restrict(data.graph, (cfg.t1, cfg.t2))
        future = np.array([target.has_edge(int(u), int(v)) for u, v in data.ties], dtype=np.int64)
        assert roc_auc(data.oracle, future) > 0.7

    def test_invalid_config_rejected(self):
        """Probabilities outside [0, 1] and unordered windows are config errors."""
        with pytest.raises(ConfigError):
            GenConfig(intra_affinity=1.5).validate()
        with pytest.raises(ConfigError):
            GenConfig(t1=10, t2=5).validate()


@pytest.mark.splits
class TestValidationSplits:
    """Out-of-time and edge-sampling sample sets."""

    def test_segments_partition_users(self, synthetic_graph):
        """Train, val and test users are disjoint and cover every node."""
        plan = default_segment_plan(synthetic_graph, SplitConfig(seed=3))
        users = np.concatenate([s.users for s in plan])
        assert np.array_equal(np.sort(users), np.arange(synthetic_graph.node_count))

    def test_out_of_time_labels_follow_target_window(self, synthetic_graph):
        """Positives transact in [t1, t2); negatives do not; pairs stay inside a segment."""
        cfg = SplitConfig(seed=3).resolved(synthetic_graph.time_span)
        sets = out_of_time_split(synthetic_graph, cfg)
        target = restrict(synthetic_graph, (cfg.t1, cfg.t2))
        plan = {s.name: s for s in default_segment_plan(synthetic_graph, cfg)}
        for name, samples in sets.items():
            assert samples.window == (cfg.t0, cfg.t1)
            assert (samples.u < samples.v).all()
            members = plan[name].member_mask(synthetic_graph.node_count)
            assert members[samples.u].all() and members[samples.v].all()
            for u, v, y in samples:
                assert target.has_edge(u, v) == bool(y)
            assert not samples.hide_mask().any()

    def test_alpha_sets_negative_ratio(self, synthetic_graph):
        """alpha=1 gives as many negatives as positives."""
        sets = out_of_time_split(synthetic_graph, SplitConfig(seed=3, alpha=1.0))
        train = sets["train"]
        assert len(train) - train.positives == train.positives

    def test_edge_sampling_hides_positive_edges(self, synthetic_graph):
        """Positives are observed edges, negatives are non-edges, positives hide themselves."""
        sets = edge_sampling_split(synthetic_graph, SplitConfig(seed=3))
        test = sets["test"]
        view = test.context_view(synthetic_graph)
        for u, v, y in test:
            assert view.has_edge(u, v) == bool(y)
        assert np.array_equal(test.hide_mask(), test.labels == 1)

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_edge_sampling_draws_alpha_times_all_edges(self, synthetic_graph, alpha):
        """Negatives across segments total round(alpha * |E|) of the observed view, members only."""
        cfg = SplitConfig(seed=3, alpha=alpha).resolved(synthetic_graph.time_span)
        sets = edge_sampling_split(synthetic_graph, cfg)
        observed = restrict(synthetic_graph, (cfg.t0, cfg.t1))
        negatives = [(u, v) for samples in sets.values() for u, v, y in samples if y == 0]
        assert len(negatives) == round(alpha * observed.active_edges().shape[0])
        assert len(set(negatives)) == len(negatives)
        plan = {s.name: s for s in default_segment_plan(synthetic_graph, cfg)}
        for name, samples in sets.items():
            members = plan[name].member_mask(synthetic_graph.node_count)
            assert members[samples.u].all() and members[samples.v].all()
            assert samples.positives > 0

    def test_split_is_deterministic(self, synthetic_graph):
        """The same seed yields identical sample sets."""
        a = out_of_time_split(synthetic_graph, SplitConfig(seed=4))
        b = out_of_time_split(synthetic_graph, SplitConfig(seed=4))
        for name in a:
            assert np.array_equal(a[name].pairs, b[name].pairs)
            assert np.array_equal(a[name].labels, b[name].labels)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_out_of_time_ignores_event_order_in_observation(self, seed):
        """Shuffling timestamps among observation-window events leaves every sample set unchanged."""
        rng = np.random.default_rng(seed)
        src = rng.integers(0, 20, size=1000)
        dst = (src + rng.integers(1, 20, size=1000)) % 20
        times = rng.integers(0, 100, size=1000)
        early = np.flatnonzero(times < 70)
        shuffled = times.copy()
        shuffled[early] = rng.permutation(times[early])
        cfg = SplitConfig(seed=seed, t0=0, t1=70, t2=100)
        a = out_of_time_split(make_graph(20, zip(src, dst), times=times), cfg)
        b = out_of_time_split(make_graph(20, zip(src, dst), times=shuffled), cfg)
        for name in a:
            assert np.array_equal(a[name].pairs, b[name].pairs)
            assert np.array_equal(a[name].labels, b[name].labels)

    def test_write_read_round_trip(self, tmp_path, synthetic_graph):
        """Sample files read back into equal sets with protocol and windows."""
        cfg = SplitConfig(seed=3, protocol=Protocol.EDGE_SAMPLING).resolved(synthetic_graph.time_span)
        sets = edge_sampling_split(synthetic_graph, cfg)
        samples_path, _ = write_samples(sets, tmp_path, cfg)
        loaded = read_samples(samples_path)
        for name, samples in sets.items():
            assert loaded[name].protocol is Protocol.EDGE_SAMPLING
            assert loaded[name].window == samples.window
            assert np.array_equal(loaded[name].pairs, samples.pairs)
            assert np.array_equal(loaded[name].labels, samples.labels)

    def test_factory_maps_protocols(self):
        """The factory accepts protocol members and their short names."""
        assert isinstance(SplitStrategyFactory.create(Protocol.OUT_OF_TIME), OutOfTimeSplit)
        assert isinstance(SplitStrategyFactory.create("edge"), EdgeSamplingSplit)
        with pytest.raises(ConfigError):
            SplitStrategyFactory.create("weekly")
