from dataclasses import asdict

import pytest
import numpy as np
import pandas as pd
from hypothesis import given, settings
from hypothesis import strategies as st

from config.schemas import SplitConfig
from evaluation.metrics import gini, has_both_classes, roc_auc
from evaluation.report import (
    ORACLE_METHOD,
    RESULT_COLUMNS,
    ResultRow,
    auc_by_seed,
    oracle_row,
    read_results,
    read_scores,
    render_table,
    report,
    result_row,
    write_result,
    write_scores,
)
from splits.strategies import out_of_time_split
from utils.errors import DatasetFormatError, MetricError, MissingArtifactError
from tests.fixtures.graph_fixtures import synthetic_dir, synthetic_graph


def _pair_count_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return float(((pos > neg).sum() + 0.5 * (pos == neg).sum()) / (pos.size * neg.size))


labelled_scores = st.integers(min_value=2, max_value=60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(min_value=0, max_value=8), min_size=n, max_size=n),
        st.lists(st.integers(min_value=0, max_value=1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@pytest.mark.evaluation
class TestMetrics:
    """ROC AUC and Gini."""

    def test_matches_pair_counting(self):
        """Rank-based AUC equals explicit pair counting, ties included."""
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 2001))
            labels = rng.integers(0, 2, size=n)
            labels[:2] = [0, 1]
            scores = rng.integers(0, 20, size=n) / 4.0
            assert roc_auc(scores, labels) == pytest.approx(_pair_count_auc(scores, labels), abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(labelled_scores)
    def test_flip_and_monotone_properties(self, case):
        """Flipping labels mirrors the AUC; monotone rescaling keeps it."""
        scores = np.array(case[0], dtype=np.float64)
        labels = np.array(case[1])
        auc = roc_auc(scores, labels)
        assert 0.0 <= auc <= 1.0
        assert roc_auc(scores, 1 - labels) == pytest.approx(1.0 - auc, abs=1e-12)
        assert roc_auc(3.0 * scores + 1.0, labels) == pytest.approx(auc, abs=1e-12)
        assert roc_auc(-scores, labels) == pytest.approx(1.0 - auc, abs=1e-12)

    def test_known_values(self):
        """Perfect, reversed and all-tied rankings."""
        labels = np.array([0, 0, 1, 1])
        assert roc_auc([0.1, 0.2, 0.8, 0.9], labels) == 1.0
        assert roc_auc([0.9, 0.8, 0.2, 0.1], labels) == 0.0
        assert roc_auc([0.5, 0.5, 0.5, 0.5], labels) == 0.5

    def test_single_class_and_length_errors(self):
        """One-class label sets and length mismatches raise MetricError."""
        with pytest.raises(MetricError):
            roc_auc([0.1, 0.2], [1, 1])
        with pytest.raises(MetricError):
            roc_auc([0.1, 0.2, 0.3], [0, 1])
        assert not has_both_classes([0, 0])

    def test_gini(self):
        """Gini is 2 * AUC - 1 and rejects values outside [0, 1]."""
        assert gini(0.75) == 0.5
        assert gini(0.5) == 0.0
        with pytest.raises(MetricError):
            gini(1.5)


@pytest.mark.evaluation
class TestReport:
    """Result files and the aggregated report."""

    def _rows(self):
        labels = np.array([0, 1, 0, 1])
        return [
            result_row("TWO_SEAL_RNN", "out_of_time", "MODIFIED_SL", 7, np.array([0.1, 0.9, 0.2, 0.8]), labels),
            result_row("CN", "out_of_time", "-", 7, np.array([0.3, 0.2, 0.1, 0.4]), labels),
        ]

    def test_result_row_fields(self):
        """A row carries the AUC, its Gini and the sample count."""
        row = self._rows()[0]
        assert row.auc == 1.0 and row.gini == 1.0 and row.n_samples == 4

    def test_report_is_sorted_and_reproducible(self, tmp_path):
        """Two result files give a sorted CSV; reruns are byte-identical."""
        paths = [write_result(row, tmp_path / "results" / f"{row.method}.csv") for row in self._rows()]
        csv_a, txt_a = report(paths, tmp_path / "a")
        csv_b, txt_b = report(list(reversed(paths)), tmp_path / "b")
        assert csv_a.read_bytes() == csv_b.read_bytes()
        assert txt_a.read_bytes() == txt_b.read_bytes()
        frame = read_results([csv_a])
        assert list(frame.columns) == RESULT_COLUMNS
        assert frame["method"].tolist() == ["CN", "TWO_SEAL_RNN"]
        assert "== out_of_time ==" in txt_a.read_text()

    def test_summary_over_seeds(self):
        """Mean and population std of AUC per method across seeds."""
        rows = [ResultRow("SEAL", "edge_sampling", "SL", seed, auc, gini(auc), 10) for seed, auc in ((1, 0.6), (2, 0.8))]
        frame = pd.DataFrame([asdict(r) for r in rows], columns=RESULT_COLUMNS)
        summary = auc_by_seed(frame)
        assert summary.loc[0, "seeds"] == 2
        assert summary.loc[0, "auc_mean"] == pytest.approx(0.7)
        assert summary.loc[0, "auc_std"] == pytest.approx(0.1)
        assert "SEAL" in render_table(frame)

    def test_missing_and_malformed_results(self, tmp_path):
        """Absent files and foreign columns are reported."""
        with pytest.raises(MissingArtifactError):
            read_results([tmp_path / "nope.csv"])
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(DatasetFormatError):
            read_results([tmp_path / "bad.csv"])

    def test_scores_round_trip(self, tmp_path):
        """Per-sample score files keep pairs, labels and scores."""
        pairs = np.array([[0, 1], [2, 5]])
        path = write_scores(tmp_path / "scores" / "s.csv", pairs, np.array([1, 0]), np.array([0.25, 0.75]))
        frame = read_scores(path)
        assert frame[["u", "v"]].to_numpy().tolist() == pairs.tolist()
        assert frame["score"].tolist() == [0.25, 0.75]

    def test_oracle_row(self, synthetic_dir, synthetic_graph):
        """The oracle row scores the test set with generator probabilities."""
        test = out_of_time_split(synthetic_graph, SplitConfig(seed=3))["test"]
        row = oracle_row(synthetic_dir / "oracle.csv", test, seed=3)
        assert row.method == ORACLE_METHOD
        assert row.protocol == "out_of_time"
        assert 0.5 < row.auc <= 1.0
