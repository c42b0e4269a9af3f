"""GRU link scorer over an edge's binned transfer series."""
import numpy as np
from scipy.special import expit

from config.schemas import FeatureConfig, ModelConfig
from graph.features import SequenceBatch, batch_edges
from graph.store import GraphView
from models.base import BaseModel, EdgeScorer, SequenceInputs
from nn.layers import GRUCell, MLPHead, layer_rng
from nn.tensor import Tensor
from splits.samples import SampleSet

_INIT_STREAM = 41


class RnnLinkModel(BaseModel):
    """GRU over the edge sequence, dense head, sigmoid."""

    def __init__(self, cfg: ModelConfig, feat_dim: int):
        super().__init__(cfg)
        rng = layer_rng(cfg.seed, _INIT_STREAM)
        self.feat_dim = feat_dim
        self.gru = self.add_module("gru", GRUCell(feat_dim, cfg.rnn_hidden, rng))
        self.head = self.add_module("head", MLPHead(cfg.rnn_hidden, (cfg.dense_hidden,), rng))

    def logits(self, batch: np.ndarray) -> Tensor:
        return self.head(self.gru.run(batch))


def edge_inputs(samples: SampleSet, view: GraphView, feature_cfg: FeatureConfig) -> SequenceInputs:
    """Edge sequences of every sample; hidden positives get the empty series."""
    period = feature_cfg.period_for(view.window)
    sequences = batch_edges(view, samples.pairs, period, feature_cfg.log_amounts, hidden=samples.hide_mask())
    return SequenceInputs(sequences, samples.labels.copy())


def rnn_link_score(model: RnnLinkModel, edge_series: SequenceBatch, chunk: int = 4096) -> np.ndarray:
    """Link probability for every row of ``edge_series``."""
    scores = np.empty(len(edge_series))
    for lo in range(0, len(edge_series), chunk):
        hi = min(lo + chunk, len(edge_series))
        scores[lo:hi] = expit(model.logits(edge_series.data[lo:hi]).data)
    return scores


class RnnEdgeScorer(EdgeScorer):
    """Edge weights from a trained :class:`RnnLinkModel`."""

    def __init__(self, model: RnnLinkModel, feature_cfg: FeatureConfig):
        self.model = model
        self.feature_cfg = feature_cfg

    def score_pairs(self, view: GraphView, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.shape[0] == 0:
            return np.zeros(0)
        period = self.feature_cfg.period_for(view.window)
        return rnn_link_score(self.model, batch_edges(view, pairs, period, self.feature_cfg.log_amounts))
