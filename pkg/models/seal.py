"""SEAL family: graph convolutions over enclosing subgraphs with four readouts.

Per-node outputs of every convolution layer are concatenated, so the readout
sees ``sum(conv_dims)`` channels per node:

* SEAL, SEAL_RNN: sort pooling to K rows, 1-D convolution, dense head
* TWO_SEAL, TWO_SEAL_RNN: the two target rows, dense head
* WL_SEAL: the K WL-ranked rows in order (zero padded), dense head
"""
import numpy as np
from scipy.special import expit

from config.schemas import ModelConfig, SubgraphConfig, Variant
from graph.store import GraphView
from models.base import BaseModel, EdgeScorer
from models.pipeline import GraphBatch, PreparedSample, SamplePipeline, feature_width
from nn import functional as F
from nn.layers import Conv1dReadout, GraphConv, MLPHead, layer_rng
from nn.tensor import Tensor
from subgraph.extraction import EnclosingSubgraph
from utils.errors import ShapeError, SubgraphError

_INIT_STREAM = 44


class SealLinkModel(BaseModel):
    """Enclosing-subgraph link classifier."""

    def __init__(self, cfg: ModelConfig, input_dim: int):
        super().__init__(cfg)
        if not cfg.variant.is_subgraph_link_model:
            raise ValueError(f"{cfg.variant.value} is not a subgraph link model")
        rng = layer_rng(cfg.seed, _INIT_STREAM)
        self.input_dim = input_dim
        self.convs = []
        width = input_dim
        for i, out_dim in enumerate(cfg.conv_dims):
            self.convs.append(self.add_module(f"conv{i}", GraphConv(width, out_dim, rng, cfg.activation)))
            width = out_dim
        self.total_dim = int(sum(cfg.conv_dims))

        variant = cfg.variant
        if variant in (Variant.SEAL, Variant.SEAL_RNN):
            self.readout = self.add_module(
                "readout", Conv1dReadout(self.total_dim, cfg.conv1d_channels, cfg.k, rng, cfg.conv1d_width, "relu")
            )
            head_in = cfg.conv1d_channels
        elif variant in (Variant.TWO_SEAL, Variant.TWO_SEAL_RNN):
            self.readout = None
            head_in = 2 * self.total_dim
        else:
            self.readout = None
            head_in = cfg.k * self.total_dim
        self.head = self.add_module("head", MLPHead(head_in, (cfg.dense_hidden,), rng))

    def node_states(self, batch: GraphBatch) -> Tensor:
        """Concatenated per-node outputs of every convolution layer."""
        if batch.features.shape[1] != self.input_dim:
            raise ShapeError(f"Expected {self.input_dim} feature columns, got {batch.features.shape[1]}")
        h = Tensor(batch.features)
        outputs = []
        for conv in self.convs:
            h = conv(h, batch.operator)
            outputs.append(h)
        return F.concat(outputs, axis=1)

    def pooled(self, batch: GraphBatch) -> Tensor:
        states = self.node_states(batch)
        variant = self.cfg.variant
        if variant in (Variant.SEAL, Variant.SEAL_RNN):
            return self.readout(F.sort_pool(states, self.cfg.k, batch.offsets))
        if variant in (Variant.TWO_SEAL, Variant.TWO_SEAL_RNN):
            return F.two_node_pool(states, batch.offsets)
        # WL_SEAL rows already come in WL order, truncated to K
        k = self.cfg.k
        starts, sizes = batch.offsets[:-1], np.diff(batch.offsets)
        slots = np.arange(k)[None, :]
        index = np.where(slots < sizes[:, None], starts[:, None] + slots, -1).reshape(-1)
        return F.reshape(F.gather_rows(states, index), (len(batch), k * self.total_dim))

    def logits(self, batch: GraphBatch) -> Tensor:
        return self.head(self.pooled(batch))


def seal_forward(model: SealLinkModel, sub: EnclosingSubgraph, x: np.ndarray) -> float:
    """Probability for one subgraph whose feature rows ``x`` align with ``sub.nodes``.

    ``sub`` must already be in model row order (see :class:`SamplePipeline`).

    Raises:
        ShapeError: If ``x`` does not have one row per node
        SubgraphError: If a weighted variant gets a subgraph without edge weights
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != sub.size:
        raise ShapeError(f"Feature matrix {x.shape} does not match {sub.size} subgraph nodes")
    if model.cfg.variant.uses_rnn_weights and sub.edge_weights is None:
        raise SubgraphError(f"Variant {model.cfg.variant.value} needs edge weights on the subgraph")
    weights = sub.edge_weights if model.cfg.variant.uses_rnn_weights else None
    sample = PreparedSample(sub.nodes, x, F.propagation_matrix(sub.adjacency(), weights))
    return float(expit(model.logits(GraphBatch.collate([sample])).data[0]))


class SubgraphEdgeScorer(EdgeScorer):
    """Edge weights from a trained SEAL-family model scoring each edge's own subgraph."""

    def __init__(self, model: SealLinkModel, pipeline: SamplePipeline, batch_size: int = 64):
        self.model = model
        self.pipeline = pipeline
        self.batch_size = batch_size

    def score_pairs(self, view: GraphView, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        prepared = [self.pipeline.prepare_pair(view, int(u), int(v)) for u, v in pairs]
        scores = np.empty(pairs.shape[0])
        for lo in range(0, len(prepared), self.batch_size):
            batch = GraphBatch.collate(prepared[lo:lo + self.batch_size])
            scores[lo:lo + len(batch)] = self.model.predict_proba(batch)
        return scores


def seal_input_dim(model_cfg: ModelConfig, sub_cfg: SubgraphConfig, embedding_dim: int = 0) -> int:
    return feature_width(model_cfg.feature_mode, sub_cfg.l_max, embedding_dim)
