"""Node encoder pretrained on credit default; its hidden layer gives the embedded transactions."""
import logging
from typing import Optional, Tuple

import numpy as np

from config.schemas import FeatureConfig, ModelConfig, TrainConfig
from graph.features import batch_nodes
from graph.store import GraphView
from models.base import BaseModel, SequenceInputs
from models.training import fit
from nn.layers import GRUCell, MLPHead, layer_rng
from nn.tensor import Tensor
from utils.errors import SplitError

logger = logging.getLogger(__name__)

_INIT_STREAM = 42
_HOLDOUT_STREAM = 43


class NodeEncoder(BaseModel):
    """GRU over a node's purchase series followed by ``encoder_dims`` dense layers and a scalar head."""

    def __init__(self, cfg: ModelConfig, feat_dim: int):
        super().__init__(cfg)
        rng = layer_rng(cfg.seed, _INIT_STREAM)
        self.feat_dim = feat_dim
        self.gru = self.add_module("gru", GRUCell(feat_dim, cfg.rnn_hidden, rng))
        self.head = self.add_module("head", MLPHead(cfg.rnn_hidden, tuple(cfg.encoder_dims), rng))

    @property
    def embedding_dim(self) -> int:
        return self.head.width

    def logits(self, batch: np.ndarray) -> Tensor:
        return self.head(self.gru.run(batch))

    def embed(self, batch: np.ndarray) -> np.ndarray:
        """Penultimate-layer activations (the layer feeding the scalar head)."""
        return self.head.features(self.gru.run(batch)).data


def _holdout_split(labelled: np.ndarray, holdout: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), _HOLDOUT_STREAM])))
    order = rng.permutation(labelled)
    cut = int(round(order.shape[0] * (1.0 - holdout)))
    train_nodes = np.sort(order[:cut]) if cut > 0 else np.sort(order)
    held_nodes = np.sort(order[cut:]) if cut < order.shape[0] else train_nodes
    return train_nodes, held_nodes


def pretrain_node_encoder(
    view: GraphView,
    credit_labels: np.ndarray,
    model_cfg: ModelConfig,
    feature_cfg: FeatureConfig,
    train_cfg: TrainConfig,
    holdout: float = 0.2,
    train_nodes: Optional[np.ndarray] = None,
    held_nodes: Optional[np.ndarray] = None,
) -> Tuple[NodeEncoder, list]:
    """Train the encoder with binary cross-entropy on labelled nodes.

    Only purchases inside ``view.window`` are seen. A seeded ``holdout`` share
    of the labelled nodes drives early stopping unless explicit
    ``train_nodes`` and ``held_nodes`` are given.

    Args:
        view: Observation view (its window bounds the node series)
        credit_labels: 0/1 per node, -1 for unlabelled
        model_cfg: GRU width, encoder widths and seed
        feature_cfg: Binning settings
        train_cfg: Optimization settings
        holdout: Share of labelled nodes held out when no node sets are given
        train_nodes, held_nodes: Explicit labelled node sets

    Returns:
        Trained encoder and its metric trace

    Raises:
        SplitError: If no node carries a label
    """
    labelled = np.flatnonzero(np.asarray(credit_labels) >= 0)
    if labelled.shape[0] == 0:
        raise SplitError("No labelled nodes to pretrain the encoder on")
    if train_nodes is None or held_nodes is None:
        train_nodes, held_nodes = _holdout_split(labelled, holdout, model_cfg.seed)
    else:
        train_nodes = np.intersect1d(train_nodes, labelled)
        held_nodes = np.intersect1d(held_nodes, labelled)
        if train_nodes.shape[0] == 0:
            raise SplitError("No labelled nodes in the encoder training set")
        if held_nodes.shape[0] == 0:
            held_nodes = train_nodes

    period = feature_cfg.period_for(view.window)
    sequences = batch_nodes(view, labelled, period, feature_cfg.log_amounts)
    position = {int(node): i for i, node in enumerate(labelled)}
    inputs = SequenceInputs(sequences, np.asarray(credit_labels)[labelled].astype(np.int64))
    train = inputs.subset(np.array([position[int(x)] for x in train_nodes], dtype=np.int64))
    held = inputs.subset(np.array([position[int(x)] for x in held_nodes], dtype=np.int64))

    encoder = NodeEncoder(model_cfg, sequences.feat_dim)
    logger.info(f"Pretraining node encoder on {len(train)} nodes, holding out {len(held)}")
    trace = fit(encoder, train, held, train_cfg, seed=model_cfg.seed)
    return encoder, trace


def embed_nodes(
    encoder: NodeEncoder,
    view: GraphView,
    nodes: Optional[np.ndarray] = None,
    feature_cfg: Optional[FeatureConfig] = None,
    chunk: int = 4096,
) -> np.ndarray:
    """Embedded transactions for ``nodes`` (all nodes by default), one row each."""
    feature_cfg = feature_cfg or FeatureConfig()
    ids = np.arange(view.node_count) if nodes is None else np.asarray(nodes, dtype=np.int64)
    period = feature_cfg.period_for(view.window)
    rows = np.empty((ids.shape[0], encoder.embedding_dim))
    for lo in range(0, ids.shape[0], chunk):
        hi = min(lo + chunk, ids.shape[0])
        seq = batch_nodes(view, ids[lo:hi], period, feature_cfg.log_amounts)
        rows[lo:hi] = encoder.embed(seq.data)
    return rows


def encoder_credit_score(
    encoder: NodeEncoder, view: GraphView, nodes: np.ndarray, feature_cfg: Optional[FeatureConfig] = None
) -> np.ndarray:
    """Default probability from the encoder's own head (the RNN-only credit baseline)."""
    feature_cfg = feature_cfg or FeatureConfig()
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.shape[0] == 0:
        return np.zeros(0)
    seq = batch_nodes(view, nodes, feature_cfg.period_for(view.window), feature_cfg.log_amounts)
    return encoder.predict_proba(seq.data)
