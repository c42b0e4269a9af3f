"""Credit scoring with a two-layer GCN over each node's hop-2 ego graph.

With link-prediction attention every ego-graph edge is weighted by a link
model's probability for that edge, replacing the plain neighbourhood mean.
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from config.schemas import ModelConfig, SubgraphConfig, TrainConfig, Variant
from graph.store import GraphView
from models.base import BaseModel, EdgeScorer, EdgeTableScorer
from models.pipeline import GraphBatch, SamplePipeline
from models.training import fit
from nn import functional as F
from nn.layers import GraphConv, MLPHead, layer_rng
from nn.tensor import Tensor
from utils.errors import SplitError

logger = logging.getLogger(__name__)

_INIT_STREAM = 45
_SPLIT_STREAM = 46

CREDIT_SEGMENTS = ("train", "val", "test")


class GcnCreditModel(BaseModel):
    """Two graph convolutions, the ego row of both outputs, dense head."""

    def __init__(self, cfg: ModelConfig, input_dim: int):
        super().__init__(cfg)
        rng = layer_rng(cfg.seed, _INIT_STREAM)
        dims = tuple(cfg.conv_dims[:2]) if len(cfg.conv_dims) >= 2 else (cfg.conv_dims[0],) * 2
        self.input_dim = input_dim
        self.convs = []
        width = input_dim
        for i, out_dim in enumerate(dims):
            self.convs.append(self.add_module(f"conv{i}", GraphConv(width, out_dim, rng, "relu")))
            width = out_dim
        self.head = self.add_module("head", MLPHead(int(sum(dims)), (cfg.dense_hidden,), rng))

    def logits(self, batch: GraphBatch) -> Tensor:
        h = Tensor(batch.features)
        outputs = []
        for conv in self.convs:
            h = conv(h, batch.operator)
            outputs.append(h)
        ego_rows = F.gather_rows(F.concat(outputs, axis=1), batch.offsets[:-1])
        return self.head(ego_rows)


@dataclass
class CreditScores:
    """Per-node credit default probabilities of one run."""

    nodes: np.ndarray
    probs: np.ndarray
    labels: np.ndarray
    segment: np.ndarray
    trace: List
    model: Optional[GcnCreditModel] = None

    def select(self, name: str):
        mask = self.segment == name
        return self.probs[mask], self.labels[mask]


def credit_node_split(credit_labels: np.ndarray, seed: int, fractions=(0.6, 0.2, 0.2)) -> Dict[str, np.ndarray]:
    """Seeded disjoint train/val/test sets of labelled nodes.

    Raises:
        SplitError: If no node carries a label
    """
    labelled = np.flatnonzero(np.asarray(credit_labels) >= 0)
    if labelled.shape[0] == 0:
        raise SplitError("No labelled nodes for credit scoring")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), _SPLIT_STREAM])))
    order = rng.permutation(labelled)
    shares = np.asarray(fractions, dtype=np.float64)
    cuts = np.floor(np.cumsum(shares / shares.sum()) * order.shape[0]).astype(np.int64)
    cuts[-1] = order.shape[0]
    bounds = np.concatenate([[0], cuts])
    return {name: np.sort(order[bounds[i]:bounds[i + 1]]) for i, name in enumerate(CREDIT_SEGMENTS)}


def gcn_credit_score(
    view: GraphView,
    embeddings: np.ndarray,
    credit_labels: np.ndarray,
    model_cfg: ModelConfig,
    sub_cfg: SubgraphConfig,
    train_cfg: TrainConfig,
    attention: Optional[EdgeScorer] = None,
    threads: int = 1,
) -> CreditScores:
    """Train the credit GCN and score every labelled node.

    Args:
        view: Observation view the ego graphs come from
        embeddings: ``(n, e)`` embedded transactions
        credit_labels: 0/1 per node, -1 for unlabelled
        model_cfg: Widths and seed; the variant is set from ``attention``
        sub_cfg: Node cap for ego graphs
        train_cfg: Optimization settings
        attention: Link scorer supplying edge weights (None for the plain GCN)
        threads: Preparation workers

    Returns:
        Probabilities for all labelled nodes with their segment names
    """
    variant = Variant.GCN_SCORE if attention is None else Variant.GCN_SCORE_LPATT
    model_cfg = replace(model_cfg, variant=variant)
    scorer = None if attention is None else EdgeTableScorer(attention, view)
    pipeline = SamplePipeline(model_cfg, sub_cfg, embeddings=embeddings, edge_scorer=scorer, threads=threads)

    split = credit_node_split(credit_labels, model_cfg.seed)
    labels = np.asarray(credit_labels, dtype=np.int64)
    inputs = {
        name: pipeline.prepare_nodes(view, nodes, labels[nodes]) for name, nodes in split.items()
    }
    model = GcnCreditModel(model_cfg, embeddings.shape[1])
    logger.info(f"Training {variant.value} on {len(inputs['train'])} nodes")
    trace = fit(model, inputs["train"], inputs["val"], train_cfg, seed=model_cfg.seed)

    nodes, probs, segment = [], [], []
    for name in CREDIT_SEGMENTS:
        chunk = inputs[name]
        for lo in range(0, len(chunk), train_cfg.batch_size):
            index = np.arange(lo, min(lo + train_cfg.batch_size, len(chunk)))
            probs.append(model.predict_proba(chunk.batch(index)))
        nodes.append(split[name])
        segment.append(np.full(split[name].shape[0], name))
    all_nodes = np.concatenate(nodes)
    return CreditScores(
        nodes=all_nodes,
        probs=np.concatenate(probs) if probs else np.zeros(0),
        labels=labels[all_nodes],
        segment=np.concatenate(segment),
        trace=trace,
        model=model,
    )
