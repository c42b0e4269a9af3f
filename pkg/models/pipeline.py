"""Per-sample subgraph preparation and block-diagonal batching.

Preparation (extraction, labeling, edge weighting, feature assembly) runs on a
thread pool; results come back in sample order so the training loop that
consumes them stays deterministic.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from config.schemas import FeatureMode, ModelConfig, SubgraphConfig, Variant
from graph.store import GraphView
from models.base import EdgeScorer
from nn.functional import propagation_matrix
from splits.samples import SampleSet
from subgraph.extraction import EnclosingSubgraph, extract_ego, extract_enclosing
from subgraph.labeling import drnl_labels, encode_labels
from subgraph.wl import palette_wl_order
from utils.errors import ShapeError, SubgraphError
from utils.logger import progress

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedSample:
    """Model-ready form of one subgraph.

    Attributes:
        nodes: Global ids in model row order (targets first)
        features: ``(nodes, f)`` node feature rows
        operator: Convolution row operator (see :func:`nn.functional.propagation_matrix`)
        label: 0/1 target, -1 when unknown
    """

    nodes: np.ndarray
    features: np.ndarray
    operator: sp.csr_matrix
    label: int = -1

    @property
    def size(self) -> int:
        return int(self.nodes.shape[0])


@dataclass(frozen=True)
class GraphBatch:
    """Several prepared subgraphs stacked into one block-diagonal graph."""

    features: np.ndarray
    operator: sp.csr_matrix
    offsets: np.ndarray
    labels: np.ndarray

    @classmethod
    def collate(cls, samples: Sequence[PreparedSample]) -> "GraphBatch":
        if not samples:
            raise ShapeError("Cannot collate an empty batch")
        sizes = np.array([s.size for s in samples], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        operator = sp.block_diag([s.operator for s in samples], format="csr")
        operator.sort_indices()
        return cls(
            features=np.concatenate([s.features for s in samples], axis=0),
            operator=operator,
            offsets=offsets,
            labels=np.array([s.label for s in samples], dtype=np.int64),
        )

    def __len__(self) -> int:
        return int(self.offsets.shape[0] - 1)


@dataclass(frozen=True)
class GraphInputs:
    """Prepared subgraphs of one sample set."""

    samples: List[PreparedSample]

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.samples)

    def batch(self, index: np.ndarray) -> GraphBatch:
        return GraphBatch.collate([self.samples[i] for i in index])

    def subset(self, index: np.ndarray) -> "GraphInputs":
        return GraphInputs([self.samples[i] for i in index])


def weight_subgraph(sub: EnclosingSubgraph, scorer: EdgeScorer, view: GraphView) -> EnclosingSubgraph:
    """Attach the scorer's link probability to every local edge.

    Only edges present in the subgraph get weights; a hidden target edge stays
    absent.
    """
    if sub.edge_count == 0:
        return sub.with_weights(np.zeros(0))
    pairs = sub.nodes[sub.edges]
    weights = np.clip(scorer.score_pairs(view, pairs), 0.0, 1.0)
    return sub.with_weights(weights)


def feature_width(mode: FeatureMode, l_max: int, embedding_dim: int) -> int:
    width = 0
    if mode.uses_embeddings:
        width += embedding_dim
    if mode.uses_labels:
        width += l_max + 1
    return width


def node_features(
    sub: EnclosingSubgraph,
    mode: FeatureMode,
    l_max: int,
    embeddings: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Feature rows for ``sub.nodes``: embedded transactions, one-hot labels, or both."""
    parts = []
    if mode.uses_embeddings:
        if embeddings is None:
            raise ShapeError(f"Feature mode {mode.value} needs node embeddings")
        parts.append(embeddings[sub.nodes])
    if mode.uses_labels:
        if sub.labels is None:
            raise SubgraphError("Subgraph carries no structural labels")
        parts.append(encode_labels(sub.labels, l_max))
    return np.concatenate(parts, axis=1)


class SamplePipeline:
    """Turns sample pairs into :class:`PreparedSample` objects.

    Args:
        model_cfg: Variant, feature mode, K and seed
        sub_cfg: Hop, cap, label clamp
        embeddings: ``(n, e)`` embedded transactions (ET modes and GCN scoring)
        edge_scorer: Link scorer for the weighted variants
        threads: Worker count; results do not depend on it
    """

    def __init__(
        self,
        model_cfg: ModelConfig,
        sub_cfg: SubgraphConfig,
        embeddings: Optional[np.ndarray] = None,
        edge_scorer: Optional[EdgeScorer] = None,
        threads: int = 1,
    ):
        self.model_cfg = model_cfg
        self.sub_cfg = sub_cfg
        self.embeddings = embeddings
        self.edge_scorer = edge_scorer
        self.threads = max(1, int(threads))
        self.logger = logging.getLogger(self.__class__.__name__)
        if model_cfg.variant.uses_rnn_weights and edge_scorer is None:
            raise SubgraphError(f"Variant {model_cfg.variant.value} needs an edge scorer for its weights")

    def prepare_pair(self, view: GraphView, u: int, v: int, label: int = -1, hide: bool = False) -> PreparedSample:
        sub = extract_enclosing(
            view, u, v, self.sub_cfg.hop, self.sub_cfg.cap, hide_xy=hide, seed=self.model_cfg.seed
        )
        return self.prepare_subgraph(sub, view, label)

    def prepare_ego(self, view: GraphView, node: int, label: int = -1) -> PreparedSample:
        sub = extract_ego(view, node, hop=2, cap=self.sub_cfg.cap, seed=self.model_cfg.seed).canonical()
        return self._finish(sub, view, label, mode=FeatureMode.ET)

    def prepare_subgraph(self, sub: EnclosingSubgraph, view: GraphView, label: int = -1) -> PreparedSample:
        """Prepare an already extracted pair subgraph (labels are recomputed)."""
        sub = sub.canonical()
        sub = sub.with_labels(drnl_labels(sub, hide_targets=self.model_cfg.feature_mode.hide_targets))
        if self.model_cfg.variant is Variant.WL_SEAL:
            sub = sub.induced(palette_wl_order(sub, self.model_cfg.k, seed=self.model_cfg.seed))
        return self._finish(sub, view, label)

    def _finish(
        self, sub: EnclosingSubgraph, view: GraphView, label: int, mode: Optional[FeatureMode] = None
    ) -> PreparedSample:
        if self.edge_scorer is not None and self.model_cfg.variant.uses_rnn_weights:
            sub = weight_subgraph(sub, self.edge_scorer, view)
        features = node_features(sub, mode or self.model_cfg.feature_mode, self.sub_cfg.l_max, self.embeddings)
        operator = propagation_matrix(sub.adjacency(), sub.edge_weights)
        return PreparedSample(nodes=sub.nodes, features=features, operator=operator, label=int(label))

    def prepare(self, samples: SampleSet, view: GraphView) -> GraphInputs:
        """Prepare every sample of a set against its context view, in order."""
        hidden = samples.hide_mask()
        jobs = list(zip(samples.u, samples.v, samples.labels, hidden))

        def run(job) -> PreparedSample:
            u, v, y, hide = job
            return self.prepare_pair(view, int(u), int(v), int(y), bool(hide))

        self.logger.info(f"Preparing {len(jobs)} {samples.segment} subgraphs with {self.threads} thread(s)")
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            prepared = list(progress(pool.map(run, jobs), desc=f"subgraphs[{samples.segment}]", total=len(jobs)))
        return GraphInputs(prepared)

    def prepare_nodes(self, view: GraphView, nodes: np.ndarray, labels: np.ndarray) -> GraphInputs:
        """Prepare ego subgraphs for node-level scoring."""
        jobs = list(zip(np.asarray(nodes), np.asarray(labels)))

        def run(job) -> PreparedSample:
            node, y = job
            return self.prepare_ego(view, int(node), int(y))

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            prepared = list(progress(pool.map(run, jobs), desc="ego subgraphs", total=len(jobs)))
        return GraphInputs(prepared)
