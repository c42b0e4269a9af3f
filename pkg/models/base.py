"""Base classes shared by every model in the zoo."""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
from scipy.special import expit

from config.schemas import ModelConfig
from graph.features import SequenceBatch
from graph.store import GraphView
from nn.checkpoint import load_checkpoint, save_checkpoint
from nn.layers import Module
from nn.tensor import Tensor


@dataclass(frozen=True)
class SequenceInputs:
    """Binned sequences with one label each (edge series or node series)."""

    sequences: SequenceBatch
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def batch(self, index: np.ndarray) -> np.ndarray:
        return self.sequences.data[index]

    def subset(self, index: np.ndarray) -> "SequenceInputs":
        return SequenceInputs(self.sequences.rows(index), self.labels[index])


class BaseModel(Module, ABC):
    """Module that maps a prepared batch to one logit per item."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg

    @abstractmethod
    def logits(self, batch: Any) -> Tensor:
        """Unnormalized scores, shape ``(batch,)``."""

    def predict_proba(self, batch: Any) -> np.ndarray:
        return expit(self.logits(batch).data)

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, str]] = None) -> Path:
        info = {"class": self.__class__.__name__, "variant": self.cfg.variant.value}
        info.update(meta or {})
        self.logger.info(f"Saving {self.parameter_count()} parameters to {path}")
        return save_checkpoint(path, self.state_dict(), info)

    def load(self, path: Union[str, Path]) -> Dict[str, str]:
        state, meta = load_checkpoint(path)
        self.load_state_dict(state)
        self.logger.info(f"Loaded checkpoint {path} ({meta.get('class', '?')})")
        return meta


class EdgeScorer(ABC):
    """Source of per-edge link probabilities used as convolution weights."""

    @abstractmethod
    def score_pairs(self, view: GraphView, pairs: np.ndarray) -> np.ndarray:
        """Probability in [0, 1] for each ``(u, v)`` row of ``pairs``."""


class ConstantEdgeScorer(EdgeScorer):
    """Every edge gets the same weight (1.0 reduces weighted convolutions to the plain mean)."""

    def __init__(self, value: float = 1.0):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"Edge weight must lie in [0, 1], got {value}")
        self.value = float(value)

    def score_pairs(self, view: GraphView, pairs: np.ndarray) -> np.ndarray:
        return np.full(np.asarray(pairs).reshape(-1, 2).shape[0], self.value)


class EdgeTableScorer(EdgeScorer):
    """Scores every active edge of one view once and answers lookups by edge id.

    Pairs that are not active edges of the view fall back to the wrapped scorer.
    """

    def __init__(self, inner: EdgeScorer, view: GraphView):
        self.inner = inner
        self.view = view
        edges = view.active_edges()
        self.edge_ids = np.flatnonzero(view.edge_mask)
        self.table = np.zeros(view.base.edge_count)
        if edges.shape[0]:
            self.table[self.edge_ids] = inner.score_pairs(view, edges)

    def score_pairs(self, view: GraphView, pairs: np.ndarray) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if view is not self.view:
            return self.inner.score_pairs(view, pairs)
        eids = view.base.edge_ids(pairs)
        known = eids >= 0
        known[known] = view.edge_mask[eids[known]]
        scores = np.empty(pairs.shape[0])
        scores[known] = self.table[eids[known]]
        if (~known).any():
            scores[~known] = self.inner.score_pairs(view, pairs[~known])
        return scores
