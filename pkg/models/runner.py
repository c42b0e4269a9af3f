"""Training and scoring of link models over sample sets."""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from config.schemas import ExperimentConfig, Variant
from graph.store import TemporalGraph
from models.base import BaseModel, EdgeScorer, EdgeTableScorer, SequenceInputs
from models.factory import ModelFactory
from models.pipeline import GraphInputs, SamplePipeline
from models.rnn_link import edge_inputs
from models.seal import seal_input_dim
from models.training import TraceRow, fit, predict
from nn.checkpoint import load_checkpoint
from splits.samples import SampleSet
from utils.errors import ConfigError, DatasetFormatError, SplitError

logger = logging.getLogger(__name__)

LinkInputs = Union[SequenceInputs, GraphInputs]


@dataclass
class LinkRun:
    """A trained link model with the trace of its training run."""

    model: BaseModel
    trace: List[TraceRow]
    input_dim: int

    def save(self, path: Union[str, Path], seed: int) -> Path:
        meta = {
            "input_dim": str(self.input_dim),
            "feature_mode": self.model.cfg.feature_mode.value,
            "seed": str(seed),
        }
        return self.model.save(path, meta)


def prepare_link_inputs(
    samples: SampleSet,
    graph: TemporalGraph,
    cfg: ExperimentConfig,
    embeddings: Optional[np.ndarray] = None,
    edge_scorer: Optional[EdgeScorer] = None,
    threads: int = 1,
) -> LinkInputs:
    """Model-ready inputs of one sample set, built against its context view.

    RNN_LINK gets edge sequences; the SEAL family gets prepared subgraphs.
    Weighted variants score each context edge once per view.
    """
    view = samples.context_view(graph)
    variant = cfg.model.variant
    if variant is Variant.RNN_LINK:
        return edge_inputs(samples, view, cfg.feature)
    if not variant.is_subgraph_link_model:
        raise ConfigError(f"{variant.value} is not a link prediction variant")
    scorer = None
    if variant.uses_rnn_weights and edge_scorer is not None:
        scorer = EdgeTableScorer(edge_scorer, view)
    pipeline = SamplePipeline(cfg.model, cfg.subgraph, embeddings=embeddings, edge_scorer=scorer, threads=threads)
    return pipeline.prepare(samples, view)


def link_input_dim(cfg: ExperimentConfig, inputs: LinkInputs, embeddings: Optional[np.ndarray] = None) -> int:
    if isinstance(inputs, SequenceInputs):
        return inputs.sequences.feat_dim
    embedding_dim = 0 if embeddings is None else int(embeddings.shape[1])
    return seal_input_dim(cfg.model, cfg.subgraph, embedding_dim)


def train_link_model(
    sample_sets: Dict[str, SampleSet],
    graph: TemporalGraph,
    cfg: ExperimentConfig,
    embeddings: Optional[np.ndarray] = None,
    edge_scorer: Optional[EdgeScorer] = None,
    threads: int = 1,
) -> LinkRun:
    """Train ``cfg.model.variant`` on the ``train`` set, early stopping on ``val``.

    Args:
        sample_sets: Sample sets keyed by segment (``train`` and ``val`` required)
        graph: Graph the sets were drawn from
        cfg: Experiment settings
        embeddings: Embedded transactions, required by the ET feature modes
        edge_scorer: Link scorer for the weighted variants
        threads: Preparation workers

    Returns:
        The best-epoch model and its trace

    Raises:
        SplitError: If ``train`` or ``val`` is missing or empty
        TrainingDivergedError: On a non-finite loss
    """
    for name in ("train", "val"):
        if name not in sample_sets or len(sample_sets[name]) == 0:
            raise SplitError(f"Link training needs a non-empty {name} sample set")
    train = prepare_link_inputs(sample_sets["train"], graph, cfg, embeddings, edge_scorer, threads)
    val = prepare_link_inputs(sample_sets["val"], graph, cfg, embeddings, edge_scorer, threads)

    input_dim = link_input_dim(cfg, train, embeddings)
    model = ModelFactory.create(cfg.model, input_dim)
    logger.info(
        f"Training {cfg.model.variant.value}/{cfg.model.feature_mode.value} on {len(train)} samples "
        f"({model.parameter_count()} parameters)"
    )
    trace = fit(model, train, val, cfg.train, seed=cfg.model.seed)
    return LinkRun(model=model, trace=trace, input_dim=input_dim)


def evaluate_link_model(
    model: BaseModel,
    samples: SampleSet,
    graph: TemporalGraph,
    cfg: ExperimentConfig,
    embeddings: Optional[np.ndarray] = None,
    edge_scorer: Optional[EdgeScorer] = None,
    threads: int = 1,
) -> np.ndarray:
    """Link probability for every sample, in sample order."""
    cfg = replace(cfg, model=model.cfg)
    inputs = prepare_link_inputs(samples, graph, cfg, embeddings, edge_scorer, threads)
    return predict(model, inputs, cfg.train.batch_size)


def load_link_model(path: Union[str, Path], cfg: ExperimentConfig) -> BaseModel:
    """Rebuild a link model from a checkpoint written by :meth:`LinkRun.save`.

    Variant and feature mode come from the checkpoint; widths from ``cfg``.
    """
    _, meta = load_checkpoint(path)
    if "input_dim" not in meta:
        raise DatasetFormatError("Checkpoint lacks input_dim metadata", str(path))
    model_cfg = replace(
        cfg.model,
        variant=Variant.parse(meta.get("variant", cfg.model.variant.value)),
        feature_mode=type(cfg.model.feature_mode).parse(meta.get("feature_mode", cfg.model.feature_mode.value)),
    )
    model = ModelFactory.create(model_cfg, int(meta["input_dim"]))
    model.load(path)
    return model
