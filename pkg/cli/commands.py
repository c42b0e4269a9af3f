"""Subcommand implementations and the on-disk layout of a run directory.

Every command reads its inputs from and writes its outputs to one run
directory, so commands can be re-run one at a time::

    data/                      generated dataset, oracle and credit labels
    splits/<protocol>/         samples.csv and split_manifest.txt
    models/encoder.ckpt        pretrained node encoder (+ embeddings.npy)
    models/<protocol>/         link model checkpoints and training logs
    models/credit/             GCN credit models and their node scores
    scores/<protocol>/         per-sample test scores
    results/<protocol>/        one result row per method
    results.csv, results.txt   aggregated report
"""
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from config.schemas import ExperimentConfig, FeatureMode, Protocol, Variant
from evaluation.report import (
    CREDIT_PROTOCOL,
    NO_FEATURES,
    ResultRow,
    oracle_row,
    read_scores,
    report,
    result_row,
    write_result,
    write_scores,
)
from graph.store import GraphView, TemporalGraph, load_cache, load_dataset, restrict, save_cache
from heuristics.similarity import HEURISTICS, parse_kind, score_samples
from models.base import EdgeScorer
from models.encoder import embed_nodes, encoder_credit_score, pretrain_node_encoder
from models.gcn import CREDIT_SEGMENTS, credit_node_split, gcn_credit_score
from models.pipeline import SamplePipeline
from models.rnn_link import RnnEdgeScorer, RnnLinkModel
from models.runner import evaluate_link_model, load_link_model, train_link_model
from models.seal import SubgraphEdgeScorer
from models.training import write_trace
from splits.samples import SampleSet, read_samples, write_samples
from splits.strategies import SplitStrategyFactory
from synth.generator import generate, read_credit_labels
from utils.errors import ConfigError, MissingArtifactError

logger = logging.getLogger(__name__)

# link rows of the main comparison, in training order (weighted variants need RNN_LINK first)
LINK_VARIANTS = (
    Variant.RNN_LINK,
    Variant.SEAL,
    Variant.TWO_SEAL,
    Variant.WL_SEAL,
    Variant.SEAL_RNN,
    Variant.TWO_SEAL_RNN,
)
CREDIT_VARIANTS = (Variant.GCN_SCORE, Variant.GCN_SCORE_LPATT)
RNN_CREDIT_METHOD = "RNN_CREDIT"


def run_name(variant: Variant, mode: FeatureMode) -> str:
    """File stem of a model's artifacts; RNN_LINK ignores the feature mode."""
    if variant is Variant.RNN_LINK or not variant.is_subgraph_link_model:
        return variant.value
    return f"{variant.value}__{mode.value.replace('+', '_')}"


def feature_label(variant: Variant, mode: FeatureMode) -> str:
    return mode.value if variant.is_subgraph_link_model else NO_FEATURES


@dataclass(frozen=True)
class Workspace:
    """Paths inside one run directory."""

    root: Path

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def cache(self) -> Path:
        return self.data / "graph.cache"

    @property
    def encoder(self) -> Path:
        return self.root / "models" / "encoder.ckpt"

    @property
    def embeddings(self) -> Path:
        return self.root / "models" / "embeddings.npy"

    @property
    def results(self) -> Path:
        return self.root / "results"

    def splits(self, protocol: Protocol) -> Path:
        return self.root / "splits" / protocol.value

    def model_dir(self, protocol: str) -> Path:
        return self.root / "models" / protocol

    def scores(self, protocol: str, name: str) -> Path:
        return self.root / "scores" / protocol / f"{name}.csv"

    def result(self, protocol: str, name: str) -> Path:
        return self.results / protocol / f"{name}.csv"


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"Missing {path}; run `{produced_by}` first")
    return path


def load_graph(ws: Workspace) -> TemporalGraph:
    """Dataset of the run, read through the binary cache."""
    if ws.cache.exists():
        return load_cache(ws.cache)
    nodes = _require(ws.data / "nodes.csv", "generate")
    graph = load_dataset(nodes, ws.data / "transfers.csv", ws.data / "header.txt")
    save_cache(graph, ws.cache)
    return graph


def load_splits(ws: Workspace, protocol: Protocol) -> Dict[str, SampleSet]:
    samples = _require(ws.splits(protocol) / "samples.csv", f"split --protocol {protocol.value}")
    return read_samples(samples)


def observation_view(graph: TemporalGraph, cfg: ExperimentConfig) -> GraphView:
    split_cfg = cfg.split.resolved(graph.time_span)
    return restrict(graph, (split_cfg.t0, split_cfg.t1))


def load_embeddings(ws: Workspace) -> np.ndarray:
    return np.load(_require(ws.embeddings, "pretrain"), allow_pickle=False)


def load_credit_labels(ws: Workspace, graph: TemporalGraph) -> np.ndarray:
    return read_credit_labels(_require(ws.data / "credit_labels.csv", "generate"), graph.node_count)


def rnn_scorer(ws: Workspace, protocol: str, cfg: ExperimentConfig) -> RnnEdgeScorer:
    path = _require(ws.model_dir(protocol) / f"{Variant.RNN_LINK.value}.ckpt", "train --variant rnn")
    model = load_link_model(path, cfg)
    if not isinstance(model, RnnLinkModel):
        raise ConfigError(f"{path} does not hold an RNN link model")
    return RnnEdgeScorer(model, cfg.feature)


def _embeddings_for(ws: Workspace, mode: FeatureMode) -> Optional[np.ndarray]:
    return load_embeddings(ws) if mode.uses_embeddings else None


def _edge_scorer_for(ws: Workspace, protocol: str, cfg: ExperimentConfig) -> Optional[EdgeScorer]:
    return rnn_scorer(ws, protocol, cfg) if cfg.model.variant.uses_rnn_weights else None


# --- subcommands -----------------------------------------------------------


def cmd_generate(ws: Workspace, cfg: ExperimentConfig) -> Dict[str, Path]:
    cfg.gen.validate()
    if ws.cache.exists():
        ws.cache.unlink()
    paths = generate(cfg.gen, ws.data)
    for name, path in sorted(paths.items()):
        print(f"{name}\t{path}")
    return paths


def cmd_split(ws: Workspace, cfg: ExperimentConfig) -> Dict[str, SampleSet]:
    graph = load_graph(ws)
    strategy = SplitStrategyFactory.create(cfg.split.protocol)
    sample_sets = strategy.split(graph, cfg.split)
    write_samples(sample_sets, ws.splits(cfg.split.protocol), cfg.split.resolved(graph.time_span))
    for name, samples in sample_sets.items():
        print(f"{cfg.split.protocol.value}\t{name}\t{len(samples)}\t{samples.positives}")
    return sample_sets


def cmd_baseline(ws: Workspace, cfg: ExperimentConfig, kinds: Sequence[str] = ()) -> List[ResultRow]:
    graph = load_graph(ws)
    protocol = cfg.split.protocol
    test = load_splits(ws, protocol)["test"]
    view = test.context_view(graph)
    rows = []
    for kind in [parse_kind(k) for k in kinds] or list(HEURISTICS):
        scores = score_samples(kind, view, test)
        write_scores(ws.scores(protocol.value, kind), test.pairs, test.labels, scores)
        row = result_row(kind, protocol.value, NO_FEATURES, cfg.run_seed, scores, test.labels)
        write_result(row, ws.result(protocol.value, kind))
        print(f"{kind}\t{protocol.value}\tauc={row.auc:.4f}")
        rows.append(row)
    return rows


def cmd_pretrain(ws: Workspace, cfg: ExperimentConfig) -> ResultRow:
    """Pretrain the node encoder on the credit train nodes and store embeddings for every node.

    The encoder's own head scored on the credit test nodes is the RNN-only
    credit baseline.
    """
    graph = load_graph(ws)
    labels = load_credit_labels(ws, graph)
    view = observation_view(graph, cfg)
    split = credit_node_split(labels, cfg.model.seed)
    encoder, trace = pretrain_node_encoder(
        view,
        labels,
        cfg.model,
        cfg.feature,
        cfg.train,
        train_nodes=split["train"],
        held_nodes=split["val"],
    )
    encoder.save(ws.encoder, {"input_dim": str(encoder.feat_dim), "seed": str(cfg.model.seed)})
    write_trace(trace, ws.encoder.with_suffix(".trace.csv"))
    np.save(ws.embeddings, embed_nodes(encoder, view, feature_cfg=cfg.feature), allow_pickle=False)

    test = split["test"]
    scores = encoder_credit_score(encoder, view, test, cfg.feature)
    write_scores(ws.scores(CREDIT_PROTOCOL, RNN_CREDIT_METHOD), np.stack([test, test], axis=1), labels[test], scores)
    row = result_row(RNN_CREDIT_METHOD, CREDIT_PROTOCOL, NO_FEATURES, cfg.run_seed, scores, labels[test])
    write_result(row, ws.result(CREDIT_PROTOCOL, RNN_CREDIT_METHOD))
    print(f"{RNN_CREDIT_METHOD}\t{CREDIT_PROTOCOL}\tauc={row.auc:.4f}")
    return row


def attention_scorer(ws: Workspace, cfg: ExperimentConfig, attention: Variant) -> EdgeScorer:
    """Edge scorer for LP attention: the RNN link model, or a SEAL-family model scoring each edge's subgraph."""
    protocol = Protocol.OUT_OF_TIME.value
    if attention is Variant.RNN_LINK:
        return rnn_scorer(ws, protocol, cfg)
    if not attention.is_subgraph_link_model:
        raise ConfigError(f"{attention.value} cannot serve as link attention")
    mode = cfg.model.feature_mode
    link_cfg = replace(cfg, model=replace(cfg.model, variant=attention))
    path = _require(ws.model_dir(protocol) / f"{run_name(attention, mode)}.ckpt", f"train --variant {attention.value}")
    model = load_link_model(path, link_cfg)
    pipeline = SamplePipeline(
        model.cfg,
        cfg.subgraph,
        embeddings=_embeddings_for(ws, model.cfg.feature_mode),
        edge_scorer=_edge_scorer_for(ws, protocol, link_cfg),
    )
    return SubgraphEdgeScorer(model, pipeline, batch_size=cfg.train.batch_size)


def _train_credit(ws: Workspace, cfg: ExperimentConfig, threads: int, attention: Variant) -> Path:
    graph = load_graph(ws)
    labels = load_credit_labels(ws, graph)
    view = observation_view(graph, cfg)
    scorer = attention_scorer(ws, cfg, attention) if cfg.model.variant is Variant.GCN_SCORE_LPATT else None
    scores = gcn_credit_score(
        view, load_embeddings(ws), labels, cfg.model, cfg.subgraph, cfg.train, attention=scorer, threads=threads
    )
    name = cfg.model.variant.value
    out = ws.model_dir(CREDIT_PROTOCOL)
    scores.model.save(out / f"{name}.ckpt", {"input_dim": str(scores.model.input_dim), "seed": str(cfg.model.seed)})
    write_trace(scores.trace, out / f"{name}.trace.csv")
    for segment in CREDIT_SEGMENTS:
        mask = scores.segment == segment
        nodes = scores.nodes[mask]
        write_scores(out / f"{name}.{segment}.csv", np.stack([nodes, nodes], axis=1), scores.labels[mask], scores.probs[mask])
    return out / f"{name}.ckpt"


def cmd_train(ws: Workspace, cfg: ExperimentConfig, threads: int = 1, attention: Variant = Variant.RNN_LINK) -> Path:
    variant = cfg.model.variant
    if variant in CREDIT_VARIANTS:
        path = _train_credit(ws, cfg, threads, attention)
        print(f"{variant.value}\t{path}")
        return path

    protocol = cfg.split.protocol.value
    graph = load_graph(ws)
    sample_sets = load_splits(ws, cfg.split.protocol)
    run = train_link_model(
        sample_sets,
        graph,
        cfg,
        embeddings=_embeddings_for(ws, cfg.model.feature_mode),
        edge_scorer=_edge_scorer_for(ws, protocol, cfg),
        threads=threads,
    )
    name = run_name(variant, cfg.model.feature_mode)
    path = run.save(ws.model_dir(protocol) / f"{name}.ckpt", cfg.model.seed)
    write_trace(run.trace, ws.model_dir(protocol) / f"{name}.trace.csv")
    print(f"{name}\t{path}")
    return path


def cmd_evaluate(ws: Workspace, cfg: ExperimentConfig, threads: int = 1) -> ResultRow:
    variant = cfg.model.variant
    if variant in CREDIT_VARIANTS:
        path = ws.model_dir(CREDIT_PROTOCOL) / f"{variant.value}.test.csv"
        frame = read_scores(_require(path, f"train --variant {variant.value}"))
        scores, labels = frame["score"].to_numpy(), frame["label"].to_numpy()
        write_scores(ws.scores(CREDIT_PROTOCOL, variant.value), frame[["u", "v"]].to_numpy(), labels, scores)
        row = result_row(variant.value, CREDIT_PROTOCOL, NO_FEATURES, cfg.run_seed, scores, labels)
        write_result(row, ws.result(CREDIT_PROTOCOL, variant.value))
        print(f"{variant.value}\t{CREDIT_PROTOCOL}\tauc={row.auc:.4f}\tgini={row.gini:.4f}")
        return row

    protocol = cfg.split.protocol.value
    name = run_name(variant, cfg.model.feature_mode)
    model = load_link_model(_require(ws.model_dir(protocol) / f"{name}.ckpt", f"train --variant {variant.value}"), cfg)
    graph = load_graph(ws)
    test = load_splits(ws, cfg.split.protocol)["test"]
    scores = evaluate_link_model(
        model,
        test,
        graph,
        cfg,
        embeddings=_embeddings_for(ws, model.cfg.feature_mode),
        edge_scorer=_edge_scorer_for(ws, protocol, cfg),
        threads=threads,
    )
    write_scores(ws.scores(protocol, name), test.pairs, test.labels, scores)
    mode = feature_label(variant, model.cfg.feature_mode)
    row = result_row(variant.value, protocol, mode, cfg.run_seed, scores, test.labels)
    write_result(row, ws.result(protocol, name))
    print(f"{name}\t{protocol}\tauc={row.auc:.4f}")
    return row


def cmd_report(ws: Workspace, cfg: ExperimentConfig) -> Path:
    """Aggregate every result row; add the oracle row of each split when the oracle file exists."""
    paths = sorted(ws.results.rglob("*.csv")) if ws.results.exists() else []
    if not paths:
        raise MissingArtifactError(f"No result files under {ws.results}; run `baseline` or `evaluate` first")
    extra = []
    oracle = ws.data / "oracle.csv"
    if oracle.exists():
        for protocol in Protocol:
            samples = ws.splits(protocol) / "samples.csv"
            if samples.exists():
                extra.append(oracle_row(oracle, read_samples(samples)["test"], cfg.run_seed))
    csv_path, table_path = report(paths, ws.root, extra)
    print(table_path.read_text(encoding="utf-8"), end="")
    return csv_path


def cmd_pipeline(ws: Workspace, cfg: ExperimentConfig, threads: int = 1) -> Path:
    """Generate, split both protocols, run every baseline and model, then report."""
    cmd_generate(ws, cfg)
    cmd_pretrain(ws, cfg)
    for protocol in (Protocol.OUT_OF_TIME, Protocol.EDGE_SAMPLING):
        pcfg = replace(cfg, split=replace(cfg.split, protocol=protocol))
        cmd_split(ws, pcfg)
        cmd_baseline(ws, pcfg)
        for variant in LINK_VARIANTS:
            modes = [cfg.model.feature_mode]
            if variant is Variant.TWO_SEAL_RNN and cfg.model.feature_mode is not FeatureMode.SL:
                modes.append(FeatureMode.SL)
            for mode in modes:
                vcfg = replace(pcfg, model=replace(cfg.model, variant=variant, feature_mode=mode))
                logger.info(f"Pipeline step: {protocol.value} {run_name(variant, mode)}")
                cmd_train(ws, vcfg, threads)
                cmd_evaluate(ws, vcfg, threads)
    for variant in CREDIT_VARIANTS:
        vcfg = replace(cfg, model=replace(cfg.model, variant=variant))
        cmd_train(ws, vcfg, threads)
        cmd_evaluate(ws, vcfg, threads)
    return cmd_report(ws, cfg)
