"""Fixtures for graphs, synthetic datasets and small experiment configs."""
from typing import Iterable, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pytest

from config.schemas import ExperimentConfig, GenConfig, ModelConfig, SubgraphConfig, TrainConfig
from graph.store import TemporalGraph, build_graph, load_dataset
from synth.generator import generate


def make_graph(
    n: int,
    edges: Iterable[Tuple[int, int]],
    times: Optional[Sequence[int]] = None,
    purchases: Sequence[Tuple[int, int, int, int]] = (),
    currencies: int = 2,
    span: Tuple[int, int] = (0, 99),
) -> TemporalGraph:
    """Build a graph with one transfer per listed edge.

    Args:
        n: Node count
        edges: ``(src, dst)`` pairs, one transfer each
        times: Transfer timestamps (default: all at ``span[0]``)
        purchases: ``(node, timestamp, amount, currency)`` rows
        currencies: Currency code count
        span: Dataset time span

    Returns:
        TemporalGraph
    """
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    times = np.full(edges.shape[0], span[0]) if times is None else np.asarray(times, dtype=np.int64)
    rows = np.asarray(list(purchases), dtype=np.int64).reshape(-1, 4)
    return build_graph(
        n,
        currencies,
        span,
        node_ids=rows[:, 0],
        node_time=rows[:, 1],
        node_amount=rows[:, 2],
        node_currency=rows[:, 3],
        src=edges[:, 0],
        dst=edges[:, 1],
        time=times,
        amount=np.full(edges.shape[0], 100),
        currency=np.zeros(edges.shape[0], dtype=np.int64),
    )


def graph_from_networkx(g: nx.Graph) -> TemporalGraph:
    return make_graph(g.number_of_nodes(), sorted(g.edges()))


def random_graphs(count: int, max_nodes: int, p: float, seed: int):
    """Seeded Erdos-Renyi graphs with at least three nodes."""
    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(3, max_nodes + 1))
        yield nx.gnp_random_graph(n, p, seed=int(seed * 1000 + i))


@pytest.fixture
def path_graph() -> TemporalGraph:
    """Provide the path 0-1-2-3-4 with transfers at t=0..3.

    Returns:
        TemporalGraph: Five nodes, four edges
    """
    return make_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4)], times=[0, 1, 2, 3], span=(0, 9))


@pytest.fixture
def toy_graph() -> TemporalGraph:
    """Provide a triangle with a tail, two purchases and a repeated transfer.

    Edges: 0-1, 0-2, 1-2 and 2-3 (twice, in both directions); node 4 is isolated.

    Returns:
        TemporalGraph: Five nodes, four edges
    """
    return make_graph(
        5,
        [(0, 1), (2, 0), (1, 2), (2, 3), (3, 2)],
        times=[1, 2, 3, 5, 8],
        purchases=[(0, 1, 50, 0), (3, 4, 70, 1)],
        span=(0, 9),
    )


@pytest.fixture
def tiny_experiment() -> ExperimentConfig:
    """Provide an experiment config sized for unit tests.

    Returns:
        ExperimentConfig: Small widths, few epochs
    """
    return ExperimentConfig(
        gen=GenConfig.small(seed=3, n=300),
        subgraph=SubgraphConfig(hop=1, cap=24, l_max=6),
        model=ModelConfig(conv_dims=(6, 6), rnn_hidden=6, encoder_dims=(6, 4), dense_hidden=6, k=6, conv1d_channels=4, seed=3),
        train=TrainConfig(epochs=2, batch_size=32, lr=0.01),
    )


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory, base_seed):
    """Provide a small generated dataset on disk, seeded by --seed.

    Returns:
        Path: Directory with every generator artifact
    """
    out_dir = tmp_path_factory.mktemp("synthetic")
    generate(GenConfig.small(seed=base_seed, n=300), out_dir)
    return out_dir


@pytest.fixture(scope="session")
def synthetic_graph(synthetic_dir) -> TemporalGraph:
    """Provide the small generated dataset loaded as a graph.

    Returns:
        TemporalGraph: Loaded from ``synthetic_dir``
    """
    return load_dataset(synthetic_dir / "nodes.csv", synthetic_dir / "transfers.csv")
