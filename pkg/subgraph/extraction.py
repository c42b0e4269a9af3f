"""Enclosing subgraphs around target pairs (and single-node ego graphs)."""
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from graph.store import GraphView
from utils.errors import SubgraphError


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys])))


@dataclass(frozen=True)
class EnclosingSubgraph:
    """Local induced subgraph; target nodes occupy the first positions.

    Attributes:
        nodes: Global ids; ``nodes[0] = x`` and, for pair subgraphs, ``nodes[1] = y``
        edges: ``(m, 2)`` local edges with ``i < j``, sorted
        hop: Neighborhood radius used for extraction
        targets: 2 for pair subgraphs, 1 for ego graphs
        edge_weights: Optional per-edge weight in [0, 1], aligned with ``edges``
        labels: Optional structural label per node
        hidden: True when the target edge was removed
    """

    nodes: np.ndarray
    edges: np.ndarray
    hop: int
    targets: int = 2
    edge_weights: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    hidden: bool = False

    @property
    def size(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    @property
    def target_pair(self) -> Tuple[int, int]:
        return int(self.nodes[0]), int(self.nodes[1])

    def adjacency(self, weighted: bool = False) -> sp.csr_matrix:
        """Symmetric local adjacency; weighted entries come from ``edge_weights``."""
        n = self.size
        if weighted and self.edge_weights is None:
            raise SubgraphError("Subgraph carries no edge weights")
        values = self.edge_weights if weighted else np.ones(self.edge_count)
        rows = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        cols = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        data = np.concatenate([values, values]).astype(np.float64)
        matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        matrix.sort_indices()
        return matrix

    def with_weights(self, weights: np.ndarray) -> "EnclosingSubgraph":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (self.edge_count,):
            raise SubgraphError(f"Expected {self.edge_count} edge weights, got {weights.shape}")
        return replace(self, edge_weights=weights)

    def with_labels(self, labels: np.ndarray) -> "EnclosingSubgraph":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))

    def permuted(self, order: np.ndarray) -> "EnclosingSubgraph":
        """Reorder nodes so that new local id ``i`` is old local id ``order[i]``.

        Targets must stay in front.
        """
        order = np.asarray(order, dtype=np.int64)
        if not np.array_equal(order[: self.targets], np.arange(self.targets)):
            raise SubgraphError("Target nodes must keep their leading positions")
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.shape[0])
        mapped = inverse[self.edges] if self.edge_count else self.edges.reshape(0, 2)
        lo = np.minimum(mapped[:, 0], mapped[:, 1])
        hi = np.maximum(mapped[:, 0], mapped[:, 1])
        edge_order = np.lexsort((hi, lo))
        return replace(
            self,
            nodes=self.nodes[order],
            edges=np.stack([lo, hi], axis=1)[edge_order],
            edge_weights=None if self.edge_weights is None else self.edge_weights[edge_order],
            labels=None if self.labels is None else self.labels[order],
        )

    def canonical_order(self) -> np.ndarray:
        """Local ids with targets first and the rest by ascending global id."""
        rest = np.arange(self.targets, self.size)
        rest = rest[np.argsort(self.nodes[self.targets:], kind="stable")]
        return np.concatenate([np.arange(self.targets), rest]).astype(np.int64)

    def canonical(self) -> "EnclosingSubgraph":
        return self.permuted(self.canonical_order())

    def induced(self, local_ids: np.ndarray) -> "EnclosingSubgraph":
        """Subgraph over ``local_ids`` in the given order (targets must lead)."""
        local_ids = np.asarray(local_ids, dtype=np.int64)
        position = np.full(self.size, -1, dtype=np.int64)
        position[local_ids] = np.arange(local_ids.shape[0])
        if self.edge_count:
            mapped = position[self.edges]
            keep = (mapped >= 0).all(axis=1)
        else:
            mapped = self.edges.reshape(0, 2)
            keep = np.zeros(0, dtype=bool)
        mapped = mapped[keep]
        lo = np.minimum(mapped[:, 0], mapped[:, 1])
        hi = np.maximum(mapped[:, 0], mapped[:, 1])
        edge_order = np.lexsort((hi, lo))
        weights = None if self.edge_weights is None else self.edge_weights[keep][edge_order]
        return replace(
            self,
            nodes=self.nodes[local_ids],
            edges=np.stack([lo, hi], axis=1)[edge_order],
            edge_weights=weights,
            labels=None if self.labels is None else self.labels[local_ids],
        )


def _expand(adjacency: sp.csr_matrix, seeds: np.ndarray, hop: int) -> np.ndarray:
    reached = np.unique(seeds)
    frontier = reached
    for _ in range(hop):
        if frontier.shape[0] == 0:
            break
        neighbours = np.unique(adjacency[frontier].indices)
        frontier = np.setdiff1d(neighbours, reached, assume_unique=True)
        reached = np.union1d(reached, frontier)
    return reached


def _assemble(
    view: GraphView,
    targets: np.ndarray,
    hop: int,
    cap: int,
    rng: np.random.Generator,
    hide_xy: bool,
) -> EnclosingSubgraph:
    adjacency = view.adjacency
    around = _expand(adjacency, targets, hop)
    rest = np.setdiff1d(around, targets)
    room = cap - targets.shape[0]
    if rest.shape[0] > room:
        rest = np.sort(rng.choice(rest, size=room, replace=False))
    nodes = np.concatenate([targets, rest]).astype(np.int64)

    local = sp.triu(adjacency[nodes][:, nodes], k=1).tocoo()
    edges = np.stack([local.row, local.col], axis=1).astype(np.int64)
    if hide_xy and targets.shape[0] == 2:
        edges = edges[~((edges[:, 0] == 0) & (edges[:, 1] == 1))]
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return EnclosingSubgraph(nodes=nodes, edges=edges, hop=hop, targets=int(targets.shape[0]), hidden=hide_xy)


def extract_enclosing(
    view: GraphView,
    x: int,
    y: int,
    hop: int = 1,
    cap: int = 256,
    hide_xy: bool = False,
    seed: int = 0,
) -> EnclosingSubgraph:
    """Induced subgraph over the hop-neighborhoods of ``x`` and ``y``.

    When more than ``cap`` nodes are reached, the targets are kept and the rest
    is a seeded uniform subsample; the seed is combined with the pair so the
    result does not depend on processing order.

    Args:
        view: Context graph
        x, y: Target pair
        hop: 1 or 2
        cap: Maximum number of nodes (>= 2)
        hide_xy: Drop the (x, y) edge from the local adjacency
        seed: Subsampling seed

    Raises:
        SubgraphError: If ``x == y``, ``cap < 2`` or ``hop`` is not 1 or 2
    """
    x, y = view.base.check_node(x), view.base.check_node(y)
    if x == y:
        raise SubgraphError(f"Target nodes must differ, got x = y = {x}")
    if cap < 2:
        raise SubgraphError(f"cap must be >= 2, got {cap}")
    if hop not in (1, 2):
        raise SubgraphError(f"hop must be 1 or 2, got {hop}")
    rng = _rng(seed, min(x, y), max(x, y))
    return _assemble(view, np.array([x, y], dtype=np.int64), hop, cap, rng, hide_xy)


def extract_ego(view: GraphView, node: int, hop: int = 2, cap: int = 256, seed: int = 0) -> EnclosingSubgraph:
    """Single-target subgraph around ``node`` (used for node-level scoring)."""
    node = view.base.check_node(node)
    if cap < 1:
        raise SubgraphError(f"cap must be >= 1, got {cap}")
    if hop not in (1, 2):
        raise SubgraphError(f"hop must be 1 or 2, got {hop}")
    rng = _rng(seed, node)
    return _assemble(view, np.array([node], dtype=np.int64), hop, cap, rng, False)


def dump_edge_list(sub: EnclosingSubgraph) -> str:
    """Plain-text dump for inspection: node table, then ``i j weight`` lines."""
    lines = [f"# targets={sub.targets} hop={sub.hop} hidden={sub.hidden} nodes={sub.size} edges={sub.edge_count}"]
    for i, node in enumerate(sub.nodes):
        label = "" if sub.labels is None else f" label={int(sub.labels[i])}"
        lines.append(f"# {i} -> {int(node)}{label}")
    weights = sub.edge_weights if sub.edge_weights is not None else np.ones(sub.edge_count)
    for (i, j), w in zip(sub.edges, weights):
        lines.append(f"{int(i)} {int(j)} {float(w):.6g}")
    return "\n".join(lines) + "\n"
