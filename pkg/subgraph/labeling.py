"""Double-radius structural labels and their one-hot encoding."""
import numpy as np
from scipy.sparse import csgraph

from subgraph.extraction import EnclosingSubgraph
from utils.errors import SubgraphError

SENTINEL = 0


def _distances_from(adjacency, source: int, removed: int = -1) -> np.ndarray:
    """BFS distances from ``source``; ``removed`` is excluded from every path."""
    n = adjacency.shape[0]
    if removed < 0:
        return csgraph.shortest_path(adjacency, directed=False, unweighted=True, indices=source)
    keep = np.delete(np.arange(n), removed)
    reduced = adjacency[keep][:, keep]
    partial = csgraph.shortest_path(reduced, directed=False, unweighted=True, indices=int(np.flatnonzero(keep == source)[0]))
    full = np.full(n, np.inf)
    full[keep] = partial
    return full


def drnl_from_distances(d_x: np.ndarray, d_y: np.ndarray) -> np.ndarray:
    """``f = 1 + min(dx, dy) + (d/2)[(d/2) + (d%2) - 1]``; unreachable nodes get the sentinel."""
    finite = np.isfinite(d_x) & np.isfinite(d_y)
    dx = np.where(finite, d_x, 0).astype(np.int64)
    dy = np.where(finite, d_y, 0).astype(np.int64)
    d = dx + dy
    half, rem = np.divmod(d, 2)
    labels = 1 + np.minimum(dx, dy) + half * (half + rem - 1)
    return np.where(finite, labels, SENTINEL).astype(np.int64)


def drnl_labels(sub: EnclosingSubgraph, hide_targets: bool = True) -> np.ndarray:
    """Double-radius node labels of a pair subgraph.

    Targets get label 1. With ``hide_targets`` the distance to ``x`` is measured
    with ``y`` removed and vice versa; otherwise on the intact subgraph.

    Args:
        sub: Pair subgraph (targets at local ids 0 and 1)
        hide_targets: Remove the opposite target while measuring distances

    Returns:
        int64 label per local node
    """
    if sub.targets != 2:
        raise SubgraphError("DRNL labels need a pair subgraph")
    adjacency = sub.adjacency()
    if hide_targets:
        d_x = _distances_from(adjacency, 0, removed=1)
        d_y = _distances_from(adjacency, 1, removed=0)
    else:
        d_x = _distances_from(adjacency, 0)
        d_y = _distances_from(adjacency, 1)
    labels = drnl_from_distances(d_x, d_y)
    labels[:2] = 1
    return labels


def encode_labels(labels: np.ndarray, l_max: int) -> np.ndarray:
    """One-hot rows of width ``l_max + 1``; labels above ``l_max`` clamp to the last slot."""
    labels = np.asarray(labels, dtype=np.int64)
    if (labels < 0).any():
        raise SubgraphError("Structural labels must be non-negative")
    onehot = np.zeros((labels.shape[0], l_max + 1), dtype=np.float64)
    onehot[np.arange(labels.shape[0]), np.minimum(labels, l_max)] = 1.0
    return onehot
