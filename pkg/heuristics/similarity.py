"""Common Neighbors, Adamic-Adar, Resource Allocation, Jaccard and Preferential Attachment.

Scores are computed from rows of the view's sparse adjacency. Every function
in ``HEURISTICS`` takes ``(adjacency, degrees, src, trg, removed)`` and returns
one score per pair; ``removed`` is 1 where the pair's own edge is hidden.
"""
import logging
from typing import Callable, Dict, Optional

import numpy as np
import scipy.sparse as sp

from graph.store import GraphView
from splits.samples import SampleSet
from utils.errors import GraphQueryError

logger = logging.getLogger(__name__)

Heuristic = Callable[[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]

HEURISTICS: Dict[str, Heuristic] = {}

_ALIASES = {
    "cn": "CN",
    "common_neighbors": "CN",
    "aa": "AA",
    "adamic_adar": "AA",
    "ra": "RA",
    "resource_allocation": "RA",
    "jaccard": "Jaccard",
    "pa": "PA",
    "preferential_attachment": "PA",
}


def heuristic(name: str) -> Callable[[Heuristic], Heuristic]:
    def register(func: Heuristic) -> Heuristic:
        HEURISTICS[name] = func
        return func

    return register


def parse_kind(kind: str) -> str:
    """Canonical heuristic name (``CN``, ``AA``, ``RA``, ``Jaccard``, ``PA``)."""
    if kind in HEURISTICS:
        return kind
    try:
        return _ALIASES[kind.strip().lower()]
    except KeyError:
        raise ValueError(f"Unknown heuristic: {kind}. Choose from {sorted(HEURISTICS)}") from None


def _weighted_common(adjacency: sp.csr_matrix, node_weights: np.ndarray, src: np.ndarray, trg: np.ndarray) -> np.ndarray:
    common = (adjacency[src] @ sp.diags(node_weights)).multiply(adjacency[trg])
    return np.asarray(common.sum(axis=1)).reshape(-1)


@heuristic("CN")
def common_neighbors(adjacency, degrees, src, trg, removed):
    return _weighted_common(adjacency, np.ones(adjacency.shape[0]), src, trg)


@heuristic("AA")
def adamic_adar(adjacency, degrees, src, trg, removed):
    # common neighbours have degree >= 2 and are never u or v, so hiding (u, v)
    # leaves their degrees alone
    inv_log = np.zeros(adjacency.shape[0])
    usable = degrees >= 2
    inv_log[usable] = 1.0 / np.log(degrees[usable])
    return _weighted_common(adjacency, inv_log, src, trg)


@heuristic("RA")
def resource_allocation(adjacency, degrees, src, trg, removed):
    inv = np.zeros(adjacency.shape[0])
    inv[degrees > 0] = 1.0 / degrees[degrees > 0]
    return _weighted_common(adjacency, inv, src, trg)


@heuristic("Jaccard")
def jaccard(adjacency, degrees, src, trg, removed):
    common = common_neighbors(adjacency, degrees, src, trg, removed)
    union = degrees[src] + degrees[trg] - 2 * removed - common
    return np.divide(common, union, out=np.zeros_like(common), where=union > 0)


@heuristic("PA")
def preferential_attachment(adjacency, degrees, src, trg, removed):
    return ((degrees[src] - removed) * (degrees[trg] - removed)).astype(np.float64)


def _check_pairs(view: GraphView, u: np.ndarray, v: np.ndarray) -> None:
    n = view.node_count
    bad = (u < 0) | (u >= n) | (v < 0) | (v >= n)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GraphQueryError(f"Node id out of range in pair ({int(u[i])}, {int(v[i])}); n={n}")
    if (u == v).any():
        raise ValueError(f"Heuristic scores need u != v, got u = v = {int(u[u == v][0])}")


def score_pairs(
    kind: str,
    view: GraphView,
    u: np.ndarray,
    v: np.ndarray,
    hidden: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Vectorized heuristic scores.

    Args:
        kind: Heuristic name or alias
        view: Context graph
        u, v: Pair endpoints
        hidden: Rows whose own (u, v) edge is removed before scoring

    Returns:
        float64 score per pair
    """
    func = HEURISTICS[parse_kind(kind)]
    u = np.asarray(u, dtype=np.int64).reshape(-1)
    v = np.asarray(v, dtype=np.int64).reshape(-1)
    _check_pairs(view, u, v)
    removed = np.zeros(u.shape[0])
    if hidden is not None:
        eids = view.base.edge_ids(np.stack([u, v], axis=1))
        present = eids >= 0
        active = np.zeros(u.shape[0], dtype=bool)
        active[present] = view.edge_mask[eids[present]]
        removed = (np.asarray(hidden, dtype=bool) & active).astype(np.float64)
    return func(view.adjacency, view.degrees.astype(np.float64), u, v, removed)


def heuristic_score(kind: str, view: GraphView, u: int, v: int, hide_edge: bool = False) -> float:
    """Similarity of one pair under ``kind``.

    Raises:
        ValueError: If ``u == v`` or the kind is unknown
        GraphQueryError: If an id is out of range
    """
    hidden = np.array([hide_edge])
    return float(score_pairs(kind, view, np.array([u]), np.array([v]), hidden=hidden)[0])


def score_samples(kind: str, view: GraphView, samples: SampleSet) -> np.ndarray:
    """Scores for every sample, hiding the edges the sample set asks to hide."""
    kind = parse_kind(kind)
    logger.info(f"Scoring {len(samples)} {samples.segment} samples with {kind}")
    return score_pairs(kind, view, samples.u, samples.v, hidden=samples.hide_mask())
