"""Weisfeiler-Lehman colour refinement for ranking subgraph nodes.

Colours are re-numbered after every round by the sorted order of the
signatures ``(own colour, sorted neighbour colours)``, so the same subgraph
under any local node order receives the same colours.
"""
from typing import List, Tuple

import numpy as np

from subgraph.extraction import EnclosingSubgraph
from subgraph.labeling import drnl_labels
from utils.errors import SubgraphError


def _neighbour_lists(sub: EnclosingSubgraph) -> List[np.ndarray]:
    adjacency = sub.adjacency()
    return [adjacency.indices[adjacency.indptr[i]:adjacency.indptr[i + 1]] for i in range(sub.size)]


def refine_colors(sub: EnclosingSubgraph, initial: np.ndarray, max_rounds: int = 0) -> np.ndarray:
    """Iterate WL refinement until the colour partition stops splitting."""
    neighbours = _neighbour_lists(sub)
    colors = np.unique(np.asarray(initial, dtype=np.int64), return_inverse=True)[1]
    rounds = max_rounds or sub.size
    for _ in range(rounds):
        signatures: List[Tuple[int, Tuple[int, ...]]] = [
            (int(colors[i]), tuple(sorted(int(c) for c in colors[neighbours[i]]))) for i in range(sub.size)
        ]
        palette = {sig: rank for rank, sig in enumerate(sorted(set(signatures)))}
        refined = np.array([palette[sig] for sig in signatures], dtype=np.int64)
        if len(palette) == len(np.unique(colors)):
            return refined
        colors = refined
    return colors


def palette_wl_order(sub: EnclosingSubgraph, k: int, seed: int = 0) -> np.ndarray:
    """Local ids of the ``k`` most significant nodes, targets first.

    Ordering key: target flag, final WL colour, initial DRNL label (modified,
    no hiding), then a seeded random draw keyed by global node id.

    Raises:
        SubgraphError: If ``k < 2``
    """
    if k < 2:
        raise SubgraphError(f"K must be >= 2, got {k}")
    initial = drnl_labels(sub, hide_targets=False)
    final = refine_colors(sub, initial)

    pair = sub.target_pair
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), min(pair), max(pair)])))
    by_global = np.argsort(sub.nodes, kind="stable")
    tiebreak = np.empty(sub.size)
    tiebreak[by_global] = rng.random(sub.size)

    is_target = np.zeros(sub.size, dtype=np.int64)
    is_target[: sub.targets] = 1
    position = np.arange(sub.size)
    order = np.lexsort((tiebreak, initial, final, np.where(is_target == 1, position, sub.size)))
    return order[: min(k, sub.size)].astype(np.int64)
