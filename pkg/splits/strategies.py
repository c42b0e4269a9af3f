"""Strategy classes building train/val/test sample sets under each protocol."""
import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sp

from config.schemas import Protocol, SplitConfig
from graph.store import GraphView, TemporalGraph, restrict
from splits.samples import SEGMENTS, SampleSet, Segment
from utils.errors import SplitError

logger = logging.getLogger(__name__)

_PROTOCOL_STREAM = {Protocol.OUT_OF_TIME: 11, Protocol.EDGE_SAMPLING: 12}


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys])))


def default_segment_plan(graph: TemporalGraph, cfg: SplitConfig) -> List[Segment]:
    """Split users into disjoint train/val/test sets by seeded permutation.

    All segments share the observation window ``[t0, t1)`` and target window ``[t1, t2)``.
    """
    cfg = cfg.resolved(graph.time_span)
    rng = _stream(cfg.seed, 10)
    perm = rng.permutation(graph.node_count)
    fractions = np.asarray(cfg.segment_fractions, dtype=np.float64)
    cuts = np.floor(np.cumsum(fractions / fractions.sum()) * graph.node_count).astype(np.int64)
    cuts[-1] = graph.node_count
    bounds = np.concatenate([[0], cuts])
    return [
        Segment(
            name=name,
            users=np.sort(perm[bounds[i]:bounds[i + 1]]),
            observation=(cfg.t0, cfg.t1),
            target=(cfg.t1, cfg.t2),
        )
        for i, name in enumerate(SEGMENTS)
    ]


def _pair_keys(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.minimum(a, b) * n + np.maximum(a, b)


def _members_edges(view: GraphView, member: np.ndarray) -> np.ndarray:
    edges = view.active_edges()
    keep = member[edges[:, 0]] & member[edges[:, 1]]
    return edges[keep]


def _random_pairs(
    rng: np.random.Generator,
    users: np.ndarray,
    count: int,
    excluded: np.ndarray,
    n: int,
) -> np.ndarray:
    """Draw ``count`` distinct member pairs whose keys are not in ``excluded``."""
    k = users.shape[0]
    available = k * (k - 1) // 2 - excluded.shape[0]
    if count > available:
        raise SplitError(f"Requested {count} negatives but only {available} member pairs are free")
    chosen: np.ndarray = np.zeros(0, dtype=np.int64)
    while chosen.shape[0] < count:
        need = count - chosen.shape[0]
        a = users[rng.integers(0, k, size=2 * need + 16)]
        b = users[rng.integers(0, k, size=2 * need + 16)]
        keys = _pair_keys(a, b, n)[a != b]
        keys = keys[~np.isin(keys, excluded) & ~np.isin(keys, chosen)]
        # keep first occurrences in draw order
        _, first = np.unique(keys, return_index=True)
        chosen = np.concatenate([chosen, keys[np.sort(first)][:need]])
    return np.stack([chosen // n, chosen % n], axis=1)


class SplitStrategy(ABC):
    """Build one :class:`SampleSet` per segment of the plan."""

    protocol: Protocol

    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def split(self, graph: TemporalGraph, cfg: SplitConfig) -> Dict[str, SampleSet]:
        """
        Build sample sets for every segment.

        Args:
            graph: Full dataset
            cfg: Split settings; unset timestamps are resolved from the dataset span

        Returns:
            Mapping ``segment name -> SampleSet`` in train, val, test order

        Raises:
            SplitError: If a segment has no positives or too few negative candidates
        """
        cfg.validate()
        cfg = cfg.resolved(graph.time_span)
        cfg.validate()
        plan = default_segment_plan(graph, cfg)
        budgets = self.negative_budgets(graph, cfg, plan)
        result = {}
        for index, segment in enumerate(plan):
            rng = _stream(cfg.seed, _PROTOCOL_STREAM[self.protocol], index)
            samples = self.build_segment(graph, cfg, segment, rng, budgets[index])
            self.logger.info(
                f"{self.protocol.value}/{segment.name}: {len(samples)} samples, {samples.positives} positive"
            )
            result[segment.name] = samples
        return result

    def negative_budgets(self, graph: TemporalGraph, cfg: SplitConfig, plan: List[Segment]) -> List[Optional[int]]:
        """Negatives wanted per segment; ``None`` means ``alpha`` times that segment's positives."""
        return [None] * len(plan)

    @abstractmethod
    def build_segment(
        self,
        graph: TemporalGraph,
        cfg: SplitConfig,
        segment: Segment,
        rng: np.random.Generator,
        negatives: Optional[int] = None,
    ) -> SampleSet:
        """Build the sample set of one segment."""


class OutOfTimeSplit(SplitStrategy):
    """Observe ``[t0, t1)``, label pairs by a transfer in ``[t1, t2)``.

    Negatives are drawn uniformly from pairs within ``neg_candidate_hops`` of
    each other in the observed view that do not transact in the target window.
    Observed edges are never hidden.
    """

    protocol = Protocol.OUT_OF_TIME

    def build_segment(
        self,
        graph: TemporalGraph,
        cfg: SplitConfig,
        segment: Segment,
        rng: np.random.Generator,
        negatives: Optional[int] = None,
    ) -> SampleSet:
        n = graph.node_count
        member = segment.member_mask(n)
        observed = restrict(graph, segment.observation)
        target = restrict(graph, segment.target)

        positives = _members_edges(target, member)
        if positives.shape[0] == 0:
            raise SplitError(f"Segment {segment.name} has no positive pairs in target window {segment.target}")
        positive_keys = np.sort(_pair_keys(positives[:, 0], positives[:, 1], n))
        wanted = int(round(cfg.alpha * positives.shape[0])) if negatives is None else int(negatives)

        adjacency = observed.adjacency
        reach = adjacency.copy()
        power = adjacency
        for _ in range(cfg.neg_candidate_hops - 1):
            power = power @ adjacency
            reach = reach + power
        select = sp.diags(member.astype(np.float64))
        reach = sp.triu(select @ reach @ select, k=1).tocsr()
        reach.sort_indices()
        coo = reach.tocoo()
        candidates = coo.row.astype(np.int64) * n + coo.col.astype(np.int64)
        candidates = candidates[~np.isin(candidates, positive_keys)]

        if candidates.shape[0] >= wanted:
            picked = np.sort(rng.choice(candidates, size=wanted, replace=False))
            drawn = np.stack([picked // n, picked % n], axis=1)
        else:
            self.logger.warning(
                f"Segment {segment.name}: only {candidates.shape[0]} hop-{cfg.neg_candidate_hops} candidates "
                f"for {wanted} negatives, topping up with uniform member pairs"
            )
            extra = _random_pairs(
                rng,
                segment.users,
                wanted - candidates.shape[0],
                np.union1d(positive_keys, candidates),
                n,
            )
            drawn = np.concatenate([np.stack([candidates // n, candidates % n], axis=1), extra])

        pairs = np.concatenate([positives, drawn])
        labels = np.concatenate([np.ones(positives.shape[0]), np.zeros(drawn.shape[0])])
        return SampleSet.from_pairs(pairs, labels, segment.observation, segment.name, self.protocol)


class EdgeSamplingSplit(SplitStrategy):
    """Positives are observed edges among segment users; negatives are member non-edges.

    The negative total is ``round(alpha * |E|)`` over every observed edge, shared
    out in proportion to each segment's positives. Each positive hides its own
    edge when scored (see :meth:`SampleSet.hide_mask`).
    """

    protocol = Protocol.EDGE_SAMPLING

    def negative_budgets(self, graph: TemporalGraph, cfg: SplitConfig, plan: List[Segment]) -> List[Optional[int]]:
        n = graph.node_count
        observed = restrict(graph, plan[0].observation)
        counts = np.array([_members_edges(observed, segment.member_mask(n)).shape[0] for segment in plan])
        for segment, count in zip(plan, counts):
            if count == 0:
                raise SplitError(f"Segment {segment.name} has no observed edges among its users")
        budget = int(round(cfg.alpha * observed.active_edges().shape[0]))
        # cumulative rounding keeps the total exact
        cuts = np.round(np.cumsum(counts) / counts.sum() * budget).astype(np.int64)
        return [int(b) for b in np.diff(np.concatenate([[0], cuts]))]

    def build_segment(
        self,
        graph: TemporalGraph,
        cfg: SplitConfig,
        segment: Segment,
        rng: np.random.Generator,
        negatives: Optional[int] = None,
    ) -> SampleSet:
        n = graph.node_count
        member = segment.member_mask(n)
        observed = restrict(graph, segment.observation)
        positives = _members_edges(observed, member)
        if positives.shape[0] == 0:
            raise SplitError(f"Segment {segment.name} has no observed edges among its users")
        wanted = int(round(cfg.alpha * positives.shape[0])) if negatives is None else int(negatives)
        edge_keys = np.sort(_pair_keys(positives[:, 0], positives[:, 1], n))
        sampled = _random_pairs(rng, segment.users, wanted, edge_keys, n)

        pairs = np.concatenate([positives, sampled])
        labels = np.concatenate([np.ones(positives.shape[0]), np.zeros(sampled.shape[0])])
        return SampleSet.from_pairs(pairs, labels, segment.observation, segment.name, self.protocol)


class SplitStrategyFactory:
    """Factory for creating split strategy instances."""

    @staticmethod
    def create(protocol: Protocol) -> SplitStrategy:
        """
        Create the strategy for a protocol.

        Args:
            protocol: ``Protocol`` member or its text form (``oot``, ``edge``)

        Returns:
            SplitStrategy instance
        """
        if not isinstance(protocol, Protocol):
            protocol = Protocol.parse(str(protocol))
        if protocol is Protocol.OUT_OF_TIME:
            return OutOfTimeSplit()
        return EdgeSamplingSplit()


def out_of_time_split(graph: TemporalGraph, cfg: SplitConfig) -> Dict[str, SampleSet]:
    return OutOfTimeSplit().split(graph, cfg)


def edge_sampling_split(graph: TemporalGraph, cfg: SplitConfig) -> Dict[str, SampleSet]:
    return EdgeSamplingSplit().split(graph, cfg)
