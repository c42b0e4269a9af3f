"""Per-period binning of event series into RNN input sequences.

Each step carries ``[count, log1p(total), log1p(mean), per-currency counts]``,
so the feature width is ``3 + C``.
"""
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from graph.store import EventArrays, GraphView, TransactionEvent
from utils.errors import GraphQueryError

Window = Tuple[int, int]


@dataclass(frozen=True)
class SequenceBatch:
    """Binned sequences ready for a GRU.

    Attributes:
        data: ``(batch, steps, 3 + C)`` float64 array; unused steps are zero
        lengths: valid step count per row (every step of the window is valid)
        period: bin width in seconds
    """

    data: np.ndarray
    lengths: np.ndarray
    period: int

    @property
    def steps(self) -> int:
        return int(self.data.shape[1])

    @property
    def feat_dim(self) -> int:
        return int(self.data.shape[2])

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def rows(self, index: np.ndarray) -> "SequenceBatch":
        return SequenceBatch(self.data[index], self.lengths[index], self.period)


def step_count(window: Window, period: int) -> int:
    if period <= 0:
        raise ValueError(f"Binning period must be positive, got {period}")
    t0, t1 = window
    if t1 <= t0:
        raise GraphQueryError(f"Empty or inverted window [{t0}, {t1})")
    return math.ceil((t1 - t0) / period)


def _bin_columns(
    owners: np.ndarray,
    timestamps: np.ndarray,
    amounts: np.ndarray,
    currencies: np.ndarray,
    rows: int,
    window: Window,
    period: int,
    currency_count: int,
    log_amounts: bool,
) -> np.ndarray:
    steps = step_count(window, period)
    t0, t1 = window
    keep = (timestamps >= t0) & (timestamps < t1)
    owners, timestamps = owners[keep], timestamps[keep]
    amounts, currencies = amounts[keep].astype(np.float64), currencies[keep]
    step = (timestamps - t0) // period

    counts = np.zeros((rows, steps), dtype=np.float64)
    totals = np.zeros((rows, steps), dtype=np.float64)
    per_currency = np.zeros((rows, steps, currency_count), dtype=np.float64)
    np.add.at(counts, (owners, step), 1.0)
    np.add.at(totals, (owners, step), amounts)
    np.add.at(per_currency, (owners, step, currencies), 1.0)

    means = np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)
    if log_amounts:
        totals, means = np.log1p(totals), np.log1p(means)
    return np.concatenate([counts[..., None], totals[..., None], means[..., None], per_currency], axis=2)


def bin_series(
    events: Union[EventArrays, Iterable[TransactionEvent]],
    window: Window,
    period: int,
    currency_count: int,
    log_amounts: bool = True,
) -> np.ndarray:
    """Bin one event series into ``ceil((t1 - t0) / period)`` steps.

    Events outside ``window`` are ignored; the last bin may be partial.

    Args:
        events: Series sorted by timestamp
        window: Half-open ``[t0, t1)`` interval
        period: Bin width in seconds
        currency_count: Number of currency codes ``C``
        log_amounts: Apply ``log1p`` to total and mean amount

    Returns:
        ``(steps, 3 + C)`` array

    Raises:
        ValueError: If ``period`` is zero or negative
    """
    if not isinstance(events, EventArrays):
        events = list(events)
        events = EventArrays(
            np.array([e.timestamp for e in events], dtype=np.int64),
            np.array([e.amount for e in events], dtype=np.int64),
            np.array([e.currency for e in events], dtype=np.int64),
        )
    owners = np.zeros(len(events), dtype=np.int64)
    return _bin_columns(
        owners,
        events.timestamps,
        events.amounts,
        events.currencies,
        1,
        window,
        period,
        currency_count,
        log_amounts,
    )[0]


def _gather_segments(offsets: np.ndarray, segments: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Event indices for each requested segment plus the row each belongs to."""
    lo = offsets[segments]
    lengths = offsets[segments + 1] - lo
    owners = np.repeat(np.arange(segments.shape[0]), lengths)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return starts + np.arange(owners.shape[0]), owners


def batch_edges(
    view: GraphView,
    edges: Sequence[Tuple[int, int]],
    period: int,
    log_amounts: bool = True,
    hidden: Optional[np.ndarray] = None,
) -> SequenceBatch:
    """Binned transfer series for each requested pair, restricted to the view window.

    Pairs that never transacted (or whose rows are flagged in ``hidden``) give
    all-zero rows.
    """
    graph = view.base
    pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    for node in np.unique(pairs):
        graph.check_node(node)
    eids = graph.edge_ids(pairs)
    if hidden is not None:
        eids = np.where(np.asarray(hidden, dtype=bool), -1, eids)
    present = np.flatnonzero(eids >= 0)
    index, owners = _gather_segments(graph.edge_event_offsets, eids[present])
    data = _bin_columns(
        present[owners],
        graph.edge_event_time[index],
        graph.edge_event_amount[index],
        graph.edge_event_currency[index],
        pairs.shape[0],
        view.window,
        period,
        graph.currencies,
        log_amounts,
    )
    return SequenceBatch(data, np.full(pairs.shape[0], data.shape[1], dtype=np.int64), period)


def batch_nodes(view: GraphView, nodes: Sequence[int], period: int, log_amounts: bool = True) -> SequenceBatch:
    """Binned purchase series for each requested node over the view window."""
    graph = view.base
    ids = np.asarray(nodes, dtype=np.int64).reshape(-1)
    for node in np.unique(ids):
        graph.check_node(node)
    index, owners = _gather_segments(graph.node_event_offsets, ids)
    data = _bin_columns(
        owners,
        graph.node_event_time[index],
        graph.node_event_amount[index],
        graph.node_event_currency[index],
        ids.shape[0],
        view.window,
        period,
        graph.currencies,
        log_amounts,
    )
    return SequenceBatch(data, np.full(ids.shape[0], data.shape[1], dtype=np.int64), period)
