"""Immutable temporal transaction graph with window-restricted views.

Edges are undirected and identified by the unordered node pair; every transfer
between two clients lands in that edge's event series regardless of direction.
Adjacency is stored in CSR form with a parallel edge-id array, so a
:class:`GraphView` only needs one boolean per edge.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

from config.config import read_key_values, write_key_values
from utils.errors import DatasetFormatError, GraphQueryError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

NODE_COLUMNS = ["node_id", "timestamp", "amount", "currency"]
TRANSFER_COLUMNS = ["src_id", "dst_id", "timestamp", "amount", "currency"]

CACHE_MAGIC = "TLGRAPH"
CACHE_VERSION = 1


@dataclass(frozen=True)
class TransactionEvent:
    """One purchase or transfer."""

    timestamp: int
    amount: int
    currency: int


@dataclass(frozen=True)
class EventArrays:
    """Column view of an event series, sorted by timestamp."""

    timestamps: np.ndarray
    amounts: np.ndarray
    currencies: np.ndarray

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    def to_events(self) -> List[TransactionEvent]:
        return [
            TransactionEvent(int(t), int(a), int(c))
            for t, a, c in zip(self.timestamps, self.amounts, self.currencies)
        ]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


def _offsets_from_sorted(keys: np.ndarray, count: int) -> np.ndarray:
    offsets = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=count), out=offsets[1:])
    return offsets


class TemporalGraph:
    """Undirected CSR graph whose nodes and edges carry event series.

    Args:
        node_count: Number of nodes ``n``
        currencies: Number of currency codes ``C``
        time_span: Inclusive ``(t_min, t_max)`` of the dataset
        edge_src, edge_dst: Edge endpoints with ``edge_src < edge_dst``, sorted by pair
        edge_event_offsets: Per-edge slice into the edge event arrays (length m+1)
        edge_event_sender: Sending node of each transfer
        edge_event_time, edge_event_amount, edge_event_currency: Transfer columns
        node_event_offsets: Per-node slice into the node event arrays (length n+1)
        node_event_time, node_event_amount, node_event_currency: Purchase columns
    """

    def __init__(
        self,
        node_count: int,
        currencies: int,
        time_span: Tuple[int, int],
        edge_src: np.ndarray,
        edge_dst: np.ndarray,
        edge_event_offsets: np.ndarray,
        edge_event_sender: np.ndarray,
        edge_event_time: np.ndarray,
        edge_event_amount: np.ndarray,
        edge_event_currency: np.ndarray,
        node_event_offsets: np.ndarray,
        node_event_time: np.ndarray,
        node_event_amount: np.ndarray,
        node_event_currency: np.ndarray,
    ):
        self.node_count = int(node_count)
        self.currencies = int(currencies)
        self.time_span = (int(time_span[0]), int(time_span[1]))
        self.edge_src = _frozen(edge_src.astype(np.int64))
        self.edge_dst = _frozen(edge_dst.astype(np.int64))
        self.edge_event_offsets = _frozen(edge_event_offsets.astype(np.int64))
        self.edge_event_sender = _frozen(edge_event_sender.astype(np.int64))
        self.edge_event_time = _frozen(edge_event_time.astype(np.int64))
        self.edge_event_amount = _frozen(edge_event_amount.astype(np.int64))
        self.edge_event_currency = _frozen(edge_event_currency.astype(np.int64))
        self.node_event_offsets = _frozen(node_event_offsets.astype(np.int64))
        self.node_event_time = _frozen(node_event_time.astype(np.int64))
        self.node_event_amount = _frozen(node_event_amount.astype(np.int64))
        self.node_event_currency = _frozen(node_event_currency.astype(np.int64))

        m = self.edge_count
        rows = np.concatenate([self.edge_src, self.edge_dst])
        cols = np.concatenate([self.edge_dst, self.edge_src])
        eids = np.concatenate([np.arange(m), np.arange(m)]).astype(np.int64)
        order = np.lexsort((cols, rows))
        self.csr_offsets = _frozen(_offsets_from_sorted(rows, self.node_count))
        self.csr_targets = _frozen(cols[order])
        self.csr_edge_ids = _frozen(eids[order])
        self._edge_keys = _frozen(self.edge_src * self.node_count + self.edge_dst)

    @property
    def edge_count(self) -> int:
        return int(self.edge_src.shape[0])

    def __repr__(self) -> str:
        return (
            f"TemporalGraph(n={self.node_count}, edges={self.edge_count}, "
            f"transfers={self.edge_event_time.shape[0]}, purchases={self.node_event_time.shape[0]})"
        )

    def check_node(self, node: int) -> int:
        node = int(node)
        if not 0 <= node < self.node_count:
            raise GraphQueryError(f"Node id {node} out of range [0, {self.node_count})")
        return node

    def edge_id(self, u: int, v: int) -> int:
        """Edge id of the unordered pair, or -1 when the pair never transacted."""
        u, v = self.check_node(u), self.check_node(v)
        if u == v:
            return -1
        a, b = (u, v) if u < v else (v, u)
        key = a * self.node_count + b
        pos = int(np.searchsorted(self._edge_keys, key))
        if pos < self.edge_count and self._edge_keys[pos] == key:
            return pos
        return -1

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`edge_id` for an ``(k, 2)`` pair array."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        a = np.minimum(pairs[:, 0], pairs[:, 1])
        b = np.maximum(pairs[:, 0], pairs[:, 1])
        keys = a * self.node_count + b
        pos = np.searchsorted(self._edge_keys, keys)
        pos_clipped = np.minimum(pos, max(self.edge_count - 1, 0))
        found = (pos < self.edge_count) & (a != b)
        if self.edge_count:
            found &= self._edge_keys[pos_clipped] == keys
        return np.where(found, pos, -1)

    def edge_events(self, eid: int) -> EventArrays:
        lo, hi = self.edge_event_offsets[eid], self.edge_event_offsets[eid + 1]
        return EventArrays(
            self.edge_event_time[lo:hi], self.edge_event_amount[lo:hi], self.edge_event_currency[lo:hi]
        )

    def node_events(self, node: int) -> EventArrays:
        node = self.check_node(node)
        lo, hi = self.node_event_offsets[node], self.node_event_offsets[node + 1]
        return EventArrays(
            self.node_event_time[lo:hi], self.node_event_amount[lo:hi], self.node_event_currency[lo:hi]
        )

    def edge_series(self, eid: int) -> List[TransactionEvent]:
        return self.edge_events(eid).to_events()

    def node_series(self, node: int) -> List[TransactionEvent]:
        return self.node_events(node).to_events()

    def full_view(self) -> "GraphView":
        return restrict(self, (self.time_span[0], self.time_span[1] + 1))

    def equals(self, other: "TemporalGraph") -> bool:
        """Exact equality of every stored array."""
        if (self.node_count, self.currencies, self.time_span) != (
            other.node_count,
            other.currencies,
            other.time_span,
        ):
            return False
        return all(np.array_equal(getattr(self, name), getattr(other, name)) for name in _ARRAY_FIELDS)


_ARRAY_FIELDS = (
    "edge_src",
    "edge_dst",
    "edge_event_offsets",
    "edge_event_sender",
    "edge_event_time",
    "edge_event_amount",
    "edge_event_currency",
    "node_event_offsets",
    "node_event_time",
    "node_event_amount",
    "node_event_currency",
)


class GraphView:
    """Edges of a :class:`TemporalGraph` active during ``[t0, t1)``.

    The base graph is never touched; a view owns only its read-only edge mask.
    """

    def __init__(self, base: TemporalGraph, window: Tuple[int, int], edge_mask: np.ndarray):
        self.base = base
        self.window = (int(window[0]), int(window[1]))
        self.edge_mask = _frozen(edge_mask.astype(bool))

    def __repr__(self) -> str:
        return f"GraphView(window={self.window}, active_edges={int(self.edge_mask.sum())})"

    @property
    def node_count(self) -> int:
        return self.base.node_count

    def neighbors(self, node: int) -> np.ndarray:
        return neighbors(self, node)

    def degree(self, node: int) -> int:
        return degree(self, node)

    def active_edges(self) -> np.ndarray:
        """``(k, 2)`` array of active edges with ``u < v``, ordered by edge id."""
        active = np.flatnonzero(self.edge_mask)
        return np.stack([self.base.edge_src[active], self.base.edge_dst[active]], axis=1)

    def has_edge(self, u: int, v: int) -> bool:
        eid = self.base.edge_id(u, v)
        return eid >= 0 and bool(self.edge_mask[eid])

    def hide_edge(self, u: int, v: int) -> "GraphView":
        """Copy of this view with the (u, v) edge masked out."""
        eid = self.base.edge_id(u, v)
        if eid < 0 or not self.edge_mask[eid]:
            return self
        mask = self.edge_mask.copy()
        mask[eid] = False
        return GraphView(self.base, self.window, mask)

    @cached_property
    def degrees(self) -> np.ndarray:
        active = np.flatnonzero(self.edge_mask)
        counts = np.bincount(self.base.edge_src[active], minlength=self.node_count)
        counts += np.bincount(self.base.edge_dst[active], minlength=self.node_count)
        return _frozen(counts)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR matrix of the active edges."""
        edges = self.active_edges()
        n = self.node_count
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        data = np.ones(rows.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def to_csr(view: GraphView) -> sp.csr_matrix:
    """Scipy CSR adjacency of the view's active edges."""
    return view.adjacency


def restrict(graph: TemporalGraph, window: Tuple[int, int]) -> GraphView:
    """View with edges that have at least one transfer in ``[t0, t1)``.

    Raises:
        GraphQueryError: If the window is empty, inverted or leaves the dataset span
    """
    t0, t1 = int(window[0]), int(window[1])
    if t1 <= t0:
        raise GraphQueryError(f"Empty or inverted window [{t0}, {t1})")
    t_min, t_max = graph.time_span
    if t0 < t_min or t1 > t_max + 1:
        raise GraphQueryError(f"Window [{t0}, {t1}) outside dataset span [{t_min}, {t_max}]")
    in_window = (graph.edge_event_time >= t0) & (graph.edge_event_time < t1)
    if graph.edge_count == 0:
        mask = np.zeros(0, dtype=bool)
    else:
        # every edge owns >= 1 event, so reduceat never sees an empty segment
        mask = np.logical_or.reduceat(in_window, graph.edge_event_offsets[:-1])
    return GraphView(graph, (t0, t1), mask)


def neighbors(view: GraphView, node: int) -> np.ndarray:
    """Sorted ids of nodes joined to ``node`` by an active edge."""
    node = view.base.check_node(node)
    lo, hi = view.base.csr_offsets[node], view.base.csr_offsets[node + 1]
    targets = view.base.csr_targets[lo:hi]
    return targets[view.edge_mask[view.base.csr_edge_ids[lo:hi]]]


def degree(view: GraphView, node: int) -> int:
    return int(neighbors(view, node).shape[0])


def _read_csv(path: PathLike, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame({c: np.zeros(0, dtype=np.int64) for c in columns})
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"Malformed CSV: {e}", str(path)) from None
    if list(frame.columns) != columns:
        raise DatasetFormatError(f"Expected header {','.join(columns)}, got {','.join(frame.columns)}", str(path), 1)
    converted = {}
    for column in columns:
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = values.isna() | (values != values.round())
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise DatasetFormatError(
                f"Non-integer {column} value {frame[column].iloc[row]!r}", str(path), row + 2
            )
        converted[column] = values.to_numpy(dtype=np.int64)
    return pd.DataFrame(converted)


def _first_bad(mask: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(mask)
    return None if hits.shape[0] == 0 else int(hits[0]) + 2


def _check_events(frame: pd.DataFrame, path: PathLike, currencies: int, span: Tuple[int, int]) -> None:
    checks = [
        (frame["amount"].to_numpy() <= 0, "zero or negative amount"),
        (
            (frame["timestamp"].to_numpy() < span[0]) | (frame["timestamp"].to_numpy() > span[1]),
            f"timestamp outside declared span [{span[0]}, {span[1]}]",
        ),
        (
            (frame["currency"].to_numpy() < 0) | (frame["currency"].to_numpy() >= currencies),
            f"currency code outside [0, {currencies})",
        ),
    ]
    for mask, message in checks:
        line = _first_bad(mask)
        if line is not None:
            raise DatasetFormatError(message, str(path), line)


def read_header(path: PathLike) -> Tuple[int, int, Tuple[int, int]]:
    """Parse the dataset header sidecar into ``(n, currencies, (t_min, t_max))``."""
    values = read_key_values(path)
    try:
        n = int(values["n"])
        currencies = int(values["currencies"])
        span = (int(values["t_min"]), int(values["t_max"]))
    except KeyError as e:
        raise DatasetFormatError(f"Header missing key {e.args[0]}", str(path)) from None
    except ValueError as e:
        raise DatasetFormatError(f"Header value is not an integer: {e}", str(path)) from None
    if n < 0 or currencies < 1 or span[0] > span[1]:
        raise DatasetFormatError("Header declares an invalid n, currency count or span", str(path))
    return n, currencies, span


def load_dataset(
    nodes_path: PathLike, transfers_path: PathLike, header_path: Optional[PathLike] = None
) -> TemporalGraph:
    """Load purchases and transfers CSVs into a :class:`TemporalGraph`.

    The header defaults to ``header.txt`` beside the nodes file.

    Raises:
        DatasetFormatError: Malformed rows (with line number), ids outside ``0..n-1``,
            self transfers, non-positive amounts, timestamps outside the declared span
    """
    nodes_path, transfers_path = Path(nodes_path), Path(transfers_path)
    header_path = Path(header_path) if header_path is not None else nodes_path.parent / "header.txt"
    n, currencies, span = read_header(header_path)

    purchases = _read_csv(nodes_path, NODE_COLUMNS)
    node_ids = purchases["node_id"].to_numpy()
    line = _first_bad((node_ids < 0) | (node_ids >= n))
    if line is not None:
        raise DatasetFormatError(f"Node id outside dense range 0..{n - 1}", str(nodes_path), line)
    _check_events(purchases, nodes_path, currencies, span)

    transfers = _read_csv(transfers_path, TRANSFER_COLUMNS)
    src = transfers["src_id"].to_numpy()
    dst = transfers["dst_id"].to_numpy()
    line = _first_bad((src < 0) | (src >= n) | (dst < 0) | (dst >= n))
    if line is not None:
        raise DatasetFormatError(f"Node id outside dense range 0..{n - 1}", str(transfers_path), line)
    line = _first_bad(src == dst)
    if line is not None:
        raise DatasetFormatError("Self transfer (self-loops are not allowed)", str(transfers_path), line)
    _check_events(transfers, transfers_path, currencies, span)

    graph = build_graph(
        n,
        currencies,
        span,
        node_ids=node_ids,
        node_time=purchases["timestamp"].to_numpy(),
        node_amount=purchases["amount"].to_numpy(),
        node_currency=purchases["currency"].to_numpy(),
        src=src,
        dst=dst,
        time=transfers["timestamp"].to_numpy(),
        amount=transfers["amount"].to_numpy(),
        currency=transfers["currency"].to_numpy(),
    )
    logger.info(f"Loaded {graph!r} from {nodes_path.parent}")
    return graph


def build_graph(
    n: int,
    currencies: int,
    span: Tuple[int, int],
    node_ids: np.ndarray,
    node_time: np.ndarray,
    node_amount: np.ndarray,
    node_currency: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    time: np.ndarray,
    amount: np.ndarray,
    currency: np.ndarray,
) -> TemporalGraph:
    """Assemble a graph from validated event columns.

    Transfer rows between the same unordered pair merge into one edge series;
    ties in timestamp keep input order.
    """
    node_ids = np.asarray(node_ids, dtype=np.int64)
    order = np.lexsort((np.arange(node_ids.shape[0]), node_time, node_ids))
    node_offsets = _offsets_from_sorted(node_ids, n)

    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    low = np.minimum(src, dst)
    high = np.maximum(src, dst)
    keys = low * n + high
    t_order = np.lexsort((np.arange(keys.shape[0]), time, keys))
    sorted_keys = keys[t_order]
    edge_keys, first, counts = np.unique(sorted_keys, return_index=True, return_counts=True)
    edge_offsets = np.zeros(edge_keys.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=edge_offsets[1:])

    return TemporalGraph(
        node_count=n,
        currencies=currencies,
        time_span=span,
        edge_src=edge_keys // n if n else edge_keys,
        edge_dst=edge_keys % n if n else edge_keys,
        edge_event_offsets=edge_offsets,
        edge_event_sender=src[t_order],
        edge_event_time=np.asarray(time, dtype=np.int64)[t_order],
        edge_event_amount=np.asarray(amount, dtype=np.int64)[t_order],
        edge_event_currency=np.asarray(currency, dtype=np.int64)[t_order],
        node_event_offsets=node_offsets,
        node_event_time=np.asarray(node_time, dtype=np.int64)[order],
        node_event_amount=np.asarray(node_amount, dtype=np.int64)[order],
        node_event_currency=np.asarray(node_currency, dtype=np.int64)[order],
    )


def write_dataset(graph: TemporalGraph, out_dir: PathLike) -> Tuple[Path, Path, Path]:
    """Write ``nodes.csv``, ``transfers.csv`` and ``header.txt`` for ``graph``.

    Returns:
        Paths of the nodes file, transfers file and header
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nodes_path = out_dir / "nodes.csv"
    transfers_path = out_dir / "transfers.csv"
    header_path = out_dir / "header.txt"

    node_ids = np.repeat(np.arange(graph.node_count), np.diff(graph.node_event_offsets))
    pd.DataFrame(
        {
            "node_id": node_ids,
            "timestamp": graph.node_event_time,
            "amount": graph.node_event_amount,
            "currency": graph.node_event_currency,
        }
    ).to_csv(nodes_path, index=False, lineterminator="\n")

    edge_of_event = np.repeat(np.arange(graph.edge_count), np.diff(graph.edge_event_offsets))
    sender = graph.edge_event_sender
    other = np.where(
        sender == graph.edge_src[edge_of_event], graph.edge_dst[edge_of_event], graph.edge_src[edge_of_event]
    )
    pd.DataFrame(
        {
            "src_id": sender,
            "dst_id": other,
            "timestamp": graph.edge_event_time,
            "amount": graph.edge_event_amount,
            "currency": graph.edge_event_currency,
        }
    ).to_csv(transfers_path, index=False, lineterminator="\n")

    write_key_values(
        header_path,
        {
            "n": graph.node_count,
            "currencies": graph.currencies,
            "t_min": graph.time_span[0],
            "t_max": graph.time_span[1],
        },
    )
    return nodes_path, transfers_path, header_path


def save_cache(graph: TemporalGraph, path: PathLike) -> None:
    """Write the versioned binary cache."""
    arrays = {name: getattr(graph, name) for name in _ARRAY_FIELDS}
    meta = np.array(
        [CACHE_VERSION, graph.node_count, graph.currencies, graph.time_span[0], graph.time_span[1]],
        dtype=np.int64,
    )
    with open(path, "wb") as handle:
        np.savez(handle, magic=np.array(CACHE_MAGIC), meta=meta, **arrays)


def load_cache(path: PathLike) -> TemporalGraph:
    """Read a cache written by :func:`save_cache`.

    Raises:
        DatasetFormatError: Wrong magic number or unsupported version
    """
    with np.load(path, allow_pickle=False) as data:
        if "magic" not in data or str(data["magic"]) != CACHE_MAGIC:
            raise DatasetFormatError("Not a graph cache file", str(path))
        meta = data["meta"]
        if int(meta[0]) != CACHE_VERSION:
            raise DatasetFormatError(f"Unsupported cache version {int(meta[0])}", str(path))
        arrays = {name: data[name] for name in _ARRAY_FIELDS}
    return TemporalGraph(
        node_count=int(meta[1]),
        currencies=int(meta[2]),
        time_span=(int(meta[3]), int(meta[4])),
        **arrays,
    )
