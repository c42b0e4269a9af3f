"""Labelled pair sets and their on-disk format."""
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.config import read_key_values, write_key_values
from config.schemas import Protocol, SplitConfig
from graph.store import GraphView, TemporalGraph, restrict
from utils.errors import DatasetFormatError

SEGMENTS = ("train", "val", "test")

Window = Tuple[int, int]


@dataclass(frozen=True)
class Segment:
    """One cell of the segment plan: a user set and its time windows."""

    name: str
    users: np.ndarray
    observation: Window
    target: Optional[Window] = None

    def member_mask(self, node_count: int) -> np.ndarray:
        mask = np.zeros(node_count, dtype=bool)
        mask[self.users] = True
        return mask


@dataclass(frozen=True)
class SampleSet:
    """Labelled ``(u, v)`` pairs of one segment, ``u < v``, sorted by pair.

    Attributes:
        u, v, labels: Parallel int arrays
        window: Observation window every sample is scored against
        segment: ``train``, ``val`` or ``test``
        protocol: Protocol that produced the set
    """

    u: np.ndarray
    v: np.ndarray
    labels: np.ndarray
    window: Window
    segment: str
    protocol: Protocol

    def __len__(self) -> int:
        return int(self.u.shape[0])

    def __iter__(self) -> Iterator[Tuple[int, int, int]]:
        for a, b, y in zip(self.u, self.v, self.labels):
            yield int(a), int(b), int(y)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=1)

    @property
    def positives(self) -> int:
        return int(self.labels.sum())

    def hide_mask(self) -> np.ndarray:
        """Samples whose own edge must be hidden from the context (edge-sampling positives)."""
        if self.protocol is Protocol.EDGE_SAMPLING:
            return self.labels == 1
        return np.zeros(len(self), dtype=bool)

    def context_view(self, graph: TemporalGraph) -> GraphView:
        return restrict(graph, self.window)

    def subset(self, index: np.ndarray) -> "SampleSet":
        return SampleSet(self.u[index], self.v[index], self.labels[index], self.window, self.segment, self.protocol)

    @classmethod
    def from_pairs(
        cls,
        pairs: np.ndarray,
        labels: np.ndarray,
        window: Window,
        segment: str,
        protocol: Protocol,
    ) -> "SampleSet":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        u = np.minimum(pairs[:, 0], pairs[:, 1])
        v = np.maximum(pairs[:, 0], pairs[:, 1])
        labels = np.asarray(labels, dtype=np.int64)
        order = np.lexsort((v, u))
        return cls(u[order], v[order], labels[order], (int(window[0]), int(window[1])), segment, protocol)


def write_samples(
    sample_sets: Dict[str, SampleSet], out_dir: Union[str, Path], cfg: SplitConfig
) -> Tuple[Path, Path]:
    """Write ``samples.csv`` (``u,v,label,segment``) and ``split_manifest.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = [
        pd.DataFrame({"u": s.u, "v": s.v, "label": s.labels, "segment": name})
        for name, s in sample_sets.items()
    ]
    samples_path = out_dir / "samples.csv"
    pd.concat(frames, ignore_index=True).to_csv(samples_path, index=False, lineterminator="\n")

    manifest = {f"split.{key}": value for key, value in asdict(cfg).items() if value is not None}
    manifest["split.protocol"] = cfg.protocol.value
    for name, s in sample_sets.items():
        manifest[f"window.{name}"] = f"{s.window[0]},{s.window[1]}"
        manifest[f"count.{name}"] = f"{len(s)},{s.positives}"
    manifest_path = out_dir / "split_manifest.txt"
    write_key_values(manifest_path, manifest)
    return samples_path, manifest_path


def read_samples(samples_path: Union[str, Path], manifest_path: Optional[Union[str, Path]] = None) -> Dict[str, SampleSet]:
    """Read sample sets written by :func:`write_samples`.

    Raises:
        DatasetFormatError: Missing manifest entries or unknown segments
    """
    samples_path = Path(samples_path)
    manifest_path = Path(manifest_path) if manifest_path else samples_path.parent / "split_manifest.txt"
    manifest = read_key_values(manifest_path)
    try:
        protocol = Protocol.parse(manifest["split.protocol"])
    except KeyError:
        raise DatasetFormatError("Manifest lacks split.protocol", str(manifest_path)) from None

    frame = pd.read_csv(samples_path)
    result: Dict[str, SampleSet] = {}
    for name in SEGMENTS:
        rows = frame[frame["segment"] == name]
        if f"window.{name}" not in manifest:
            if len(rows):
                raise DatasetFormatError(f"Manifest lacks window for segment {name}", str(manifest_path))
            continue
        t0, t1 = (int(x) for x in manifest[f"window.{name}"].split(","))
        result[name] = SampleSet.from_pairs(
            rows[["u", "v"]].to_numpy(), rows["label"].to_numpy(), (t0, t1), name, protocol
        )
    unknown = set(frame["segment"].unique()) - set(SEGMENTS)
    if unknown:
        raise DatasetFormatError(f"Unknown segments {sorted(unknown)}", str(samples_path))
    return result
