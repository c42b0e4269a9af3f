"""Per-run result rows and the aggregated experiment report."""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from evaluation.metrics import gini, roc_auc
from splits.samples import SampleSet
from synth.generator import read_oracle
from utils.errors import DatasetFormatError, MissingArtifactError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RESULT_COLUMNS = ["method", "protocol", "feature_mode", "seed", "auc", "gini", "n_samples"]
SCORE_COLUMNS = ["u", "v", "label", "score"]
NO_FEATURES = "-"
ORACLE_METHOD = "ORACLE"
CREDIT_PROTOCOL = "credit"


@dataclass(frozen=True)
class ResultRow:
    """AUC of one method on one test set."""

    method: str
    protocol: str
    feature_mode: str
    seed: int
    auc: float
    gini: float
    n_samples: int


def result_row(
    method: str, protocol: str, feature_mode: str, seed: int, scores: np.ndarray, labels: np.ndarray
) -> ResultRow:
    """Score a test set.

    Raises:
        MetricError: If the test set lacks one of the classes
    """
    auc = roc_auc(scores, labels)
    return ResultRow(method, protocol, feature_mode, int(seed), auc, gini(auc), int(np.asarray(labels).shape[0]))


def _require(path: PathLike) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Missing run artifact: {path}")
    return path


def write_result(row: ResultRow, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([asdict(row)], columns=RESULT_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path


def write_scores(path: PathLike, pairs: np.ndarray, labels: np.ndarray, scores: np.ndarray) -> Path:
    """Per-sample scores as ``u,v,label,score``; for node scores ``v`` repeats ``u``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    frame = pd.DataFrame(
        {"u": pairs[:, 0], "v": pairs[:, 1], "label": np.asarray(labels, dtype=np.int64), "score": scores},
        columns=SCORE_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path


def read_scores(path: PathLike) -> pd.DataFrame:
    frame = pd.read_csv(_require(path))
    if list(frame.columns) != SCORE_COLUMNS:
        raise DatasetFormatError(f"Expected columns {SCORE_COLUMNS}, got {list(frame.columns)}", str(path))
    return frame


def read_results(paths: Iterable[PathLike]) -> pd.DataFrame:
    """Concatenate result files.

    Raises:
        MissingArtifactError: If a listed file does not exist
        DatasetFormatError: If a file has other columns
    """
    frames = []
    for path in paths:
        frame = pd.read_csv(_require(path))
        if list(frame.columns) != RESULT_COLUMNS:
            raise DatasetFormatError(f"Expected columns {RESULT_COLUMNS}, got {list(frame.columns)}", str(path))
        frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=RESULT_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def oracle_scores(oracle_path: PathLike, samples: SampleSet) -> np.ndarray:
    """Generator link probability of every sample pair; pairs without a tie score 0."""
    oracle = read_oracle(_require(oracle_path))
    return np.array([oracle.get((u, v), 0.0) for u, v, _ in samples])


def oracle_row(oracle_path: PathLike, samples: SampleSet, seed: int) -> ResultRow:
    scores = oracle_scores(oracle_path, samples)
    return result_row(ORACLE_METHOD, samples.protocol.value, NO_FEATURES, seed, scores, samples.labels)


def _ordered(frame: pd.DataFrame) -> pd.DataFrame:
    frame = frame.astype({"method": str, "protocol": str, "feature_mode": str, "seed": np.int64, "n_samples": np.int64})
    keys = ["protocol", "method", "feature_mode", "seed"]
    frame = frame.drop_duplicates(subset=keys, keep="last")
    return frame.sort_values(keys, kind="mergesort").reset_index(drop=True)[RESULT_COLUMNS]


def auc_by_seed(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and population std of AUC and Gini over seeds per method, protocol and feature mode."""
    if frame.empty:
        return pd.DataFrame(columns=["protocol", "method", "feature_mode", "seeds", "auc_mean", "auc_std", "gini_mean"])
    grouped = frame.groupby(["protocol", "method", "feature_mode"], sort=True)
    summary = grouped.agg(
        seeds=("seed", "nunique"),
        auc_mean=("auc", "mean"),
        auc_std=("auc", lambda x: float(np.std(x.to_numpy(), ddof=0))),
        gini_mean=("gini", "mean"),
    )
    return summary.reset_index()


def render_table(frame: pd.DataFrame) -> str:
    """Human-readable report: one block per protocol, methods by mean AUC."""
    summary = auc_by_seed(frame)
    if summary.empty:
        return "no results\n"
    blocks: List[str] = []
    for protocol, part in summary.groupby("protocol", sort=True):
        part = part.sort_values(["auc_mean", "method", "feature_mode"], ascending=[True, True, True], kind="mergesort")
        body = part.drop(columns=["protocol"]).to_string(
            index=False,
            float_format=lambda x: f"{x:.4f}",
        )
        blocks.append(f"== {protocol} ==\n{body}\n")
    return "\n".join(blocks)


def report(
    result_paths: Sequence[PathLike],
    out_dir: PathLike,
    extra_rows: Sequence[ResultRow] = (),
) -> Tuple[Path, Path]:
    """Write ``results.csv`` and ``results.txt`` from per-run result files.

    The same inputs always give byte-identical files.

    Args:
        result_paths: Files written by :func:`write_result`
        out_dir: Destination directory
        extra_rows: Rows computed on the fly (the oracle row)

    Returns:
        Paths of the CSV and the text table

    Raises:
        MissingArtifactError: If a listed result file does not exist
    """
    frame = read_results(sorted(Path(p) for p in result_paths))
    if extra_rows:
        extra = pd.DataFrame([asdict(r) for r in extra_rows], columns=RESULT_COLUMNS)
        frame = extra if frame.empty else pd.concat([frame, extra], ignore_index=True)
    frame = _ordered(frame)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    frame.to_csv(csv_path, index=False, lineterminator="\n", float_format="%.10f")
    table_path = out_dir / "results.txt"
    with open(table_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(render_table(frame))
    logger.info(f"Report with {len(frame)} rows written to {csv_path}")
    return csv_path, table_path
