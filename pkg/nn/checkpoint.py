"""Versioned parameter checkpoints stored as numpy ``.npz`` archives.

Archive members: ``magic`` and ``version``, ``names`` (parameter order),
``value_<i>`` (float64 array of the i-th name), and ``meta_keys`` /
``meta_values`` (string metadata). Loading never unpickles.
"""
import zipfile
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from utils.errors import DatasetFormatError

CHECKPOINT_MAGIC = "TLCKPT"
CHECKPOINT_VERSION = 2

PathLike = Union[str, Path]

# what a damaged archive raises from np.load or on member access
_READ_ERRORS = (ValueError, KeyError, EOFError, zipfile.BadZipFile)


def save_checkpoint(path: PathLike, state: Mapping[str, np.ndarray], meta: Optional[Mapping[str, str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    members = {
        "magic": np.array(CHECKPOINT_MAGIC),
        "version": np.array(CHECKPOINT_VERSION, dtype=np.int64),
        "names": np.array(list(state), dtype=np.str_),
        "meta_keys": np.array(sorted(meta), dtype=np.str_),
        "meta_values": np.array([str(meta[key]) for key in sorted(meta)], dtype=np.str_),
    }
    for index, value in enumerate(state.values()):
        members[f"value_{index}"] = np.asarray(value, dtype=np.float64)
    # a handle keeps numpy from appending ".npz" to the name
    with open(path, "wb") as handle:
        np.savez(handle, **members)
    return path


def load_checkpoint(path: PathLike) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, str]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        DatasetFormatError: Not a checkpoint, unknown version, or damaged data
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            if "magic" not in data.files or str(data["magic"]) != CHECKPOINT_MAGIC:
                raise DatasetFormatError("Not a checkpoint file (bad magic)", str(path))
            version = int(data["version"])
            if version != CHECKPOINT_VERSION:
                raise DatasetFormatError(f"Unsupported checkpoint version {version}", str(path))
            names = [str(name) for name in data["names"]]
            state: "OrderedDict[str, np.ndarray]" = OrderedDict(
                (name, np.array(data[f"value_{index}"], dtype=np.float64)) for index, name in enumerate(names)
            )
            meta = {str(k): str(v) for k, v in zip(data["meta_keys"], data["meta_values"])}
    except DatasetFormatError:
        raise
    except _READ_ERRORS as exc:
        raise DatasetFormatError(f"Damaged checkpoint: {exc.__class__.__name__}: {exc}", str(path)) from exc
    return state, meta
