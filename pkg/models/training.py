"""Mini-batch training loop shared by every model."""
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config.schemas import TrainConfig
from evaluation.metrics import has_both_classes, roc_auc
from models.base import BaseModel
from nn import functional as F
from nn.optim import Adam, PlateauScheduler
from utils.errors import NonFiniteError, SplitError, TrainingDivergedError
from utils.logger import progress

logger = logging.getLogger(__name__)

_ORDER_STREAM = 51
_SUBSAMPLE_STREAM = 52

TRACE_COLUMNS = ["epoch", "train_loss", "val_auc", "lr"]


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    train_loss: float
    val_auc: float
    lr: float


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), *keys])))


def predict(model: BaseModel, inputs: Any, batch_size: int = 256) -> np.ndarray:
    """Probabilities for every item of ``inputs`` in order."""
    scores = np.empty(len(inputs))
    for lo in range(0, len(inputs), batch_size):
        index = np.arange(lo, min(lo + batch_size, len(inputs)))
        scores[lo:lo + index.shape[0]] = model.predict_proba(inputs.batch(index))
    return scores


def _validation(model: BaseModel, inputs: Any, batch_size: int) -> Tuple[float, float]:
    """Returns ``(metric to maximize, AUC or NaN)``; single-class sets fall back to minus the loss."""
    labels = np.asarray(inputs.labels)
    probs = predict(model, inputs, batch_size)
    if has_both_classes(labels):
        auc = roc_auc(probs, labels)
        return auc, auc
    clipped = np.clip(probs, 1e-12, 1 - 1e-12)
    loss = -np.mean(labels * np.log(clipped) + (1 - labels) * np.log(1 - clipped))
    return -float(loss), math.nan


def fit(model: BaseModel, train: Any, val: Any, cfg: TrainConfig, seed: int = 0) -> List[TraceRow]:
    """Minimize binary cross-entropy with Adam, early stopping on validation AUC.

    The learning rate is multiplied by ``cfg.lr_decay`` when validation AUC
    stalls. The parameters of the best epoch are restored on return.

    Args:
        model: Model whose ``logits`` accept ``train.batch(index)``
        train, val: Prepared inputs with ``labels``, ``batch`` and ``subset``
        cfg: Epochs, batch size and schedule
        seed: Drives batch order and train subsampling

    Returns:
        One trace row per epoch run

    Raises:
        SplitError: On an empty training set
        TrainingDivergedError: On a non-finite loss or gradient
    """
    if len(train) == 0:
        raise SplitError("Training set is empty")
    if cfg.max_train_samples and len(train) > cfg.max_train_samples:
        keep = np.sort(_stream(seed, _SUBSAMPLE_STREAM).choice(len(train), cfg.max_train_samples, replace=False))
        train = train.subset(keep)
    monitor = val if len(val) else train

    labels = np.asarray(train.labels, dtype=np.float64)
    optimizer = Adam(model.parameters(), lr=cfg.lr)
    scheduler = PlateauScheduler(optimizer, factor=cfg.lr_decay, patience=cfg.lr_patience)
    best_metric: Optional[float] = None
    best_state = model.state_dict()
    stale = 0
    trace: List[TraceRow] = []

    for epoch in range(1, cfg.epochs + 1):
        order = _stream(seed, _ORDER_STREAM, epoch).permutation(len(train))
        total = 0.0
        starts = range(0, len(train), cfg.batch_size)
        for lo in progress(starts, desc=f"epoch {epoch}", total=len(starts)):
            index = order[lo:lo + cfg.batch_size]
            optimizer.zero_grad()
            loss = F.bce_with_logits(model.logits(train.batch(index)), labels[index])
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(f"Non-finite loss {value} at epoch {epoch}, batch offset {lo}", trace)
            loss.backward()
            try:
                optimizer.step()
            except NonFiniteError as e:
                raise TrainingDivergedError(f"{e} at epoch {epoch}, batch offset {lo}", trace) from e
            total += value * index.shape[0]

        metric, val_auc = _validation(model, monitor, cfg.batch_size)
        row = TraceRow(epoch, total / len(train), val_auc, optimizer.lr)
        trace.append(row)
        logger.info(f"epoch {epoch}: train_loss={row.train_loss:.5f} val_auc={val_auc:.5f} lr={row.lr:.3g}")

        if best_metric is None or metric > best_metric:
            best_metric = metric
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info(f"Early stop after epoch {epoch}: no improvement for {stale} epochs")
                break
        scheduler.step(metric)

    model.load_state_dict(best_state)
    return trace


def write_trace(trace: List[TraceRow], path: Union[str, Path]) -> Path:
    """Training log as CSV (``epoch,train_loss,val_auc,lr``)."""
    path = Path(path)
    frame = pd.DataFrame([asdict(row) for row in trace], columns=TRACE_COLUMNS)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    return path
