"""Ranking metrics."""
import numpy as np
from scipy.stats import rankdata

from utils.errors import MetricError


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of ROC AUC with ties counted as 1/2.

    Uses average ranks, so the cost is one sort.

    Raises:
        MetricError: If the lengths differ or only one class is present
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"ROC AUC needs both classes, got {n_pos} positive and {n_neg} negative")
    ranks = rankdata(scores, method="average")
    u_stat = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def gini(auc: float) -> float:
    """Scoring-industry rescaling ``2 * AUC - 1``."""
    if not 0.0 <= auc <= 1.0:
        raise MetricError(f"AUC must lie in [0, 1], got {auc}")
    return 2.0 * auc - 1.0


def has_both_classes(labels) -> bool:
    labels = np.asarray(labels)
    return bool((labels == 1).any() and (labels != 1).any())
