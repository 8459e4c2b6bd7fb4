"""ROC-AUC via the Mann-Whitney rank statistic."""

import numpy as np
from scipy.stats import rankdata

from .errors import BadLabel, DegenerateLabels


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    counting ties as one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores for {labels.size} labels")
    if not np.all((labels == 0) | (labels == 1)):
        raise BadLabel("labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive / {n_neg} negative")
    # average ranks are multiples of 1/2, so the rank sum is exact in float64
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
