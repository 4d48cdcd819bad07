"""Shared scoring/loss machinery for the recommender models.

Scores are logistic-squashed and clipped to (EPS_CLIP, 1 - EPS_CLIP) before
entering any log, so the soft-label cross entropy is always finite.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

EPS_CLIP = 1e-7


class TrainingDiverged(RuntimeError):
    """A batch produced a non-finite loss; the run should abort with context."""


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def clip_scores(s: np.ndarray) -> np.ndarray:
    return np.clip(s, EPS_CLIP, 1.0 - EPS_CLIP)


def bce_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean of -[r log s + (1-r) log(1-s)] over the batch; labels may be soft."""
    s = clip_scores(np.asarray(scores, dtype=np.float64))
    r = np.asarray(labels, dtype=np.float64)
    return float(np.mean(-(r * np.log(s) + (1.0 - r) * np.log1p(-s))))


def bce_grad_logits(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. the pre-sigmoid logits."""
    return (scores - labels) / len(scores)


def check_finite(loss: float, context: str) -> float:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss ({loss}) during {context}")
    return loss


def aggregate_rows(idx: np.ndarray, grads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-sample gradients that hit the same embedding row."""
    if len(idx) == 0:
        return idx, grads
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.empty(len(idx), dtype=bool)
    starts[0] = True
    np.not_equal(sorted_idx[1:], sorted_idx[:-1], out=starts[1:])
    boundaries = np.flatnonzero(starts)
    return sorted_idx[boundaries], np.add.reduceat(grads[order], boundaries, axis=0)
