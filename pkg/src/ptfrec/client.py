"""Client-side round logic: local training and privacy-preserving uploads.

A client owns exactly one user's data and a small local model indexed with a
single user row. Each round it resamples its trained pool, trains on the pool
plus the cached server hint, then uploads prediction scores for a subset of
pool items. The upload is protected by concealing the positive/negative mix
(random per-round positive share and negative multiplier) and by swapping a
few high-scoring positives' scores with negatives' scores, which perturbs
rank order while preserving the score multiset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import InteractionStore
from .models.base import EPS_CLIP

DEFENSES = ("none", "ldp", "sampling", "sampling+swapping")


@dataclass
class UploadPolicy:
    """Defense arm and its knobs for constructing the upload dataset."""

    mode: str = "sampling+swapping"
    pos_fraction_range: tuple[float, float] = (0.1, 1.0)
    neg_multiplier_range: tuple[int, int] = (1, 4)
    swap_fraction: float = 0.1
    ldp_scale: float = 0.2

    def __post_init__(self):
        if self.mode not in DEFENSES:
            raise ValueError(f"unknown defense mode {self.mode!r}")
        lo, hi = self.pos_fraction_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"bad positive fraction range {self.pos_fraction_range}")
        glo, ghi = self.neg_multiplier_range
        if not (1 <= glo <= ghi):
            raise ValueError(f"bad negative multiplier range {self.neg_multiplier_range}")
        if not 0.0 <= self.swap_fraction <= 1.0:
            raise ValueError(f"swap fraction must be in [0,1], got {self.swap_fraction}")
        if self.ldp_scale <= 0.0:
            raise ValueError(f"ldp scale must be > 0, got {self.ldp_scale}")


@dataclass
class UploadPayload:
    """Soft-label prediction triples flowing uplink for one user."""

    user: int
    items: np.ndarray
    scores: np.ndarray


class Client:
    def __init__(self, user: int, model, store: InteractionStore,
                 policy: UploadPolicy, rng: np.random.Generator,
                 epochs: int = 5, batch_size: int = 64, negative_ratio: int = 4):
        self.user = user
        self.model = model  # single-row user table; local user index is 0
        self.store = store
        self.policy = policy
        self.rng = rng
        self.epochs = epochs
        self.batch_size = batch_size
        self.negative_ratio = negative_ratio
        self.hint_items = np.empty(0, dtype=np.int64)
        self.hint_scores = np.empty(0, dtype=np.float64)

    # -- round steps ---------------------------------------------------------

    def resample_pool(self):
        self.store.resample_trained_pool(self.user, self.negative_ratio, self.rng)

    def local_train(self) -> float:
        """Epochs of shuffled minibatches over pool + hint; returns the mean
        loss of the final epoch."""
        pool_items = self.store.pool_items[self.user]
        pool_labels = self.store.pool_labels[self.user]
        items = np.concatenate([pool_items, self.hint_items])
        targets = np.concatenate([pool_labels, self.hint_scores])
        n = len(items)
        users = np.zeros(self.batch_size, dtype=np.int64)
        epoch_loss = 0.0
        for _ in range(self.epochs):
            perm = self.rng.permutation(n)
            losses = []
            for lo in range(0, n, self.batch_size):
                sel = perm[lo:lo + self.batch_size]
                losses.append(self.model.train_batch(users[:len(sel)], items[sel], targets[sel]))
            epoch_loss = float(np.mean(losses))
        return epoch_loss

    def select_upload_items(self) -> tuple[np.ndarray, np.ndarray]:
        """Choose (positives, negatives) from the trained pool for upload.

        Sampling modes redraw the positive share in [lo, hi] and the integer
        negative multiplier each round; the non-sampling modes upload the
        whole pool.
        """
        pool_items = self.store.pool_items[self.user]
        pool_labels = self.store.pool_labels[self.user]
        pos = pool_items[pool_labels == 1.0]
        neg = pool_items[pool_labels == 0.0]
        if self.policy.mode in ("none", "ldp"):
            return pos, neg
        lo, hi = self.policy.pos_fraction_range
        share = self.rng.uniform(lo, hi)
        glo, ghi = self.policy.neg_multiplier_range
        mult = int(self.rng.integers(glo, ghi + 1))
        n_pos = max(1, int(round(share * len(pos))))
        n_neg = min(int(round(mult * n_pos)), len(neg))
        pos_sel = self.rng.choice(pos, size=n_pos, replace=False)
        neg_sel = self.rng.choice(neg, size=n_neg, replace=False) if n_neg else np.empty(0, np.int64)
        return np.sort(pos_sel), np.sort(neg_sel)

    def build_upload(self, pos_items: np.ndarray, neg_items: np.ndarray) -> UploadPayload:
        items = np.concatenate([pos_items, neg_items]).astype(np.int64)
        scores = self.model.predict(np.zeros(len(items), dtype=np.int64), items)
        scores = scores.copy()
        if self.policy.mode == "sampling+swapping":
            self._swap_scores(scores, len(pos_items), len(neg_items))
        elif self.policy.mode == "ldp":
            scores = ldp_perturb(scores, self.policy.ldp_scale, self.rng)
        # upload order must not leak labels
        order = self.rng.permutation(len(items))
        return UploadPayload(self.user, items[order], scores[order])

    def make_upload(self) -> UploadPayload:
        pos, neg = self.select_upload_items()
        return self.build_upload(pos, neg)

    def receive_hint(self, items: np.ndarray, scores: np.ndarray):
        """Replace the cached hint; the client drops entries for its own train
        positives, which it knows with certainty and the server cannot."""
        keep = ~np.isin(items, self.store.train_pos[self.user])
        self.hint_items = np.asarray(items, dtype=np.int64)[keep]
        self.hint_scores = np.asarray(scores, dtype=np.float64)[keep]

    # -- internals -------------------------------------------------------------

    def _swap_scores(self, scores: np.ndarray, n_pos: int, n_neg: int):
        """Exchange the scores of round(swap_fraction * n_pos) high-scoring
        positives with distinct negatives' scores, in place."""
        k = int(round(self.policy.swap_fraction * n_pos))
        if k == 0 or n_neg == 0 or n_pos == 0:
            return
        order = np.argsort(-scores[:n_pos], kind="stable")
        top_half = order[:int(np.ceil(n_pos / 2))]
        k = min(k, len(top_half), n_neg)
        donors = self.rng.choice(top_half, size=k, replace=False)
        receivers = n_pos + self.rng.choice(n_neg, size=k, replace=False)
        scores[donors], scores[receivers] = scores[receivers].copy(), scores[donors].copy()


def ldp_perturb(scores: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Laplace(0, scale) noise per score, clamped back into (0, 1)."""
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    noisy = scores + rng.laplace(0.0, scale, size=len(scores))
    return np.clip(noisy, EPS_CLIP, 1.0 - EPS_CLIP)
