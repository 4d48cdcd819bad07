"""Server-side round logic: training on uploaded predictions, hint building.

The server never sees raw labels. It pools the round's uploaded score triples,
optimizes soft-label cross entropy for a couple of epochs, and tracks how
often each item appeared in a training batch. Hints sent back to a client mix
high-confidence items (frequently updated embeddings) with hard items (high
predicted score for that user), always disjoint from what the client uploaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .client import UploadPayload
from .models.base import check_finite
from .models.graph import build_adjacency

HINT_STRATEGIES = ("full", "no-hard", "no-confidence", "random")


@dataclass
class HintPolicy:
    size: int = 30            # items per hint
    confidence_mix: float = 0.5  # share selected by update frequency
    strategy: str = "full"

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"hint size must be >= 1, got {self.size}")
        if not 0.0 <= self.confidence_mix <= 1.0:
            raise ValueError(f"confidence mix must be in [0,1], got {self.confidence_mix}")
        if self.strategy not in HINT_STRATEGIES:
            raise ValueError(f"unknown hint strategy {self.strategy!r}")


@dataclass
class HintDataset:
    user: int
    items: np.ndarray
    scores: np.ndarray


class Server:
    def __init__(self, model, policy: HintPolicy, rng: np.random.Generator,
                 epochs: int = 2, batch_size: int = 1024,
                 graph_score_threshold: float = 0.5):
        self.model = model
        self.policy = policy
        self.rng = rng
        self.epochs = epochs
        self.batch_size = batch_size
        self.graph_score_threshold = graph_score_threshold
        self.last_upload: dict[int, np.ndarray] = {}
        if self.model.item_update_counts is None:
            raise ValueError("server model must track item update counts")

    @property
    def item_update_counts(self) -> np.ndarray:
        return self.model.item_update_counts

    # -- training ------------------------------------------------------------

    def train_round(self, payloads: list[UploadPayload]) -> float:
        """Train on the pooled round uploads; returns the final epoch mean loss.

        Payloads are sorted by user id before pooling so results do not depend
        on client completion order. Graph models get their adjacency rebuilt
        from this round's uploads thresholded at score > graph_score_threshold
        (the server has no true interactions to build a graph from).
        """
        if not payloads:
            raise ValueError("at least one payload is required")
        payloads = sorted(payloads, key=lambda p: p.user)
        for p in payloads:
            self.last_upload[p.user] = np.asarray(p.items, dtype=np.int64)
        users = np.concatenate([np.full(len(p.items), p.user, dtype=np.int64) for p in payloads])
        items = np.concatenate([p.items for p in payloads]).astype(np.int64)
        scores = np.concatenate([p.scores for p in payloads]).astype(np.float64)

        if hasattr(self.model, "set_adjacency"):
            positive = scores > self.graph_score_threshold
            self.model.set_adjacency(build_adjacency(
                self.model.n_users, self.model.n_items, users[positive], items[positive]))

        n = len(items)
        epoch_loss = 0.0
        for _ in range(self.epochs):
            perm = self.rng.permutation(n)
            losses = []
            for lo in range(0, n, self.batch_size):
                sel = perm[lo:lo + self.batch_size]
                losses.append(self.model.train_batch(users[sel], items[sel], scores[sel]))
            epoch_loss = float(np.mean(losses))
        return check_finite(epoch_loss, "server train_round")

    # -- hints ------------------------------------------------------------------

    def build_hints(self, users: list[int], strategy: str | None = None) -> list[HintDataset]:
        """Hints for the given users (one server score matrix evaluation)."""
        strategy = strategy or self.policy.strategy
        if strategy not in HINT_STRATEGIES:
            raise ValueError(f"unknown hint strategy {strategy!r}")
        users = sorted(users)
        score_rows = self.model.score_matrix(np.asarray(users, dtype=np.int64))
        n_items = self.model.n_items
        # frequency order is global: count desc, item id asc
        freq_order = np.lexsort((np.arange(n_items), -self.item_update_counts))
        out = []
        for row, user in enumerate(users):
            out.append(self._build_hint_for(user, score_rows[row], freq_order, strategy))
        return out

    def build_hint(self, user: int, strategy: str | None = None) -> HintDataset:
        return self.build_hints([user], strategy)[0]

    def _build_hint_for(self, user: int, scores: np.ndarray, freq_order: np.ndarray,
                        strategy: str) -> HintDataset:
        n_items = self.model.n_items
        eligible = np.ones(n_items, dtype=bool)
        uploaded = self.last_upload.get(user)
        if uploaded is not None:
            eligible[uploaded] = False
        n_eligible = int(eligible.sum())
        size = min(self.policy.size, n_eligible)
        n_conf = min(int(np.ceil(self.policy.confidence_mix * self.policy.size)), size)
        n_hard = size - n_conf

        taken = np.zeros(n_items, dtype=bool)
        if strategy == "random":
            chosen = self.rng.choice(np.flatnonzero(eligible), size=size, replace=False)
            items = np.sort(chosen)
            return HintDataset(user, items, scores[items])

        if strategy == "no-confidence":
            conf = self.rng.choice(np.flatnonzero(eligible), size=n_conf, replace=False)
        else:
            conf = _take_top(freq_order, eligible, taken, n_conf)
        taken[conf] = True

        if strategy == "no-hard":
            pool = np.flatnonzero(eligible & ~taken)
            hard = self.rng.choice(pool, size=min(n_hard, len(pool)), replace=False)
        else:
            score_order = np.lexsort((np.arange(n_items), -scores))
            hard = _take_top(score_order, eligible, taken, n_hard)

        items = np.concatenate([np.sort(np.asarray(conf, np.int64)),
                                np.sort(np.asarray(hard, np.int64))]).astype(np.int64)
        return HintDataset(user, items, scores[items])


def _take_top(order: np.ndarray, eligible: np.ndarray, taken: np.ndarray,
              k: int) -> np.ndarray:
    """First k ids in `order` that are eligible and not yet taken."""
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    mask = eligible[order] & ~taken[order]
    return order[mask][:k].astype(np.int64)
