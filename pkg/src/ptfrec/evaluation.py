"""Ranking metrics, the top-guess inference attack, and synthetic instances.

Candidates for ranking are all items the user has no *training* interaction
with, so test positives compete against every never-interacted item. Ties are
broken deterministically: score descending, then item id ascending. Metrics
are macro-averaged over users with a nonempty test set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .client import UploadPayload
from .data import InteractionStore


@dataclass
class RankingMetrics:
    k: int
    recall: float
    ndcg: float
    n_users: int
    per_user_recall: dict[int, float] = field(repr=False, default_factory=dict)
    per_user_ndcg: dict[int, float] = field(repr=False, default_factory=dict)


@dataclass
class AttackReport:
    macro_f1: float
    macro_precision: float
    macro_recall: float
    n_clients: int
    per_client_f1: dict[int, float] = field(repr=False, default_factory=dict)


def rank_eval(model, store: InteractionStore, k: int = 20,
              user_block: int = 64) -> RankingMetrics:
    """Top-k recall and NDCG of `model` (anything with score_matrix) on the
    store's test split."""
    users = [u for u in range(store.n_users) if len(store.test_pos[u])]
    recalls: dict[int, float] = {}
    ndcgs: dict[int, float] = {}
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    for lo in range(0, len(users), user_block):
        blk = users[lo:lo + user_block]
        scores = np.array(model.score_matrix(np.asarray(blk, dtype=np.int64)), dtype=np.float64)
        for row, user in enumerate(blk):
            s = scores[row]
            s[store.train_pos[user]] = -np.inf  # candidates exclude train positives
            top = top_k_items(s, k)
            test = store.test_pos[user]
            hits = np.isin(top, test)
            recalls[user] = float(hits.sum() / len(test))
            ideal = discounts[:min(k, len(test))].sum()
            ndcgs[user] = float(discounts[:len(top)][hits].sum() / ideal)
    n = len(users)
    return RankingMetrics(
        k=k,
        recall=float(np.mean(list(recalls.values()))) if n else 0.0,
        ndcg=float(np.mean(list(ndcgs.values()))) if n else 0.0,
        n_users=n,
        per_user_recall=recalls,
        per_user_ndcg=ndcgs,
    )


def top_k_items(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k best scores; ties broken by ascending item id."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return order[:k]


class RandomScorer:
    """Uniform random scorer over all items; the no-signal ranking baseline."""

    def __init__(self, n_items: int, seed: int = 0):
        self.n_items = n_items
        self.rng = np.random.default_rng(seed)

    def score_matrix(self, users) -> np.ndarray:
        return self.rng.random((len(users), self.n_items))


# -- inference attack ---------------------------------------------------------


def top_guess_attack(items: np.ndarray, scores: np.ndarray,
                     guess_fraction: float = 0.2) -> np.ndarray:
    """Infer a client's positives as the top guess_fraction of its uploaded
    items by score (the curious server's view)."""
    n_guess = int(round(guess_fraction * len(items)))
    order = np.lexsort((items, -scores))
    return np.asarray(items, dtype=np.int64)[order[:n_guess]]


def attack_eval(payloads: list[UploadPayload], store: InteractionStore,
                guess_fraction: float = 0.2) -> AttackReport:
    """Precision/recall/F1 of the top-guess attack per client, macro-averaged.

    The attack tries to recover the client's interaction set, so recall is
    measured against all of the client's train positives; concealing positives
    by not uploading them therefore directly suppresses recall.
    """
    f1s: dict[int, float] = {}
    precisions = []
    recalls = []
    for p in payloads:
        true_pos = store.train_pos[p.user]
        inferred = top_guess_attack(p.items, p.scores, guess_fraction)
        tp = len(np.intersect1d(inferred, true_pos))
        precision = tp / len(inferred) if len(inferred) else 0.0
        recall = tp / len(true_pos) if len(true_pos) else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1s[p.user] = f1
        precisions.append(precision)
        recalls.append(recall)
    n = len(payloads)
    return AttackReport(
        macro_f1=float(np.mean(list(f1s.values()))) if n else 0.0,
        macro_precision=float(np.mean(precisions)) if n else 0.0,
        macro_recall=float(np.mean(recalls)) if n else 0.0,
        n_clients=n,
        per_client_f1=f1s,
    )


def tradeoff(f1_undefended: float, ndcg_undefended: float,
             f1_defended: float, ndcg_defended: float) -> float:
    """Attack-drop per utility-drop ratio; inf when the defense costs nothing."""
    d_f1 = f1_undefended - f1_defended
    d_ndcg = ndcg_undefended - ndcg_defended
    if d_ndcg > 0:
        return d_f1 / d_ndcg
    return 0.0 if d_f1 == 0 else float("inf")


# -- synthetic instances --------------------------------------------------------


def make_planted_instance(n_users: int, n_items: int, n_clusters: int, seed: int,
                          in_prob: float = 0.8, cross_prob: float = 0.02) -> InteractionStore:
    """Block-structured implicit feedback: users in cluster c interact with
    items in cluster c with in_prob, elsewhere with cross_prob. The planted
    structure gives ranking oracles a known answer."""
    if n_users % n_clusters or n_items % n_clusters:
        raise ValueError("clusters must divide users and items evenly")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n_users, n_items, n_clusters]))
    items_per = n_items // n_clusters
    users_per = n_users // n_clusters
    item_cluster = np.arange(n_items) // items_per
    per_user = []
    for user in range(n_users):
        probs = np.where(item_cluster == user // users_per, in_prob, cross_prob)
        per_user.append(np.flatnonzero(rng.random(n_items) < probs).astype(np.int64))
    return InteractionStore.from_positive_lists(per_user, n_items)
