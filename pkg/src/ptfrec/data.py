"""Interaction storage, dataset ingestion, train/test splitting, negative pools.

Raw user/item identifiers are interned into dense zero-based indices in first
appearance order, so a fixed input file always produces the same id maps.
All ratings are binarized at load time: every observed (user, item) pair is a
positive, duplicates are dropped (and counted in a warning).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

FORMATS = ("movielens-100k", "csv")


class DatasetError(ValueError):
    """Unreadable or malformed dataset input."""


@dataclass(frozen=True)
class SplitConfig:
    """Per-user train/test split plus negative sampling parameters."""

    train_fraction: float = 0.8
    negative_ratio: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.negative_ratio < 1:
            raise ValueError(f"negative_ratio must be >= 1, got {self.negative_ratio}")


class InteractionStore:
    """Per-user positive train/test sets plus the per-round trained item pool.

    The trained pool of a user is its train positives plus freshly sampled
    negatives (items the user never interacted with), resampled every round.
    """

    def __init__(self, raw_users: list[str], raw_items: list[str],
                 train_pos: list[np.ndarray], test_pos: list[np.ndarray] | None = None):
        self.raw_users = raw_users
        self.raw_items = raw_items
        self._user_index = {u: i for i, u in enumerate(raw_users)}
        self._item_index = {v: j for j, v in enumerate(raw_items)}
        self.train_pos = [np.asarray(a, dtype=np.int64) for a in train_pos]
        if test_pos is None:
            test_pos = [np.empty(0, dtype=np.int64) for _ in raw_users]
        self.test_pos = [np.asarray(a, dtype=np.int64) for a in test_pos]
        self.pool_items: list[np.ndarray | None] = [None] * len(raw_users)
        self.pool_labels: list[np.ndarray | None] = [None] * len(raw_users)

    # -- identity ---------------------------------------------------------

    @property
    def n_users(self) -> int:
        return len(self.raw_users)

    @property
    def n_items(self) -> int:
        return len(self.raw_items)

    @property
    def n_interactions(self) -> int:
        return sum(len(a) for a in self.train_pos) + sum(len(a) for a in self.test_pos)

    def user_id(self, raw: str) -> int:
        return self._user_index[raw]

    def item_id(self, raw: str) -> int:
        return self._item_index[raw]

    def raw_user(self, user: int) -> str:
        return self.raw_users[user]

    def raw_item(self, item: int) -> str:
        return self.raw_items[item]

    # -- pools -------------------------------------------------------------

    def interacted(self, user: int) -> np.ndarray:
        """All positives of a user, train and test."""
        return np.union1d(self.train_pos[user], self.test_pos[user])

    def resample_trained_pool(self, user: int, ratio: int, rng: np.random.Generator):
        """Rebuild the user's trained pool: all train positives plus up to
        ratio*|positives| distinct negatives drawn from never-interacted items."""
        pos = self.train_pos[user]
        mask = np.ones(self.n_items, dtype=bool)
        mask[self.train_pos[user]] = False
        mask[self.test_pos[user]] = False
        candidates = np.flatnonzero(mask)
        want = min(ratio * len(pos), len(candidates))
        neg = rng.choice(candidates, size=want, replace=False) if want else np.empty(0, np.int64)
        items = np.concatenate([pos, np.sort(neg.astype(np.int64))])
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        self.pool_items[user] = items
        self.pool_labels[user] = labels
        return items, labels

    # -- construction ------------------------------------------------------

    @classmethod
    def from_positive_lists(cls, per_user_items: list[np.ndarray], n_items: int):
        """Unsplit store from dense per-user positive item arrays (synthetic data)."""
        raw_users = [str(u) for u in range(len(per_user_items))]
        raw_items = [str(v) for v in range(n_items)]
        return cls(raw_users, raw_items, [np.sort(np.asarray(a, np.int64)) for a in per_user_items])


def load_interactions(path: str, fmt: str = "movielens-100k") -> InteractionStore:
    """Load a dataset file into an unsplit store (everything is a train positive).

    movielens-100k: tab separated ``user \\t item \\t rating \\t timestamp``.
    csv: ``user,item[,rating]`` with an optional header row.
    """
    if fmt not in FORMATS:
        raise DatasetError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise DatasetError(f"cannot read dataset {path}: {e}") from e

    raw_users: list[str] = []
    raw_items: list[str] = []
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    per_user: list[list[int]] = []
    duplicates = 0

    def intern(raw_u: str, raw_v: str) -> tuple[int, int]:
        u = user_index.get(raw_u)
        if u is None:
            u = len(raw_users)
            user_index[raw_u] = u
            raw_users.append(raw_u)
            per_user.append([])
        v = item_index.get(raw_v)
        if v is None:
            v = len(raw_items)
            item_index[raw_v] = v
            raw_items.append(raw_v)
        return u, v

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if fmt == "movielens-100k":
            parts = line.split("\t")
            if len(parts) != 4:
                raise DatasetError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            raw_u, raw_v = parts[0].strip(), parts[1].strip()
        else:
            parts = next(csv.reader([line]))
            if len(parts) not in (2, 3):
                raise DatasetError(f"{path}:{lineno}: expected 2 or 3 comma-separated fields, got {len(parts)}")
            raw_u, raw_v = parts[0].strip(), parts[1].strip()
            if lineno == 1 and not _looks_like_data(parts):
                continue  # header row
        if not raw_u or not raw_v:
            raise DatasetError(f"{path}:{lineno}: empty user or item field")
        u, v = intern(raw_u, raw_v)
        if (u, v) in seen:
            duplicates += 1
            continue
        seen.add((u, v))
        per_user[u].append(v)

    if duplicates:
        log.warning("%s: dropped %d duplicate interaction(s)", path, duplicates)
    if not raw_users:
        raise DatasetError(f"{path}: no interactions found")
    train = [np.sort(np.asarray(items, dtype=np.int64)) for items in per_user]
    return InteractionStore(raw_users, raw_items, train)


def _looks_like_data(parts: list[str]) -> bool:
    # A first CSV row is treated as a header when the trailing rating field
    # (if present) is non-numeric; plain "user,item" rows are kept.
    if len(parts) == 3:
        try:
            float(parts[2])
        except ValueError:
            return False
    return True


def split_train_test(store: InteractionStore, cfg: SplitConfig) -> InteractionStore:
    """Per-user random split: floor(train_fraction * n) positives (at least one)
    go to train, the remainder to test. Users with a single positive keep it in
    train and simply have no test items."""
    train: list[np.ndarray] = []
    test: list[np.ndarray] = []
    for user in range(store.n_users):
        pos = np.sort(np.concatenate([store.train_pos[user], store.test_pos[user]]))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5717, user]))
        perm = rng.permutation(len(pos))
        k = max(1, int(np.floor(cfg.train_fraction * len(pos))))
        train.append(np.sort(pos[perm[:k]]))
        test.append(np.sort(pos[perm[k:]]))
    return InteractionStore(store.raw_users, store.raw_items, train, test)
