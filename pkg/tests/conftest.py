import os

import numpy as np
import pytest

from ptfrec.data import InteractionStore, SplitConfig, split_train_test

ML100K_ENV = "PTFREC_ML100K"


def ml100k_path() -> str | None:
    candidates = [os.environ.get(ML100K_ENV)] if os.environ.get(ML100K_ENV) else []
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates.append(os.path.join(here, "data", "ml-100k", "u.data"))
    for path in candidates:
        if path and os.path.exists(path):
            return path
    return None


def require_ml100k() -> str:
    path = ml100k_path()
    if path is None:
        pytest.skip(f"MovieLens-100K not found; set ${ML100K_ENV} or place data/ml-100k/u.data")
    return path


def tiny_store(n_users=6, n_items=20, per_user=6, seed=0) -> InteractionStore:
    """Small deterministic store with a train/test split, for unit tests."""
    rng = np.random.default_rng(seed)
    per = [np.sort(rng.choice(n_items, size=per_user, replace=False)) for _ in range(n_users)]
    store = InteractionStore.from_positive_lists(per, n_items)
    return split_train_test(store, SplitConfig(seed=seed))
