import numpy as np
import pytest

from ptfrec.client import UploadPayload
from ptfrec.data import InteractionStore, SplitConfig, split_train_test
from ptfrec.evaluation import (RandomScorer, attack_eval, make_planted_instance,
                               rank_eval, top_guess_attack, top_k_items, tradeoff)


class FixedScorer:
    """score_matrix backed by an explicit (n_users, n_items) table."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)

    def score_matrix(self, users):
        return self.table[np.asarray(users, dtype=np.int64)].copy()


def one_user_store(n_items, train, test):
    store = InteractionStore.from_positive_lists(
        [np.array(sorted(train + test), dtype=np.int64)], n_items)
    split = InteractionStore(store.raw_users, store.raw_items,
                             [np.array(sorted(train), dtype=np.int64)],
                             [np.array(sorted(test), dtype=np.int64)])
    return split


# -- ranking metrics ---------------------------------------------------------


def test_recall_all_hits():
    store = one_user_store(50, train=[0, 1], test=[10, 11])
    scores = np.zeros((1, 50))
    scores[0, [10, 11]] = [0.9, 0.8]
    metrics = rank_eval(FixedScorer(scores), store, k=20)
    assert metrics.recall == 1.0


def test_ndcg_analytic_rank_positions():
    store = one_user_store(50, train=[0], test=[7])
    scores = np.linspace(0.5, 0.01, 50)[None, :]
    table = scores.copy()
    table[0, 7] = 0.99  # rank 1
    m = rank_eval(FixedScorer(table), store, k=20)
    assert m.ndcg == pytest.approx(1.0)

    table = scores.copy()
    table[0, 1] = 0.99   # better than the test item
    table[0, 7] = 0.98   # rank 2
    m = rank_eval(FixedScorer(table), store, k=20)
    assert m.ndcg == pytest.approx(1.0 / np.log2(3.0))
    assert m.ndcg == pytest.approx(0.63093, abs=1e-5)


def test_train_positives_excluded_test_positives_candidates():
    store = one_user_store(10, train=[0], test=[1])
    table = np.zeros((1, 10))
    table[0, 0] = 1.0  # train positive would top the list, but is no candidate
    table[0, 1] = 0.9
    m = rank_eval(FixedScorer(table), store, k=1)
    assert m.recall == 1.0


def test_users_without_test_items_are_excluded():
    per_user = [np.array([0, 1, 2]), np.array([3])]
    store = InteractionStore.from_positive_lists(per_user, 10)
    split = InteractionStore(store.raw_users, store.raw_items,
                             [np.array([0, 1]), np.array([3])],
                             [np.array([2]), np.empty(0, np.int64)])
    m = rank_eval(FixedScorer(np.random.default_rng(0).random((2, 10))), split, k=5)
    assert m.n_users == 1


def test_random_scorer_hypergeometric_recall():
    # 1 test item among 1000 candidates: E[recall@20] = 20/1000
    n_users, n_items = 10_000, 1001
    rng = np.random.default_rng(0)
    train = [np.array([0], dtype=np.int64)] * n_users
    test = [np.array([1 + rng.integers(1000)], dtype=np.int64) for _ in range(n_users)]
    raw_users = [str(u) for u in range(n_users)]
    raw_items = [str(v) for v in range(n_items)]
    store = InteractionStore(raw_users, raw_items, train, test)
    m = rank_eval(RandomScorer(n_items, seed=1), store, k=20, user_block=512)
    assert m.recall == pytest.approx(0.02, abs=0.005)


def test_metric_monotone_under_hit_demotion():
    store = one_user_store(30, train=[0], test=[5])
    base = np.linspace(0.9, 0.1, 30)[None, :].copy()
    base[0, 5] = 0.95
    m_top = rank_eval(FixedScorer(base), store, k=10)
    demoted = base.copy()
    demoted[0, 5] = 0.0  # push the hit below rank k
    m_out = rank_eval(FixedScorer(demoted), store, k=10)
    assert m_out.recall <= m_top.recall
    assert m_out.ndcg <= m_top.ndcg
    assert m_out.recall == 0.0


def test_top_k_tie_rule_prefers_lower_item_id():
    scores = np.array([0.5, 0.9, 0.9, 0.1])
    assert top_k_items(scores, 2).tolist() == [1, 2]
    scores = np.array([0.9, 0.9, 0.9])
    assert top_k_items(scores, 2).tolist() == [0, 1]


# -- attack ---------------------------------------------------------------------


def payload_for(user, items, scores):
    return UploadPayload(user, np.asarray(items, np.int64),
                         np.asarray(scores, np.float64))


def attack_store(n_items, positives):
    return InteractionStore(["0"], [str(v) for v in range(n_items)],
                            [np.asarray(positives, np.int64)])


def test_attack_perfect_separation_matching_ratio():
    # positives outscore negatives, true positive fraction = guess fraction
    store = attack_store(50, positives=[0, 1])
    items = np.arange(10)
    scores = np.array([0.95, 0.9, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05])
    report = attack_eval([payload_for(0, items, scores)], store, 0.2)
    assert report.macro_f1 == 1.0


def test_attack_underguessing_caps_f1():
    # positive fraction 0.5, guess 0.2: precision 1, recall 0.4 -> F1 = 4/7
    store = attack_store(50, positives=list(range(5)))
    items = np.arange(10)
    scores = np.concatenate([np.linspace(0.9, 0.8, 5), np.linspace(0.3, 0.2, 5)])
    report = attack_eval([payload_for(0, items, scores)], store, 0.2)
    assert report.macro_recall == pytest.approx(0.4)
    assert report.macro_precision == pytest.approx(1.0)
    assert report.macro_f1 == pytest.approx(4.0 / 7.0)
    assert report.macro_f1 <= 4.0 / 7.0 + 1e-12


def test_attack_random_scores_precision_near_base_rate():
    rng = np.random.default_rng(0)
    n_items = 1000
    positives = np.arange(200)  # fraction 0.2 of the payload below
    store = attack_store(n_items, positives)
    precisions = []
    for _ in range(200):
        items = np.arange(1000)
        scores = rng.random(1000)
        report = attack_eval([payload_for(0, items, scores)], store, 0.2)
        precisions.append(report.macro_precision)
    assert np.mean(precisions) == pytest.approx(0.2, abs=0.02)


def test_attack_invariant_under_monotone_transform():
    rng = np.random.default_rng(1)
    store = attack_store(100, positives=rng.choice(100, 20, replace=False))
    items = np.arange(60)
    scores = rng.uniform(0.05, 0.95, 60)
    base = attack_eval([payload_for(0, items, scores)], store, 0.2)
    for transform in (lambda s: s ** 3, lambda s: 0.001 + 0.9 * s,
                      lambda s: 1 / (1 + np.exp(-5 * s))):
        got = attack_eval([payload_for(0, items, transform(scores))], store, 0.2)
        assert got.macro_f1 == base.macro_f1


def test_swapping_cannot_increase_attack_recall_when_separated():
    # strict separation: every swapped positive leaves the guessed top set
    rng = np.random.default_rng(2)
    store = attack_store(100, positives=np.arange(10))
    items = np.arange(50)
    scores = np.concatenate([np.linspace(0.99, 0.9, 10), np.linspace(0.4, 0.1, 40)])
    base = attack_eval([payload_for(0, items, scores)], store, 0.2)
    for k in (1, 2, 3):
        swapped = scores.copy()
        donors = rng.choice(5, size=k, replace=False)          # top half positives
        receivers = 10 + rng.choice(40, size=k, replace=False)
        swapped[donors], swapped[receivers] = swapped[receivers], swapped[donors].copy()
        got = attack_eval([payload_for(0, items, swapped)], store, 0.2)
        assert got.macro_recall <= base.macro_recall


def test_attack_macro_average_over_clients():
    store = InteractionStore(["0", "1"], [str(v) for v in range(20)],
                             [np.array([0, 1]), np.array([2, 3])])
    p0 = payload_for(0, np.arange(10),
                     np.concatenate([[0.9, 0.85], np.linspace(0.4, 0.1, 8)]))
    p1 = payload_for(1, np.arange(10), np.linspace(0.9, 0.1, 10))  # positives at 2,3
    report = attack_eval([p0, p1], store, 0.2)
    assert report.n_clients == 2
    assert report.macro_f1 == pytest.approx(
        np.mean([report.per_client_f1[0], report.per_client_f1[1]]))


# -- tradeoff --------------------------------------------------------------------


def test_tradeoff_paper_style_ratio():
    ratio = tradeoff(0.98, 0.1909, 0.45, 0.1909 - 0.0134)
    assert ratio == pytest.approx(0.53 / 0.0134, rel=1e-9)
    assert 39.5 <= ratio <= 39.6


def test_tradeoff_identical_arms_is_zero():
    assert tradeoff(0.5, 0.2, 0.5, 0.2) == 0.0


def test_tradeoff_free_defense_is_infinite():
    assert tradeoff(0.9, 0.2, 0.4, 0.2) == float("inf")
    assert tradeoff(0.9, 0.2, 0.4, 0.25) == float("inf")


# -- planted instances -------------------------------------------------------------


def test_planted_single_cluster_dense():
    store = make_planted_instance(10, 20, 1, seed=0, in_prob=1.0, cross_prob=0.0)
    for u in range(10):
        assert len(store.train_pos[u]) == 20


def test_planted_two_clusters_block_structure():
    store = make_planted_instance(10, 20, 2, seed=0, in_prob=1.0, cross_prob=0.0)
    for u in range(10):
        block = 0 if u < 5 else 1
        expected = np.arange(10) + block * 10
        assert np.array_equal(store.train_pos[u], expected)
    # oracle scorer by block membership: recall@k = min(k, |test|) / |test|
    split = split_train_test(store, SplitConfig(seed=0))
    table = np.zeros((10, 20))
    table[:5, :10] = 1.0
    table[5:, 10:] = 1.0
    m = rank_eval(FixedScorer(table), split, k=2)
    expected = np.mean([min(2, len(split.test_pos[u])) / len(split.test_pos[u])
                        for u in range(10)])
    assert m.recall == pytest.approx(expected)


def test_planted_requires_even_clusters():
    with pytest.raises(ValueError):
        make_planted_instance(10, 20, 3, seed=0)


def test_planted_deterministic():
    a = make_planted_instance(8, 16, 2, seed=5)
    b = make_planted_instance(8, 16, 2, seed=5)
    for u in range(8):
        assert np.array_equal(a.train_pos[u], b.train_pos[u])
