import numpy as np
import pytest

from ptfrec.client import UploadPayload
from ptfrec.models import NeuMF, create_model
from ptfrec.server import HintPolicy, Server


def make_server(n_users=6, n_items=30, arch="neumf", seed=0, **policy_kw):
    model = create_model(arch, n_users, n_items, dim=8,
                         rng=np.random.default_rng(seed), track_item_updates=True)
    return Server(model, HintPolicy(**policy_kw), rng=np.random.default_rng(seed + 1))


def payload(user, items, scores):
    return UploadPayload(user, np.asarray(items, np.int64), np.asarray(scores, float))


def test_server_requires_counter_tracking():
    model = NeuMF(2, 4, dim=4, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        Server(model, HintPolicy(), rng=np.random.default_rng(0))


def test_pooling_arithmetic_single_batch():
    server = make_server(n_users=3, n_items=70)
    batch_sizes = []
    original = server.model.train_batch

    def spy(users, items, targets):
        batch_sizes.append(len(items))
        return original(users, items, targets)

    server.model.train_batch = spy
    payloads = [payload(0, np.arange(10), np.full(10, 0.6)),
                payload(1, np.arange(20), np.full(20, 0.6)),
                payload(2, np.arange(30), np.full(30, 0.6))]
    server.train_round(payloads)
    # 60 pooled samples -> one batch of 60 per epoch, two epochs
    assert batch_sizes == [60, 60]


def test_matched_half_labels_on_zero_model_loss_ln2():
    server = make_server(n_users=1, n_items=10)
    for _, tensor in server.model.parameter_tensors():
        tensor[...] = 0.0
    # model scores sigma(0) = 0.5 everywhere; uploads say 0.5 too
    p = payload(0, np.arange(10), np.full(10, 0.5))
    loss = server.train_round([p])
    assert loss == pytest.approx(np.log(2.0), abs=1e-6)
    # output-layer gradient is (s - r) * z3 = 0: the vector did not move
    assert np.allclose(server.model.out_vec, 0.0)


def test_server_never_sees_labels():
    import inspect
    # the server's entire training input is the payload list
    sig = inspect.signature(Server.train_round)
    assert list(sig.parameters) == ["self", "payloads"]


def test_update_counters_equal_batch_membership_exactly():
    server = make_server(n_users=2, n_items=8)
    server.batch_size = 4
    batches = []
    original = server.model.train_batch

    def spy(users, items, targets):
        batches.append(np.asarray(items).copy())
        return original(users, items, targets)

    server.model.train_batch = spy
    payloads = [payload(0, [0, 1, 2, 3], [0.9, 0.8, 0.2, 0.1]),
                payload(1, [0, 4, 5, 6], [0.7, 0.3, 0.2, 0.6])]
    server.train_round(payloads)
    expected = np.zeros(8, dtype=np.int64)
    for batch in batches:
        expected[np.unique(batch)] += 1
    assert np.array_equal(server.item_update_counts, expected)
    assert server.item_update_counts[7] == 0


def test_counters_accumulate_across_rounds():
    server = make_server(n_users=1, n_items=5)
    p = payload(0, [0, 1], [0.9, 0.1])
    server.train_round([p])
    first = server.item_update_counts.copy()
    server.train_round([p])
    assert np.all(server.item_update_counts >= first)
    assert server.item_update_counts[0] == 2 * first[0]


def test_hint_mu_boundaries():
    # mu=1: all confidence picks; mu=0: all hard picks
    for mix, check in ((1.0, "conf"), (0.0, "hard")):
        server = make_server(n_users=1, n_items=40, size=6, confidence_mix=mix)
        server.item_update_counts[:] = np.arange(40)  # frequency = item id
        server.last_upload[0] = np.arange(5)
        scores = np.linspace(0.9, 0.1, 40)  # hard order = ascending item id
        server.model.score_matrix = lambda users: scores[None, :]
        hint = server.build_hint(0)
        if check == "conf":
            # top-6 frequency among eligible (ids 5..39): 39..34
            assert sorted(hint.items.tolist()) == [34, 35, 36, 37, 38, 39]
        else:
            # top-6 score among eligible: ids 5..10
            assert sorted(hint.items.tolist()) == [5, 6, 7, 8, 9, 10]


def test_hint_default_split_15_15():
    server = make_server(n_users=1, n_items=200, size=30, confidence_mix=0.5)
    server.item_update_counts[:] = np.random.default_rng(0).integers(0, 50, 200)
    server.last_upload[0] = np.arange(40)
    server.model.score_matrix = lambda users: np.random.default_rng(1).random((1, 200))
    hint = server.build_hint(0)
    assert len(hint.items) == 30
    assert len(np.intersect1d(hint.items, np.arange(40))) == 0
    conf_half = hint.items[:15]
    # conf half consists of the 15 highest-frequency eligible items
    eligible = np.arange(40, 200)
    counts = server.item_update_counts
    order = sorted(eligible, key=lambda i: (-counts[i], i))[:15]
    assert sorted(conf_half.tolist()) == sorted(order)


def test_hint_disjoint_from_upload_all_strategies():
    for strategy in ("full", "no-hard", "no-confidence", "random"):
        server = make_server(n_users=1, n_items=60, size=10, strategy=strategy)
        server.item_update_counts[:] = np.random.default_rng(2).integers(0, 9, 60)
        uploaded = np.random.default_rng(3).choice(60, size=25, replace=False)
        server.last_upload[0] = uploaded
        hint = server.build_hint(0)
        assert len(hint.items) == 10
        assert len(np.unique(hint.items)) == 10
        assert len(np.intersect1d(hint.items, uploaded)) == 0


def test_hint_fewer_eligible_returns_all():
    server = make_server(n_users=1, n_items=12, size=30)
    server.last_upload[0] = np.arange(8)
    hint = server.build_hint(0)
    assert sorted(hint.items.tolist()) == list(range(8, 12))


def test_hint_random_strategy_uniform():
    server = make_server(n_users=1, n_items=100, size=20, strategy="random")
    server.item_update_counts[:] = 0
    server.last_upload[0] = np.arange(10)
    seen = set()
    for _ in range(30):
        seen.update(server.build_hint(0).items.tolist())
    assert len(seen) > 60  # spread far beyond any fixed top-20


def test_no_hard_strategy_keeps_confidence_half():
    server = make_server(n_users=1, n_items=100, size=10, confidence_mix=0.5,
                         strategy="no-hard")
    server.item_update_counts[:] = np.arange(100)
    server.last_upload[0] = np.arange(20)
    hint = server.build_hint(0)
    assert sorted(hint.items[:5].tolist()) == [95, 96, 97, 98, 99]


def test_confidence_half_global_hard_half_personal():
    server = make_server(n_users=3, n_items=100, size=10, confidence_mix=0.5)
    server.item_update_counts[:] = np.random.default_rng(5).integers(0, 30, 100)
    rng = np.random.default_rng(6)
    server.model.score_matrix = lambda users: rng.random((len(users), 100))
    for u in range(3):
        server.last_upload[u] = np.empty(0, np.int64)
    hints = server.build_hints([0, 1, 2])
    conf_sets = [tuple(sorted(h.items[:5].tolist())) for h in hints]
    hard_sets = [tuple(sorted(h.items[5:].tolist())) for h in hints]
    assert conf_sets[0] == conf_sets[1] == conf_sets[2]
    assert len(set(hard_sets)) > 1


def test_hint_scores_come_from_server_model():
    server = make_server(n_users=1, n_items=30, size=4)
    server.last_upload[0] = np.empty(0, np.int64)
    fixed = np.linspace(0.05, 0.95, 30)
    server.model.score_matrix = lambda users: fixed[None, :]
    hint = server.build_hint(0)
    assert np.allclose(hint.scores, fixed[hint.items])


def test_graph_server_builds_adjacency_from_thresholded_uploads():
    server = make_server(n_users=2, n_items=6, arch="ngcf")
    p0 = payload(0, [0, 1, 2], [0.9, 0.4, 0.8])
    p1 = payload(1, [3, 4], [0.2, 0.95])
    server.train_round([p0, p1])
    adj = server.model.adj.toarray()
    n_users = 2
    # edges only where score > 0.5: (0,0), (0,2), (1,4)
    assert adj[0, n_users + 0] > 0
    assert adj[0, n_users + 2] > 0
    assert adj[1, n_users + 4] > 0
    assert adj[0, n_users + 1] == 0
    assert adj[1, n_users + 3] == 0


def test_graph_server_adjacency_refreshed_each_round():
    server = make_server(n_users=2, n_items=6, arch="ngcf")
    server.train_round([payload(0, [0, 1], [0.9, 0.8])])
    server.train_round([payload(0, [2], [0.9]), payload(1, [3], [0.7])])
    adj = server.model.adj.toarray()
    assert adj[0, 2 + 0] == 0  # round-0 edges replaced
    assert adj[0, 2 + 1] == 0
    assert adj[0, 2 + 2] > 0
    assert adj[1, 2 + 3] > 0


def test_train_round_requires_payloads():
    server = make_server()
    with pytest.raises(ValueError):
        server.train_round([])
