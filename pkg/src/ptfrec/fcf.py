"""Parameter-transmission baseline: federated collaborative filtering.

The server owns a public item-embedding table; every round it sends the whole
table to each participant, clients train a private user vector plus their
table copy on the local pool (same loss, epochs, and batching as the main
protocol's clients), return the table, and the server averages the returns.
The ledger charges 4 bytes per 32-bit float parameter in both directions, so
the per-round cost scales with the item count rather than the interaction
count.
"""

from __future__ import annotations

import logging
import os
import time

import numpy as np

from . import wire
from .config import ExperimentConfig, write_config_echo
from .data import InteractionStore
from .evaluation import rank_eval
from .models.adam import Adam
from .models.base import (bce_grad_logits, bce_loss, check_finite, clip_scores,
                          sigmoid)
from .protocol import ExperimentReport, RoundReport, load_store

log = logging.getLogger(__name__)

PARAM_BYTES = 4  # 32-bit float parameters on the wire


class FcfScorer:
    """Dot-product scorer over the private user vectors and the public table."""

    def __init__(self, user_vecs: np.ndarray, item_table: np.ndarray):
        self.user_vecs = user_vecs
        self.item_table = item_table

    def score_matrix(self, users) -> np.ndarray:
        return clip_scores(sigmoid(self.user_vecs[users] @ self.item_table.T))


class FcfWorld:
    def __init__(self, cfg: ExperimentConfig, store: InteractionStore):
        self.config = cfg
        self.store = store
        init = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        self.item_table = init.uniform(-0.01, 0.01, size=(store.n_items, cfg.dim))
        self.user_vecs = init.uniform(-0.01, 0.01, size=(store.n_users, cfg.dim))
        self.user_adam = [Adam(lr=cfg.lr) for _ in range(store.n_users)]
        self.client_rng = [np.random.default_rng(np.random.SeedSequence([cfg.seed, 20, u]))
                           for u in range(store.n_users)]
        self.participation_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
        self.ledger = wire.CommLedger()

    def scorer(self) -> FcfScorer:
        return FcfScorer(self.user_vecs, self.item_table)


def _local_train(world: FcfWorld, user: int) -> tuple[np.ndarray, float]:
    """Train the user's vector and a copy of the item table on the local pool;
    returns (updated table copy, final epoch loss)."""
    cfg = world.config
    rng = world.client_rng[user]
    world.store.resample_trained_pool(user, cfg.negative_ratio, rng)
    items = world.store.pool_items[user]
    labels = world.store.pool_labels[user]
    table = world.item_table.copy()
    table_adam = Adam(lr=cfg.lr)  # fresh: the table is replaced every round
    p = world.user_vecs[user]
    adam_p = world.user_adam[user]
    n = len(items)
    epoch_loss = 0.0
    for _ in range(cfg.client_epochs):
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.client_batch):
            sel = perm[lo:lo + cfg.client_batch]
            batch_items = items[sel]
            q = table[batch_items]
            logits = q @ p
            scores = sigmoid(logits)
            loss = bce_loss(scores, labels[sel])
            check_finite(loss, "fcf local train")
            dlogit = bce_grad_logits(scores, labels[sel])
            grad_p = q.T @ dlogit
            rows, inverse = np.unique(batch_items, return_inverse=True)
            grad_q = np.zeros((len(rows), cfg.dim))
            np.add.at(grad_q, inverse, dlogit[:, None] * p)
            adam_p.begin_step()
            adam_p.update(f"user{user}", p, grad_p)
            table_adam.begin_step()
            table_adam.update_rows("table", table, rows, grad_q)
            losses.append(loss)
        epoch_loss = float(np.mean(losses))
    return table, epoch_loss


def fcf_round(world: FcfWorld, round_no: int) -> RoundReport:
    cfg = world.config
    n = world.store.n_users
    count = max(1, int(round(cfg.participation * n)))
    if count >= n:
        participants = list(range(n))
    else:
        participants = sorted(int(u) for u in
                              world.participation_rng.choice(n, size=count, replace=False))

    table_bytes = world.item_table.size * PARAM_BYTES
    returned = []
    losses = []
    for user in participants:
        world.ledger.add_downlink(round_no, user, table_bytes)
        table, loss = _local_train(world, user)
        world.ledger.add_uplink(round_no, user, table_bytes)
        returned.append(table)
        losses.append(loss)
    world.item_table = np.mean(returned, axis=0)

    return RoundReport(
        round_no=round_no,
        participants=participants,
        client_loss=float(np.mean(losses)),
        server_loss=0.0,
        attack_f1=0.0,
        attack_precision=0.0,
        attack_recall=0.0,
        uplink_bytes=table_bytes * len(participants),
        downlink_bytes=table_bytes * len(participants),
    )


def run_fcf_experiment(cfg: ExperimentConfig,
                       store: InteractionStore | None = None) -> ExperimentReport:
    if store is None:
        store = load_store(cfg)
    world = FcfWorld(cfg, store)
    rounds = []
    started = time.monotonic()
    for t in range(cfg.rounds):
        report = fcf_round(world, t)
        is_last = t == cfg.rounds - 1
        if is_last or (cfg.eval_every > 0 and (t + 1) % cfg.eval_every == 0):
            metrics = rank_eval(world.scorer(), world.store, cfg.eval_k)
            report.recall = metrics.recall
            report.ndcg = metrics.ndcg
        rounds.append(report)
        log.info("fcf round %d/%d: client_loss=%.4f", t + 1, cfg.rounds, report.client_loss)
    log.info("fcf experiment finished in %.1fs", time.monotonic() - started)

    final = rounds[-1]
    report = ExperimentReport(
        config=cfg.to_dict(),
        rounds=rounds,
        final_recall=final.recall,
        final_ndcg=final.ndcg,
        final_attack_f1=0.0,
        mean_bytes_per_client_round=world.ledger.mean_bytes_per_client_round(),
        total_bytes=world.ledger.total_bytes(),
    )
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        write_config_echo(cfg, cfg.out_dir)
        world.ledger.to_csv(os.path.join(cfg.out_dir, "ledger.csv"))
        with open(os.path.join(cfg.out_dir, "summary.json"), "w") as f:
            f.write(report.to_json())
            f.write("\n")
    return report
