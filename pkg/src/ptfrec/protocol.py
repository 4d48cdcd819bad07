"""Round orchestration: clients train and upload, server trains and hints back.

Within a round: participants are sampled, each selected client resamples its
trained pool, trains locally, and uploads an encoded prediction payload; the
server decodes all payloads, trains, then builds and sends one hint per
participant. Hints received in round t are first consumed by round t+1's
local training. All traffic goes through the wire codec so the byte ledger
records exactly what would cross the network.

Reports deliberately contain no wall-clock data: two runs with the same
config produce byte-identical serialized reports.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .client import Client, UploadPayload, UploadPolicy
from .config import ExperimentConfig, write_config_echo
from .data import InteractionStore, SplitConfig, load_interactions, split_train_test
from .evaluation import attack_eval, rank_eval
from .models import create_model
from .models.checkpoint import save_model
from .models.graph import build_adjacency
from .server import HintPolicy, Server

log = logging.getLogger(__name__)


@dataclass
class RoundReport:
    round_no: int
    participants: list[int]
    client_loss: float
    server_loss: float
    attack_f1: float
    attack_precision: float
    attack_recall: float
    uplink_bytes: int
    downlink_bytes: int
    recall: float | None = None
    ndcg: float | None = None


@dataclass
class ExperimentReport:
    config: dict
    rounds: list[RoundReport]
    final_recall: float
    final_ndcg: float
    final_attack_f1: float
    mean_bytes_per_client_round: float
    total_bytes: int

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "rounds": [dataclasses.asdict(r) for r in self.rounds],
            "final": {
                "recall": self.final_recall,
                "ndcg": self.final_ndcg,
                "attack_f1": self.final_attack_f1,
            },
            "communication": {
                "mean_bytes_per_client_round": self.mean_bytes_per_client_round,
                "total_bytes": self.total_bytes,
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)


@dataclass
class World:
    config: ExperimentConfig
    store: InteractionStore
    clients: list[Client]
    server: Server
    ledger: wire.CommLedger = field(default_factory=wire.CommLedger)
    participation_rng: np.random.Generator | None = None
    # hints encoded in round t are applied at the start of round t+1, before
    # any local training, regardless of which clients participate next
    pending_hints: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    executor: "_ForkExecutor | None" = None


class _ForkExecutor:
    """Runs client round steps across forked worker processes.

    Each worker owns a fixed shard of clients (user id modulo worker count),
    so client state persists in its worker across rounds. Per-client seed
    streams are keyed by user id alone, which makes results bit-identical to
    serial execution regardless of scheduling.
    """

    def __init__(self, clients: list[Client], n_workers: int):
        import multiprocessing as mp
        ctx = mp.get_context("fork")
        self.n_workers = n_workers
        self._conns = []
        self._procs = []
        for w in range(n_workers):
            shard = {c.user: c for c in clients if c.user % n_workers == w}
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_worker_main, args=(child, shard), daemon=True)
            proc.start()
            child.close()
            self._conns.append(parent)
            self._procs.append(proc)

    def run_round(self, users: list[int], hints: dict) -> list[tuple[int, float, bytes]]:
        for w, conn in enumerate(self._conns):
            shard_users = [u for u in users if u % self.n_workers == w]
            shard_hints = {u: h for u, h in hints.items() if u % self.n_workers == w}
            conn.send((shard_users, shard_hints))
        results = []
        for conn in self._conns:
            results.extend(conn.recv())
        return sorted(results, key=lambda r: r[0])

    def close(self):
        for conn in self._conns:
            try:
                conn.send(None)
            except (BrokenPipeError, OSError):
                pass
        for proc in self._procs:
            proc.join(timeout=10)
        for conn in self._conns:
            conn.close()


def _worker_main(conn, clients: dict[int, Client]):
    try:
        # client batches are tiny; BLAS spin-threads only fight each other
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:
        pass
    while True:
        msg = conn.recv()
        if msg is None:
            break
        users, hints = msg
        for u, (items, scores) in hints.items():
            clients[u].receive_hint(items, scores)
        out = []
        for u in users:
            client = clients[u]
            client.resample_pool()
            loss = client.local_train()
            payload = client.make_upload()
            blob = wire.encode_payload(wire.DIR_UPLOAD, payload.user,
                                       payload.items, payload.scores)
            out.append((u, loss, blob))
        conn.send(out)
    conn.close()


def _run_clients_serial(world: World, users: list[int],
                        hints: dict) -> list[tuple[int, float, bytes]]:
    for u, (items, scores) in hints.items():
        world.clients[u].receive_hint(items, scores)
    out = []
    for u in users:
        client = world.clients[u]
        client.resample_pool()
        loss = client.local_train()
        payload = client.make_upload()
        blob = wire.encode_payload(wire.DIR_UPLOAD, payload.user,
                                   payload.items, payload.scores)
        out.append((u, loss, blob))
    return out


def effective_workers(cfg: ExperimentConfig, n_users: int) -> int:
    count = cfg.workers if cfg.workers > 0 else min(4, os.cpu_count() or 1)
    if n_users < 64 or not hasattr(os, "fork"):
        return 1
    return max(1, min(count, n_users))


def _client_adjacency(cfg: ExperimentConfig, store: InteractionStore, user: int):
    # graph clients only see their own one-hop interactions
    if cfg.client_model == "neumf":
        return None
    pos = store.train_pos[user]
    return build_adjacency(1, store.n_items, np.zeros(len(pos), np.int64), pos)


def load_store(cfg: ExperimentConfig) -> InteractionStore:
    if not cfg.dataset:
        raise ValueError("config has no dataset path")
    return split_train_test(
        load_interactions(cfg.dataset, cfg.dataset_format),
        SplitConfig(cfg.train_fraction, cfg.negative_ratio, cfg.seed))


def build_world(cfg: ExperimentConfig, store: InteractionStore | None = None) -> World:
    if store is None:
        store = load_store(cfg)
    policy = UploadPolicy(
        mode=cfg.defense,
        pos_fraction_range=(cfg.pos_fraction_min, cfg.pos_fraction_max),
        neg_multiplier_range=(cfg.neg_multiplier_min, cfg.neg_multiplier_max),
        swap_fraction=cfg.swap_fraction,
        ldp_scale=cfg.ldp_scale,
    )
    clients = []
    for user in range(store.n_users):
        model = create_model(
            cfg.client_model, 1, store.n_items, dim=cfg.dim, n_layers=cfg.gcn_layers,
            rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 10, user])),
            lr=cfg.lr, adjacency=_client_adjacency(cfg, store, user))
        clients.append(Client(
            user, model, store, policy,
            rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 11, user])),
            epochs=cfg.client_epochs, batch_size=cfg.client_batch,
            negative_ratio=cfg.negative_ratio))
    server_model = create_model(
        cfg.server_model, store.n_users, store.n_items, dim=cfg.dim,
        n_layers=cfg.gcn_layers,
        rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 1])),
        lr=cfg.lr, track_item_updates=True)
    server = Server(
        server_model,
        HintPolicy(cfg.hint_size, cfg.hint_mix, cfg.hint_strategy),
        rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 2])),
        epochs=cfg.server_epochs, batch_size=cfg.server_batch)
    return World(cfg, store, clients, server,
                 participation_rng=np.random.default_rng(np.random.SeedSequence([cfg.seed, 3])))


def select_participants(world: World, round_no: int) -> list[int]:
    n = world.store.n_users
    count = max(1, int(round(world.config.participation * n)))
    if count >= n:
        return list(range(n))
    chosen = world.participation_rng.choice(n, size=count, replace=False)
    return sorted(int(u) for u in chosen)


def run_round(world: World, round_no: int, evaluate: bool = False) -> RoundReport:
    cfg = world.config
    participants = select_participants(world, round_no)

    # client side: deliver staged hints, train, build + encode uploads
    staged = world.pending_hints
    world.pending_hints = {}
    if world.executor is not None:
        results = world.executor.run_round(participants, staged)
    else:
        results = _run_clients_serial(world, participants, staged)

    losses = []
    payloads = []
    for user, loss, blob in results:
        world.ledger.add_uplink(round_no, user, len(blob))
        losses.append(loss)
        _, decoded_user, items, scores = wire.decode_payload(blob)
        payloads.append(UploadPayload(decoded_user, items, scores))

    server_loss = world.server.train_round(payloads)
    attack = attack_eval(payloads, world.store, cfg.attack_fraction)

    hints = world.server.build_hints(participants)
    for hint in hints:
        blob = wire.encode_payload(wire.DIR_HINT, hint.user, hint.items, hint.scores)
        world.ledger.add_downlink(round_no, hint.user, len(blob))
        _, user, items, scores = wire.decode_payload(blob)
        world.pending_hints[user] = (items, scores)

    report = RoundReport(
        round_no=round_no,
        participants=participants,
        client_loss=float(np.mean(losses)),
        server_loss=server_loss,
        attack_f1=attack.macro_f1,
        attack_precision=attack.macro_precision,
        attack_recall=attack.macro_recall,
        uplink_bytes=sum(world.ledger.uplink(round_no, u) for u in participants),
        downlink_bytes=sum(world.ledger.downlink(round_no, u) for u in participants),
    )
    if evaluate:
        metrics = rank_eval(world.server.model, world.store, cfg.eval_k)
        report.recall = metrics.recall
        report.ndcg = metrics.ndcg
    return report


def run_experiment(cfg: ExperimentConfig,
                   store: InteractionStore | None = None) -> ExperimentReport:
    if cfg.protocol == "fcf":
        from .fcf import run_fcf_experiment
        return run_fcf_experiment(cfg, store)
    world = build_world(cfg, store)
    workers = effective_workers(cfg, world.store.n_users)
    if workers > 1:
        world.executor = _ForkExecutor(world.clients, workers)
    rounds = []
    started = time.monotonic()
    try:
        for t in range(cfg.rounds):
            is_last = t == cfg.rounds - 1
            evaluate = is_last or (cfg.eval_every > 0 and (t + 1) % cfg.eval_every == 0)
            report = run_round(world, t, evaluate=evaluate)
            rounds.append(report)
            log.info("round %d/%d: client_loss=%.4f server_loss=%.4f attack_f1=%.4f%s",
                     t + 1, cfg.rounds, report.client_loss, report.server_loss,
                     report.attack_f1,
                     f" recall@{cfg.eval_k}={report.recall:.4f} ndcg@{cfg.eval_k}={report.ndcg:.4f}"
                     if report.recall is not None else "")
    finally:
        if world.executor is not None:
            world.executor.close()
            world.executor = None
    log.info("experiment finished in %.1fs", time.monotonic() - started)

    final = rounds[-1]
    report = ExperimentReport(
        config=cfg.to_dict(),
        rounds=rounds,
        final_recall=final.recall,
        final_ndcg=final.ndcg,
        final_attack_f1=final.attack_f1,
        mean_bytes_per_client_round=world.ledger.mean_bytes_per_client_round(),
        total_bytes=world.ledger.total_bytes(),
    )
    if cfg.out_dir:
        write_bundle(report, world, cfg.out_dir)
    return report


def write_bundle(report: ExperimentReport, world: World, out_dir: str):
    """Report bundle: resolved config, metrics CSV, ledger CSV, JSON summary,
    and a server model checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    write_config_echo(world.config, out_dir)
    world.ledger.to_csv(os.path.join(out_dir, "ledger.csv"))
    with open(os.path.join(out_dir, "metrics.csv"), "w") as f:
        f.write("round,metric,value\n")
        for r in report.rounds:
            f.write(f"{r.round_no},client_loss,{r.client_loss!r}\n")
            f.write(f"{r.round_no},server_loss,{r.server_loss!r}\n")
            f.write(f"{r.round_no},attack_f1,{r.attack_f1!r}\n")
            if r.recall is not None:
                f.write(f"{r.round_no},recall@{world.config.eval_k},{r.recall!r}\n")
                f.write(f"{r.round_no},ndcg@{world.config.eval_k},{r.ndcg!r}\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        f.write(report.to_json())
        f.write("\n")
    save_model(world.server.model, os.path.join(out_dir, "server_model.ptfm"))
