"""Graph collaborative filtering models over a bipartite user-item graph.

Both models stack user and item embeddings into one (n_users + n_items, d)
matrix and propagate it through a symmetric degree-normalized adjacency.
LightGCN layers are pure neighborhood aggregation and the final embedding is
the mean of layers 0..L; NGCF layers add per-layer transforms with a LeakyReLU
and the final embedding concatenates layers 0..L. Scores are the logistic of
the user/item inner product. Backprop through propagation is exact; gradients
w.r.t. the layer-0 tables are dense, so tables use dense Adam updates.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .adam import Adam
from .base import (aggregate_rows, bce_grad_logits, bce_loss, check_finite,
                   clip_scores, sigmoid)

LEAKY_SLOPE = 0.2


def build_adjacency(n_users: int, n_items: int, edge_users: np.ndarray,
                    edge_items: np.ndarray) -> sp.csr_matrix:
    """Symmetric degree-normalized adjacency over the stacked node ids
    (users first, then items). Duplicate edges are collapsed; isolated nodes
    get all-zero rows."""
    n = n_users + n_items
    edge_users = np.asarray(edge_users, dtype=np.int64)
    edge_items = np.asarray(edge_items, dtype=np.int64) + n_users
    if len(edge_users):
        pairs = np.unique(np.stack([edge_users, edge_items], axis=1), axis=0)
        eu, ei = pairs[:, 0], pairs[:, 1]
    else:
        eu = ei = np.empty(0, dtype=np.int64)
    rows = np.concatenate([eu, ei])
    cols = np.concatenate([ei, eu])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    dmat = sp.diags(inv_sqrt)
    return (dmat @ adj @ dmat).tocsr()


class _GraphModel:
    def __init__(self, n_users: int, n_items: int, dim: int = 32, n_layers: int = 3,
                 rng: np.random.Generator | None = None, lr: float = 0.001,
                 adjacency: sp.csr_matrix | None = None,
                 track_item_updates: bool = False):
        if n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        rng = rng or np.random.default_rng(0)
        self.n_users = n_users
        self.n_items = n_items
        self.dim = dim
        self.n_layers = n_layers
        self.user_emb = rng.uniform(-0.01, 0.01, size=(n_users, dim))
        self.item_emb = rng.uniform(-0.01, 0.01, size=(n_items, dim))
        self.adam = Adam(lr=lr)
        self.adj = adjacency if adjacency is not None else build_adjacency(
            n_users, n_items, np.empty(0, np.int64), np.empty(0, np.int64))
        self._adj_version = 0
        self._cache_key = None
        self._cached_final = None
        self.item_update_counts = np.zeros(n_items, dtype=np.int64) if track_item_updates else None
        self._init_transforms(rng)

    def _init_transforms(self, rng: np.random.Generator):
        pass

    def set_adjacency(self, adj: sp.csr_matrix):
        self.adj = adj
        self._adj_version += 1

    # -- propagation cache ---------------------------------------------------

    def propagate(self) -> np.ndarray:
        """Final node embeddings for the current parameters, recomputed whenever
        layer-0 tables or the adjacency changed."""
        key = (self.adam.step_count, self._adj_version)
        if self._cache_key != key:
            self._cached_final = self._forward_nodes()[0]
            self._cache_key = key
        return self._cached_final

    def final_user_item(self):
        final = self.propagate()
        return final[:self.n_users], final[self.n_users:]

    # -- scoring ---------------------------------------------------------------

    def predict(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        self._check_ids(users, items)
        fu, fi = self.final_user_item()
        logits = np.sum(fu[users] * fi[items], axis=1)
        return clip_scores(sigmoid(logits))

    def score_matrix(self, users, block: int = 256) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        fu, fi = self.final_user_item()
        return clip_scores(sigmoid(fu[users] @ fi.T))

    # -- training ----------------------------------------------------------------

    def loss_and_grads(self, users, items, targets):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        self._check_ids(users, items)
        final, ctx = self._forward_nodes()
        fu, fi = final[:self.n_users], final[self.n_users:]
        logits = np.sum(fu[users] * fi[items], axis=1)
        scores = sigmoid(logits)
        loss = bce_loss(scores, targets)
        dlogit = bce_grad_logits(scores, targets)

        grad_final = np.zeros_like(final)
        rows, sums = aggregate_rows(users, dlogit[:, None] * fi[items])
        grad_final[rows] += sums
        rows, sums = aggregate_rows(items, dlogit[:, None] * fu[users])
        grad_final[self.n_users + rows] += sums
        grads = self._backward_nodes(grad_final, ctx)
        return loss, grads

    def train_batch(self, users, items, targets) -> float:
        loss, grads = self.loss_and_grads(users, items, targets)
        check_finite(loss, f"{self.arch} train_batch")
        self.adam.begin_step()
        for name, grad in grads.items():
            self.adam.update(name, self._tensor(name), grad)
        if self.item_update_counts is not None:
            self.item_update_counts[np.unique(items)] += 1
        return loss

    # -- shared plumbing ---------------------------------------------------------

    def _stack(self) -> np.ndarray:
        return np.concatenate([self.user_emb, self.item_emb], axis=0)

    def _check_ids(self, users, items):
        if len(users) and (users.min() < 0 or users.max() >= self.n_users):
            raise IndexError("user id out of range")
        if len(items) and (items.min() < 0 or items.max() >= self.n_items):
            raise IndexError("item id out of range")

    def _tensor(self, name: str) -> np.ndarray:
        if name == "user_emb":
            return self.user_emb
        if name == "item_emb":
            return self.item_emb
        raise KeyError(name)


class LightGCN(_GraphModel):
    arch = "lightgcn"

    def _forward_nodes(self):
        e = self._stack()
        total = e.copy()
        for _ in range(self.n_layers):
            e = self.adj @ e
            total += e
        final = total / (self.n_layers + 1)
        return final, None

    def _backward_nodes(self, grad_final, ctx):
        g = grad_final / (self.n_layers + 1)
        acc = g.copy()
        for _ in range(self.n_layers):
            g = self.adj @ g  # adjacency is symmetric
            acc += g
        return {"user_emb": acc[:self.n_users], "item_emb": acc[self.n_users:]}

    def parameter_tensors(self):
        return [("user_emb", self.user_emb), ("item_emb", self.item_emb)]


class NGCF(_GraphModel):
    arch = "ngcf"

    def _init_transforms(self, rng: np.random.Generator):
        self.w_self: list[np.ndarray] = []
        self.w_inter: list[np.ndarray] = []
        bound = np.sqrt(6.0 / (2 * self.dim))
        for _ in range(self.n_layers):
            self.w_self.append(rng.uniform(-bound, bound, size=(self.dim, self.dim)))
            self.w_inter.append(rng.uniform(-bound, bound, size=(self.dim, self.dim)))

    def _forward_nodes(self):
        e = self._stack()
        layers = [e]
        caches = []
        for l in range(self.n_layers):
            p = self.adj @ e
            s = p + e                      # (A + I) e
            q = p * e                      # interaction term
            z = s @ self.w_self[l] + q @ self.w_inter[l]
            caches.append((e, p, s, q, z))
            e = np.where(z > 0, z, LEAKY_SLOPE * z)
            layers.append(e)
        final = np.concatenate(layers, axis=1)
        return final, caches

    def _backward_nodes(self, grad_final, caches):
        d = self.dim
        blocks = [grad_final[:, i * d:(i + 1) * d] for i in range(self.n_layers + 1)]
        grads: dict[str, np.ndarray] = {}
        d_out = blocks[self.n_layers]
        for l in range(self.n_layers - 1, -1, -1):
            e, p, s, q, z = caches[l]
            dz = d_out * np.where(z > 0, 1.0, LEAKY_SLOPE)
            grads[f"w_self{l}"] = s.T @ dz
            grads[f"w_inter{l}"] = q.T @ dz
            ds = dz @ self.w_self[l].T
            dq = dz @ self.w_inter[l].T
            dp = ds + dq * e
            d_out = ds + dq * p + self.adj @ dp + blocks[l]
        grads["user_emb"] = d_out[:self.n_users]
        grads["item_emb"] = d_out[self.n_users:]
        return grads

    def _tensor(self, name: str) -> np.ndarray:
        if name.startswith("w_self"):
            return self.w_self[int(name[6:])]
        if name.startswith("w_inter"):
            return self.w_inter[int(name[7:])]
        return super()._tensor(name)

    def parameter_tensors(self):
        out = [("user_emb", self.user_emb), ("item_emb", self.item_emb)]
        for l in range(self.n_layers):
            out.append((f"w_self{l}", self.w_self[l]))
            out.append((f"w_inter{l}", self.w_inter[l]))
        return out
