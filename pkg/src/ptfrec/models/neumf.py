"""Neural matrix factorization: MLP over concatenated user/item embeddings.

score(u, v) = sigmoid(h . mlp([u_emb, v_emb])) with ReLU hidden layers
2d -> 64 -> 32 -> 16 and a final projection vector h. Gradients are exact
(hand-derived backprop); one Adam step per train_batch call.

All MLP parameters live as views into one flat buffer so the optimizer takes
a single step over them; per-batch cost on tiny client batches is dominated
by numpy call overhead otherwise.
"""

from __future__ import annotations

import numpy as np

from .adam import Adam
from .base import (aggregate_rows, bce_grad_logits, bce_loss, check_finite,
                   clip_scores, sigmoid)

HIDDEN = (64, 32, 16)


class NeuMF:
    arch = "neumf"

    def __init__(self, n_users: int, n_items: int, dim: int = 32,
                 rng: np.random.Generator | None = None, lr: float = 0.001,
                 track_item_updates: bool = False):
        rng = rng or np.random.default_rng(0)
        self.n_users = n_users
        self.n_items = n_items
        self.dim = dim
        self.user_emb = rng.uniform(-0.01, 0.01, size=(n_users, dim))
        self.item_emb = rng.uniform(-0.01, 0.01, size=(n_items, dim))

        sizes = (2 * dim,) + HIDDEN
        total = sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:])) + HIDDEN[-1]
        self._mlp_flat = np.empty(total)
        self._mlp_grad = np.zeros(total)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self._grad_w: list[np.ndarray] = []
        self._grad_b: list[np.ndarray] = []
        offset = 0

        def carve(flat, count, shape):
            nonlocal offset
            view = flat[offset:offset + count].reshape(shape)
            offset += count
            return view

        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            w = carve(self._mlp_flat, fan_in * fan_out, (fan_in, fan_out))
            w[...] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = carve(self._mlp_flat, fan_out, (fan_out,))
            b[...] = 0.0
            self.weights.append(w)
            self.biases.append(b)
        bound = np.sqrt(6.0 / HIDDEN[-1])
        self.out_vec = carve(self._mlp_flat, HIDDEN[-1], (HIDDEN[-1],))
        self.out_vec[...] = rng.uniform(-bound, bound, size=HIDDEN[-1])

        offset = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self._grad_w.append(carve(self._mlp_grad, fan_in * fan_out, (fan_in, fan_out)))
            self._grad_b.append(carve(self._mlp_grad, fan_out, (fan_out,)))
        self._grad_out = carve(self._mlp_grad, HIDDEN[-1], (HIDDEN[-1],))

        self.adam = Adam(lr=lr)
        self.item_update_counts = np.zeros(n_items, dtype=np.int64) if track_item_updates else None

    # -- forward -----------------------------------------------------------

    def _forward(self, users, items):
        b = len(users)
        x = np.empty((b, 2 * self.dim))
        x[:, :self.dim] = self.user_emb[users]
        x[:, self.dim:] = self.item_emb[items]
        acts = [x]
        for w, bias in zip(self.weights, self.biases):
            x = x @ w
            x += bias
            np.maximum(x, 0.0, out=x)
            acts.append(x)
        logits = acts[-1] @ self.out_vec
        return logits, acts

    def predict(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        self._check_ids(users, items)
        logits, _ = self._forward(users, items)
        return clip_scores(sigmoid(logits))

    def score_matrix(self, users, block: int = 32) -> np.ndarray:
        """Scores for the given users against every item, (len(users), n_items).

        The item half of the first layer is shared across users, so it is
        computed once and broadcast over user blocks.
        """
        users = np.asarray(users, dtype=np.int64)
        d = self.dim
        w1u, w1v = self.weights[0][:d], self.weights[0][d:]
        item_part = self.item_emb @ w1v + self.biases[0]
        out = np.empty((len(users), self.n_items))
        for lo in range(0, len(users), block):
            blk = users[lo:lo + block]
            user_part = self.user_emb[blk] @ w1u
            x = np.maximum(user_part[:, None, :] + item_part[None, :, :], 0.0)
            x = x.reshape(-1, x.shape[-1])
            for w, b in zip(self.weights[1:], self.biases[1:]):
                x = x @ w
                x += b
                np.maximum(x, 0.0, out=x)
            out[lo:lo + block] = (x @ self.out_vec).reshape(len(blk), self.n_items)
        return clip_scores(sigmoid(out))

    # -- training ----------------------------------------------------------

    def loss_and_grads(self, users, items, targets):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.float64)
        self._check_ids(users, items)
        logits, acts = self._forward(users, items)
        scores = sigmoid(logits)
        loss = bce_loss(scores, targets)
        dlogit = bce_grad_logits(scores, targets)

        np.matmul(acts[-1].T, dlogit, out=self._grad_out)
        delta = np.outer(dlogit, self.out_vec)
        for layer in range(len(self.weights) - 1, -1, -1):
            delta *= acts[layer + 1] > 0
            np.matmul(acts[layer].T, delta, out=self._grad_w[layer])
            np.sum(delta, axis=0, out=self._grad_b[layer])
            delta = delta @ self.weights[layer].T
        d = self.dim
        grads = {
            "mlp": self._mlp_grad,
            "user_emb": aggregate_rows(users, delta[:, :d]),
            "item_emb": aggregate_rows(items, delta[:, d:]),
        }
        return loss, grads

    def train_batch(self, users, items, targets) -> float:
        loss, grads = self.loss_and_grads(users, items, targets)
        check_finite(loss, f"{self.arch} train_batch")
        self.adam.begin_step()
        self.adam.update("mlp", self._mlp_flat, grads["mlp"])
        rows, g = grads["user_emb"]
        self.adam.update_rows("user_emb", self.user_emb, rows, g)
        rows, g = grads["item_emb"]
        self.adam.update_rows("item_emb", self.item_emb, rows, g)
        if self.item_update_counts is not None:
            self.item_update_counts[np.unique(items)] += 1
        return loss

    # -- misc ----------------------------------------------------------------

    def _check_ids(self, users, items):
        if len(users) and (users.min() < 0 or users.max() >= self.n_users):
            raise IndexError("user id out of range")
        if len(items) and (items.min() < 0 or items.max() >= self.n_items):
            raise IndexError("item id out of range")

    def parameter_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [("user_emb", self.user_emb), ("item_emb", self.item_emb)]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"w{i}", w))
            out.append((f"b{i}", b))
        out.append(("out_vec", self.out_vec))
        return out
