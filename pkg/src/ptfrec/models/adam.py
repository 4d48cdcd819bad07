"""Adam over named parameter tensors, with row-sparse updates for embeddings."""

from __future__ import annotations

import numpy as np


class Adam:
    """First/second moment accumulators per tensor plus a shared step counter.

    ``update`` is the standard dense rule. ``update_rows`` touches only the
    rows that received gradient in this batch (embedding tables); untouched
    rows keep their moments, bias correction uses the shared step counter.
    """

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def begin_step(self):
        self.step_count += 1

    def _moments(self, name: str, shape, dtype):
        if name not in self._m:
            self._m[name] = np.zeros(shape, dtype=dtype)
            self._v[name] = np.zeros(shape, dtype=dtype)
        return self._m[name], self._v[name]

    def _correction(self):
        t = self.step_count
        if t < 1:
            raise RuntimeError("begin_step() must be called before updates")
        return 1.0 - self.beta1 ** t, 1.0 - self.beta2 ** t

    def update(self, name: str, param: np.ndarray, grad: np.ndarray):
        m, v = self._moments(name, param.shape, param.dtype)
        c1, c2 = self._correction()
        m *= self.beta1
        m += (1.0 - self.beta1) * grad
        v *= self.beta2
        v += (1.0 - self.beta2) * grad * grad
        param -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def update_rows(self, name: str, param: np.ndarray, rows: np.ndarray,
                    grad_rows: np.ndarray):
        """Adam step restricted to ``rows`` (must be unique) of a 2-d table."""
        m, v = self._moments(name, param.shape, param.dtype)
        c1, c2 = self._correction()
        mr = self.beta1 * m[rows] + (1.0 - self.beta1) * grad_rows
        vr = self.beta2 * v[rows] + (1.0 - self.beta2) * grad_rows * grad_rows
        m[rows] = mr
        v[rows] = vr
        param[rows] -= self.lr * (mr / c1) / (np.sqrt(vr / c2) + self.eps)
