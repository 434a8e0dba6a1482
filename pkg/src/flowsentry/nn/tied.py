"""Tied-weight dense autoencoder: one weight matrix used by encoder and decoder.

h = relu(x W + b), r = sigmoid(h W^T + b_h), summed BCE loss, plain SGD.
Small and exact; serves as a reference model in tests.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, TrainingDiverged
from .layers import glorot_uniform
from .losses import bce_grad, bce_loss
from .train import TrainConfig, _epoch_batches


class TiedDenseAutoencoder:
    def __init__(self, input_dim: int, latent_dim: int, seed: int = 0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.w = glorot_uniform(rng, (input_dim, latent_dim), input_dim, latent_dim, dtype)
        self.b = np.zeros(latent_dim, dtype=dtype)
        self.b_h = np.zeros(input_dim, dtype=dtype)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"expected [n, {self.w.shape[0]}], got {x.shape}")
        z_h = x @ self.w + self.b
        h = np.maximum(z_h, 0.0)
        z_r = h @ self.w.T + self.b_h
        r = 1.0 / (1.0 + np.exp(-z_r))
        self._cache = (x, z_h, h, r)
        return h, r

    def loss(self, x: np.ndarray) -> float:
        _, r = self.forward(x)
        return bce_loss(x, r)

    def gradients(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Backprop through both uses of the shared weight matrix."""
        _, r = self.forward(x)
        x_, z_h, h, _ = self._cache
        dr = bce_grad(x_, r)
        dz_r = dr * r * (1.0 - r)
        db_h = dz_r.sum(axis=0)
        dh = dz_r @ self.w
        dz_h = dh * (z_h > 0)
        db = dz_h.sum(axis=0)
        dw = x_.T @ dz_h + dz_r.T @ h
        return {"w": dw, "b": db, "b_h": db_h}

    def fit(self, x: np.ndarray, cfg: TrainConfig) -> list[float]:
        rng = np.random.default_rng(cfg.seed)
        history = [self.loss(x)]
        for _ in range(cfg.epochs):
            total = 0.0
            for batch in _epoch_batches(len(x), cfg.batch_size, rng):
                xb = x[batch]
                g = self.gradients(xb)
                loss = bce_loss(xb, self._cache[3])
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"loss became {loss}")
                total += loss * len(xb)
                self.w = self.w - cfg.lr * g["w"]
                self.b = self.b - cfg.lr * g["b"]
                self.b_h = self.b_h - cfg.lr * g["b_h"]
            history.append(total / len(x))
        return history
